#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace grdsr {

// Single-channel 2-D image, row-major, spacing in millimetres.
struct ImagePlane {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> pixels;
    double dx = 1.0;
    double dy = 1.0;

    ImagePlane() = default;
    ImagePlane(std::size_t w, std::size_t h, float fill = 0.0f, double dx_mm = 1.0, double dy_mm = 1.0);

    float& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    float at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
    std::size_t size() const noexcept { return pixels.size(); }
    bool same_extents(const ImagePlane& o) const noexcept { return width == o.width && height == o.height; }
    bool all_finite() const noexcept;

    float min_value() const;
    float max_value() const;
    double mean() const;
};

ImagePlane scaled(const ImagePlane& img, float factor);
ImagePlane difference(const ImagePlane& a, const ImagePlane& b); // a - b
double dot(const ImagePlane& a, const ImagePlane& b);            // double accumulation
double l2_norm(const ImagePlane& a);
double rms_difference(const ImagePlane& a, const ImagePlane& b);

// Stack of equally sized planes; voxel (x, y, z) at index (z*H + y)*W + x.
struct Volume {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t depth = 0;
    std::vector<float> voxels;
    double dx = 1.0;
    double dy = 1.0;
    double dz = 1.0;

    Volume() = default;
    Volume(std::size_t w, std::size_t h, std::size_t d, float fill = 0.0f);

    ImagePlane slice(std::size_t z) const;
    void set_slice(std::size_t z, const ImagePlane& plane);

    float& at(std::size_t x, std::size_t y, std::size_t z) { return voxels[(z * height + y) * width + x]; }
    float at(std::size_t x, std::size_t y, std::size_t z) const { return voxels[(z * height + y) * width + x]; }
};

// Assemble planes of identical extents into a volume.
Volume stack_slices(const std::vector<ImagePlane>& planes, double dz = 1.0);

} // namespace grdsr
