#include "grdsr/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "grdsr/errors.hpp"

namespace grdsr {

ImagePlane::ImagePlane(std::size_t w, std::size_t h, float fill, double dx_mm, double dy_mm)
    : width(w), height(h), pixels(w * h, fill), dx(dx_mm), dy(dy_mm) {
    if (w == 0 || h == 0) throw DataError("image extents must be positive");
}

bool ImagePlane::all_finite() const noexcept {
    return std::all_of(pixels.begin(), pixels.end(), [](float v) { return std::isfinite(v); });
}

float ImagePlane::min_value() const { return *std::min_element(pixels.begin(), pixels.end()); }
float ImagePlane::max_value() const { return *std::max_element(pixels.begin(), pixels.end()); }

double ImagePlane::mean() const {
    double s = 0.0;
    for (float v : pixels) s += v;
    return pixels.empty() ? 0.0 : s / static_cast<double>(pixels.size());
}

ImagePlane scaled(const ImagePlane& img, float factor) {
    ImagePlane out = img;
    for (auto& v : out.pixels) v *= factor;
    return out;
}

static void require_same(const ImagePlane& a, const ImagePlane& b, const char* op) {
    if (!a.same_extents(b)) {
        throw DataError(std::string(op) + ": extent mismatch " + std::to_string(a.width) + "x" +
                        std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
    }
}

ImagePlane difference(const ImagePlane& a, const ImagePlane& b) {
    require_same(a, b, "difference");
    ImagePlane out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] -= b.pixels[i];
    return out;
}

double dot(const ImagePlane& a, const ImagePlane& b) {
    require_same(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.pixels[i]) * b.pixels[i];
    return s;
}

double l2_norm(const ImagePlane& a) {
    double s = 0.0;
    for (float v : a.pixels) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

double rms_difference(const ImagePlane& a, const ImagePlane& b) {
    require_same(a, b, "rms_difference");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

Volume::Volume(std::size_t w, std::size_t h, std::size_t d, float fill)
    : width(w), height(h), depth(d), voxels(w * h * d, fill) {
    if (w == 0 || h == 0 || d == 0) throw DataError("volume extents must be positive");
}

ImagePlane Volume::slice(std::size_t z) const {
    if (z >= depth) throw DataError("slice index " + std::to_string(z) + " out of range (depth " + std::to_string(depth) + ")");
    ImagePlane p(width, height, 0.0f, dx, dy);
    std::copy_n(voxels.begin() + static_cast<std::ptrdiff_t>(z * width * height), width * height, p.pixels.begin());
    return p;
}

void Volume::set_slice(std::size_t z, const ImagePlane& plane) {
    if (z >= depth || plane.width != width || plane.height != height) throw DataError("set_slice: incompatible plane");
    std::copy(plane.pixels.begin(), plane.pixels.end(), voxels.begin() + static_cast<std::ptrdiff_t>(z * width * height));
}

Volume stack_slices(const std::vector<ImagePlane>& planes, double dz) {
    if (planes.empty()) throw DataError("stack_slices: no planes");
    Volume v(planes[0].width, planes[0].height, planes.size());
    v.dx = planes[0].dx;
    v.dy = planes[0].dy;
    v.dz = dz;
    for (std::size_t z = 0; z < planes.size(); ++z) v.set_slice(z, planes[z]);
    return v;
}

} // namespace grdsr
