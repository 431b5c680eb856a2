#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "grdsr/image.hpp"

namespace grdsr {

// Gaussian sigma whose full width at half maximum equals the scale factor:
// s / (2 sqrt(2 ln 2)). Throws DomainError for s <= 1.
double sigma_for_test_degradation(double s);

// Intermediate-stage blur for cascade training: stage_scale / (2 sqrt(2 lambda ln 2)).
double sigma_for_cascade_stage(double stage_scale, double lambda);

// ceil(3 sigma), at least 1.
std::size_t kernel_radius_for(double sigma);

struct BlurKernel {
    std::size_t radius = 0;
    std::vector<float> taps; // (2r+1)^2, row-major

    std::size_t side() const noexcept { return 2 * radius + 1; }
    float at(std::ptrdiff_t dx, std::ptrdiff_t dy) const {
        const auto r = static_cast<std::ptrdiff_t>(radius);
        return taps[static_cast<std::size_t>((dy + r) * static_cast<std::ptrdiff_t>(side()) + (dx + r))];
    }
    std::string to_text() const;
};

BlurKernel gaussian_kernel(double sigma, std::size_t radius);

// FWHM of the kernel's central row, with linear interpolation between taps.
double measure_fwhm(const BlurKernel& kernel);

// Operator B: same-size correlation with half-sample symmetric (mirror) borders.
ImagePlane blur(const ImagePlane& image, const BlurKernel& kernel);

// Operator B^T: exact adjoint of blur() including the border rule.
ImagePlane blur_adjoint(const ImagePlane& image, const BlurKernel& kernel);

// Bicubic (Keys, a = -0.5) resampling to explicit extents. Output pixel i
// samples source coordinate i * (n_src / n_dst); borders replicate.
ImagePlane resample_bicubic(const ImagePlane& image, std::size_t out_width, std::size_t out_height);

// Stride decimation: out(i, j) = in(stride*i, stride*j).
ImagePlane decimate(const ImagePlane& image, std::size_t stride, std::size_t out_width, std::size_t out_height);

// round(n / s); DomainError if the result is below 4.
std::size_t downsampled_extent(std::size_t n, double s);
std::size_t upsampled_extent(std::size_t n, double s);
bool is_integral_scale(double s);

// Operator D: integer s decimates, fractional s resamples bicubically.
ImagePlane downsample(const ImagePlane& image, double s);

// Operator D^T: bicubic interpolation to round(extent * s).
ImagePlane upsample(const ImagePlane& image, double s);

struct DegradationSpec {
    double scale_factor = 2.0;
    double lambda = 2.0;
    double sigma = 0.0;
    std::size_t kernel_radius = 0;

    // FWHM = s rule used to simulate observed LR data.
    static DegradationSpec for_test(double s);
    // Intermediate-stage rule with sharpness parameter lambda.
    static DegradationSpec for_cascade_stage(double stage_scale, double lambda);

    void validate() const;
    BlurKernel kernel() const { return gaussian_kernel(sigma, kernel_radius); }
};

// D(B(x)) with output extents round(n / s).
ImagePlane degrade(const ImagePlane& image, const DegradationSpec& spec);

// D(B(x)) onto explicit extents; decimates when the scale is integral and the
// extents are consistent with it, otherwise resamples bicubically.
ImagePlane degrade_to(const ImagePlane& image, const DegradationSpec& spec, std::size_t out_width,
                      std::size_t out_height);

// Brings a registered guide onto a target grid: same extents pass through,
// larger guides are blurred with the FWHM rule for the size ratio and then
// reduced, smaller guides are interpolated.
ImagePlane resample_guide(const ImagePlane& guide, std::size_t out_width, std::size_t out_height);

} // namespace grdsr
