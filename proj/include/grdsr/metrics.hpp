#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "grdsr/image.hpp"

namespace grdsr {

// Returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

double psnr(const ImagePlane& a, const ImagePlane& b, double dynamic_range);
// Mean local SSIM over all full windows (no padding).
double ssim(const ImagePlane& a, const ImagePlane& b, double dynamic_range, const SsimParams& params = {});

// Drops `border` pixels from every edge.
ImagePlane crop_border(const ImagePlane& img, std::size_t border);

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double dynamic_range = 0.0;
};

// dynamic_range defaults to max(ground_truth); border pixels are dropped first.
MetricReport evaluate(const ImagePlane& estimate, const ImagePlane& ground_truth,
                      std::optional<double> dynamic_range = std::nullopt, std::size_t border = 0);

struct SliceMetrics {
    std::size_t slice = 0;
    MetricReport report;
};

// CSV with one row per slice and a final "mean" row.
std::string metrics_csv(const std::vector<SliceMetrics>& rows);
MetricReport mean_report(const std::vector<SliceMetrics>& rows);
std::string format_psnr(double db);

} // namespace grdsr
