#include "grdsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "grdsr/errors.hpp"

namespace grdsr {

namespace {

void require_same(const ImagePlane& a, const ImagePlane& b, const char* what) {
    if (!a.same_extents(b)) {
        throw DataError(std::string(what) + ": extents " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                        " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
    }
}

// Valid-mode separable filtering of a double image.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t w, std::size_t h,
                                 const std::vector<double>& taps) {
    const std::size_t n = taps.size(), ow = w - n + 1, oh = h - n + 1;
    std::vector<double> rows(ow * h, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += taps[k] * img[y * w + x + k];
            rows[y * ow + x] = acc;
        }
    }
    std::vector<double> out(ow * oh, 0.0);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t k = 0; k < n; ++k) {
            const double t = taps[k];
            const double* src = rows.data() + (y + k) * ow;
            double* dst = out.data() + y * ow;
            for (std::size_t x = 0; x < ow; ++x) dst[x] += t * src[x];
        }
    }
    return out;
}

} // namespace

double psnr(const ImagePlane& a, const ImagePlane& b, double dynamic_range) {
    require_same(a, b, "psnr");
    if (!(dynamic_range > 0.0)) throw ConfigError("psnr: dynamic range must be positive");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.pixels.size());
    if (mse == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(dynamic_range * dynamic_range / mse);
}

double ssim(const ImagePlane& a, const ImagePlane& b, double dynamic_range, const SsimParams& params) {
    require_same(a, b, "ssim");
    if (!(dynamic_range > 0.0)) throw ConfigError("ssim: dynamic range must be positive");
    if (params.window % 2 == 0 || params.window == 0) throw ConfigError("ssim: window must be odd");
    if (a.width < params.window || a.height < params.window) {
        throw DataError("ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                        " is smaller than the " + std::to_string(params.window) + "-pixel window");
    }
    std::vector<double> taps(params.window);
    const double half = static_cast<double>(params.window / 2);
    double total = 0.0;
    for (std::size_t k = 0; k < params.window; ++k) {
        const double d = static_cast<double>(k) - half;
        taps[k] = std::exp(-d * d / (2.0 * params.sigma * params.sigma));
        total += taps[k];
    }
    for (double& t : taps) t /= total;

    const std::size_t w = a.width, h = a.height, n = a.pixels.size();
    std::vector<double> da(n), db(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        da[i] = a.pixels[i];
        db[i] = b.pixels[i];
        aa[i] = da[i] * da[i];
        bb[i] = db[i] * db[i];
        ab[i] = da[i] * db[i];
    }
    const auto mu_a = filter_valid(da, w, h, taps);
    const auto mu_b = filter_valid(db, w, h, taps);
    const auto e_aa = filter_valid(aa, w, h, taps);
    const auto e_bb = filter_valid(bb, w, h, taps);
    const auto e_ab = filter_valid(ab, w, h, taps);
    const double c1 = std::pow(params.k1 * dynamic_range, 2.0);
    const double c2 = std::pow(params.k2 * dynamic_range, 2.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

ImagePlane crop_border(const ImagePlane& img, std::size_t border) {
    if (border == 0) return img;
    if (2 * border >= img.width || 2 * border >= img.height) throw DataError("crop border removes the whole image");
    ImagePlane out(img.width - 2 * border, img.height - 2 * border, 0.0f, img.dx, img.dy);
    for (std::size_t y = 0; y < out.height; ++y) {
        for (std::size_t x = 0; x < out.width; ++x) out.at(x, y) = img.at(x + border, y + border);
    }
    return out;
}

MetricReport evaluate(const ImagePlane& estimate, const ImagePlane& ground_truth, std::optional<double> dynamic_range,
                      std::size_t border) {
    require_same(estimate, ground_truth, "evaluate");
    const ImagePlane e = crop_border(estimate, border);
    const ImagePlane g = crop_border(ground_truth, border);
    MetricReport r;
    r.dynamic_range = dynamic_range ? *dynamic_range : static_cast<double>(ground_truth.max_value());
    if (!(r.dynamic_range > 0.0)) throw DataError("ground truth has no positive intensity; pass a dynamic range");
    r.psnr_db = psnr(e, g, r.dynamic_range);
    r.ssim = ssim(e, g, r.dynamic_range);
    return r;
}

MetricReport mean_report(const std::vector<SliceMetrics>& rows) {
    MetricReport m;
    if (rows.empty()) return m;
    for (const auto& r : rows) {
        m.psnr_db += r.report.psnr_db;
        m.ssim += r.report.ssim;
        m.dynamic_range += r.report.dynamic_range;
    }
    const double n = static_cast<double>(rows.size());
    m.psnr_db /= n;
    m.ssim /= n;
    m.dynamic_range /= n;
    return m;
}

std::string format_psnr(double db) {
    if (std::isinf(db)) return db > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(10);
    os << db;
    return os.str();
}

std::string metrics_csv(const std::vector<SliceMetrics>& rows) {
    std::ostringstream os;
    os.precision(10);
    os << "slice,psnr_db,ssim,dynamic_range\n";
    for (const auto& r : rows) {
        os << r.slice << ',' << format_psnr(r.report.psnr_db) << ',' << r.report.ssim << ',' << r.report.dynamic_range
           << '\n';
    }
    const MetricReport m = mean_report(rows);
    os << "mean," << format_psnr(m.psnr_db) << ',' << m.ssim << ',' << m.dynamic_range << '\n';
    return os.str();
}

} // namespace grdsr
