#include "grdsr/degradation.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "grdsr/errors.hpp"

namespace grdsr {

namespace {

const double kFwhmFactor = 2.0 * std::sqrt(2.0 * std::log(2.0));

// Half-sample symmetric reflection: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<std::ptrdiff_t>(n)) m = period - 1 - m;
    return static_cast<std::size_t>(m);
}

std::vector<std::size_t> mirror_table(std::size_t n, std::size_t r) {
    std::vector<std::size_t> t(n + 2 * r);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = mirror(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(r), n);
    }
    return t;
}

double keys_weight(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

struct CubicTaps {
    std::array<std::size_t, 4> index;
    std::array<double, 4> weight;
};

std::vector<CubicTaps> cubic_taps(std::size_t n_src, std::size_t n_dst) {
    std::vector<CubicTaps> taps(n_dst);
    const double ratio = static_cast<double>(n_src) / static_cast<double>(n_dst);
    const auto last = static_cast<std::ptrdiff_t>(n_src) - 1;
    for (std::size_t i = 0; i < n_dst; ++i) {
        const double src = static_cast<double>(i) * ratio;
        const double base = std::floor(src);
        const double t = src - base;
        for (int k = 0; k < 4; ++k) {
            const auto idx = static_cast<std::ptrdiff_t>(base) - 1 + k;
            taps[i].index[static_cast<std::size_t>(k)] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, last));
            taps[i].weight[static_cast<std::size_t>(k)] = keys_weight(t - static_cast<double>(k - 1));
        }
    }
    return taps;
}

} // namespace

double sigma_for_test_degradation(double s) {
    if (!(s > 1.0) || !std::isfinite(s)) throw DomainError("scale factor must be > 1, got " + std::to_string(s));
    return s / kFwhmFactor;
}

double sigma_for_cascade_stage(double stage_scale, double lambda) {
    if (!(stage_scale > 1.0) || !std::isfinite(stage_scale)) {
        throw DomainError("stage scale must be > 1, got " + std::to_string(stage_scale));
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be > 0, got " + std::to_string(lambda));
    return stage_scale / (2.0 * std::sqrt(2.0 * lambda * std::log(2.0)));
}

std::size_t kernel_radius_for(double sigma) {
    if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(3.0 * sigma - 1e-12)));
}

std::string BlurKernel::to_text() const {
    std::ostringstream os;
    os << "# radius " << radius << " side " << side() << '\n' << std::setprecision(9);
    for (std::size_t y = 0; y < side(); ++y) {
        for (std::size_t x = 0; x < side(); ++x) os << (x ? " " : "") << taps[y * side() + x];
        os << '\n';
    }
    return os.str();
}

BlurKernel gaussian_kernel(double sigma, std::size_t radius) {
    if (!(sigma > 0.0)) throw DomainError("gaussian_kernel: sigma must be positive");
    if (radius < 1) throw DomainError("gaussian_kernel: radius must be >= 1");
    BlurKernel k;
    k.radius = radius;
    const std::size_t side = k.side();
    std::vector<double> w(side * side);
    double total = 0.0;
    const auto r = static_cast<double>(radius);
    for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            const double fx = static_cast<double>(x) - r;
            const double fy = static_cast<double>(y) - r;
            const double v = std::exp(-(fx * fx + fy * fy) / (2.0 * sigma * sigma));
            w[y * side + x] = v;
            total += v;
        }
    }
    k.taps.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) k.taps[i] = static_cast<float>(w[i] / total);
    return k;
}

double measure_fwhm(const BlurKernel& kernel) {
    const auto r = static_cast<std::ptrdiff_t>(kernel.radius);
    const double peak = kernel.at(0, 0);
    const double half = 0.5 * peak;
    for (std::ptrdiff_t x = 1; x <= r; ++x) {
        const double prev = kernel.at(x - 1, 0);
        const double cur = kernel.at(x, 0);
        if (cur <= half) {
            const double frac = (prev - half) / (prev - cur);
            return 2.0 * (static_cast<double>(x - 1) + frac);
        }
    }
    return 2.0 * static_cast<double>(r); // never fell to half inside the support
}

ImagePlane blur(const ImagePlane& image, const BlurKernel& kernel) {
    const std::size_t W = image.width, H = image.height, r = kernel.radius, side = kernel.side();
    const auto mx = mirror_table(W, r);
    const auto my = mirror_table(H, r);
    ImagePlane out(W, H, 0.0f, image.dx, image.dy);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (std::size_t ky = 0; ky < side; ++ky) {
                const float* row = image.pixels.data() + my[y + ky] * W;
                const float* krow = kernel.taps.data() + ky * side;
                for (std::size_t kx = 0; kx < side; ++kx) acc += static_cast<double>(krow[kx]) * row[mx[x + kx]];
            }
            out.at(x, y) = static_cast<float>(acc);
        }
    }
    return out;
}

ImagePlane blur_adjoint(const ImagePlane& image, const BlurKernel& kernel) {
    const std::size_t W = image.width, H = image.height, r = kernel.radius, side = kernel.side();
    const auto mx = mirror_table(W, r);
    const auto my = mirror_table(H, r);
    std::vector<double> acc(W * H, 0.0);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double v = image.at(x, y);
            if (v == 0.0) continue;
            for (std::size_t ky = 0; ky < side; ++ky) {
                double* row = acc.data() + my[y + ky] * W;
                const float* krow = kernel.taps.data() + ky * side;
                for (std::size_t kx = 0; kx < side; ++kx) row[mx[x + kx]] += static_cast<double>(krow[kx]) * v;
            }
        }
    }
    ImagePlane out(W, H, 0.0f, image.dx, image.dy);
    for (std::size_t i = 0; i < acc.size(); ++i) out.pixels[i] = static_cast<float>(acc[i]);
    return out;
}

ImagePlane resample_bicubic(const ImagePlane& image, std::size_t out_width, std::size_t out_height) {
    if (out_width == 0 || out_height == 0) throw DomainError("resample_bicubic: empty target extents");
    const auto tx = cubic_taps(image.width, out_width);
    const auto ty = cubic_taps(image.height, out_height);
    std::vector<double> tmp(out_width * image.height);
    for (std::size_t y = 0; y < image.height; ++y) {
        const float* row = image.pixels.data() + y * image.width;
        for (std::size_t x = 0; x < out_width; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += tx[x].weight[k] * row[tx[x].index[k]];
            tmp[y * out_width + x] = acc;
        }
    }
    const double sx = static_cast<double>(image.width) / static_cast<double>(out_width);
    const double sy = static_cast<double>(image.height) / static_cast<double>(out_height);
    ImagePlane out(out_width, out_height, 0.0f, image.dx * sx, image.dy * sy);
    for (std::size_t y = 0; y < out_height; ++y) {
        for (std::size_t x = 0; x < out_width; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += ty[y].weight[k] * tmp[ty[y].index[k] * out_width + x];
            out.at(x, y) = static_cast<float>(acc);
        }
    }
    return out;
}

ImagePlane decimate(const ImagePlane& image, std::size_t stride, std::size_t out_width, std::size_t out_height) {
    if (stride == 0 || (out_width - 1) * stride >= image.width || (out_height - 1) * stride >= image.height) {
        throw DomainError("decimate: stride " + std::to_string(stride) + " incompatible with extents");
    }
    ImagePlane out(out_width, out_height, 0.0f, image.dx * static_cast<double>(stride),
                   image.dy * static_cast<double>(stride));
    for (std::size_t y = 0; y < out_height; ++y) {
        for (std::size_t x = 0; x < out_width; ++x) out.at(x, y) = image.at(x * stride, y * stride);
    }
    return out;
}

bool is_integral_scale(double s) { return std::abs(s - std::round(s)) < 1e-9; }

std::size_t downsampled_extent(std::size_t n, double s) {
    if (!(s > 1.0)) throw DomainError("downsample: scale must be > 1, got " + std::to_string(s));
    const auto out = static_cast<std::size_t>(std::llround(static_cast<double>(n) / s));
    if (out < 4) {
        throw DomainError("downsample: extent " + std::to_string(n) + " / " + std::to_string(s) + " gives " +
                          std::to_string(out) + " < 4");
    }
    return out;
}

std::size_t upsampled_extent(std::size_t n, double s) {
    if (!(s > 1.0)) throw DomainError("upsample: scale must be > 1, got " + std::to_string(s));
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * s));
}

ImagePlane downsample(const ImagePlane& image, double s) {
    const std::size_t w = downsampled_extent(image.width, s);
    const std::size_t h = downsampled_extent(image.height, s);
    if (is_integral_scale(s)) return decimate(image, static_cast<std::size_t>(std::llround(s)), w, h);
    return resample_bicubic(image, w, h);
}

ImagePlane upsample(const ImagePlane& image, double s) {
    return resample_bicubic(image, upsampled_extent(image.width, s), upsampled_extent(image.height, s));
}

DegradationSpec DegradationSpec::for_test(double s) {
    DegradationSpec d;
    d.scale_factor = s;
    d.sigma = sigma_for_test_degradation(s);
    d.kernel_radius = kernel_radius_for(d.sigma);
    return d;
}

DegradationSpec DegradationSpec::for_cascade_stage(double stage_scale, double lambda) {
    DegradationSpec d;
    d.scale_factor = stage_scale;
    d.lambda = lambda;
    d.sigma = sigma_for_cascade_stage(stage_scale, lambda);
    d.kernel_radius = kernel_radius_for(d.sigma);
    return d;
}

void DegradationSpec::validate() const {
    if (!(scale_factor > 1.0)) throw DomainError("degradation scale must be > 1");
    if (!(lambda > 0.0)) throw DomainError("degradation lambda must be > 0");
    if (!(sigma > 0.0)) throw DomainError("degradation sigma must be > 0");
    if (static_cast<double>(kernel_radius) < std::ceil(3.0 * sigma - 1e-12)) {
        throw DomainError("kernel radius " + std::to_string(kernel_radius) + " below ceil(3 sigma)");
    }
}

ImagePlane degrade(const ImagePlane& image, const DegradationSpec& spec) {
    spec.validate();
    return downsample(blur(image, spec.kernel()), spec.scale_factor);
}

ImagePlane degrade_to(const ImagePlane& image, const DegradationSpec& spec, std::size_t out_width,
                      std::size_t out_height) {
    spec.validate();
    ImagePlane blurred = blur(image, spec.kernel());
    if (is_integral_scale(spec.scale_factor)) {
        const auto stride = static_cast<std::size_t>(std::llround(spec.scale_factor));
        if (out_width == downsampled_extent(image.width, spec.scale_factor) &&
            out_height == downsampled_extent(image.height, spec.scale_factor)) {
            return decimate(blurred, stride, out_width, out_height);
        }
    }
    return resample_bicubic(blurred, out_width, out_height);
}

ImagePlane resample_guide(const ImagePlane& guide, std::size_t out_width, std::size_t out_height) {
    if (guide.width == out_width && guide.height == out_height) return guide;
    const double factor = std::max(static_cast<double>(guide.width) / static_cast<double>(out_width),
                                   static_cast<double>(guide.height) / static_cast<double>(out_height));
    if (factor > 1.0 + 1e-9) {
        DegradationSpec spec = DegradationSpec::for_test(factor);
        return degrade_to(guide, spec, out_width, out_height);
    }
    return resample_bicubic(guide, out_width, out_height);
}

} // namespace grdsr
