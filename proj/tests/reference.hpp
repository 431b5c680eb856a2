#pragma once

// Double-precision brute-force versions of the degradation operators.

#include <algorithm>
#include <cmath>
#include <vector>

#include "grdsr/image.hpp"

namespace reference {

using grdsr::ImagePlane;

// Half-sample symmetric reflection: -1 -> 0, n -> n - 1.
inline long reflect(long i, long n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
}

inline std::vector<double> reference_blur(const ImagePlane& img, double sigma, long r) {
    const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
    double z = 0.0;
    for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) z += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
    std::vector<double> out(static_cast<std::size_t>(w * h));
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long dy = -r; dy <= r; ++dy)
                for (long dx = -r; dx <= r; ++dx)
                    acc += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / z *
                           img.at(static_cast<std::size_t>(reflect(x + dx, w)), static_cast<std::size_t>(reflect(y + dy, h)));
            out[static_cast<std::size_t>(y * w + x)] = acc;
        }
    return out;
}

inline double keys(double t) {
    const double a = -0.5;
    t = std::abs(t);
    if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
    if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
    return 0.0;
}

// Keys cubic convolution with clamped borders; output i samples input at i * n_in / n_out.
inline double reference_bicubic_at(const ImagePlane& img, std::size_t ox, std::size_t oy, std::size_t ow, std::size_t oh) {
    const double sx = static_cast<double>(ox) * img.width / ow, sy = static_cast<double>(oy) * img.height / oh;
    const long x0 = static_cast<long>(std::floor(sx)), y0 = static_cast<long>(std::floor(sy));
    double acc = 0.0;
    for (long j = y0 - 1; j <= y0 + 2; ++j)
        for (long i = x0 - 1; i <= x0 + 2; ++i) {
            const long ci = std::clamp(i, 0L, static_cast<long>(img.width) - 1);
            const long cj = std::clamp(j, 0L, static_cast<long>(img.height) - 1);
            acc += keys(sx - i) * keys(sy - j) * img.at(static_cast<std::size_t>(ci), static_cast<std::size_t>(cj));
        }
    return acc;
}

// Dense matrices (row-major, rows = outputs) for small images, built by
// pushing unit images through the references above.
struct Dense {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;
    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) y[r] += at(r, c) * x[c];
        return y;
    }
    std::vector<double> apply_transposed(const std::vector<double>& y) const {
        std::vector<double> x(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) x[c] += at(r, c) * y[r];
        return x;
    }
};

inline Dense blur_matrix(std::size_t w, std::size_t h, double sigma, long radius) {
    Dense m{w * h, w * h, std::vector<double>(w * h * w * h, 0.0)};
    for (std::size_t c = 0; c < w * h; ++c) {
        ImagePlane e(w, h);
        e.pixels[c] = 1.0f;
        const auto col = reference_blur(e, sigma, radius);
        for (std::size_t r = 0; r < w * h; ++r) m.at(r, c) = col[r];
    }
    return m;
}

// Origin-aligned decimation by an integer stride.
inline Dense decimation_matrix(std::size_t w, std::size_t h, std::size_t stride, std::size_t ow, std::size_t oh) {
    Dense m{ow * oh, w * h, std::vector<double>(ow * oh * w * h, 0.0)};
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) m.at(y * ow + x, y * stride * w + x * stride) = 1.0;
    return m;
}

inline Dense bicubic_matrix(std::size_t w, std::size_t h, std::size_t ow, std::size_t oh) {
    Dense m{ow * oh, w * h, std::vector<double>(ow * oh * w * h, 0.0)};
    for (std::size_t c = 0; c < w * h; ++c) {
        ImagePlane e(w, h);
        e.pixels[c] = 1.0f;
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) m.at(y * ow + x, c) = reference_bicubic_at(e, x, y, ow, oh);
    }
    return m;
}

} // namespace reference
