#include "grdsr/grad_check.hpp"

#include <cmath>
#include <random>

namespace grdsr {

namespace {

double project(const Tensor& out, const Tensor& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += static_cast<double>(out[i]) * r[i];
    return s;
}

Tensor random_projection(const Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor r(shape);
    for (auto& v : r.data()) v = static_cast<float>(dist(rng));
    return r;
}

} // namespace

GradCheckReport grad_check_leaf(const std::function<Var()>& fn, Var leaf, const GradCheckOptions& options) {
    leaf.zero_grad();
    Var out = fn();
    const std::uint64_t s0 = options.region_signature ? options.region_signature() : 0;
    const Tensor r = random_projection(out.shape(), options.projection_seed);
    out.backward(r);
    const Tensor analytic = leaf.has_grad() ? leaf.grad() : Tensor::zeros_like(leaf.value());

    Tensor& x = leaf.mutable_value();
    std::vector<double> numeric(x.numel());
    std::vector<bool> skip(x.numel(), false);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const float orig = x[i];
        const float xp = static_cast<float>(orig + options.step);
        const float xm = static_cast<float>(orig - options.step);
        x[i] = xp;
        const double lp = project(fn().value(), r);
        const std::uint64_t sp = options.region_signature ? options.region_signature() : 0;
        x[i] = xm;
        const double lm = project(fn().value(), r);
        const std::uint64_t sm = options.region_signature ? options.region_signature() : 0;
        skip[i] = sp != s0 || sm != s0;
        x[i] = orig;
        // Divide by the step actually representable in float32.
        numeric[i] = (lp - lm) / (static_cast<double>(xp) - static_cast<double>(xm));
    }
    leaf.zero_grad();

    GradCheckReport rep;
    double scale = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (skip[i]) {
            ++rep.skipped;
            continue;
        }
        ++rep.checked;
        scale = std::max({scale, std::abs(numeric[i]), std::abs(static_cast<double>(analytic[i]))});
        const double err = std::abs(numeric[i] - analytic[i]);
        if (err > rep.max_abs_error) {
            rep.max_abs_error = err;
            rep.worst_index = i;
        }
    }
    rep.max_relative_error = scale > 0.0 ? rep.max_abs_error / scale : 0.0;
    rep.passed = rep.max_relative_error < options.tolerance;
    return rep;
}

GradCheckReport grad_check(const std::function<Var(const Var&)>& fn, const Tensor& input,
                           const GradCheckOptions& options) {
    Var x(input, true);
    return grad_check_leaf([&] { return fn(x); }, x, options);
}

} // namespace grdsr
