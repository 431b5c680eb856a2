#pragma once

#include <cstdint>
#include <functional>

#include "grdsr/autograd.hpp"

namespace grdsr {

struct GradCheckReport {
    double max_relative_error = 0.0; // max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf)
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0; // coordinates excluded by region_signature
    bool passed = false;
};

struct GradCheckOptions {
    double step = 1e-3;
    double tolerance = 1e-3;
    std::uint64_t projection_seed = 7;
    // Optional fingerprint of the piecewise region (e.g. ReLU sign pattern) at
    // the most recent evaluation. Coordinates whose +h or -h evaluation leaves
    // the region of the unperturbed input straddle a kink and are skipped.
    std::function<std::uint64_t()> region_signature;
};

// Compares the analytic gradient of L(x) = <fn(x), r> (r a fixed random
// projection) against central finite differences. The projection and the
// difference quotients are evaluated in double precision.
GradCheckReport grad_check(const std::function<Var(const Var&)>& fn, const Tensor& input,
                           const GradCheckOptions& options = {});

// Same check against an arbitrary leaf (e.g. a weight tensor) that `fn` closes over.
GradCheckReport grad_check_leaf(const std::function<Var()>& fn, Var leaf, const GradCheckOptions& options = {});

} // namespace grdsr
