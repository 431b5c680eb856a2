#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grdsr/autograd.hpp"

namespace grdsr {

struct NamedParam {
    std::string name;
    Var var;
};

using ModelParams = std::vector<NamedParam>;

struct AdamState {
    std::uint64_t step_count = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_params(const ModelParams& params);
};

// One bias-corrected Adam update using the gradients currently accumulated on
// each parameter (an absent gradient counts as zero). Throws NumericalError
// before touching anything if a gradient is non-finite.
void adam_step(ModelParams& params, AdamState& state, double lr);

void zero_grads(ModelParams& params);

} // namespace grdsr
