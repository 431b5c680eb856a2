#include "grdsr/optim.hpp"

#include <cmath>

#include "grdsr/errors.hpp"

namespace grdsr {

AdamState AdamState::for_params(const ModelParams& params) {
    AdamState s;
    for (const auto& p : params) {
        s.first_moment.emplace_back(Tensor::zeros_like(p.var.value()));
        s.second_moment.emplace_back(Tensor::zeros_like(p.var.value()));
    }
    return s;
}

void adam_step(ModelParams& params, AdamState& state, double lr) {
    if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
    if (state.first_moment.size() != params.size()) throw ConfigError("adam_step: state does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        if (!state.first_moment[i].same_shape(p.var.value())) {
            throw ConfigError("adam_step: moment shape mismatch for " + p.name);
        }
        if (p.var.has_grad() && !p.var.grad().all_finite()) {
            throw NumericalError("adam_step: non-finite gradient for parameter '" + p.name + "' at step " +
                                 std::to_string(state.step_count + 1));
        }
    }

    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& var = params[i].var;
        Tensor& w = var.mutable_value();
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        const bool has = var.has_grad();
        for (std::size_t j = 0; j < w.numel(); ++j) {
            const double g = has ? var.grad()[j] : 0.0;
            const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + state.epsilon);
            w[j] = static_cast<float>(w[j] - update);
        }
    }
}

void zero_grads(ModelParams& params) {
    for (auto& p : params) p.var.zero_grad();
}

} // namespace grdsr
