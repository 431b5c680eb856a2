#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "grdsr/autograd.hpp"

namespace grdsr {

enum class BnMode { Train, Eval };

inline constexpr float kBnEpsilon = 1e-5f;
// running = momentum * running + (1 - momentum) * batch
inline constexpr float kBnMomentum = 0.9f;

// One convolutional layer: weights (out, in, k, k), bias (out), and optional
// batch-norm affine parameters with running statistics.
struct LayerParams {
    Var weights;
    Var bias;
    Var bn_scale;
    Var bn_shift;
    Tensor bn_running_mean;
    Tensor bn_running_var;
    bool has_bn = false;

    std::size_t out_channels() const { return weights.shape()[0]; }
    std::size_t in_channels() const { return weights.shape()[1]; }
    std::size_t kernel_size() const { return weights.shape()[2]; }

    // Fan-in scaled Gaussian weights (std = gain / sqrt(fan_in); sqrt(2) suits
    // a following ReLU), zero bias, BN scale 1 / shift 0, running mean 0 / var 1.
    static LayerParams make(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size, bool with_bn,
                            std::mt19937_64& rng, double gain = std::numbers::sqrt2);

    std::size_t parameter_count() const; // trainable scalars only
};

// Same-size zero-padded 2-D convolution over NCHW input. Kernel side must be odd.
Var conv2d(const Var& input, const Var& weights, const Var& bias);
Var conv2d(const Var& input, const LayerParams& params);

// Per-channel batch normalisation. Train mode normalises with batch
// statistics and updates the running statistics held in `params`.
Var batch_norm(const Var& input, LayerParams& params, BnMode mode);

Var relu(const Var& input);

// Concatenate along the channel axis; batch and spatial extents must agree.
Var concat_channels(const Var& a, const Var& b);
Var concat_channels(const std::vector<Var>& parts);

Var add_residual(const Var& a, const Var& b);

// conv -> BN -> ReLU, or plain conv for layers without BN.
Var apply_layer(const Var& input, LayerParams& params, BnMode mode);

} // namespace grdsr
