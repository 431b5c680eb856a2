#include "grdsr/layers.hpp"

#include <cmath>

#include <Eigen/Core>

#include "grdsr/errors.hpp"

namespace grdsr {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void require_rank4(const Tensor& t, const char* op) {
    if (t.rank() != 4) throw ConfigError(std::string(op) + ": expected NCHW tensor, got " + shape_to_string(t.shape()));
}

// Channel-major padded layout shared by forward and backward:
// buf[c][n][(y + p) * Wp + (x + p)] with p = k / 2 zero border. Output pixel
// (y, x) of sample n sits at column n*Hp*Wp + (y + p)*Wp + (x + p); a kernel tap
// (ky, kx) reads column offset (ky - p)*Wp + (kx - p) from it, so each tap is
// one GEMM over a contiguous column range.
struct PaddedGeometry {
    std::size_t N, C, H, W, k, p, Hp, Wp, plane_p, first, length;

    PaddedGeometry(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t ksize)
        : N(n), C(c), H(h), W(w), k(ksize), p(ksize / 2), Hp(h + 2 * (ksize / 2)), Wp(w + 2 * (ksize / 2)),
          plane_p(Hp * Wp), first(p * Wp + p), length((n - 1) * Hp * Wp + (h - 1) * Wp + w) {}

    std::size_t columns() const { return N * plane_p; }
    std::ptrdiff_t tap_offset(std::size_t ky, std::size_t kx) const {
        return (static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(p)) * static_cast<std::ptrdiff_t>(Wp) +
               (static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(p));
    }
};

// NCHW (channels = g.C) -> padded channel-major buffer (zero border).
void pack_padded(const float* src, const PaddedGeometry& g, std::size_t channels, std::vector<float>& buf) {
    buf.assign(channels * g.columns(), 0.0f);
    for (std::size_t n = 0; n < g.N; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            const float* s = src + (n * channels + c) * g.H * g.W;
            float* d = buf.data() + c * g.columns() + n * g.plane_p + g.first;
            for (std::size_t y = 0; y < g.H; ++y) std::copy_n(s + y * g.W, g.W, d + y * g.Wp);
        }
    }
}

// Inverse of pack_padded over the interior; `accumulate` adds instead of assigning.
void unpack_padded(const float* buf, const PaddedGeometry& g, std::size_t channels, float* dst, bool accumulate) {
    for (std::size_t n = 0; n < g.N; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            const float* s = buf + c * g.columns() + n * g.plane_p + g.first;
            float* d = dst + (n * channels + c) * g.H * g.W;
            for (std::size_t y = 0; y < g.H; ++y) {
                if (accumulate) {
                    for (std::size_t x = 0; x < g.W; ++x) d[y * g.W + x] += s[y * g.Wp + x];
                } else {
                    std::copy_n(s + y * g.Wp, g.W, d + y * g.W);
                }
            }
        }
    }
}

// (out, in, k, k) -> k*k contiguous (out, in) tap matrices.
std::vector<float> split_taps(const Tensor& w) {
    const std::size_t Cout = w.dim(0), Cin = w.dim(1), kk = w.dim(2) * w.dim(3);
    std::vector<float> taps(kk * Cout * Cin);
    for (std::size_t o = 0; o < Cout; ++o) {
        for (std::size_t i = 0; i < Cin; ++i) {
            for (std::size_t t = 0; t < kk; ++t) taps[(t * Cout + o) * Cin + i] = w[(o * Cin + i) * kk + t];
        }
    }
    return taps;
}

} // namespace

LayerParams LayerParams::make(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                              bool with_bn, std::mt19937_64& rng, double gain) {
    if (in_channels == 0 || out_channels == 0 || kernel_size % 2 == 0) {
        throw ConfigError("invalid layer geometry");
    }
    LayerParams p;
    Tensor w({out_channels, in_channels, kernel_size, kernel_size});
    const double fan_in = static_cast<double>(in_channels * kernel_size * kernel_size);
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
    for (auto& v : w.data()) v = static_cast<float>(dist(rng));
    p.weights = Var(std::move(w), true);
    p.bias = Var(Tensor({out_channels}, 0.0f), true);
    p.has_bn = with_bn;
    if (with_bn) {
        p.bn_scale = Var(Tensor({out_channels}, 1.0f), true);
        p.bn_shift = Var(Tensor({out_channels}, 0.0f), true);
        p.bn_running_mean = Tensor({out_channels}, 0.0f);
        p.bn_running_var = Tensor({out_channels}, 1.0f);
    }
    return p;
}

std::size_t LayerParams::parameter_count() const {
    std::size_t n = weights.value().numel() + bias.value().numel();
    if (has_bn) n += bn_scale.value().numel() + bn_shift.value().numel();
    return n;
}

Var conv2d(const Var& input, const Var& weights, const Var& bias) {
    const Tensor& x = input.value();
    const Tensor& w = weights.value();
    require_rank4(x, "conv2d");
    if (w.rank() != 4 || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0) {
        throw ConfigError("conv2d: weights must be (out, in, k, k) with odd k, got " + shape_to_string(w.shape()));
    }
    const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != Cin) {
        throw ConfigError("conv2d: input has " + std::to_string(Cin) + " channels, weights expect " +
                          std::to_string(w.dim(1)));
    }
    if (bias.value().numel() != Cout) throw ConfigError("conv2d: bias length does not match out_channels");

    const PaddedGeometry g(N, Cin, H, W, k);
    const auto ci = static_cast<Eigen::Index>(Cin);
    const auto co = static_cast<Eigen::Index>(Cout);
    const auto len = static_cast<Eigen::Index>(g.length);
    const auto cols = static_cast<Eigen::Index>(g.columns());

    std::vector<float> xp;
    pack_padded(x.ptr(), g, Cin, xp);
    const std::vector<float> taps = split_taps(w);
    std::vector<float> yp(Cout * g.columns(), 0.0f);
    MapRM ym(yp.data(), co, cols);
    CMapRM xm(xp.data(), ci, cols);
    for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
            CMapRM wt(taps.data() + (ky * k + kx) * Cout * Cin, co, ci);
            const auto src = static_cast<Eigen::Index>(static_cast<std::ptrdiff_t>(g.first) + g.tap_offset(ky, kx));
            ym.middleCols(static_cast<Eigen::Index>(g.first), len).noalias() += wt * xm.middleCols(src, len);
        }
    }
    Tensor y({N, Cout, H, W});
    unpack_padded(yp.data(), g, Cout, y.ptr(), false);
    const float* b = bias.value().ptr();
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < Cout; ++o) {
            float* d = y.ptr() + (n * Cout + o) * H * W;
            for (std::size_t i = 0; i < H * W; ++i) d[i] += b[o];
        }
    }

    return Var::make_result(std::move(y), {input, weights, bias}, [g, k](Node& self) {
        Node& in = *self.inputs[0];
        Node& wn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const std::size_t Cin = g.C, Cout = wn.value.dim(0);
        const auto ci = static_cast<Eigen::Index>(Cin);
        const auto co = static_cast<Eigen::Index>(Cout);
        const auto len = static_cast<Eigen::Index>(g.length);
        const auto cols = static_cast<Eigen::Index>(g.columns());
        const auto first = static_cast<Eigen::Index>(g.first);
        const Tensor& gy = self.grad;

        if (bn.requires_grad) {
            Tensor& db = bn.grad_buffer();
            for (std::size_t n = 0; n < g.N; ++n) {
                for (std::size_t o = 0; o < Cout; ++o) {
                    const float* s = gy.ptr() + (n * Cout + o) * g.H * g.W;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < g.H * g.W; ++i) acc += s[i];
                    db[o] += static_cast<float>(acc);
                }
            }
        }
        if (!wn.requires_grad && !in.requires_grad) return;

        std::vector<float> gyp;
        pack_padded(gy.ptr(), g, Cout, gyp);
        CMapRM gym(gyp.data(), co, cols);

        if (wn.requires_grad) {
            std::vector<float> xp;
            pack_padded(in.value.ptr(), g, Cin, xp);
            CMapRM xm(xp.data(), ci, cols);
            std::vector<float> dtap(Cout * Cin);
            Tensor& dw = wn.grad_buffer();
            const std::size_t kk = k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const auto src = first + static_cast<Eigen::Index>(g.tap_offset(ky, kx));
                    MapRM dt(dtap.data(), co, ci);
                    dt.noalias() = gym.middleCols(first, len) * xm.middleCols(src, len).transpose();
                    const std::size_t t = ky * k + kx;
                    for (std::size_t o = 0; o < Cout; ++o) {
                        for (std::size_t i = 0; i < Cin; ++i) dw[(o * Cin + i) * kk + t] += dtap[o * Cin + i];
                    }
                }
            }
        }
        if (in.requires_grad) {
            const std::vector<float> taps = split_taps(wn.value);
            std::vector<float> dxp(Cin * g.columns(), 0.0f);
            MapRM dxm(dxp.data(), ci, cols);
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    CMapRM wt(taps.data() + (ky * k + kx) * Cout * Cin, co, ci);
                    const auto dst = first + static_cast<Eigen::Index>(g.tap_offset(ky, kx));
                    dxm.middleCols(dst, len).noalias() += wt.transpose() * gym.middleCols(first, len);
                }
            }
            unpack_padded(dxp.data(), g, Cin, in.grad_buffer().ptr(), true);
        }
    });
}

Var conv2d(const Var& input, const LayerParams& params) { return conv2d(input, params.weights, params.bias); }

Var batch_norm(const Var& input, LayerParams& params, BnMode mode) {
    const Tensor& x = input.value();
    require_rank4(x, "batch_norm");
    if (!params.has_bn) throw ConfigError("batch_norm: layer has no batch-norm parameters");
    const std::size_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
    if (params.bn_scale.value().numel() != C) {
        throw ConfigError("batch_norm: input has " + std::to_string(C) + " channels, parameters have " +
                          std::to_string(params.bn_scale.value().numel()));
    }
    const std::size_t count = N * plane;
    const Tensor& gamma = params.bn_scale.value();
    const Tensor& beta = params.bn_shift.value();

    Tensor y(x.shape());
    // Normalised activations and inverse std per channel, kept for backward.
    auto xhat = std::make_shared<Tensor>(x.shape());
    auto inv_std = std::make_shared<std::vector<float>>(C);

    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0, var = 0.0;
        if (mode == BnMode::Train) {
            for (std::size_t n = 0; n < N; ++n) {
                const float* p = x.ptr() + (n * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) mean += p[i];
            }
            mean /= static_cast<double>(count);
            for (std::size_t n = 0; n < N; ++n) {
                const float* p = x.ptr() + (n * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean;
                    var += d * d;
                }
            }
            const double unbiased = count > 1 ? var / static_cast<double>(count - 1) : 0.0;
            var /= static_cast<double>(count);
            params.bn_running_mean[c] =
                static_cast<float>(kBnMomentum * params.bn_running_mean[c] + (1.0 - kBnMomentum) * mean);
            params.bn_running_var[c] =
                static_cast<float>(kBnMomentum * params.bn_running_var[c] + (1.0 - kBnMomentum) * unbiased);
        } else {
            mean = params.bn_running_mean[c];
            var = params.bn_running_var[c];
        }
        const double is = 1.0 / std::sqrt(var + static_cast<double>(kBnEpsilon));
        (*inv_std)[c] = static_cast<float>(is);
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t off = (n * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const float h = static_cast<float>((x[off + i] - mean) * is);
                (*xhat)[off + i] = h;
                y[off + i] = gamma[c] * h + beta[c];
            }
        }
    }

    const bool train = mode == BnMode::Train;
    return Var::make_result(std::move(y), {input, params.bn_scale, params.bn_shift}, [=](Node& self) {
        Node& in = *self.inputs[0];
        Node& gn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const Tensor& gy = self.grad;
        const Tensor& g = gn.value;
        for (std::size_t c = 0; c < C; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t off = (n * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += gy[off + i];
                    sum_dy_xhat += static_cast<double>(gy[off + i]) * (*xhat)[off + i];
                }
            }
            if (gn.requires_grad) gn.grad_buffer()[c] += static_cast<float>(sum_dy_xhat);
            if (bn.requires_grad) bn.grad_buffer()[c] += static_cast<float>(sum_dy);
            if (!in.requires_grad) continue;
            Tensor& gx = in.grad_buffer();
            const double scale = static_cast<double>(g[c]) * (*inv_std)[c];
            const double m = static_cast<double>(count);
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t off = (n * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    double d = gy[off + i];
                    if (train) d -= (sum_dy + (*xhat)[off + i] * sum_dy_xhat) / m;
                    gx[off + i] += static_cast<float>(scale * d);
                }
            }
        }
    });
}

Var relu(const Var& input) {
    const Tensor& x = input.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    return Var::make_result(std::move(y), {input}, [](Node& self) {
        Node& in = *self.inputs[0];
        Tensor& gx = in.grad_buffer();
        const Tensor& xv = in.value;
        for (std::size_t i = 0; i < xv.numel(); ++i) {
            if (xv[i] > 0.0f) gx[i] += self.grad[i];
        }
    });
}

Var concat_channels(const Var& a, const Var& b) { return concat_channels(std::vector<Var>{a, b}); }

Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) throw ConfigError("concat_channels: no inputs");
    const Tensor& first = parts.front().value();
    require_rank4(first, "concat_channels");
    const std::size_t N = first.dim(0), H = first.dim(2), W = first.dim(3);
    std::size_t C = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        const Tensor& t = p.value();
        require_rank4(t, "concat_channels");
        if (t.dim(0) != N || t.dim(2) != H || t.dim(3) != W) {
            throw ConfigError("concat_channels: extents " + shape_to_string(t.shape()) + " incompatible with " +
                              shape_to_string(first.shape()));
        }
        offsets.push_back(C);
        C += t.dim(1);
    }
    const std::size_t plane = H * W;
    Tensor y({N, C, H, W});
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const Tensor& t = parts[i].value();
        const std::size_t ci = t.dim(1);
        for (std::size_t n = 0; n < N; ++n) {
            std::copy_n(t.ptr() + n * ci * plane, ci * plane, y.ptr() + (n * C + offsets[i]) * plane);
        }
    }
    return Var::make_result(std::move(y), parts, [=](Node& self) {
        for (std::size_t i = 0; i < self.inputs.size(); ++i) {
            Node& in = *self.inputs[i];
            if (!in.requires_grad) continue;
            const std::size_t ci = in.value.dim(1);
            Tensor& g = in.grad_buffer();
            for (std::size_t n = 0; n < N; ++n) {
                const float* src = self.grad.ptr() + (n * C + offsets[i]) * plane;
                float* dst = g.ptr() + n * ci * plane;
                for (std::size_t j = 0; j < ci * plane; ++j) dst[j] += src[j];
            }
        }
    });
}

Var add_residual(const Var& a, const Var& b) {
    if (!a.value().same_shape(b.value())) {
        throw ConfigError("add_residual: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                          shape_to_string(b.shape()));
    }
    Tensor y(a.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] + b.value()[i];
    return Var::make_result(std::move(y), {a, b}, [](Node& self) {
        for (auto& in : self.inputs) {
            if (!in->requires_grad) continue;
            Tensor& g = in->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
    });
}

Var apply_layer(const Var& input, LayerParams& params, BnMode mode) {
    Var out = conv2d(input, params);
    if (!params.has_bn) return out;
    return relu(batch_norm(out, params, mode));
}

} // namespace grdsr
