#include "grdsr/grd_model.hpp"

#include <map>
#include <random>

#include "grdsr/errors.hpp"

namespace grdsr {

void GrdConfig::validate() const {
    if (num_blocks < 1 || layers_per_block < 1 || base_channels < 1 || growth_channels < 1) {
        throw ConfigError("GrdConfig: num_blocks, layers_per_block, base_channels and growth_channels must be >= 1");
    }
}

void to_json(nlohmann::json& j, const GrdConfig& c) {
    j = {{"num_blocks", c.num_blocks},
         {"layers_per_block", c.layers_per_block},
         {"base_channels", c.base_channels},
         {"growth_channels", c.growth_channels},
         {"guide_channels", c.guide_channels}};
}

void from_json(const nlohmann::json& j, GrdConfig& c) {
    c.num_blocks = j.value("num_blocks", c.num_blocks);
    c.layers_per_block = j.value("layers_per_block", c.layers_per_block);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.growth_channels = j.value("growth_channels", c.growth_channels);
    c.guide_channels = j.value("guide_channels", c.guide_channels);
}

GrdNetwork build_network(const GrdConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    GrdNetwork net;
    net.config = config;
    const std::size_t base = config.base_channels;
    net.shallow_feature_layer = LayerParams::make(1, base, 3, true, rng);
    if (config.guided()) net.guide_feature_layer = LayerParams::make(1, config.guide_channels, 3, true, rng);
    for (std::size_t b = 0; b < config.num_blocks; ++b) {
        GrdBlock block;
        for (std::size_t k = 0; k < config.layers_per_block; ++k) {
            block.layers.push_back(LayerParams::make(config.layer_input_channels(k), config.growth_channels, 3, true, rng));
        }
        block.fusion = LayerParams::make(config.layer_input_channels(config.layers_per_block), base, 1, false, rng, 1.0);
        net.blocks.push_back(std::move(block));
    }
    net.fusion_layer = LayerParams::make(config.num_blocks * base, base, 1, false, rng, 1.0);
    // A near-zero residual at initialisation keeps early training close to the
    // interpolated input.
    net.reconstruction_layer = LayerParams::make(base, 1, 3, false, rng, kReconstructionGain);
    return net;
}

namespace {

template <class Fn>
void for_each_layer(const GrdNetwork& net, Fn&& fn) {
    fn("shallow", net.shallow_feature_layer);
    if (net.guided()) fn("guide", net.guide_feature_layer);
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        const std::string prefix = "block" + std::to_string(b);
        for (std::size_t k = 0; k < net.blocks[b].layers.size(); ++k) {
            fn(prefix + ".layer" + std::to_string(k), net.blocks[b].layers[k]);
        }
        fn(prefix + ".fusion", net.blocks[b].fusion);
    }
    fn("fusion", net.fusion_layer);
    fn("reconstruction", net.reconstruction_layer);
}

Var zeros_var(const Shape& shape) { return Var(Tensor(shape, 0.0f), false); }

Var run_network(GrdNetwork& net, const Var& lr_interp, const Var* guide, BnMode mode, const ForwardProbe* probe) {
    const Tensor& x = lr_interp.value();
    if (x.rank() != 4 || x.dim(1) != 1) throw ConfigError("forward: lr_interp must be N x 1 x H x W");
    if (guide) {
        const Tensor& g = guide->value();
        if (g.rank() != 4 || g.dim(1) != 1 || g.dim(0) != x.dim(0) || g.dim(2) != x.dim(2) || g.dim(3) != x.dim(3)) {
            throw ConfigError("forward: guide extents " + shape_to_string(g.shape()) + " do not match lr_interp " +
                              shape_to_string(x.shape()));
        }
    }
    if (probe && probe->layer_inputs) probe->layer_inputs->assign(net.blocks.size(), {});
    if (probe && probe->activations) probe->activations->clear();
    auto record = [&](const Var& v) {
        if (probe && probe->activations) probe->activations->push_back(v.value());
    };

    const Var shallow = apply_layer(lr_interp, net.shallow_feature_layer, mode);
    record(shallow);
    Var guide_features;
    if (guide) {
        guide_features = apply_layer(*guide, net.guide_feature_layer, mode);
        record(guide_features);
    }

    Var features = shallow;
    std::vector<Var> block_outputs;
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        GrdBlock& block = net.blocks[b];
        std::vector<Var> dense{features};
        if (guide) dense.push_back(guide_features);
        for (std::size_t k = 0; k < block.layers.size(); ++k) {
            Var in = dense.size() == 1 ? dense.front() : concat_channels(dense);
            if (probe && probe->layer_inputs) (*probe->layer_inputs)[b].push_back(in.value());
            Var out = apply_layer(in, block.layers[k], mode);
            record(out);
            if (probe && probe->zero_layer_output == std::pair{b, k}) out = zeros_var(out.shape());
            dense.push_back(out);
        }
        Var fused = conv2d(concat_channels(dense), block.fusion);
        features = add_residual(fused, features);
        block_outputs.push_back(features);
    }
    Var global = block_outputs.size() == 1 ? block_outputs.front() : concat_channels(block_outputs);
    global = add_residual(conv2d(global, net.fusion_layer), shallow);
    Var residual = conv2d(global, net.reconstruction_layer);
    return add_residual(lr_interp, residual);
}

} // namespace

ModelParams GrdNetwork::parameters() {
    ModelParams out;
    for_each_layer(*this, [&](const std::string& name, const LayerParams& l) {
        out.push_back({name + ".weight", l.weights});
        out.push_back({name + ".bias", l.bias});
        if (l.has_bn) {
            out.push_back({name + ".bn_scale", l.bn_scale});
            out.push_back({name + ".bn_shift", l.bn_shift});
        }
    });
    return out;
}

std::size_t GrdNetwork::parameter_count() const {
    std::size_t n = 0;
    for_each_layer(*this, [&](const std::string&, const LayerParams& l) { n += l.parameter_count(); });
    return n;
}

std::vector<NamedTensor> GrdNetwork::named_tensors() const {
    std::vector<NamedTensor> out;
    for_each_layer(*this, [&](const std::string& name, const LayerParams& l) {
        out.push_back({name + ".weight", l.weights.value()});
        out.push_back({name + ".bias", l.bias.value()});
        if (l.has_bn) {
            out.push_back({name + ".bn_scale", l.bn_scale.value()});
            out.push_back({name + ".bn_shift", l.bn_shift.value()});
            out.push_back({name + ".running_mean", l.bn_running_mean});
            out.push_back({name + ".running_var", l.bn_running_var});
        }
    });
    return out;
}

Var forward(GrdNetwork& net, const Var& lr_interp, const Var& guide, BnMode mode, const ForwardProbe* probe) {
    if (!net.guided()) throw ConfigError("forward: network has no guidance branch; use forward_unguided");
    if (!guide) throw ConfigError("forward: guided network requires a guide image");
    return run_network(net, lr_interp, &guide, mode, probe);
}

Var forward_unguided(GrdNetwork& net, const Var& lr_interp, BnMode mode, const ForwardProbe* probe) {
    if (net.guided()) throw ConfigError("forward_unguided: guided network invoked without a guide");
    return run_network(net, lr_interp, nullptr, mode, probe);
}

Var forward_any(GrdNetwork& net, const Var& lr_interp, const Var& guide, BnMode mode) {
    return net.guided() ? forward(net, lr_interp, guide, mode) : forward_unguided(net, lr_interp, mode);
}

Tensor plane_to_tensor(const ImagePlane& plane, float scale) {
    Tensor t({1, 1, plane.height, plane.width});
    for (std::size_t i = 0; i < plane.size(); ++i) t[i] = plane.pixels[i] * scale;
    return t;
}

ImagePlane tensor_to_plane(const Tensor& t, std::size_t batch_index, float scale, const ImagePlane& like) {
    ImagePlane out(t.dim(3), t.dim(2), 0.0f, like.dx, like.dy);
    const std::size_t plane = t.dim(2) * t.dim(3);
    const float* src = t.ptr() + batch_index * t.dim(1) * plane;
    for (std::size_t i = 0; i < plane; ++i) out.pixels[i] = src[i] * scale;
    return out;
}

ImagePlane predict(GrdNetwork& net, const ImagePlane& lr_interp, const ImagePlane* guide) {
    NoGradGuard no_grad;
    const float inv = 1.0f / net.intensity_scale;
    Var x(plane_to_tensor(lr_interp, inv));
    Var out;
    if (net.guided()) {
        if (!guide) throw ConfigError("predict: guided network requires a guide image");
        if (!guide->same_extents(lr_interp)) throw ConfigError("predict: guide extents do not match input");
        out = forward(net, x, Var(plane_to_tensor(*guide, inv)), BnMode::Eval);
    } else {
        out = forward_unguided(net, x, BnMode::Eval);
    }
    require_finite(out.value(), "network output");
    return tensor_to_plane(out.value(), 0, net.intensity_scale, lr_interp);
}

void save_network(const std::filesystem::path& path, const GrdNetwork& net) {
    nlohmann::json meta;
    meta["config"] = net.config;
    meta["intensity_scale"] = net.intensity_scale;
    meta["stage_factor"] = net.stage_factor;
    meta["regime"] = net.regime;
    save_params(path, net.named_tensors(), meta);
}

void assign_tensors(GrdNetwork& net, const std::vector<NamedTensor>& tensors) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t.tensor;
    auto take = [&](const std::string& name, Tensor& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("model file lacks tensor '" + name + "'");
        if (!it->second->same_shape(dst)) {
            throw FormatError("tensor '" + name + "' has shape " + shape_to_string(it->second->shape()) + ", expected " +
                              shape_to_string(dst.shape()));
        }
        dst = *it->second;
    };
    for_each_layer(net, [&](const std::string& name, const LayerParams& lc) {
        auto& l = const_cast<LayerParams&>(lc);
        take(name + ".weight", l.weights.mutable_value());
        take(name + ".bias", l.bias.mutable_value());
        if (l.has_bn) {
            take(name + ".bn_scale", l.bn_scale.mutable_value());
            take(name + ".bn_shift", l.bn_shift.mutable_value());
            take(name + ".running_mean", l.bn_running_mean);
            take(name + ".running_var", l.bn_running_var);
        }
    });
}

GrdNetwork load_network(const std::filesystem::path& path) {
    LoadedParams loaded = load_params(path);
    GrdConfig config = loaded.metadata.at("config").get<GrdConfig>();
    GrdNetwork net = build_network(config, 0);
    net.intensity_scale = loaded.metadata.value("intensity_scale", 255.0f);
    net.stage_factor = loaded.metadata.value("stage_factor", 0.0);
    net.regime = loaded.metadata.value("regime", std::string());
    assign_tensors(net, loaded.tensors);
    return net;
}

void copy_weights(const GrdNetwork& src, GrdNetwork& dst) {
    if (!(src.config == dst.config)) throw ConfigError("copy_weights: topology mismatch");
    assign_tensors(dst, src.named_tensors());
}

} // namespace grdsr
