#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grdsr/image.hpp"
#include "grdsr/layers.hpp"
#include "grdsr/optim.hpp"
#include "grdsr/params_io.hpp"

namespace grdsr {

// Weight gain of the final 3x3 reconstruction conv; the predicted residual
// starts near zero so the network begins close to plain interpolation.
inline constexpr double kReconstructionGain = 1e-3;

// Topology of the guided residual dense network. guide_channels == 0 selects
// the unguided variant (no guidance branch).
struct GrdConfig {
    std::size_t num_blocks = 4;
    std::size_t layers_per_block = 4;
    std::size_t base_channels = 32;
    std::size_t growth_channels = 16;
    std::size_t guide_channels = 16;

    void validate() const;
    bool guided() const noexcept { return guide_channels > 0; }
    // Input channels of dense layer k inside a block.
    std::size_t layer_input_channels(std::size_t k) const {
        return base_channels + k * growth_channels + guide_channels;
    }

    friend bool operator==(const GrdConfig&, const GrdConfig&) = default;
};

void to_json(nlohmann::json& j, const GrdConfig& c);
void from_json(const nlohmann::json& j, GrdConfig& c);

struct GrdBlock {
    std::vector<LayerParams> layers; // 3x3 conv + BN + ReLU, densely connected
    LayerParams fusion;              // 1x1 conv back to base_channels, then local residual add
};

struct GrdNetwork {
    GrdConfig config;
    LayerParams shallow_feature_layer; // target branch entry
    LayerParams guide_feature_layer;   // shared guidance extractor (guided only)
    std::vector<GrdBlock> blocks;
    LayerParams fusion_layer;          // 1x1 over concatenated block outputs
    LayerParams reconstruction_layer;  // 3x3 to one channel, no BN/ReLU

    // Images are divided by this before entering the network.
    float intensity_scale = 255.0f;
    // Per-stage magnification the weights were trained for; 0 = unspecified.
    double stage_factor = 0.0;
    std::string regime;

    bool guided() const noexcept { return config.guided(); }
    ModelParams parameters();
    std::size_t parameter_count() const;
    std::vector<NamedTensor> named_tensors() const; // parameters and BN running statistics
};

GrdNetwork build_network(const GrdConfig& config, std::uint64_t seed);

// Test hooks for probing the dense wiring.
struct ForwardProbe {
    // (block, layer) whose output is replaced by zeros.
    std::optional<std::pair<std::size_t, std::size_t>> zero_layer_output;
    // Filled with the input tensor of every dense layer, [block][layer].
    std::vector<std::vector<Tensor>>* layer_inputs = nullptr;
    // Filled with the output of every conv-BN-ReLU layer in evaluation order.
    std::vector<Tensor>* activations = nullptr;
};

// Guided forward pass: returns lr_interp + predicted residual. Both inputs are
// N x 1 x H x W with identical extents.
Var forward(GrdNetwork& net, const Var& lr_interp, const Var& guide, BnMode mode = BnMode::Eval,
            const ForwardProbe* probe = nullptr);

// Forward pass of the unguided variant. ConfigError if `net` has a guidance branch.
Var forward_unguided(GrdNetwork& net, const Var& lr_interp, BnMode mode = BnMode::Eval,
                     const ForwardProbe* probe = nullptr);

// Dispatches on net.guided(); `guide` is ignored for unguided networks.
Var forward_any(GrdNetwork& net, const Var& lr_interp, const Var& guide, BnMode mode);

// Image-level inference in eval mode, handling intensity scaling.
ImagePlane predict(GrdNetwork& net, const ImagePlane& lr_interp, const ImagePlane* guide);

Tensor plane_to_tensor(const ImagePlane& plane, float scale = 1.0f);
ImagePlane tensor_to_plane(const Tensor& t, std::size_t batch_index, float scale, const ImagePlane& like);

void save_network(const std::filesystem::path& path, const GrdNetwork& net);
GrdNetwork load_network(const std::filesystem::path& path);

// Overwrites parameters and running statistics by name; FormatError on a
// missing tensor or shape mismatch.
void assign_tensors(GrdNetwork& net, const std::vector<NamedTensor>& tensors);

// Copies all tensors (parameters and running statistics) from src into dst.
void copy_weights(const GrdNetwork& src, GrdNetwork& dst);

} // namespace grdsr
