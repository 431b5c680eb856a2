#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "grdsr/tensor.hpp"

namespace grdsr {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Single-file parameter container:
//   line 1:  "GRDSR-PARAMS 1 <manifest-bytes>\n"
//   manifest: JSON {"byte_order":"little","dtype":"float32","tensors":[{name,shape,offset}],"metadata":{...}}
//   payload: all tensors back to back as little-endian float32, offsets in elements.
void save_params(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                 const nlohmann::json& metadata);

struct LoadedParams {
    std::vector<NamedTensor> tensors;
    nlohmann::json metadata;
};

LoadedParams load_params(const std::filesystem::path& path);

// Little-endian float32 encode/decode shared by every binary payload.
std::string encode_f32_le(std::span<const float> values);
std::vector<float> decode_f32_le(std::string_view bytes);

// Write via a temporary sibling then rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

} // namespace grdsr
