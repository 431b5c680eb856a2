#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <json.hpp>

#include "grdsr/image.hpp"

namespace grdsr {

// Synthetic registered two-modality phantom. Both modalities are rendered
// from one label field; modality_a is the target (T2-like), modality_b the
// guide (T1-like) with roughly inverted tissue contrast.
struct PhantomSpec {
    std::uint64_t seed = 1;
    std::size_t num_structures = 6; // 3..8 in practice; label 0 is background
    std::vector<float> contrast_map_a{0.0f, 75.0f, 145.0f, 35.0f, 115.0f, 165.0f, 55.0f, 95.0f, 130.0f};
    std::vector<float> contrast_map_b{0.0f, 180.0f, 110.0f, 220.0f, 140.0f, 90.0f, 200.0f, 160.0f, 125.0f};
    float texture_amplitude = 0.08f; // relative multiplicative modulation
    std::size_t width = 128;
    std::size_t height = 128;
    std::size_t depth = 32;
    double spacing_mm = 1.0;

    void validate() const;
};

void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);

struct PhantomPair {
    Volume modality_a;
    Volume modality_b;
    std::vector<std::uint8_t> labels; // same indexing as the volumes
};

PhantomPair generate_phantom_pair(const PhantomSpec& spec);

// Volume files: JSON header at `header_path` plus a sibling payload
// (extension replaced by ".raw") of little-endian float32 voxels, x fastest.
void write_volume(const std::filesystem::path& header_path, const Volume& volume,
                  const nlohmann::json& metadata = nlohmann::json::object());

struct VolumeFile {
    Volume volume;
    nlohmann::json metadata;
};

VolumeFile read_volume_file(const std::filesystem::path& header_path);
Volume read_volume(const std::filesystem::path& header_path);
std::filesystem::path payload_path_for(const std::filesystem::path& header_path);

struct GraymapNormalization {
    enum class Mode { MinMax, FixedRange } mode = Mode::MinMax;
    double low = 0.0;  // FixedRange only
    double high = 255.0;
};

// 16-bit binary PGM (P5, maxval 65535, big-endian samples). The mapping is
// recorded in a comment line so the file can be un-normalised.
void export_slice_image(const ImagePlane& plane, const std::filesystem::path& path,
                        const GraymapNormalization& normalization = {});

// Reads a graymap written by export_slice_image and maps it back to intensities.
ImagePlane import_slice_image(const std::filesystem::path& path);

struct PatchCoord {
    std::size_t x = 0;
    std::size_t y = 0;
    friend bool operator==(const PatchCoord&, const PatchCoord&) = default;
};

std::vector<PatchCoord> grid_patch_coords(std::size_t width, std::size_t height, std::size_t size, std::size_t stride);
std::vector<PatchCoord> random_patch_coords(std::size_t width, std::size_t height, std::size_t size, std::size_t count,
                                            std::mt19937_64& rng);
ImagePlane extract_patch(const ImagePlane& plane, PatchCoord at, std::size_t size);
std::vector<ImagePlane> extract_patches(const ImagePlane& plane, const std::vector<PatchCoord>& coords, std::size_t size);

} // namespace grdsr
