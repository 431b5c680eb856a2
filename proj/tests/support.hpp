#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "grdsr/image.hpp"
#include "grdsr/tensor.hpp"

namespace testing {

inline grdsr::Tensor random_tensor(const grdsr::Shape& shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    grdsr::Tensor t(shape);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

inline grdsr::ImagePlane random_plane(std::size_t w, std::size_t h, std::uint64_t seed, float lo = 0.0f,
                                      float hi = 255.0f) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    grdsr::ImagePlane p(w, h);
    for (auto& v : p.pixels) v = dist(rng);
    return p;
}

// Smooth test pattern with edges, values in [0, 255].
inline grdsr::ImagePlane pattern_plane(std::size_t w, std::size_t h) {
    grdsr::ImagePlane p(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / static_cast<double>(w);
            const double v = static_cast<double>(y) / static_cast<double>(h);
            double val = 100.0 + 60.0 * std::sin(6.0 * u) * std::cos(4.0 * v);
            if ((u - 0.5) * (u - 0.5) + (v - 0.45) * (v - 0.45) < 0.06) val += 70.0;
            p.at(x, y) = static_cast<float>(val);
        }
    }
    return p;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("grdsr_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace testing
