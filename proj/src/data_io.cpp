#include "grdsr/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "grdsr/errors.hpp"
#include "grdsr/params_io.hpp"

namespace grdsr {

namespace fs = std::filesystem;

void PhantomSpec::validate() const {
    if (width < 8 || height < 8 || depth < 1) throw ConfigError("phantom extents must be at least 8x8x1");
    if (num_structures < 1) throw ConfigError("phantom needs at least one structure");
    const std::size_t labels = num_structures + 1;
    if (contrast_map_a.size() < labels || contrast_map_b.size() < labels) {
        throw ConfigError("contrast maps need " + std::to_string(labels) + " entries");
    }
    for (const auto* map : {&contrast_map_a, &contrast_map_b}) {
        std::set<float> seen(map->begin(), map->begin() + static_cast<std::ptrdiff_t>(labels));
        if (seen.size() != labels) throw ConfigError("contrast maps must assign distinct intensities to labels");
    }
    if (texture_amplitude < 0.0f || texture_amplitude >= 1.0f) throw ConfigError("texture_amplitude must be in [0, 1)");
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
    j = {{"seed", s.seed},
         {"num_structures", s.num_structures},
         {"contrast_map_a", s.contrast_map_a},
         {"contrast_map_b", s.contrast_map_b},
         {"texture_amplitude", s.texture_amplitude},
         {"extents", {s.width, s.height, s.depth}},
         {"spacing_mm", s.spacing_mm}};
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
    s.seed = j.value("seed", s.seed);
    s.num_structures = j.value("num_structures", s.num_structures);
    s.contrast_map_a = j.value("contrast_map_a", s.contrast_map_a);
    s.contrast_map_b = j.value("contrast_map_b", s.contrast_map_b);
    s.texture_amplitude = j.value("texture_amplitude", s.texture_amplitude);
    if (j.contains("extents")) {
        const auto e = j.at("extents").get<std::vector<std::size_t>>();
        if (e.size() != 3) throw ConfigError("phantom extents must have three entries");
        s.width = e[0];
        s.height = e[1];
        s.depth = e[2];
    }
    s.spacing_mm = j.value("spacing_mm", s.spacing_mm);
}

namespace {

struct Ellipsoid {
    double cx, cy, cz; // voxel units
    double ax, ay, az; // semi-axes
    double angle;      // in-plane rotation
    std::uint8_t label;

    bool contains(double x, double y, double z) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = (c * dx + s * dy) / ax;
        const double v = (-s * dx + c * dy) / ay;
        const double w = (z - cz) / az;
        return u * u + v * v + w * w <= 1.0;
    }
};

struct Wave {
    double kx, ky, kz, phase;
    double eval(double x, double y, double z) const { return std::sin(kx * x + ky * y + kz * z + phase); }
};

} // namespace

PhantomPair generate_phantom_pair(const PhantomSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const double W = static_cast<double>(spec.width), H = static_cast<double>(spec.height),
                 D = static_cast<double>(spec.depth);
    std::vector<Ellipsoid> shapes;
    // Outer "head" structure, then children nested in a randomly chosen earlier structure.
    shapes.push_back({W / 2.0 + uniform(-0.03, 0.03) * W, H / 2.0 + uniform(-0.03, 0.03) * H, D / 2.0,
                      uniform(0.38, 0.45) * W, uniform(0.40, 0.46) * H, std::max(0.75 * D, 2.0),
                      uniform(-0.2, 0.2), 1});
    for (std::size_t i = 1; i < spec.num_structures; ++i) {
        const Ellipsoid& parent = shapes[static_cast<std::size_t>(uniform(0.0, static_cast<double>(shapes.size())))];
        const double fx = uniform(0.25, 0.6), fy = uniform(0.25, 0.6);
        Ellipsoid e{};
        e.ax = std::max(parent.ax * fx, 3.0);
        e.ay = std::max(parent.ay * fy, 3.0);
        e.az = std::max(parent.az * uniform(0.5, 1.0), 1.5);
        const double r = uniform(0.0, 0.9) * (1.0 - std::max(fx, fy));
        const double theta = uniform(0.0, 2.0 * std::numbers::pi);
        const double c = std::cos(parent.angle), s = std::sin(parent.angle);
        const double ox = r * parent.ax * std::cos(theta), oy = r * parent.ay * std::sin(theta);
        e.cx = parent.cx + c * ox - s * oy;
        e.cy = parent.cy + s * ox + c * oy;
        e.cz = parent.cz + uniform(-0.2, 0.2) * parent.az;
        e.angle = uniform(0.0, std::numbers::pi);
        e.label = static_cast<std::uint8_t>(i + 1);
        shapes.push_back(e);
    }

    // Low-frequency waves: boundary warp (shared anatomy) and intensity texture.
    auto make_wave = [&](double min_period, double max_period) {
        const double period = uniform(min_period, max_period);
        const double dir = uniform(0.0, 2.0 * std::numbers::pi);
        const double k = 2.0 * std::numbers::pi / period;
        return Wave{k * std::cos(dir), k * std::sin(dir), k * uniform(-0.3, 0.3), uniform(0.0, 2.0 * std::numbers::pi)};
    };
    const double scale = std::min(W, H);
    std::vector<Wave> warp_x, warp_y, texture;
    for (int i = 0; i < 2; ++i) warp_x.push_back(make_wave(0.25 * scale, 0.6 * scale));
    for (int i = 0; i < 2; ++i) warp_y.push_back(make_wave(0.25 * scale, 0.6 * scale));
    for (int i = 0; i < 3; ++i) texture.push_back(make_wave(0.12 * scale, 0.4 * scale));
    const double warp_amp = 0.02 * scale;

    PhantomPair out;
    out.modality_a = Volume(spec.width, spec.height, spec.depth);
    out.modality_b = Volume(spec.width, spec.height, spec.depth);
    for (Volume* v : {&out.modality_a, &out.modality_b}) {
        v->dx = v->dy = v->dz = spec.spacing_mm;
    }
    out.labels.assign(spec.width * spec.height * spec.depth, 0);
    for (std::size_t z = 0; z < spec.depth; ++z) {
        for (std::size_t y = 0; y < spec.height; ++y) {
            for (std::size_t x = 0; x < spec.width; ++x) {
                const double fx = static_cast<double>(x), fy = static_cast<double>(y), fz = static_cast<double>(z);
                double wx = fx, wy = fy;
                for (const auto& w : warp_x) wx += warp_amp * 0.5 * w.eval(fx, fy, fz);
                for (const auto& w : warp_y) wy += warp_amp * 0.5 * w.eval(fx, fy, fz);
                std::uint8_t label = 0;
                for (const auto& e : shapes) {
                    if (e.contains(wx, wy, fz)) label = e.label;
                }
                double t = 0.0;
                for (const auto& w : texture) t += w.eval(fx, fy, fz);
                const double mod = 1.0 + spec.texture_amplitude * (t / static_cast<double>(texture.size()));
                const std::size_t idx = (z * spec.height + y) * spec.width + x;
                out.labels[idx] = label;
                out.modality_a.voxels[idx] = static_cast<float>(spec.contrast_map_a[label] * mod);
                out.modality_b.voxels[idx] = static_cast<float>(spec.contrast_map_b[label] * mod);
            }
        }
    }
    return out;
}

fs::path payload_path_for(const fs::path& header_path) {
    fs::path p = header_path;
    p.replace_extension(".raw");
    if (p == header_path) p += ".raw";
    return p;
}

void write_volume(const fs::path& header_path, const Volume& volume, const nlohmann::json& metadata) {
    const fs::path payload = payload_path_for(header_path);
    const std::string bytes = encode_f32_le(volume.voxels);
    nlohmann::json header = {{"format", "grdsr-volume"},
                             {"version", 1},
                             {"extents", {volume.width, volume.height, volume.depth}},
                             {"spacing", {volume.dx, volume.dy, volume.dz}},
                             {"dtype", "float32"},
                             {"byte_order", "little"},
                             {"payload", payload.filename().string()},
                             {"payload_bytes", bytes.size()},
                             {"metadata", metadata}};
    write_file_atomic(payload, bytes);
    write_file_atomic(header_path, header.dump(2) + "\n");
}

VolumeFile read_volume_file(const fs::path& header_path) {
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(read_file(header_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad volume header '" + header_path.string() + "': " + e.what());
    }
    if (header.value("dtype", "") != "float32" || header.value("byte_order", "") != "little") {
        throw FormatError("unsupported volume encoding in '" + header_path.string() + "'");
    }
    const auto ext = header.at("extents").get<std::vector<std::size_t>>();
    const auto sp = header.at("spacing").get<std::vector<double>>();
    if (ext.size() != 3 || sp.size() != 3) throw FormatError("volume header needs 3 extents and 3 spacings");
    fs::path payload = header_path.parent_path() / header.at("payload").get<std::string>();
    const std::string bytes = read_file(payload);
    const std::size_t expected = ext[0] * ext[1] * ext[2] * 4;
    if (bytes.size() != expected) {
        throw FormatError("volume payload '" + payload.string() + "' length mismatch: expected " +
                          std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
    }
    VolumeFile out;
    out.volume = Volume(ext[0], ext[1], ext[2]);
    out.volume.voxels = decode_f32_le(bytes);
    out.volume.dx = sp[0];
    out.volume.dy = sp[1];
    out.volume.dz = sp[2];
    out.metadata = header.value("metadata", nlohmann::json::object());
    return out;
}

Volume read_volume(const fs::path& header_path) { return read_volume_file(header_path).volume; }

void export_slice_image(const ImagePlane& plane, const fs::path& path, const GraymapNormalization& normalization) {
    if (!plane.all_finite()) throw DataError("export_slice_image: non-finite pixels");
    double lo = normalization.low, hi = normalization.high;
    const char* mode = "fixed-range";
    if (normalization.mode == GraymapNormalization::Mode::MinMax) {
        lo = plane.min_value();
        hi = plane.max_value();
        mode = "min-max";
    }
    std::ostringstream os;
    os.precision(17);
    os << "P5\n# grdsr normalization=" << mode << " low=" << lo << " high=" << hi << "\n"
       << plane.width << ' ' << plane.height << "\n65535\n";
    std::string body = os.str();
    const double span = hi - lo;
    for (float v : plane.pixels) {
        double t = span > 0.0 ? (v - lo) / span : 0.5;
        t = std::clamp(t, 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(t * 65535.0));
        body.push_back(static_cast<char>(q >> 8));
        body.push_back(static_cast<char>(q & 0xFF));
    }
    write_file_atomic(path, body);
}

ImagePlane import_slice_image(const fs::path& path) {
    const std::string file = read_file(path);
    std::istringstream is(file);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw FormatError("'" + path.string() + "' is not a binary graymap");
    double lo = 0.0, hi = 65535.0;
    std::size_t w = 0, h = 0, maxval = 0;
    is.get();
    while (is.peek() == '#') {
        std::string line;
        std::getline(is, line);
        const auto pl = line.find("low="), ph = line.find("high=");
        if (pl != std::string::npos && ph != std::string::npos) {
            lo = std::stod(line.substr(pl + 4));
            hi = std::stod(line.substr(ph + 5));
        }
    }
    is >> w >> h >> maxval;
    is.get();
    if (maxval != 65535) throw FormatError("only 16-bit graymaps are supported");
    const auto offset = static_cast<std::size_t>(is.tellg());
    if (file.size() < offset + w * h * 2) throw FormatError("truncated graymap '" + path.string() + "'");
    ImagePlane out(w, h);
    const double span = hi - lo;
    for (std::size_t i = 0; i < w * h; ++i) {
        const auto q = static_cast<std::uint16_t>((static_cast<unsigned char>(file[offset + 2 * i]) << 8) |
                                                  static_cast<unsigned char>(file[offset + 2 * i + 1]));
        out.pixels[i] = static_cast<float>(span > 0.0 ? lo + span * (q / 65535.0) : lo);
    }
    return out;
}

std::vector<PatchCoord> grid_patch_coords(std::size_t width, std::size_t height, std::size_t size, std::size_t stride) {
    if (size == 0 || size > width || size > height) {
        throw DataError("patch size " + std::to_string(size) + " exceeds plane extents");
    }
    if (stride == 0) throw DataError("patch stride must be positive");
    std::vector<PatchCoord> out;
    for (std::size_t y = 0; y + size <= height; y += stride) {
        for (std::size_t x = 0; x + size <= width; x += stride) out.push_back({x, y});
    }
    return out;
}

std::vector<PatchCoord> random_patch_coords(std::size_t width, std::size_t height, std::size_t size, std::size_t count,
                                            std::mt19937_64& rng) {
    if (size == 0 || size > width || size > height) {
        throw DataError("patch size " + std::to_string(size) + " exceeds plane extents");
    }
    std::vector<PatchCoord> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t x = static_cast<std::size_t>(rng() % (width - size + 1));
        const std::size_t y = static_cast<std::size_t>(rng() % (height - size + 1));
        out.push_back({x, y});
    }
    return out;
}

ImagePlane extract_patch(const ImagePlane& plane, PatchCoord at, std::size_t size) {
    if (at.x + size > plane.width || at.y + size > plane.height) throw DataError("patch outside plane");
    ImagePlane out(size, size, 0.0f, plane.dx, plane.dy);
    for (std::size_t y = 0; y < size; ++y) {
        std::copy_n(plane.pixels.begin() + static_cast<std::ptrdiff_t>((at.y + y) * plane.width + at.x), size,
                    out.pixels.begin() + static_cast<std::ptrdiff_t>(y * size));
    }
    return out;
}

std::vector<ImagePlane> extract_patches(const ImagePlane& plane, const std::vector<PatchCoord>& coords, std::size_t size) {
    std::vector<ImagePlane> out;
    out.reserve(coords.size());
    for (const auto& c : coords) out.push_back(extract_patch(plane, c, size));
    return out;
}

} // namespace grdsr
