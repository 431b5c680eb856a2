#include "grdsr/params_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "grdsr/errors.hpp"

namespace grdsr {

namespace fs = std::filesystem;

namespace {
constexpr std::string_view kMagic = "GRDSR-PARAMS 1 ";
}

std::string encode_f32_le(std::span<const float> values) {
    std::string out(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
    }
    return out;
}

std::vector<float> decode_f32_le(std::string_view bytes) {
    if (bytes.size() % 4 != 0) throw FormatError("float32 payload length " + std::to_string(bytes.size()) +
                                                 " is not a multiple of 4");
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot open '" + tmp.string() + "' for writing");
        os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!os) throw DataError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void save_params(const fs::path& path, const std::vector<NamedTensor>& tensors, const nlohmann::json& metadata) {
    nlohmann::json manifest;
    manifest["format"] = "grdsr-params";
    manifest["version"] = 1;
    manifest["byte_order"] = "little";
    manifest["dtype"] = "float32";
    manifest["metadata"] = metadata;
    auto& list = manifest["tensors"] = nlohmann::json::array();
    std::string payload;
    std::size_t offset = 0;
    for (const auto& t : tensors) {
        list.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}});
        payload += encode_f32_le(t.tensor.data());
        offset += t.tensor.numel();
    }
    const std::string text = manifest.dump();
    std::string file = std::string(kMagic) + std::to_string(text.size()) + "\n" + text + payload;
    write_file_atomic(path, file);
}

LoadedParams load_params(const fs::path& path) {
    const std::string file = read_file(path);
    if (file.compare(0, kMagic.size(), kMagic) != 0) throw FormatError("'" + path.string() + "' is not a parameter file");
    const auto nl = file.find('\n');
    if (nl == std::string::npos) throw FormatError("truncated parameter header in '" + path.string() + "'");
    const std::size_t manifest_len = std::stoull(file.substr(kMagic.size(), nl - kMagic.size()));
    if (nl + 1 + manifest_len > file.size()) throw FormatError("truncated manifest in '" + path.string() + "'");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(file.substr(nl + 1, manifest_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad parameter manifest: ") + e.what());
    }
    if (manifest.value("byte_order", "") != "little" || manifest.value("dtype", "") != "float32") {
        throw FormatError("unsupported parameter encoding in '" + path.string() + "'");
    }
    const std::string_view payload = std::string_view(file).substr(nl + 1 + manifest_len);
    LoadedParams out;
    out.metadata = manifest.value("metadata", nlohmann::json::object());
    std::size_t expected = 0;
    for (const auto& entry : manifest.at("tensors")) {
        Shape shape = entry.at("shape").get<Shape>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t n = shape_numel(shape);
        if ((offset + n) * 4 > payload.size()) {
            throw FormatError("parameter payload too short: expected at least " + std::to_string((offset + n) * 4) +
                              " bytes, found " + std::to_string(payload.size()));
        }
        out.tensors.push_back({entry.at("name").get<std::string>(),
                               Tensor(std::move(shape), decode_f32_le(payload.substr(offset * 4, n * 4)))});
        expected = std::max(expected, (offset + n) * 4);
    }
    if (expected != payload.size()) {
        throw FormatError("parameter payload length mismatch: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(payload.size()));
    }
    return out;
}

} // namespace grdsr
