#include "frap/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace frap {

namespace {

std::uint64_t to_le(std::uint64_t v)
{
    if constexpr (std::endian::native == std::endian::little) return v;
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
}

}  // namespace

std::string manifest_path(const std::string& path) { return path + ".json"; }

void write_checkpoint(const std::string& path, const Checkpoint& ckpt)
{
    std::ofstream bin(path, std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("cannot open checkpoint for writing: " + path);

    nlohmann::json manifest;
    manifest["format"] = "frap-checkpoint";
    manifest["version"] = 1;
    manifest["endianness"] = "little";
    auto& arrays = manifest["arrays"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.arrays) {
        for (Real v : t.data()) {
            std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
            bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
        arrays.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float64"}, {"offset", offset}});
        offset += t.size() * sizeof(double);
    }
    manifest["total_bytes"] = offset;
    manifest["meta"] = ckpt.meta;
    if (!bin) throw std::runtime_error("write failed: " + path);

    std::ofstream js(manifest_path(path), std::ios::trunc);
    if (!js) throw std::runtime_error("cannot open manifest for writing: " + manifest_path(path));
    js << manifest.dump(2) << "\n";
}

Checkpoint read_checkpoint(const std::string& path)
{
    std::ifstream js(manifest_path(path));
    if (!js) throw std::runtime_error("missing checkpoint manifest: " + manifest_path(path));
    nlohmann::json manifest;
    try {
        js >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed checkpoint manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "frap-checkpoint") throw std::runtime_error("not a checkpoint manifest: " + path);

    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw std::runtime_error("missing checkpoint data: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    Checkpoint ck;
    for (const auto& a : manifest.at("arrays")) {
        if (a.at("dtype") != "float64") throw std::runtime_error("unsupported dtype in checkpoint");
        Shape shape = a.at("shape").get<Shape>();
        const auto offset = a.at("offset").get<std::uint64_t>();
        const std::size_t n = shape_size(shape);
        if (offset + n * sizeof(double) > bytes.size()) throw std::runtime_error("checkpoint data truncated: " + path);
        std::vector<Real> data(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, bytes.data() + offset + i * sizeof bits, sizeof bits);
            data[i] = std::bit_cast<double>(to_le(bits));
        }
        ck.arrays.emplace(a.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
    }
    ck.meta = manifest.value("meta", nlohmann::json::object());
    return ck;
}

}  // namespace frap
