#pragma once

// Checkpoint container:
//   8 bytes   magic "TRYONCKP"
//   u64 LE    manifest length in bytes
//   manifest  JSON: {"format", "meta", "tensors": [{name, shape, dtype, offset, nbytes}]}
//   payload   raw little-endian float32 tensors, offsets relative to payload start

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tryon/core/error.hpp"
#include "tryon/nn/params.hpp"

namespace tryon::train {

inline constexpr char kCheckpointMagic[8] = {'T', 'R', 'Y', 'O', 'N', 'C', 'K', 'P'};
inline constexpr int kCheckpointFormat = 1;

struct NamedTensor {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::vector<float> values;

    bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    /// Appends every parameter of `store` as "<prefix>/<name>".
    void add_store(const std::string& prefix, const nn::ParamStore<float>& store) {
        for (int i = 0; i < store.size(); ++i) {
            const auto& m = store[i];
            tensors.push_back({prefix + "/" + store.name(i), static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                               std::vector<float>(m.data(), m.data() + m.size())});
        }
    }

    const NamedTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }

    /// Copies "<prefix>/<name>" into every parameter of `store`; shapes must match.
    void restore_store(const std::string& prefix, nn::ParamStore<float>& store) const {
        for (int i = 0; i < store.size(); ++i) {
            const std::string key = prefix + "/" + store.name(i);
            const NamedTensor* t = find(key);
            if (!t) fail<ValueError>("checkpoint is missing tensor ", key);
            auto& m = store[i];
            require(t->rows == m.rows() && t->cols == m.cols(), "checkpoint tensor ", key, " has shape ", t->rows,
                    "x", t->cols, ", expected ", m.rows(), "x", m.cols());
            std::copy(t->values.begin(), t->values.end(), m.data());
        }
    }

    bool operator==(const Checkpoint&) const = default;
};

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : ck.tensors) {
        require(static_cast<std::size_t>(t.rows) * t.cols == t.values.size(), "checkpoint tensor ", t.name,
                " size mismatch");
        const std::uint64_t nbytes = 4ull * t.values.size();
        index.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"dtype", "f32"}, {"offset", offset},
                         {"nbytes", nbytes}});
        offset += nbytes;
    }
    const nlohmann::json manifest{{"format", kCheckpointFormat}, {"meta", ck.meta}, {"tensors", index}};
    const std::string text = manifest.dump();

    std::string out(kCheckpointMagic, 8);
    std::uint64_t len = text.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
    out += text;
    out.reserve(out.size() + offset);
    for (const auto& t : ck.tensors)
        for (float v : t.values) detail::put_u32le(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline Checkpoint deserialize(const std::string& bytes, const std::string& origin = "<memory>") {
    auto bad = [&](const std::string& why) { throw IoError("invalid checkpoint (" + why + ")", origin); };
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) bad("bad magic");
    const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= std::uint64_t{u[8 + i]} << (8 * i);
    if (len > bytes.size() - 16) bad("truncated manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
        bad(std::string("manifest: ") + e.what());
    }
    if (manifest.value("format", 0) != kCheckpointFormat) bad("unsupported format version");
    Checkpoint ck;
    ck.meta = manifest.at("meta");
    const std::size_t payload = 16 + len;
    for (const auto& e : manifest.at("tensors")) {
        NamedTensor t;
        t.name = e.at("name").get<std::string>();
        t.rows = e.at("shape").at(0).get<int>();
        t.cols = e.at("shape").at(1).get<int>();
        if (e.at("dtype") != "f32") bad("unsupported dtype for " + t.name);
        const auto offset = e.at("offset").get<std::uint64_t>();
        const auto nbytes = e.at("nbytes").get<std::uint64_t>();
        if (nbytes != 4ull * t.rows * t.cols || payload + offset + nbytes > bytes.size()) bad("tensor " + t.name);
        t.values.resize(static_cast<std::size_t>(t.rows) * t.cols);
        for (std::size_t i = 0; i < t.values.size(); ++i)
            t.values[i] = std::bit_cast<float>(detail::get_u32le(u + payload + offset + 4 * i));
        ck.tensors.push_back(std::move(t));
    }
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& p, const Checkpoint& ck) {
    const std::string bytes = serialize(ck);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing", p.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("checkpoint write failed", p.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint", p.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), {});
    return deserialize(bytes, p.string());
}

}  // namespace tryon::train
