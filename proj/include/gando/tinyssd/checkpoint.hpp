#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gando/core/error.hpp"
#include "gando/core/fs.hpp"
#include "gando/core/hash.hpp"
#include "gando/core/tensor.hpp"
#include "gando/tinyssd/detector.hpp"

namespace gando::tinyssd {

// Checkpoint container, all integers little-endian:
//   "GANDOCKP" | u32 version | u32 byte-order tag 0x01020304 | u32 meta_len | meta (JSON)
//   | u32 tensor_count | per tensor: u32 name_len, name, u32 ndim, u32 dims[ndim], f32 values[]
inline constexpr char kCheckpointMagic[8] = {'G', 'A', 'N', 'D', 'O', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::string arch;         // DetectorConfig::canonical()
    std::string kind;         // baseline | finetune | gando | ...
    std::string config_hash;
    std::uint64_t global_seed = 0;
    int epoch = 0;
    std::string parent_id;    // id of the checkpoint training started from, if any

    nlohmann::json to_json() const {
        return {{"arch", arch}, {"kind", kind}, {"config_hash", config_hash},
                {"global_seed", global_seed}, {"epoch", epoch}, {"parent_id", parent_id}};
    }
    static CheckpointMeta from_json(const nlohmann::json& j) {
        CheckpointMeta m;
        m.arch = j.value("arch", "");
        m.kind = j.value("kind", "");
        m.config_hash = j.value("config_hash", "");
        m.global_seed = j.value("global_seed", std::uint64_t{0});
        m.epoch = j.value("epoch", 0);
        m.parent_id = j.value("parent_id", "");
        return m;
    }
};

struct Checkpoint {
    CheckpointMeta meta;
    ParamSet<float> params;
    std::string id;  // content hash of the serialized bytes
};

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& s, float f) { put_u32(s, std::bit_cast<std::uint32_t>(f)); }

class Reader {
public:
    explicit Reader(const std::string& b) : b_(b) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw LoadError("checkpoint truncated");
    }
    const std::string& b_;
    std::size_t pos_ = 0;
};

} // namespace detail

template <class T>
std::string serialize_checkpoint(const CheckpointMeta& meta, const ParamSet<T>& params) {
    std::string s(kCheckpointMagic, 8);
    detail::put_u32(s, kCheckpointVersion);
    detail::put_u32(s, 0x01020304u);
    const std::string m = meta.to_json().dump();
    detail::put_u32(s, static_cast<std::uint32_t>(m.size()));
    s += m;
    detail::put_u32(s, static_cast<std::uint32_t>(params.size()));
    for (const auto& t : params.tensors) {
        detail::put_u32(s, static_cast<std::uint32_t>(t.name.size()));
        s += t.name;
        detail::put_u32(s, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) detail::put_u32(s, static_cast<std::uint32_t>(d));
        for (T v : t.data) detail::put_f32(s, static_cast<float>(v));
    }
    return s;
}

inline std::string checkpoint_id(const std::string& bytes) { return hex64(fnv1a(bytes)); }

/// Atomically writes a checkpoint; returns its id.
template <class T>
std::string save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const ParamSet<T>& params) {
    const std::string bytes = serialize_checkpoint(meta, params);
    write_atomic(path, bytes);
    return checkpoint_id(bytes);
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) throw LoadError("not a gando checkpoint");
    detail::Reader r(bytes);
    r.bytes(8);
    if (const auto v = r.u32(); v != kCheckpointVersion) throw LoadError("unsupported checkpoint version " + std::to_string(v));
    if (r.u32() != 0x01020304u) throw LoadError("checkpoint byte-order tag mismatch");
    Checkpoint ck;
    const auto mlen = r.u32();
    ck.meta = CheckpointMeta::from_json(nlohmann::json::parse(r.bytes(mlen)));
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor<float> t;
        t.name = r.bytes(r.u32());
        const auto nd = r.u32();
        for (std::uint32_t d = 0; d < nd; ++d) t.shape.push_back(static_cast<int>(r.u32()));
        t.data.resize(Tensor<float>::count(t.shape));
        for (auto& v : t.data) v = r.f32();
        ck.params.tensors.push_back(std::move(t));
    }
    if (!r.done()) throw LoadError("trailing bytes after checkpoint tensors");
    ck.id = checkpoint_id(bytes);
    return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw LoadError("checkpoint '" + path.string() + "' does not exist");
    return parse_checkpoint(read_file(path));
}

/// Builds a detector of architecture `cfg` from checkpoint tensors; every expected name and shape must match.
template <class T>
Detector<T> detector_from_checkpoint(const Checkpoint& ck, const DetectorConfig& cfg) {
    if (!ck.meta.arch.empty() && ck.meta.arch != cfg.canonical())
        throw LoadError("checkpoint architecture '" + ck.meta.arch + "' does not match configured '" + cfg.canonical() + "'");
    Detector<T> d;
    d.config = cfg;
    d.params = Detector<T>::make_layout(cfg);
    if (ck.params.size() != d.params.size())
        throw LoadError("checkpoint holds " + std::to_string(ck.params.size()) + " tensors, expected " +
                        std::to_string(d.params.size()));
    for (auto& t : d.params.tensors) {
        const Tensor<float>* src = ck.params.find(t.name);
        if (!src) throw LoadError("checkpoint is missing tensor '" + t.name + "'");
        if (src->shape != t.shape) throw LoadError("checkpoint tensor '" + t.name + "' has the wrong shape");
        for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<T>(src->data[i]);
    }
    return d;
}

} // namespace gando::tinyssd
