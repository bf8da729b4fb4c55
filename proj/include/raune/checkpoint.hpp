#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "raune/model.hpp"
#include "raune/optim.hpp"
#include "raune/version.hpp"

namespace raune {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Checksums
// ---------------------------------------------------------------------------

inline uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return ~crc;
}

template <typename T>
uint32_t tensor_crc32(const Tensor<T>& t, uint32_t crc = 0) {
    return crc32(reinterpret_cast<const uint8_t*>(t.data.data()), t.data.size() * sizeof(T), crc);
}

// Checksum of an ordered parameter list (build determinism checks and
// checkpoint payload validation).
template <typename T>
uint32_t parameters_crc32(const std::vector<std::pair<std::string, Var<T>>>& params) {
    uint32_t crc = 0;
    for (const auto& [name, p] : params) {
        crc = crc32(reinterpret_cast<const uint8_t*>(name.data()), name.size(), crc);
        crc = tensor_crc32(p->value, crc);
    }
    return crc;
}

// ---------------------------------------------------------------------------
// Tensor container
// ---------------------------------------------------------------------------
//
// Versioned named-tensor file, used for checkpoints and backbone weights:
//
//   magic "RTNC" | u32 format_version | u64 meta_len | meta (UTF-8 JSON)
//   | u32 tensor_count | entries... | u32 crc32
//
// Entry: u32 name_len | name | u8 dtype (1=f32, 2=f64) | u8 rank
//        | u64 dims[rank] | raw data
//
// All integers and floats little-endian. The trailing CRC covers every byte
// after the magic. Writes go to a temp file renamed into place.

namespace detail {

template <typename T>
constexpr uint8_t dtype_tag() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "unsupported scalar type");
    return std::is_same_v<T, float> ? 1 : 2;
}

inline void put_bytes(std::vector<uint8_t>& buf, const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
}

template <typename V>
void put_pod(std::vector<uint8_t>& buf, V v) {
    put_bytes(buf, &v, sizeof(V));
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;
    explicit Reader(const std::vector<uint8_t>& b) : buf(b) {}
    void need(size_t n) const {
        if (pos + n > buf.size()) throw CheckpointError("container truncated");
    }
    template <typename V>
    V get_pod() {
        need(sizeof(V));
        V v;
        std::memcpy(&v, buf.data() + pos, sizeof(V));
        pos += sizeof(V);
        return v;
    }
    std::string get_string(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace detail

template <typename T>
struct Container {
    json meta;
    std::vector<std::pair<std::string, Tensor<T>>> tensors;

    const Tensor<T>* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

template <typename T>
void write_container(const std::filesystem::path& path, const json& meta,
                     const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors) {
    std::vector<uint8_t> body;
    std::string meta_str = meta.dump();
    detail::put_pod<uint32_t>(body, kContainerFormatVersion);
    detail::put_pod<uint64_t>(body, meta_str.size());
    detail::put_bytes(body, meta_str.data(), meta_str.size());
    detail::put_pod<uint32_t>(body, uint32_t(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::put_pod<uint32_t>(body, uint32_t(name.size()));
        detail::put_bytes(body, name.data(), name.size());
        detail::put_pod<uint8_t>(body, detail::dtype_tag<T>());
        detail::put_pod<uint8_t>(body, uint8_t(t->shape.size()));
        for (int64_t d : t->shape) detail::put_pod<uint64_t>(body, uint64_t(d));
        detail::put_bytes(body, t->data.data(), t->data.size() * sizeof(T));
    }
    uint32_t crc = crc32(body.data(), body.size());

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write " + tmp.string());
        os.write("RTNC", 4);
        os.write(reinterpret_cast<const char*>(body.data()), std::streamsize(body.size()));
        os.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
        if (!os) throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

template <typename T>
Container<T> read_container(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::vector<uint8_t> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (raw.size() < 8 || std::memcmp(raw.data(), "RTNC", 4) != 0)
        throw CheckpointError(path.string() + ": not a tensor container (bad magic)");
    std::vector<uint8_t> body(raw.begin() + 4, raw.end() - 4);
    uint32_t stored_crc;
    std::memcpy(&stored_crc, raw.data() + raw.size() - 4, 4);
    if (crc32(body.data(), body.size()) != stored_crc)
        throw CheckpointError(path.string() + ": checksum mismatch (corrupt or truncated container)");

    detail::Reader r(body);
    uint32_t version = r.get_pod<uint32_t>();
    if (version != kContainerFormatVersion)
        throw CheckpointError(path.string() + ": container format version " + std::to_string(version) +
                              " unsupported; this build reads version " + std::to_string(kContainerFormatVersion));
    uint64_t meta_len = r.get_pod<uint64_t>();
    Container<T> c;
    try {
        c.meta = json::parse(r.get_string(size_t(meta_len)));
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": bad metadata block: " + e.what());
    }
    uint32_t count = r.get_pod<uint32_t>();
    c.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = r.get_pod<uint32_t>();
        std::string name = r.get_string(name_len);
        uint8_t dtype = r.get_pod<uint8_t>();
        uint8_t rank = r.get_pod<uint8_t>();
        Shape shape(rank);
        for (auto& d : shape) d = int64_t(r.get_pod<uint64_t>());
        Tensor<T> t(shape);
        if (dtype == detail::dtype_tag<T>()) {
            r.need(t.data.size() * sizeof(T));
            std::memcpy(t.data.data(), body.data() + r.pos, t.data.size() * sizeof(T));
            r.pos += t.data.size() * sizeof(T);
        } else if (dtype == 1) {
            for (auto& v : t.data) v = T(r.get_pod<float>());
        } else if (dtype == 2) {
            for (auto& v : t.data) v = T(r.get_pod<double>());
        } else {
            throw CheckpointError(path.string() + ": unknown dtype tag " + std::to_string(int(dtype)));
        }
        c.tensors.emplace_back(std::move(name), std::move(t));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Network config <-> JSON
// ---------------------------------------------------------------------------

inline json network_config_to_json(const NetworkConfig& c) {
    return json{{"base_channels", c.base_channels},
                {"num_down_blocks", c.num_down_blocks},
                {"num_residual_blocks", c.num_residual_blocks},
                {"norm_kind", norm_name(c.norm_kind)},
                {"channel_growth", c.channel_growth},
                {"attention_reduction", c.attention_reduction},
                {"spatial_attention_kernel", c.spatial_attention_kernel},
                {"dropout_down", c.dropout_down},
                {"dropout_residual", c.dropout_residual},
                {"dropout_up", c.dropout_up},
                {"dropout_p", c.dropout_p},
                {"down_negative_slope", c.down_negative_slope},
                {"up_negative_slope", c.up_negative_slope},
                {"init_std", c.init_std}};
}

inline NetworkConfig network_config_from_json(const json& j) {
    NetworkConfig c;
    c.base_channels = j.at("base_channels").get<int>();
    c.num_down_blocks = j.at("num_down_blocks").get<int>();
    c.num_residual_blocks = j.at("num_residual_blocks").get<int>();
    c.norm_kind = norm_from_string(j.at("norm_kind").get<std::string>());
    c.channel_growth = j.at("channel_growth").get<int>();
    c.attention_reduction = j.at("attention_reduction").get<int>();
    c.spatial_attention_kernel = j.at("spatial_attention_kernel").get<int>();
    c.dropout_down = j.at("dropout_down").get<bool>();
    c.dropout_residual = j.at("dropout_residual").get<bool>();
    c.dropout_up = j.at("dropout_up").get<bool>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.down_negative_slope = j.at("down_negative_slope").get<double>();
    c.up_negative_slope = j.at("up_negative_slope").get<double>();
    c.init_std = j.at("init_std").get<double>();
    return c;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct CheckpointMeta {
    int epoch = 0;
    int64_t iteration = 0;
    uint32_t param_crc = 0;
    NetworkConfig config;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net, const OptimizerState<T>* opt,
                     int epoch, int64_t iteration) {
    auto params = net.parameters();
    json meta{{"type", "raune_checkpoint"},
              {"artifact_version", kArtifactVersion},
              {"epoch", epoch},
              {"iteration", iteration},
              {"param_crc", parameters_crc32(params)},
              {"config", network_config_to_json(net.config)},
              {"has_optimizer", opt != nullptr}};
    if (opt) meta["adam_step"] = opt->step;

    std::vector<std::pair<std::string, const Tensor<T>*>> tensors;
    for (const auto& [name, p] : params) tensors.emplace_back(name, &p->value);
    if (opt) {
        for (size_t i = 0; i < params.size(); ++i) {
            tensors.emplace_back("opt.m." + params[i].first, &opt->m[i]);
            tensors.emplace_back("opt.v." + params[i].first, &opt->v[i]);
        }
    }
    write_container<T>(path, meta, tensors);
}

template <typename T>
struct LoadedCheckpoint {
    Network<T> net;
    std::optional<OptimizerState<T>> opt;
    CheckpointMeta meta;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
    Container<T> c = read_container<T>(path);
    if (!c.meta.contains("type") || c.meta["type"] != "raune_checkpoint")
        throw CheckpointError(path.string() + ": not a checkpoint container");
    LoadedCheckpoint<T> out;
    out.meta.epoch = c.meta.at("epoch").template get<int>();
    out.meta.iteration = c.meta.at("iteration").template get<int64_t>();
    out.meta.param_crc = c.meta.at("param_crc").template get<uint32_t>();
    out.meta.config = network_config_from_json(c.meta.at("config"));

    out.net = build_network<T>(out.meta.config, 0);
    auto params = out.net.parameters();
    for (auto& [name, p] : params) {
        const Tensor<T>* t = c.find(name);
        if (!t) throw CheckpointError(path.string() + ": missing parameter '" + name + "'");
        if (t->shape != p->value.shape)
            throw CheckpointError(path.string() + ": shape mismatch for '" + name + "': stored " +
                                  shape_str(t->shape) + ", expected " + shape_str(p->value.shape));
        p->value = *t;
    }
    if (parameters_crc32(params) != out.meta.param_crc)
        throw CheckpointError(path.string() + ": parameter checksum mismatch");

    if (c.meta.template value<bool>("has_optimizer", false)) {
        OptimizerState<T> s;
        s.step = c.meta.at("adam_step").template get<int64_t>();
        for (const auto& [name, p] : params) {
            const Tensor<T>* m = c.find("opt.m." + name);
            const Tensor<T>* v = c.find("opt.v." + name);
            if (!m || !v) throw CheckpointError(path.string() + ": missing optimizer state for '" + name + "'");
            s.m.push_back(*m);
            s.v.push_back(*v);
        }
        out.opt = std::move(s);
    }
    return out;
}

}  // namespace raune
