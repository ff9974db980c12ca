#pragma once

// Checkpoint container: a JSON header (dtype, full configuration, tensor
// directory) followed by the raw little-endian parameter data in directory
// order. Round-trips bit-exactly.

#include <fstream>

#include "tat/config_io.hpp"
#include "tat/nn.hpp"

namespace tat {

namespace detail {

template <typename T>
constexpr const char* dtype_name() {
    if constexpr (std::is_same_v<T, float>) return "f32";
    else return "f64";
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'T', 'A', 'T', 'C', 'K', 'P', '0', '1'};

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
void save_checkpoint(const std::string& path, const NamedTensors<T>& params,
                     const TatConfig& model_cfg, const TrainConfig& train_cfg) {
    nlohmann::json header;
    header["format"] = 1;
    header["dtype"] = detail::dtype_name<T>();
    header["model"] = model_cfg;
    header["train"] = train_cfg;
    auto& dir = header["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : params)
        dir.push_back({{"name", name}, {"shape", t.shape()}});
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("checkpoint: cannot open " + path + " for writing");
    f.write(kCheckpointMagic, 8);
    const uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : params)
        f.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(T))));
    if (!f) throw UsageError("checkpoint: write failed for " + path);
}

template <typename T>
struct Checkpoint {
    RunConfig config;
    std::vector<std::pair<std::string, std::pair<Shape, std::vector<T>>>> tensors;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw UsageError("checkpoint: bad magic in " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("checkpoint: corrupt header: " + std::string(e.what()));
    }
    if (header.at("dtype") != detail::dtype_name<T>())
        throw ConfigError("checkpoint: dtype is " + header.at("dtype").get<std::string>() +
                          ", expected " + detail::dtype_name<T>());
    Checkpoint<T> ck;
    header.at("model").get_to(ck.config.model);
    header.at("train").get_to(ck.config.train);
    for (const auto& entry : header.at("tensors")) {
        Shape shape = entry.at("shape").get<Shape>();
        std::vector<T> data(static_cast<size_t>(numel_of(shape)));
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(T)));
        ck.tensors.emplace_back(entry.at("name").get<std::string>(),
                                std::make_pair(std::move(shape), std::move(data)));
    }
    if (!f) throw UsageError("checkpoint: truncated data in " + path);
    return ck;
}

// Copies checkpoint tensors into live parameters; names and shapes must match
// one-to-one.
template <typename T>
void restore_params(NamedTensors<T>& params, const Checkpoint<T>& ck) {
    if (ck.tensors.size() != params.size())
        throw ConfigError("checkpoint: tensor count mismatch (" + std::to_string(ck.tensors.size()) +
                          " vs " + std::to_string(params.size()) + ")");
    std::unordered_map<std::string, Tensor<T>*> by_name;
    for (auto& [name, t] : params) by_name[name] = &t;
    for (const auto& [name, payload] : ck.tensors) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("checkpoint: unexpected tensor " + name);
        if (it->second->shape() != payload.first)
            throw ConfigError("checkpoint: shape mismatch for " + name);
        std::copy(payload.second.begin(), payload.second.end(), it->second->mutable_data().begin());
    }
}

inline uint64_t hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("hash_file: cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
        h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
    return h;
}

}  // namespace tat
