#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "drct/model/config.hpp"
#include "drct/nn/init.hpp"

namespace drct::model {

inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'D', 'R', 'C', 'T', 'C', 'K', 'P', 'T'};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
    int64_t iteration = 0;
    int stage_index = 0;
    uint64_t seed = 0;
    double best_val_psnr = 0.0;
    std::string rng_state;  // serialized engine state, empty if not resuming
};

/// Optimizer first/second moments, flattened in parameter order.
struct MomentBlob {
    std::vector<float> m;
    std::vector<float> v;
    int64_t step = 0;
};

// (de)serialization of the config header; defined in checkpoint.cpp
std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);

namespace ckpt_detail {

struct ParamEntry {
    std::string name;
    std::vector<int> shape;
};

void write_envelope(const std::string& path, const ModelConfig& cfg,
                    const CheckpointMeta& meta,
                    const std::vector<ParamEntry>& entries,
                    const std::vector<float>& payload, const MomentBlob* moments);

struct RawCheckpoint {
    ModelConfig config;
    CheckpointMeta meta;
    std::vector<ParamEntry> entries;
    std::vector<float> payload;
    std::optional<MomentBlob> moments;
};

RawCheckpoint read_envelope(const std::string& path);

}  // namespace ckpt_detail

template <typename T>
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const nn::ParamStore<T>& store, const CheckpointMeta& meta,
                     const MomentBlob* moments = nullptr) {
    std::vector<ckpt_detail::ParamEntry> entries;
    std::vector<float> payload;
    for (const auto& [name, var] : store.entries()) {
        entries.push_back({name, var->value.shape()});
        for (int64_t i = 0; i < var->value.numel(); ++i)
            payload.push_back(static_cast<float>(var->value[i]));
    }
    ckpt_detail::write_envelope(path, cfg, meta, entries, payload, moments);
}

struct LoadedCheckpoint {
    ModelConfig config;
    CheckpointMeta meta;
    std::optional<MomentBlob> moments;
};

/// Load parameter values into an existing store built from the same config.
template <typename T>
LoadedCheckpoint load_checkpoint(const std::string& path, nn::ParamStore<T>& store) {
    auto raw = ckpt_detail::read_envelope(path);
    if (raw.entries.size() != store.entries().size())
        throw CheckpointError("checkpoint: parameter count mismatch");
    size_t off = 0;
    for (size_t i = 0; i < raw.entries.size(); ++i) {
        const auto& [name, var] = store.entries()[i];
        const auto& e = raw.entries[i];
        if (e.name != name || e.shape != var->value.shape())
            throw CheckpointError("checkpoint: parameter '" + e.name +
                                  "' does not match model layout");
        for (int64_t j = 0; j < var->value.numel(); ++j)
            var->value[j] = static_cast<T>(raw.payload[off++]);
    }
    return {raw.config, raw.meta, std::move(raw.moments)};
}

/// Read only the header (config + meta), without a model.
LoadedCheckpoint peek_checkpoint(const std::string& path);

}  // namespace drct::model
