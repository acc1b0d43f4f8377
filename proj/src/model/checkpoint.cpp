#include "drct/model/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"

namespace drct::model {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; add byte swapping for this target");

namespace {

json config_json(const ModelConfig& c) {
    return json{{"scale", c.scale},
                {"in_channels", c.in_channels},
                {"embed_dim", c.embed_dim},
                {"num_rdg", c.num_rdg},
                {"sdrcb_per_rdg", c.sdrcb_per_rdg},
                {"dense_stages", c.dense_stages},
                {"growth", c.growth},
                {"num_heads", c.num_heads},
                {"window_size", c.window_size},
                {"mlp_ratio", c.mlp_ratio},
                {"alpha", c.alpha},
                {"leaky_slope", c.leaky_slope},
                {"img_range", c.img_range},
                {"subtract_mean", c.subtract_mean},
                {"transition_3x3", c.transition_3x3},
                {"identity_init", c.identity_init}};
}

ModelConfig config_from(const json& j) {
    ModelConfig c;
    c.scale = j.value("scale", c.scale);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.num_rdg = j.value("num_rdg", c.num_rdg);
    c.sdrcb_per_rdg = j.value("sdrcb_per_rdg", c.sdrcb_per_rdg);
    c.dense_stages = j.value("dense_stages", c.dense_stages);
    c.growth = j.value("growth", c.growth);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.window_size = j.value("window_size", c.window_size);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.alpha = j.value("alpha", c.alpha);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.img_range = j.value("img_range", c.img_range);
    c.subtract_mean = j.value("subtract_mean", c.subtract_mean);
    c.transition_3x3 = j.value("transition_3x3", c.transition_3x3);
    c.identity_init = j.value("identity_init", c.identity_init);
    return c;
}

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

std::string config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(2); }

ModelConfig config_from_json(const std::string& text) {
    return config_from(json::parse(text));
}

namespace ckpt_detail {

void write_envelope(const std::string& path, const ModelConfig& cfg,
                    const CheckpointMeta& meta,
                    const std::vector<ParamEntry>& entries,
                    const std::vector<float>& payload, const MomentBlob* moments) {
    json header;
    header["config"] = config_json(cfg);
    header["meta"] = {{"iteration", meta.iteration},
                      {"stage_index", meta.stage_index},
                      {"seed", meta.seed},
                      {"best_val_psnr", meta.best_val_psnr},
                      {"rng_state", meta.rng_state}};
    json params = json::array();
    for (const auto& e : entries) params.push_back({{"name", e.name}, {"shape", e.shape}});
    header["params"] = std::move(params);
    header["has_moments"] = moments != nullptr;
    if (moments) header["moment_step"] = moments->step;
    std::string htext = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u32(os, kCheckpointVersion);
    write_u64(os, htext.size());
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    write_u64(os, payload.size());
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (moments) {
        if (moments->m.size() != payload.size() || moments->v.size() != payload.size())
            throw CheckpointError("checkpoint: moment size does not match parameters");
        os.write(reinterpret_cast<const char*>(moments->m.data()),
                 static_cast<std::streamsize>(moments->m.size() * sizeof(float)));
        os.write(reinterpret_cast<const char*>(moments->v.data()),
                 static_cast<std::streamsize>(moments->v.size() * sizeof(float)));
    }
    if (!os) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

RawCheckpoint read_envelope(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw CheckpointError("checkpoint: bad magic in '" + path + "'");
    uint32_t version = read_u32(is);
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint: unsupported format version " +
                              std::to_string(version));
    uint64_t hlen = read_u64(is);
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(htext);

    RawCheckpoint out;
    out.config = config_from(header.at("config"));
    const auto& m = header.at("meta");
    out.meta.iteration = m.value("iteration", int64_t(0));
    out.meta.stage_index = m.value("stage_index", 0);
    out.meta.seed = m.value("seed", uint64_t(0));
    out.meta.best_val_psnr = m.value("best_val_psnr", 0.0);
    out.meta.rng_state = m.value("rng_state", std::string());
    for (const auto& p : header.at("params"))
        out.entries.push_back({p.at("name").get<std::string>(),
                               p.at("shape").get<std::vector<int>>()});
    uint64_t n = read_u64(is);
    out.payload.resize(n);
    is.read(reinterpret_cast<char*>(out.payload.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (header.value("has_moments", false)) {
        MomentBlob mb;
        mb.step = header.value("moment_step", int64_t(0));
        mb.m.resize(n);
        mb.v.resize(n);
        is.read(reinterpret_cast<char*>(mb.m.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        is.read(reinterpret_cast<char*>(mb.v.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        out.moments = std::move(mb);
    }
    if (!is) throw CheckpointError("checkpoint: truncated file '" + path + "'");
    return out;
}

}  // namespace ckpt_detail

LoadedCheckpoint peek_checkpoint(const std::string& path) {
    auto raw = ckpt_detail::read_envelope(path);
    return {raw.config, raw.meta, std::move(raw.moments)};
}

}  // namespace drct::model
