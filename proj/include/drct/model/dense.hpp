#pragma once

#include <random>

#include "drct/model/attention.hpp"
#include "drct/nn/init.hpp"

namespace drct::model {

/// One SDRCB: per dense stage an STL at the concatenated width plus a
/// transition conv (growth channels for stages 1..4, back to C for the last,
/// which is linear so identity-init is exact).
template <typename T>
struct SdrcbParams {
    std::vector<StlParams<T>> stl;
    std::vector<Var<T>> trans_w;  // [k,k,width,out]
    std::vector<Var<T>> trans_b;
    T alpha = T(0.2);
    T leaky_slope = T(0.2);
};

template <typename T>
StlParams<T> build_stl_params(nn::ParamStore<T>& store, std::mt19937_64& rng,
                              const std::string& base, int width, int heads,
                              int window, int shift, double mlp_ratio) {
    StlParams<T> p;
    p.width = width;
    p.heads = heads;
    p.window = window;
    p.shift = shift;
    const int hidden = static_cast<int>(width * mlp_ratio);
    p.norm1_g = store.create(base + ".norm1.g", {width});
    std::fill(p.norm1_g->value.vec().begin(), p.norm1_g->value.vec().end(), T(1));
    p.norm1_b = store.create(base + ".norm1.b", {width});
    auto dense = [&](const std::string& name, std::vector<int> shape) {
        Var<T> v = store.create(name, std::move(shape));
        nn::fill_trunc_normal(v->value, rng, 0.02);
        return v;
    };
    p.qkv_w = dense(base + ".qkv.w", {width, 3 * width});
    p.qkv_b = store.create(base + ".qkv.b", {3 * width});
    p.proj_w = dense(base + ".proj.w", {width, width});
    p.proj_b = store.create(base + ".proj.b", {width});
    p.rel_pos_table = dense(base + ".rel_pos", {(2 * window - 1) * (2 * window - 1), heads});
    p.norm2_g = store.create(base + ".norm2.g", {width});
    std::fill(p.norm2_g->value.vec().begin(), p.norm2_g->value.vec().end(), T(1));
    p.norm2_b = store.create(base + ".norm2.b", {width});
    p.fc1_w = dense(base + ".mlp.fc1.w", {width, hidden});
    p.fc1_b = store.create(base + ".mlp.fc1.b", {hidden});
    p.fc2_w = dense(base + ".mlp.fc2.w", {hidden, width});
    p.fc2_b = store.create(base + ".mlp.fc2.b", {width});
    return p;
}

template <typename T>
SdrcbParams<T> build_sdrcb_params(nn::ParamStore<T>& store, std::mt19937_64& rng,
                                  const std::string& base, const ModelConfig& cfg) {
    SdrcbParams<T> p;
    p.alpha = static_cast<T>(cfg.alpha);
    p.leaky_slope = static_cast<T>(cfg.leaky_slope);
    const int tk = cfg.transition_3x3 ? 3 : 1;
    for (int j = 1; j <= cfg.dense_stages; ++j) {
        const int width = cfg.stage_width(j);
        const int shift = (j % 2 == 0) ? cfg.window_size / 2 : 0;
        std::string sb = base + ".stage." + std::to_string(j);
        p.stl.push_back(build_stl_params(store, rng, sb + ".stl", width, cfg.num_heads,
                                         cfg.window_size, shift, cfg.mlp_ratio));
        const bool last = j == cfg.dense_stages;
        const int out_c = last ? cfg.embed_dim : cfg.growth;
        Var<T> tw = store.create(sb + ".trans.w", {tk, tk, width, out_c});
        nn::fill_he_normal(tw->value, rng, tk * tk * width);
        if (cfg.identity_init && last)
            std::fill(tw->value.vec().begin(), tw->value.vec().end(), T(0));
        p.trans_w.push_back(tw);
        p.trans_b.push_back(store.create(sb + ".trans.b", {out_c}));
    }
    return p;
}

/// Optional per-stage observer (stage index 1..4, transition output tensor).
template <typename T>
using StageTap = std::function<void(int, const Tensor<T>&)>;

/// Z_j = trans_j(STL_j([Z, Z_1, ..., Z_{j-1}])), result alpha * Z_last + Z.
template <typename T>
inline Var<T> sdrcb_forward(const Var<T>& z, const SdrcbParams<T>& p,
                            const Tensor<T>& shift_mask,
                            const StageTap<T>* stage_tap = nullptr) {
    if (z->value.shape().back() != p.stl.front().width)
        throw std::invalid_argument("sdrcb_forward: input width " +
                                    std::to_string(z->value.shape().back()) +
                                    " != " + std::to_string(p.stl.front().width));
    const int stages = static_cast<int>(p.stl.size());
    std::vector<Var<T>> feats{z};
    Var<T> z_last;
    for (int j = 1; j <= stages; ++j) {
        auto cat = feats.size() == 1 ? feats[0] : nn::concat_last(feats);
        const auto& stl = p.stl[static_cast<size_t>(j - 1)];
        if (cat->value.shape().back() != stl.width)
            throw std::logic_error("sdrcb_forward: stage width arithmetic violated");
        auto t = stl_forward(cat, stl, stl.shift != 0 ? &shift_mask : nullptr);
        t = nn::conv2d(t, p.trans_w[static_cast<size_t>(j - 1)],
                       p.trans_b[static_cast<size_t>(j - 1)]);
        if (j < stages) {
            t = nn::leaky_relu(t, p.leaky_slope);
            feats.push_back(t);
            if (stage_tap) (*stage_tap)(j, t->value);
        } else {
            z_last = t;
        }
    }
    return nn::scaled_residual(p.alpha, z_last, z);
}

/// Sequential chain of SDRCBs (one residual dense group).
template <typename T>
inline Var<T> rdg_forward(const Var<T>& f, const std::vector<SdrcbParams<T>>& blocks,
                          const Tensor<T>& shift_mask) {
    Var<T> cur = f;
    for (const auto& b : blocks) cur = sdrcb_forward(cur, b, shift_mask);
    return cur;
}

}  // namespace drct::model
