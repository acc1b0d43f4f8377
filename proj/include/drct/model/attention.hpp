#pragma once

#include <cmath>
#include <vector>

#include "drct/model/config.hpp"
#include "drct/nn/ops.hpp"

namespace drct::model {

inline constexpr double kMaskLarge = 100.0;

/// Relative-position index for a w x w window: index[i*S+j] addresses the
/// bias table row for token pair (i, j), S = w*w, table rows = (2w-1)^2.
inline std::vector<int> rel_pos_index(int w) {
    const int S = w * w;
    std::vector<int> idx(static_cast<size_t>(S) * S);
    for (int i = 0; i < S; ++i) {
        int yi = i / w, xi = i % w;
        for (int j = 0; j < S; ++j) {
            int yj = j / w, xj = j % w;
            int dy = yi - yj + w - 1;
            int dx = xi - xj + w - 1;
            idx[static_cast<size_t>(i) * S + j] = dy * (2 * w - 1) + dx;
        }
    }
    return idx;
}

/// Attention mask for shifted windows: entries are 0 for pairs from the same
/// pre-shift region and -kMaskLarge otherwise. Shift 0 gives all zeros.
template <typename T>
inline Tensor<T> build_shift_mask(int hp, int wp, int w, int shift) {
    if (hp % w != 0 || wp % w != 0)
        throw std::invalid_argument("build_shift_mask: dims must be window multiples");
    const int nw = (hp / w) * (wp / w);
    const int S = w * w;
    Tensor<T> mask({nw, S, S});
    if (shift == 0) return mask;
    // label each pixel by its pre-shift region (3 slices per axis)
    std::vector<int> labels(static_cast<size_t>(hp) * wp);
    auto slice_id = [&](int pos, int n) {
        if (pos < n - w) return 0;
        if (pos < n - shift) return 1;
        return 2;
    };
    int cnt = 0;
    for (int h = 0; h < hp; ++h)
        for (int x = 0; x < wp; ++x)
            labels[static_cast<size_t>(h) * wp + x] = slice_id(h, hp) * 3 + slice_id(x, wp);
    (void)cnt;
    // roll by (-shift, -shift) then window-partition the labels
    for (int wh = 0; wh < hp / w; ++wh)
        for (int ww = 0; ww < wp / w; ++ww) {
            const int widx = wh * (wp / w) + ww;
            std::vector<int> win(static_cast<size_t>(S));
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < w; ++j) {
                    int h = (wh * w + i + shift) % hp;
                    int x = (ww * w + j + shift) % wp;
                    win[static_cast<size_t>(i) * w + j] = labels[static_cast<size_t>(h) * wp + x];
                }
            T* m = mask.data() + static_cast<int64_t>(widx) * S * S;
            for (int i = 0; i < S; ++i)
                for (int j = 0; j < S; ++j)
                    m[static_cast<int64_t>(i) * S + j] =
                        win[i] == win[j] ? T(0) : T(-kMaskLarge);
        }
    return mask;
}

/// [B,Hp,Wp,C] -> [B*nW, w*w, C]
template <typename T>
inline Var<T> window_partition(const Var<T>& x, int w) {
    const auto& s = x->value.shape();
    const int B = s[0], Hp = s[1], Wp = s[2], C = s[3];
    if (Hp % w != 0 || Wp % w != 0)
        throw std::invalid_argument("window_partition: dims must be window multiples");
    auto t = nn::reshape(x, {B, Hp / w, w, Wp / w, w, C});
    t = nn::permute(t, {0, 1, 3, 2, 4, 5});
    return nn::reshape(t, {B * (Hp / w) * (Wp / w), w * w, C});
}

/// Inverse of window_partition for the given original geometry.
template <typename T>
inline Var<T> window_reverse(const Var<T>& wb, int w, int B, int Hp, int Wp) {
    const int C = wb->value.shape().back();
    auto t = nn::reshape(wb, {B, Hp / w, Wp / w, w, w, C});
    t = nn::permute(t, {0, 1, 3, 2, 4, 5});
    return nn::reshape(t, {B, Hp, Wp, C});
}

/// One Swin-Transformer Layer's parameters at a fixed channel width.
template <typename T>
struct StlParams {
    int width = 0;
    int heads = 0;
    int window = 0;
    int shift = 0;  // 0 or window/2
    Var<T> norm1_g, norm1_b;
    Var<T> qkv_w, qkv_b;
    Var<T> proj_w, proj_b;
    Var<T> rel_pos_table;  // [(2w-1)^2, heads]
    Var<T> norm2_g, norm2_b;
    Var<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

/// Pre-norm Swin block: x + W-MSA(LN(x)), then + MLP(LN(.)).
/// mask may be null when shift == 0.
template <typename T>
inline Var<T> stl_forward(const Var<T>& x, const StlParams<T>& p,
                          const Tensor<T>* mask = nullptr) {
    const auto& s = x->value.shape();
    const int B = s[0], Hp = s[1], Wp = s[2], C = s[3];
    if (C != p.width) throw std::invalid_argument("stl_forward: width mismatch");
    if (C % p.heads != 0)
        throw ConfigError("stl_forward: width not divisible by heads");
    const int w = p.window, S = w * w;
    const int nw = (Hp / w) * (Wp / w);
    const int heads = p.heads, d = C / heads;
    const T eps = T(1e-5);

    auto h = nn::layer_norm(x, p.norm1_g, p.norm1_b, eps);
    if (p.shift != 0) h = nn::roll_hw(h, -p.shift, -p.shift);
    auto windows = window_partition(h, w);  // [B*nw, S, C]

    auto qkv = nn::linear(windows, p.qkv_w, p.qkv_b);           // [B*nw, S, 3C]
    qkv = nn::reshape(qkv, {B * nw, S, 3, heads, d});
    qkv = nn::permute(qkv, {2, 0, 3, 1, 4});                    // [3, B*nw, heads, S, d]
    auto q = nn::select_first(qkv, 0);
    auto k = nn::select_first(qkv, 1);
    auto v = nn::select_first(qkv, 2);
    q = nn::scale(q, T(1) / static_cast<T>(std::sqrt(static_cast<double>(d))));

    auto logits = nn::bmm(nn::reshape(q, {B * nw * heads, S, d}),
                          nn::reshape(k, {B * nw * heads, S, d}), false, true);
    logits = nn::reshape(logits, {B * nw, heads, S, S});

    auto bias = nn::embedding_rows(p.rel_pos_table, rel_pos_index(w));  // [S*S, heads]
    bias = nn::permute(nn::reshape(bias, {S, S, heads}), {2, 0, 1});    // [heads, S, S]
    logits = nn::broadcast_add_trailing(logits, bias);
    if (p.shift != 0 && mask) logits = nn::add_window_mask(logits, *mask, nw);

    auto attn = nn::softmax_last(logits);
    auto out = nn::bmm(nn::reshape(attn, {B * nw * heads, S, S}),
                       nn::reshape(v, {B * nw * heads, S, d}), false, false);
    out = nn::reshape(out, {B * nw, heads, S, d});
    out = nn::permute(out, {0, 2, 1, 3});                        // [B*nw, S, heads, d]
    out = nn::reshape(out, {B * nw, S, C});
    out = nn::linear(out, p.proj_w, p.proj_b);

    auto spatial = window_reverse(out, w, B, Hp, Wp);
    if (p.shift != 0) spatial = nn::roll_hw(spatial, p.shift, p.shift);
    auto x1 = nn::add(x, spatial);

    auto m = nn::layer_norm(x1, p.norm2_g, p.norm2_b, eps);
    m = nn::linear(m, p.fc1_w, p.fc1_b);
    m = nn::gelu(m);
    m = nn::linear(m, p.fc2_w, p.fc2_b);
    return nn::add(x1, m);
}

}  // namespace drct::model
