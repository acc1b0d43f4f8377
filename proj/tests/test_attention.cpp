#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "drct/model/dense.hpp"

using namespace drct;
using namespace drct::model;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& x : t.vec()) x = d(rng);
    return t;
}

StlParams<double> make_stl(nn::ParamStore<double>& store, uint64_t seed, int width,
                           int heads, int window, int shift) {
    std::mt19937_64 rng(seed);
    auto p = build_stl_params(store, rng, "t", width, heads, window, shift, 2.0);
    // randomize biases and norm params too, so oracles see the full math
    std::mt19937_64 rng2(seed + 1);
    std::normal_distribution<double> d(0.0, 0.1);
    for (auto* v : {&p.norm1_b, &p.qkv_b, &p.proj_b, &p.norm2_b, &p.fc1_b, &p.fc2_b})
        for (auto& x : (*v)->value.vec()) x = d(rng2);
    for (auto* v : {&p.norm1_g, &p.norm2_g})
        for (auto& x : (*v)->value.vec()) x = 1.0 + d(rng2);
    return p;
}

// Dense single-window multi-head attention block computed from first
// principles with plain loops; used as the oracle for stl_forward when the
// window covers the whole feature map and shift is zero.
Tensor<double> reference_block(const Tensor<double>& x, const StlParams<double>& p) {
    const int S = x.dim(1) * x.dim(2);
    const int C = p.width, heads = p.heads, d = C / heads, w = p.window;
    const double eps = 1e-5;
    auto layer_norm = [&](const std::vector<double>& in, const Var<double>& g,
                          const Var<double>& b) {
        std::vector<double> out(in.size());
        for (size_t t = 0; t < in.size() / C; ++t) {
            double mean = 0, var = 0;
            for (int c = 0; c < C; ++c) mean += in[t * C + c];
            mean /= C;
            for (int c = 0; c < C; ++c) {
                double dv = in[t * C + c] - mean;
                var += dv * dv;
            }
            var /= C;
            double inv = 1.0 / std::sqrt(var + eps);
            for (int c = 0; c < C; ++c)
                out[t * C + c] =
                    (in[t * C + c] - mean) * inv * g->value[c] + b->value[c];
        }
        return out;
    };
    std::vector<double> tokens(x.vec());

    auto h = layer_norm(tokens, p.norm1_g, p.norm1_b);
    // qkv projection
    std::vector<double> qkv(static_cast<size_t>(S) * 3 * C);
    for (int t = 0; t < S; ++t)
        for (int o = 0; o < 3 * C; ++o) {
            double acc = p.qkv_b->value[o];
            for (int c = 0; c < C; ++c)
                acc += h[static_cast<size_t>(t) * C + c] * p.qkv_w->value[c * 3 * C + o];
            qkv[static_cast<size_t>(t) * 3 * C + o] = acc;
        }
    auto q_at = [&](int t, int hd, int dd) {
        return qkv[static_cast<size_t>(t) * 3 * C + (0 * heads + hd) * d + dd];
    };
    auto k_at = [&](int t, int hd, int dd) {
        return qkv[static_cast<size_t>(t) * 3 * C + (1 * heads + hd) * d + dd];
    };
    auto v_at = [&](int t, int hd, int dd) {
        return qkv[static_cast<size_t>(t) * 3 * C + (2 * heads + hd) * d + dd];
    };
    auto rel = rel_pos_index(w);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> attended(static_cast<size_t>(S) * C);
    for (int hd = 0; hd < heads; ++hd)
        for (int i = 0; i < S; ++i) {
            std::vector<double> logit(S);
            double mx = -1e300;
            for (int j = 0; j < S; ++j) {
                double acc = 0;
                for (int dd = 0; dd < d; ++dd) acc += q_at(i, hd, dd) * k_at(j, hd, dd);
                acc = acc * scale +
                      p.rel_pos_table->value[rel[static_cast<size_t>(i) * S + j] * heads + hd];
                logit[j] = acc;
                mx = std::max(mx, acc);
            }
            double denom = 0;
            for (int j = 0; j < S; ++j) {
                logit[j] = std::exp(logit[j] - mx);
                denom += logit[j];
            }
            for (int dd = 0; dd < d; ++dd) {
                double acc = 0;
                for (int j = 0; j < S; ++j) acc += logit[j] / denom * v_at(j, hd, dd);
                attended[static_cast<size_t>(i) * C + hd * d + dd] = acc;
            }
        }
    // output projection + residual
    std::vector<double> x1(tokens);
    for (int t = 0; t < S; ++t)
        for (int o = 0; o < C; ++o) {
            double acc = p.proj_b->value[o];
            for (int c = 0; c < C; ++c)
                acc += attended[static_cast<size_t>(t) * C + c] * p.proj_w->value[c * C + o];
            x1[static_cast<size_t>(t) * C + o] += acc;
        }
    // MLP branch
    const int hidden = p.fc1_b->value.dim(0);
    auto m = layer_norm(x1, p.norm2_g, p.norm2_b);
    std::vector<double> out(x1);
    for (int t = 0; t < S; ++t) {
        std::vector<double> mid(hidden);
        for (int o = 0; o < hidden; ++o) {
            double acc = p.fc1_b->value[o];
            for (int c = 0; c < C; ++c)
                acc += m[static_cast<size_t>(t) * C + c] * p.fc1_w->value[c * hidden + o];
            mid[o] = 0.5 * acc * (1.0 + std::erf(acc / std::sqrt(2.0)));
        }
        for (int o = 0; o < C; ++o) {
            double acc = p.fc2_b->value[o];
            for (int c = 0; c < hidden; ++c)
                acc += mid[c] * p.fc2_w->value[c * C + o];
            out[static_cast<size_t>(t) * C + o] += acc;
        }
    }
    Tensor<double> r(x.shape());
    r.vec() = out;
    return r;
}

}  // namespace

TEST_CASE("relative position index covers the bias table") {
    for (int w : {2, 4, 8}) {
        auto idx = rel_pos_index(w);
        const int S = w * w, rows = (2 * w - 1) * (2 * w - 1);
        REQUIRE(static_cast<int>(idx.size()) == S * S);
        std::vector<int> seen(static_cast<size_t>(rows), 0);
        for (int v : idx) {
            REQUIRE(v >= 0);
            REQUIRE(v < rows);
            seen[static_cast<size_t>(v)] = 1;
        }
        // every displacement occurs for some token pair
        for (int v : seen) CHECK(v == 1);
        // self-pairs all map to the zero-displacement row
        const int center = (w - 1) * (2 * w - 1) + (w - 1);
        for (int i = 0; i < S; ++i) CHECK(idx[static_cast<size_t>(i) * S + i] == center);
    }
}

TEST_CASE("window partition/reverse is a bit-exact roundtrip") {
    auto x = random_tensor({2, 24, 24, 5}, 42);
    auto v = make_var(x);
    auto wp = window_partition(v, 8);
    REQUIRE(wp->value.shape() == std::vector<int>{2 * 9, 64, 5});
    // first window is the top-left 8x8 block of batch 0
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            for (int c = 0; c < 5; ++c)
                REQUIRE(wp->value[(i * 8 + j) * 5 + c] == x[(i * 24 + j) * 5 + c]);
    auto back = window_reverse(wp, 8, 2, 24, 24);
    REQUIRE(back->value.shape() == x.shape());
    for (size_t i = 0; i < x.numel(); ++i) REQUIRE(back->value[i] == x[i]);
}

TEST_CASE("shift mask: zeros without shift, region oracle with shift") {
    auto m0 = build_shift_mask<double>(16, 16, 8, 0);
    for (auto v : m0.vec()) REQUIRE(v == 0.0);

    const int hp = 16, wpx = 24, w = 8, s = 4;
    auto mask = build_shift_mask<double>(hp, wpx, w, s);
    REQUIRE(mask.shape() == std::vector<int>{(hp / w) * (wpx / w), w * w, w * w});
    // independent oracle: a pair may attend iff the two tokens were spatial
    // neighbours from the same contiguous patch before the cyclic shift,
    // i.e. their pre-shift coordinates lie in the same axis slice.
    auto region = [&](int pos, int n) {
        // pre-shift coordinate of rolled position `pos`
        int src = (pos + s) % n;
        int band_h = src < n - w ? 0 : (src < n - s ? 1 : 2);
        return band_h;
    };
    int blocked = 0;
    for (int wh = 0; wh < hp / w; ++wh)
        for (int ww = 0; ww < wpx / w; ++ww) {
            int widx = wh * (wpx / w) + ww;
            for (int a = 0; a < w * w; ++a)
                for (int b = 0; b < w * w; ++b) {
                    int ra = region(wh * w + a / w, hp) * 3 + region(ww * w + a % w, wpx);
                    int rb = region(wh * w + b / w, hp) * 3 + region(ww * w + b % w, wpx);
                    double expect = ra == rb ? 0.0 : -100.0;
                    REQUIRE(mask[(static_cast<int64_t>(widx) * w * w + a) * w * w + b] ==
                            expect);
                    if (expect != 0.0) ++blocked;
                }
        }
    CHECK(blocked > 0);  // shifted masks must actually block something
}

TEST_CASE("masked pairs receive negligible attention mass") {
    const int w = 4, s = 2, S = w * w;
    auto mask = build_shift_mask<double>(w, w, w, s);
    auto logits = random_tensor({1, 2, S, S}, 3, -2.0, 2.0);
    auto masked = nn::add_window_mask(make_var(logits), mask, 1);
    auto attn = nn::softmax_last(masked);
    for (int h = 0; h < 2; ++h)
        for (int i = 0; i < S; ++i) {
            double row = 0, blocked_mass = 0;
            for (int j = 0; j < S; ++j) {
                double a = attn->value[(static_cast<int64_t>(h) * S + i) * S + j];
                row += a;
                if (mask[(static_cast<int64_t>(0) * S + i) * S + j] != 0.0)
                    blocked_mass += a;
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(blocked_mass < 1e-8);
        }
}

TEST_CASE("stl_forward matches a dense attention oracle on a single window") {
    const int w = 4, C = 6, heads = 2;
    nn::ParamStore<double> store;
    auto p = make_stl(store, 9001, C, heads, w, 0);
    auto x = random_tensor({1, w, w, C}, 77);
    NoGradGuard ng;
    auto y = stl_forward(make_var(x), p);
    auto ref = reference_block(x, p);
    REQUIRE(y->value.shape() == ref.shape());
    double max_err = 0;
    for (size_t i = 0; i < ref.numel(); ++i)
        max_err = std::max(max_err, std::abs(y->value[i] - ref[i]));
    CHECK(max_err < 1e-10);
}

TEST_CASE("zeroed projection and mlp output make the block an identity") {
    const int w = 4, C = 6;
    nn::ParamStore<double> store;
    auto p = make_stl(store, 5, C, 3, w, w / 2);
    for (auto* v : {&p.proj_w, &p.proj_b, &p.fc2_w, &p.fc2_b})
        std::fill((*v)->value.vec().begin(), (*v)->value.vec().end(), 0.0);
    auto x = random_tensor({2, 8, 8, C}, 6);
    auto mask = build_shift_mask<double>(8, 8, w, w / 2);
    NoGradGuard ng;
    auto y = stl_forward(make_var(x), p, &mask);
    for (size_t i = 0; i < x.numel(); ++i) REQUIRE(y->value[i] == x[i]);
}

TEST_CASE("spatially constant input is invariant to the shift choice") {
    const int w = 4, C = 6;
    nn::ParamStore<double> s0, s1;
    auto p0 = make_stl(s0, 123, C, 2, w, 0);
    auto p1 = make_stl(s1, 123, C, 2, w, w / 2);  // same seed: identical weights
    Tensor<double> x({1, 8, 8, C});
    for (int i = 0; i < 64; ++i)
        for (int c = 0; c < C; ++c) x[i * C + c] = 0.1 * c - 0.2;
    auto mask = build_shift_mask<double>(8, 8, w, w / 2);
    NoGradGuard ng;
    auto y0 = stl_forward(make_var(x), p0);
    auto y1 = stl_forward(make_var(x), p1, &mask);
    for (size_t i = 0; i < x.numel(); ++i)
        CHECK(y0->value[i] == doctest::Approx(y1->value[i]).epsilon(1e-12));
}

TEST_CASE("batch entries are processed independently") {
    const int w = 4, C = 6;
    nn::ParamStore<double> store;
    auto p = make_stl(store, 31, C, 2, w, w / 2);
    auto a = random_tensor({1, 8, 8, C}, 100);
    auto b = random_tensor({1, 8, 8, C}, 101);
    Tensor<double> ab({2, 8, 8, C}), ba({2, 8, 8, C});
    std::copy(a.vec().begin(), a.vec().end(), ab.vec().begin());
    std::copy(b.vec().begin(), b.vec().end(), ab.vec().begin() + a.numel());
    std::copy(b.vec().begin(), b.vec().end(), ba.vec().begin());
    std::copy(a.vec().begin(), a.vec().end(), ba.vec().begin() + b.numel());
    auto mask = build_shift_mask<double>(8, 8, w, w / 2);
    NoGradGuard ng;
    auto y_ab = stl_forward(make_var(ab), p, &mask);
    auto y_ba = stl_forward(make_var(ba), p, &mask);
    const size_t half = a.numel();
    for (size_t i = 0; i < half; ++i) {
        REQUIRE(y_ab->value[i] == y_ba->value[half + i]);
        REQUIRE(y_ab->value[half + i] == y_ba->value[i]);
    }
}
