#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "drct/model/dense.hpp"

using namespace drct;
using namespace drct::model;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.scale = 2;
    cfg.embed_dim = 12;
    cfg.growth = 4;
    cfg.num_rdg = 1;
    cfg.sdrcb_per_rdg = 1;
    cfg.num_heads = 2;
    cfg.window_size = 4;
    cfg.validate();
    return cfg;
}

Tensor<double> random_input(uint64_t seed, int C, int hw = 8) {
    Tensor<double> x({1, hw, hw, C});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (auto& v : x.vec()) v = d(rng);
    return x;
}

SdrcbParams<double> make_block(const ModelConfig& cfg, uint64_t seed) {
    nn::ParamStore<double> store;
    std::mt19937_64 rng(seed);
    return build_sdrcb_params<double>(store, rng, "b", cfg);
}

}  // namespace

TEST_CASE("stage widths follow the dense-concat arithmetic") {
    ModelConfig cfg;
    cfg.embed_dim = 60;
    cfg.growth = 12;
    const int expect[] = {60, 72, 84, 96, 108};
    for (int j = 1; j <= 5; ++j) CHECK(cfg.stage_width(j) == expect[j - 1]);
}

TEST_CASE("block parameter widths and shift schedule") {
    auto cfg = tiny_config();
    auto p = make_block(cfg, 1);
    REQUIRE(p.stl.size() == 5);
    REQUIRE(p.trans_w.size() == 5);
    for (int j = 1; j <= 5; ++j) {
        const auto& stl = p.stl[static_cast<size_t>(j - 1)];
        CHECK(stl.width == cfg.embed_dim + (j - 1) * cfg.growth);
        CHECK(stl.shift == (j % 2 == 0 ? cfg.window_size / 2 : 0));
        const auto& tw = p.trans_w[static_cast<size_t>(j - 1)]->value;
        CHECK(tw.dim(2) == stl.width);
        CHECK(tw.dim(3) == (j == 5 ? cfg.embed_dim : cfg.growth));
    }
}

TEST_CASE("stage taps report intermediate features at growth width") {
    auto cfg = tiny_config();
    auto p = make_block(cfg, 2);
    auto x = random_input(3, cfg.embed_dim);
    auto mask = build_shift_mask<double>(8, 8, cfg.window_size, cfg.window_size / 2);
    std::vector<int> stages;
    StageTap<double> tap = [&](int j, const Tensor<double>& t) {
        stages.push_back(j);
        CHECK(t.shape() == std::vector<int>{1, 8, 8, cfg.growth});
    };
    NoGradGuard ng;
    auto y = sdrcb_forward(make_var(x), p, mask, &tap);
    CHECK(y->value.shape() == x.shape());
    CHECK(stages == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("zero final transition makes the block an exact identity") {
    auto cfg = tiny_config();
    cfg.identity_init = true;
    auto p = make_block(cfg, 4);
    auto& last_b = p.trans_b.back()->value;
    for (auto v : p.trans_w.back()->value.vec()) REQUIRE(v == 0.0);
    std::fill(last_b.vec().begin(), last_b.vec().end(), 0.0);
    auto x = random_input(5, cfg.embed_dim);
    auto mask = build_shift_mask<double>(8, 8, cfg.window_size, cfg.window_size / 2);
    NoGradGuard ng;
    auto y = sdrcb_forward(make_var(x), p, mask);
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(y->value[i] == x[i]);
}

TEST_CASE("residual scale is linear in alpha") {
    auto cfg = tiny_config();
    auto p = make_block(cfg, 6);
    auto x = random_input(7, cfg.embed_dim);
    auto mask = build_shift_mask<double>(8, 8, cfg.window_size, cfg.window_size / 2);
    NoGradGuard ng;
    auto run = [&](double alpha) {
        auto q = p;
        q.alpha = alpha;
        return sdrcb_forward(make_var(x), q, mask)->value;
    };
    auto y0 = run(0.0);
    auto y2 = run(0.2);
    auto y4 = run(0.4);
    // with alpha=0 the block must return its input untouched
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(y0[i] == x[i]);
    // y(a) = x + a * z_last, so increments scale exactly with alpha
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(y4[i] - y0[i] == doctest::Approx(2.0 * (y2[i] - y0[i])).epsilon(1e-12));
}

TEST_CASE("rdg_forward composes blocks sequentially") {
    auto cfg = tiny_config();
    auto b0 = make_block(cfg, 10);
    auto b1 = make_block(cfg, 11);
    auto x = random_input(12, cfg.embed_dim);
    auto mask = build_shift_mask<double>(8, 8, cfg.window_size, cfg.window_size / 2);
    NoGradGuard ng;
    auto single = rdg_forward(make_var(x), std::vector<SdrcbParams<double>>{b0}, mask);
    auto direct = sdrcb_forward(make_var(x), b0, mask);
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(single->value[i] == direct->value[i]);

    auto chained = rdg_forward(make_var(x), {b0, b1}, mask);
    auto manual = sdrcb_forward(sdrcb_forward(make_var(x), b0, mask), b1, mask);
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(chained->value[i] == manual->value[i]);
}

TEST_CASE("forward does not mutate its input") {
    auto cfg = tiny_config();
    auto p = make_block(cfg, 20);
    auto x = random_input(21, cfg.embed_dim);
    auto copy = x;
    auto mask = build_shift_mask<double>(8, 8, cfg.window_size, cfg.window_size / 2);
    NoGradGuard ng;
    auto v = make_var(x);
    (void)sdrcb_forward(v, p, mask);
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(v->value[i] == copy[i]);
}

TEST_CASE("width mismatch is rejected") {
    auto cfg = tiny_config();
    auto p = make_block(cfg, 30);
    auto bad = random_input(31, cfg.embed_dim + 1);
    auto mask = build_shift_mask<double>(8, 8, cfg.window_size, cfg.window_size / 2);
    NoGradGuard ng;
    CHECK_THROWS_AS((void)sdrcb_forward(make_var(bad), p, mask), std::invalid_argument);
}

TEST_CASE("gradients reach every dense-stage parameter") {
    auto cfg = tiny_config();
    nn::ParamStore<double> store;
    std::mt19937_64 rng(40);
    auto p = build_sdrcb_params<double>(store, rng, "b", cfg);
    auto x = random_input(41, cfg.embed_dim, 4);
    auto mask = build_shift_mask<double>(4, 4, cfg.window_size, cfg.window_size / 2);
    auto y = sdrcb_forward(make_var(x), p, mask);
    // scalar objective: sum of outputs
    Tensor<double> ones(y->value.shape());
    std::fill(ones.vec().begin(), ones.vec().end(), 1.0);
    auto loss = nn::mean_abs_diff(y, make_var(ones));
    backward(loss);
    int nonzero = 0, total = 0;
    for (const auto& [name, v] : store.entries()) {
        ++total;
        double s = 0;
        for (auto g : v->grad.vec()) s += std::abs(g);
        if (v->grad.numel() > 0 && s > 0)
            ++nonzero;
        else
            MESSAGE("no gradient reached ", name);
    }
    CHECK(total == 5 * 13 + 10);  // 13 tensors per stl + 2 per transition
    CHECK(nonzero == total);
}
