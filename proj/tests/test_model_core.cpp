#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "drct/model/network.hpp"

using namespace drct;
using namespace drct::model;

namespace {

ModelConfig tiny_config(int scale = 2) {
    ModelConfig cfg;
    cfg.scale = scale;
    cfg.embed_dim = 8;
    cfg.growth = 4;
    cfg.num_rdg = 1;
    cfg.sdrcb_per_rdg = 1;
    cfg.num_heads = 2;
    cfg.window_size = 4;
    cfg.validate();
    return cfg;
}

template <typename T>
Tensor<T> random_image(uint64_t seed, int B, int C, int H, int W) {
    Tensor<T> x({B, C, H, W});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (auto& v : x.vec()) v = static_cast<T>(d(rng));
    return x;
}

/// Independent closed-form parameter count for the architecture.
int64_t expected_param_count(const ModelConfig& cfg) {
    const int C = cfg.embed_dim, cin = cfg.in_channels, w = cfg.window_size;
    const int tk = cfg.transition_3x3 ? 3 : 1;
    auto stl_count = [&](int width) {
        const int h = static_cast<int>(width * cfg.mlp_ratio);
        int64_t n = 0;
        n += 2 * width;                                   // norm1
        n += static_cast<int64_t>(width) * 3 * width + 3 * width;  // qkv
        n += static_cast<int64_t>(width) * width + width;          // proj
        n += static_cast<int64_t>(2 * w - 1) * (2 * w - 1) * cfg.num_heads;
        n += 2 * width;                                   // norm2
        n += static_cast<int64_t>(width) * h + h;         // fc1
        n += static_cast<int64_t>(h) * width + width;     // fc2
        return n;
    };
    int64_t n = 0;
    n += 9LL * cin * C + C;  // conv_first
    for (int b = 0; b < cfg.num_rdg * cfg.sdrcb_per_rdg; ++b)
        for (int j = 1; j <= cfg.dense_stages; ++j) {
            const int width = cfg.stage_width(j);
            const int out = j == cfg.dense_stages ? C : cfg.growth;
            n += stl_count(width);
            n += static_cast<int64_t>(tk) * tk * width * out + out;
        }
    n += 9LL * C * C + C;  // conv_after_body
    n += 9LL * C * C + C;  // conv_before_up
    std::vector<int> factors = cfg.scale == 4 ? std::vector<int>{2, 2}
                                              : std::vector<int>{cfg.scale};
    for (int r : factors) n += 9LL * C * C * r * r + static_cast<int64_t>(C) * r * r;
    n += 9LL * C * cin + cin;  // conv_last
    return n;
}

}  // namespace

TEST_CASE("forward produces scale-magnified images across geometries") {
    for (int scale : {2, 3, 4}) {
        Drct<float> net(tiny_config(scale), 7);
        NoGradGuard ng;
        for (auto [H, W] : {std::pair{4, 4}, {5, 7}, {8, 3}, {1, 1}, {1, 9}}) {
            auto x = random_image<float>(100 + H * 16 + W, 2, 3, H, W);
            auto y = net.forward(x);
            REQUIRE(y->value.shape() == std::vector<int>{2, 3, scale * H, scale * W});
            REQUIRE(y->value.all_finite());
        }
    }
}

TEST_CASE("construction is deterministic in the seed") {
    auto cfg = tiny_config();
    Drct<float> a(cfg, 99), b(cfg, 99), c(cfg, 100);
    const auto& ea = a.params().entries();
    const auto& eb = b.params().entries();
    REQUIRE(ea.size() == eb.size());
    bool all_same = true, any_diff_from_c = false;
    for (size_t i = 0; i < ea.size(); ++i) {
        REQUIRE(ea[i].first == eb[i].first);
        for (int64_t j = 0; j < ea[i].second->value.numel(); ++j) {
            if (ea[i].second->value[j] != eb[i].second->value[j]) all_same = false;
            if (ea[i].second->value[j] != c.params().entries()[i].second->value[j])
                any_diff_from_c = true;
        }
    }
    CHECK(all_same);
    CHECK(any_diff_from_c);

    auto x = random_image<float>(5, 1, 3, 6, 6);
    NoGradGuard ng;
    auto ya = a.forward(x), yb = b.forward(x);
    for (int64_t i = 0; i < ya->value.numel(); ++i)
        REQUIRE(ya->value[i] == yb->value[i]);
}

TEST_CASE("zeroed final transitions collapse the body to the shallow feature") {
    Drct<float> net(tiny_config(), 3);
    net.zero_final_transitions();
    auto x = random_image<float>(8, 1, 3, 8, 8);  // window multiple: no padding
    Tensor<float> shallow, deep;
    bool got_deep = false;
    TapFn<float> tap = [&](const std::string& name, int, const Tensor<float>& t) {
        if (name == "shallow") shallow = t;
        if (name == "rdg.0") {
            deep = t;
            got_deep = true;
        }
    };
    NoGradGuard ng;
    (void)net.forward(x, TapLevel::per_rdg, &tap);
    REQUIRE(got_deep);
    REQUIRE(shallow.shape() == deep.shape());
    for (int64_t i = 0; i < shallow.numel(); ++i) REQUIRE(shallow[i] == deep[i]);
}

TEST_CASE("tap counts by level") {
    ModelConfig cfg = tiny_config();
    cfg.num_rdg = 2;
    cfg.sdrcb_per_rdg = 2;
    Drct<float> net(cfg, 13);
    auto x = random_image<float>(1, 1, 3, 4, 4);
    NoGradGuard ng;
    auto count = [&](TapLevel lvl) {
        int n = 0;
        TapFn<float> tap = [&](const std::string&, int, const Tensor<float>&) { ++n; };
        (void)net.forward(x, lvl, &tap);
        return n;
    };
    // shallow + transition always; plus one per group / block / block+stage
    CHECK(count(TapLevel::per_rdg) == 2 + 2);
    CHECK(count(TapLevel::per_sdrcb) == 2 + 4);
    CHECK(count(TapLevel::per_stage) == 2 + 4 + 4 * 4);
}

TEST_CASE("parameter count matches a closed-form oracle") {
    for (int scale : {2, 3, 4}) {
        auto cfg = tiny_config(scale);
        Drct<float> net(cfg, 1);
        CHECK(net.count_parameters() == expected_param_count(cfg));
    }
    // a bigger asymmetric config
    ModelConfig cfg;
    cfg.scale = 4;
    cfg.embed_dim = 16;
    cfg.growth = 8;
    cfg.num_rdg = 2;
    cfg.sdrcb_per_rdg = 3;
    cfg.num_heads = 4;
    cfg.window_size = 4;
    cfg.validate();
    Drct<float> net(cfg, 1);
    CHECK(net.count_parameters() == expected_param_count(cfg));
    // spot value: first conv holds 3*3*3*16 weights + 16 biases
    CHECK(net.params().find("conv_first.w")->value.numel() == 3 * 3 * 3 * 16);
    CHECK(net.params().find("conv_first.b")->value.numel() == 16);
}

TEST_CASE("invalid inputs are rejected") {
    Drct<float> net(tiny_config(), 2);
    CHECK_THROWS_AS((void)net.forward(Tensor<float>({1, 4, 4, 4})), DataError);
    CHECK_THROWS_AS((void)net.forward(Tensor<float>({3, 4, 4})), DataError);
    Tensor<float> nan_img({1, 3, 4, 4});
    nan_img[5] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS((void)net.forward(nan_img), DataError);
}

TEST_CASE("config validation flags bad geometry") {
    auto cfg = tiny_config();
    cfg.scale = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.window_size = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.num_heads = 3;  // 8 + j*4 is not divisible by 3 for every stage
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("training gradients reach every parameter group") {
    Drct<float> net(tiny_config(), 21);
    auto x = random_image<float>(22, 1, 3, 4, 4);
    auto target = random_image<float>(23, 1, 3, 8, 8);
    auto y = net.forward(x);
    auto loss = nn::mean_abs_diff(y, make_var(target));
    backward(loss);
    int total = 0, nonzero = 0;
    for (const auto& [name, v] : net.params().entries()) {
        ++total;
        double s = 0;
        for (auto g : v->grad.vec()) s += std::abs(g);
        if (v->grad.numel() > 0 && s > 0)
            ++nonzero;
        else
            MESSAGE("no gradient reached ", name);
    }
    CHECK(total > 0);
    CHECK(nonzero == total);
}

TEST_CASE("analytic gradients agree with finite differences (double)") {
    ModelConfig cfg = tiny_config();
    Drct<double> net(cfg, 31);
    auto x = random_image<double>(32, 1, 3, 4, 4);
    auto target = random_image<double>(33, 1, 3, 8, 8);

    auto loss_value = [&]() {
        NoGradGuard ng;
        auto y = net.forward(x);
        double acc = 0;
        for (int64_t i = 0; i < y->value.numel(); ++i) {
            double d = y->value[i] - target[i];
            acc += d * d;
        }
        return acc / static_cast<double>(y->value.numel());
    };

    net.params().zero_grads();
    auto y = net.forward(x);
    auto loss = nn::mean_sq_diff(y, make_var(target));
    backward(loss);

    // probe a few parameters spread across the network
    const char* names[] = {"conv_first.w", "rdg.0.sdrcb.0.stage.2.stl.qkv.w",
                           "rdg.0.sdrcb.0.stage.5.trans.w",
                           "rdg.0.sdrcb.0.stage.3.stl.rel_pos", "rec.conv_last.w"};
    std::mt19937_64 rng(34);
    const double eps = 1e-6;
    for (const char* name : names) {
        auto p = net.params().find(name);
        REQUIRE(p != nullptr);
        std::uniform_int_distribution<int64_t> pick(0, p->value.numel() - 1);
        const int64_t idx = pick(rng);
        const double keep = p->value[idx];
        p->value[idx] = keep + eps;
        const double lp = loss_value();
        p->value[idx] = keep - eps;
        const double lm = loss_value();
        p->value[idx] = keep;
        const double fd = (lp - lm) / (2 * eps);
        const double an = p->grad[idx];
        INFO("param ", name, " idx ", idx);
        CHECK(std::abs(fd - an) < 1e-6 + 1e-4 * std::abs(fd));
    }
}
