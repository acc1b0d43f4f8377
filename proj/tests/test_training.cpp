#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "drct/train/trainer.hpp"

using namespace drct;
using namespace drct::train;

namespace {

model::ModelConfig tiny_config() {
    model::ModelConfig cfg;
    cfg.scale = 2;
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

StagePlan single_stage(int64_t iters, LossKind loss = LossKind::l1) {
    StagePlan plan;
    StageSpec s;
    s.id = StageId::pretrain;
    s.loss = loss;
    s.total_iters = iters;
    s.milestones = default_milestone_fractions();
    plan.stages = {s};
    return plan;
}

}  // namespace

TEST_CASE("loss values on constant offsets") {
    Tensor<double> a({2, 3, 4, 4}), b({2, 3, 4, 4});
    std::fill(a.vec().begin(), a.vec().end(), 0.75);
    std::fill(b.vec().begin(), b.vec().end(), 0.25);
    CHECK(l1_loss(make_var(a), make_var(b))->value[0] == doctest::Approx(0.5));
    CHECK(l2_loss(make_var(a), make_var(b))->value[0] == doctest::Approx(0.25));
    CHECK(loss_of_kind(LossKind::l1, make_var(a), make_var(b))->value[0] ==
          doctest::Approx(0.5));
    CHECK(loss_of_kind(LossKind::l2, make_var(a), make_var(b))->value[0] ==
          doctest::Approx(0.25));
    // identical inputs give zero loss
    CHECK(l1_loss(make_var(a), make_var(a))->value[0] == 0.0);
}

TEST_CASE("multistep halving schedule hits the published knots") {
    const auto& f = default_milestone_fractions();
    const int64_t total = 800000;
    CHECK(lr_at(0, 2e-4, total, f) == doctest::Approx(2e-4));
    CHECK(lr_at(299999, 2e-4, total, f) == doctest::Approx(2e-4));
    CHECK(lr_at(300000, 2e-4, total, f) == doctest::Approx(1e-4));
    CHECK(lr_at(499999, 2e-4, total, f) == doctest::Approx(1e-4));
    CHECK(lr_at(500000, 2e-4, total, f) == doctest::Approx(5e-5));
    CHECK(lr_at(650000, 2e-4, total, f) == doctest::Approx(2.5e-5));
    CHECK(lr_at(700000, 2e-4, total, f) == doctest::Approx(1.25e-5));
    CHECK(lr_at(750000, 2e-4, total, f) == doctest::Approx(6.25e-6));
    CHECK(lr_at(799999, 2e-4, total, f) == doctest::Approx(6.25e-6));
    CHECK_THROWS_AS((void)lr_at(800000, 2e-4, total, f), std::out_of_range);
    CHECK_THROWS_AS((void)lr_at(-1, 2e-4, total, f), std::out_of_range);
    // fractions rescale: the same curve on a 800-iteration desk run
    CHECK(lr_at(300, 2e-4, 800, f) == doctest::Approx(1e-4));
    CHECK(lr_at(299, 2e-4, 800, f) == doctest::Approx(2e-4));
}

TEST_CASE("adam matches a hand-rolled reference over several steps") {
    // reference: scalar Adam computed with plain arithmetic in double
    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double grads[4] = {0.3, -1.2, 0.05, 0.7};
    double theta = 0.5, m = 0, v = 0;
    nn::ParamStore<double> store;
    auto p = store.create("w", {1});
    p->value[0] = 0.5;
    Adam<double> opt;
    opt.attach(store);
    for (int t = 1; t <= 4; ++t) {
        const double g = grads[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        theta -= lr * mhat / (std::sqrt(vhat) + eps);

        p->grad = Tensor<double>({1});
        p->grad[0] = g;
        opt.step(store, lr);
        CHECK(p->value[0] == doctest::Approx(theta).epsilon(1e-12));
    }
    CHECK(opt.step_count() == 4);
}

TEST_CASE("parameters with no gradient are left untouched") {
    nn::ParamStore<double> store;
    auto a = store.create("a", {2});
    auto b = store.create("b", {2});
    a->value[0] = 1.0;
    b->value[0] = 2.0;
    Adam<double> opt;
    opt.attach(store);
    a->grad = Tensor<double>({2});
    a->grad[0] = 0.5;  // only `a` gets a gradient
    opt.step(store, 1e-2);
    CHECK(a->value[0] != 1.0);
    CHECK(b->value[0] == 2.0);
}

TEST_CASE("training is deterministic and reduces the loss on a fixed batch") {
    auto cfg = tiny_config();
    auto lr_img = random_image<float>(1, 1, 3, 4, 4);
    auto hr_img = random_image<float>(2, 1, 3, 8, 8);

    auto run = [&](uint64_t seed) {
        model::Drct<float> net(cfg, seed);
        Trainer<float> tr(net, single_stage(1000), seed);
        std::vector<float> losses;
        for (int i = 0; i < 10; ++i) losses.push_back(tr.train_step(lr_img, hr_img));
        return std::pair{losses, net.params().entries()[0].second->value.vec()};
    };
    auto [la, pa] = run(7);
    auto [lb, pb] = run(7);
    CHECK(la == lb);
    CHECK(pa == pb);
    auto [lc, pc] = run(8);
    CHECK(pa != pc);
    // overfitting a single batch must make progress
    CHECK(la.back() < la.front());
}

TEST_CASE("non-finite loss raises DivergedError with the iteration") {
    auto cfg = tiny_config();
    model::Drct<float> net(cfg, 3);
    Trainer<float> tr(net, single_stage(100), 3);
    auto w = net.params().find("conv_first.w");
    for (auto& v : w->value.vec()) v = 3e38f;  // overflow the activations
    auto lr_img = random_image<float>(4, 1, 3, 4, 4);
    auto hr_img = random_image<float>(5, 1, 3, 8, 8);
    CHECK_THROWS_AS((void)tr.train_step(lr_img, hr_img), DivergedError);
}

TEST_CASE("stage machine: progression resets schedule and moments, keeps params") {
    StagePlan plan;
    StageSpec s1, s2, s3;
    s1.id = StageId::pretrain;
    s1.loss = LossKind::l1;
    s1.total_iters = 2;
    s2.id = StageId::l1_finetune;
    s2.loss = LossKind::l1;
    s2.total_iters = 3;
    s3.id = StageId::l2_polish;
    s3.loss = LossKind::l2;
    s3.total_iters = 2;
    s3.base_lr = 1e-4;
    plan.stages = {s1, s2, s3};

    auto cfg = tiny_config();
    model::Drct<float> net(cfg, 11);
    Trainer<float> tr(net, plan, 11);
    auto lr_img = random_image<float>(12, 1, 3, 4, 4);
    auto hr_img = random_image<float>(13, 1, 3, 8, 8);

    CHECK(tr.stage().id == StageId::pretrain);
    tr.train_step(lr_img, hr_img);
    tr.train_step(lr_img, hr_img);
    CHECK(tr.stage_exhausted());
    CHECK(!tr.finished());
    CHECK(tr.optimizer().step_count() == 2);

    auto snapshot = net.params().entries()[0].second->value.vec();
    REQUIRE(tr.advance_stage());
    CHECK(tr.stage().id == StageId::l1_finetune);
    CHECK(tr.iteration() == 0);
    CHECK(tr.optimizer().step_count() == 0);  // moments reset
    for (const auto& t : tr.optimizer().first_moments())
        for (int64_t i = 0; i < t.numel(); ++i) REQUIRE(t[i] == 0.0f);
    CHECK(net.params().entries()[0].second->value.vec() == snapshot);  // params kept

    for (int i = 0; i < 3; ++i) tr.train_step(lr_img, hr_img);
    REQUIRE(tr.advance_stage());
    CHECK(tr.stage().id == StageId::l2_polish);
    CHECK(tr.stage().loss == LossKind::l2);
    CHECK(tr.current_lr() == doctest::Approx(1e-4));
    tr.train_step(lr_img, hr_img);
    tr.train_step(lr_img, hr_img);
    CHECK(tr.finished());
    CHECK(!tr.advance_stage());  // no further stage
}

TEST_CASE("stage plan validation rejects malformed plans") {
    StagePlan empty;
    CHECK_THROWS_AS(empty.validate(), std::invalid_argument);

    auto plan = single_stage(100);
    plan.stages[0].total_iters = 0;  // must be explicit
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);

    plan = single_stage(100);
    plan.stages[0].milestones = {0.5, 0.3};
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);

    plan = single_stage(100);
    plan.stages[0].milestones = {0.5, 1.5};
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);

    // L2 anywhere but the last stage is rejected
    StagePlan two;
    two.stages = {single_stage(10, LossKind::l2).stages[0],
                  single_stage(10, LossKind::l1).stages[0]};
    CHECK_THROWS_AS(two.validate(), std::invalid_argument);
    two.stages = {single_stage(10, LossKind::l1).stages[0],
                  single_stage(10, LossKind::l2).stages[0]};
    CHECK_NOTHROW(two.validate());
}

TEST_CASE("checkpoint round trip restores bit-identical training state") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() /
                       ("drct_ckpt_" + std::to_string(::getpid()) + ".bin"))
                          .string();
    auto cfg = tiny_config();
    auto lr_img = random_image<float>(21, 1, 3, 4, 4);
    auto hr_img = random_image<float>(22, 1, 3, 8, 8);

    model::Drct<float> net_a(cfg, 31);
    Trainer<float> tr_a(net_a, single_stage(1000), 31);
    for (int i = 0; i < 5; ++i) tr_a.train_step(lr_img, hr_img);
    tr_a.note_val_psnr(33.25);
    tr_a.save_checkpoint(path);

    model::Drct<float> net_b(cfg, 999);  // different init, to be overwritten
    Trainer<float> tr_b(net_b, single_stage(1000), 999);
    tr_b.resume(path);
    CHECK(tr_b.iteration() == 5);
    CHECK(tr_b.stage_index() == 0);
    CHECK(tr_b.best_val_psnr() == doctest::Approx(33.25));
    const auto& ea = net_a.params().entries();
    const auto& eb = net_b.params().entries();
    REQUIRE(ea.size() == eb.size());
    for (size_t i = 0; i < ea.size(); ++i)
        REQUIRE(ea[i].second->value.vec() == eb[i].second->value.vec());
    CHECK(tr_b.optimizer().step_count() == tr_a.optimizer().step_count());

    // both lineages continue identically
    for (int i = 0; i < 3; ++i) {
        float la = tr_a.train_step(lr_img, hr_img);
        float lb = tr_b.train_step(lr_img, hr_img);
        CHECK(la == lb);
    }
    fs::remove(path);
}

TEST_CASE("checkpoint peek reports config and meta without loading params") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() /
                       ("drct_peek_" + std::to_string(::getpid()) + ".bin"))
                          .string();
    auto cfg = tiny_config();
    model::Drct<float> net(cfg, 1);
    Trainer<float> tr(net, single_stage(50), 1);
    tr.save_checkpoint(path);
    auto peek = model::peek_checkpoint(path);
    CHECK(peek.config.embed_dim == cfg.embed_dim);
    CHECK(peek.config.scale == cfg.scale);
    CHECK(peek.meta.iteration == 0);
    CHECK(peek.meta.seed == 1);
    fs::remove(path);
}
