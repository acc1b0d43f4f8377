#pragma once

#include <functional>
#include <memory>
#include <string>

#include "drct/model/config.hpp"
#include "drct/model/dense.hpp"
#include "drct/nn/init.hpp"
#include "drct/nn/ops.hpp"

namespace drct::model {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TapLevel { per_rdg, per_sdrcb, per_stage };

/// Called with (tap name, depth index, feature tensor) during a traced forward.
template <typename T>
using TapFn = std::function<void(const std::string&, int, const Tensor<T>&)>;

namespace detail {
// DIV2K/DF2K RGB mean, the SwinIR-lineage normalization constant.
inline constexpr double kRgbMean[3] = {0.4488, 0.4371, 0.4040};
}  // namespace detail

/// DRCT: shallow conv, K residual dense groups of M SDRCBs, transition conv,
/// pixel-shuffle reconstruction.
template <typename T>
class Drct {
public:
    Drct(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        build(rng);
    }

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }

    int64_t count_parameters() const { return params_.total_elements(); }

    /// lr: [B, in_channels, H, W] in unit range. Returns [B, in_channels, sH, sW].
    Var<T> forward(const Tensor<T>& lr, TapLevel tap_level = TapLevel::per_rdg,
                   const TapFn<T>* tap = nullptr) const {
        if (lr.rank() != 4 || lr.dim(1) != cfg_.in_channels)
            throw DataError("forward: expected [B," + std::to_string(cfg_.in_channels) +
                            ",H,W] input, got " + Tensor<T>::shape_str(lr.shape()));
        if (!lr.all_finite()) throw DataError("forward: non-finite input values");
        const int B = lr.dim(0), H = lr.dim(2), W = lr.dim(3);
        if (H < 1 || W < 1) throw DataError("forward: empty spatial dims");

        auto x = nn::permute(make_var(lr), {0, 2, 3, 1});  // NHWC
        if (cfg_.subtract_mean) x = nn::broadcast_add_trailing(x, neg_mean_);

        auto f0 = nn::conv2d(x, conv_first_w_, conv_first_b_);
        int tap_idx = 0;
        if (tap) (*tap)("shallow", tap_idx++, f0->value);

        const int w = cfg_.window_size;
        const int Hp = (H + w - 1) / w * w;
        const int Wp = (W + w - 1) / w * w;
        auto f = (Hp != H || Wp != W) ? nn::pad_mirror_hw(f0, Hp - H, Wp - W) : f0;

        Tensor<T> shift_mask = build_shift_mask<T>(Hp, Wp, w, w / 2);
        for (int i = 0; i < cfg_.num_rdg; ++i) {
            for (int m = 0; m < cfg_.sdrcb_per_rdg; ++m) {
                const std::string name =
                    "rdg." + std::to_string(i) + ".sdrcb." + std::to_string(m);
                StageTap<T> stage_tap = [&](int j, const Tensor<T>& t) {
                    (*tap)(name + ".stage." + std::to_string(j), tap_idx++, t);
                };
                const bool want_stages = tap && tap_level == TapLevel::per_stage;
                f = sdrcb_forward(f, rdgs_[i][m], shift_mask,
                                  want_stages ? &stage_tap : nullptr);
                if (tap && tap_level != TapLevel::per_rdg)
                    (*tap)(name, tap_idx++, f->value);
            }
            if (tap && tap_level == TapLevel::per_rdg)
                (*tap)("rdg." + std::to_string(i), tap_idx++, f->value);
        }

        auto fdf = nn::conv2d(f, conv_after_body_w_, conv_after_body_b_);
        if (Hp != H || Wp != W) fdf = nn::crop_hw(fdf, H, W);
        if (tap) (*tap)("transition", tap_idx++, fdf->value);

        auto y = nn::add(f0, fdf);
        y = nn::leaky_relu(nn::conv2d(y, conv_before_up_w_, conv_before_up_b_),
                           static_cast<T>(cfg_.leaky_slope));
        for (size_t k = 0; k < up_w_.size(); ++k) {
            y = nn::conv2d(y, up_w_[k], up_b_[k]);
            y = nn::pixel_shuffle(y, up_factor_[k]);
        }
        y = nn::conv2d(y, conv_last_w_, conv_last_b_);
        if (cfg_.subtract_mean) y = nn::broadcast_add_trailing(y, pos_mean_);
        (void)B;
        return nn::permute(y, {0, 3, 1, 2});  // back to NCHW
    }

    /// Shallow feature extraction alone: [B,Cin,H,W] -> [B,C,H,W].
    Var<T> shallow_extract(const Tensor<T>& lr) const {
        if (lr.rank() != 4 || lr.dim(1) != cfg_.in_channels)
            throw DataError("shallow_extract: channel mismatch");
        auto x = nn::permute(make_var(lr), {0, 2, 3, 1});
        if (cfg_.subtract_mean) x = nn::broadcast_add_trailing(x, neg_mean_);
        return nn::permute(nn::conv2d(x, conv_first_w_, conv_first_b_), {0, 3, 1, 2});
    }

    /// Reconstruction head alone: [B,C,H,W] -> [B,Cin,sH,sW]. Input is the
    /// aggregated F_0 + F_DF feature map.
    Var<T> reconstruct(const Tensor<T>& feat) const {
        if (feat.rank() != 4 || feat.dim(1) != cfg_.embed_dim)
            throw DataError("reconstruct: expected " + std::to_string(cfg_.embed_dim) +
                            " channels, got " + Tensor<T>::shape_str(feat.shape()));
        auto y = nn::permute(make_var(feat), {0, 2, 3, 1});
        y = nn::leaky_relu(nn::conv2d(y, conv_before_up_w_, conv_before_up_b_),
                           static_cast<T>(cfg_.leaky_slope));
        for (size_t k = 0; k < up_w_.size(); ++k) {
            y = nn::conv2d(y, up_w_[k], up_b_[k]);
            y = nn::pixel_shuffle(y, up_factor_[k]);
        }
        y = nn::conv2d(y, conv_last_w_, conv_last_b_);
        if (cfg_.subtract_mean) y = nn::broadcast_add_trailing(y, pos_mean_);
        return nn::permute(y, {0, 3, 1, 2});
    }

    /// Zero every SDRCB final-stage transition (RDGs become identity maps).
    void zero_final_transitions() {
        for (auto& rdg : rdgs_)
            for (auto& block : rdg) {
                auto& w = block.trans_w.back()->value;
                std::fill(w.vec().begin(), w.vec().end(), T(0));
                auto& b = block.trans_b.back()->value;
                std::fill(b.vec().begin(), b.vec().end(), T(0));
            }
    }

private:
    void build(std::mt19937_64& rng) {
        const int C = cfg_.embed_dim, cin = cfg_.in_channels;

        conv_first_w_ = conv_param(rng, "conv_first.w", 3, cin, C);
        conv_first_b_ = params_.create("conv_first.b", {C});

        rdgs_.resize(cfg_.num_rdg);
        for (int i = 0; i < cfg_.num_rdg; ++i) {
            rdgs_[i].reserve(cfg_.sdrcb_per_rdg);
            for (int m = 0; m < cfg_.sdrcb_per_rdg; ++m) {
                std::string base = "rdg." + std::to_string(i) + ".sdrcb." +
                                   std::to_string(m);
                rdgs_[i].push_back(build_sdrcb_params<T>(params_, rng, base, cfg_));
            }
        }

        conv_after_body_w_ = conv_param(rng, "conv_after_body.w", 3, C, C);
        conv_after_body_b_ = params_.create("conv_after_body.b", {C});
        conv_before_up_w_ = conv_param(rng, "rec.conv_before.w", 3, C, C);
        conv_before_up_b_ = params_.create("rec.conv_before.b", {C});
        // sub-pixel chain: x2 repeated for scale 4, single stage otherwise
        std::vector<int> factors = cfg_.scale == 4 ? std::vector<int>{2, 2}
                                                   : std::vector<int>{cfg_.scale};
        for (size_t k = 0; k < factors.size(); ++k) {
            int r = factors[k];
            up_w_.push_back(conv_param(rng, "rec.up." + std::to_string(k) + ".w", 3, C,
                                       C * r * r));
            up_b_.push_back(params_.create("rec.up." + std::to_string(k) + ".b",
                                           {C * r * r}));
            up_factor_.push_back(r);
        }
        conv_last_w_ = conv_param(rng, "rec.conv_last.w", 3, C, cin);
        conv_last_b_ = params_.create("rec.conv_last.b", {cin});

        Tensor<T> nm({cin}), pm({cin});
        for (int c = 0; c < cin; ++c) {
            double mval = cfg_.subtract_mean && c < 3 ? detail::kRgbMean[c] : 0.0;
            nm[c] = static_cast<T>(-mval * cfg_.img_range);
            pm[c] = static_cast<T>(mval * cfg_.img_range);
        }
        neg_mean_ = make_var(std::move(nm));
        pos_mean_ = make_var(std::move(pm));
    }

    Var<T> conv_param(std::mt19937_64& rng, const std::string& name, int k, int cin,
                      int cout) {
        Var<T> v = params_.create(name, {k, k, cin, cout});
        nn::fill_he_normal(v->value, rng, k * k * cin);
        return v;
    }

    ModelConfig cfg_;
    nn::ParamStore<T> params_;

    Var<T> conv_first_w_, conv_first_b_;
    std::vector<std::vector<SdrcbParams<T>>> rdgs_;
    Var<T> conv_after_body_w_, conv_after_body_b_;
    Var<T> conv_before_up_w_, conv_before_up_b_;
    std::vector<Var<T>> up_w_, up_b_;
    std::vector<int> up_factor_;
    Var<T> conv_last_w_, conv_last_b_;
    Var<T> neg_mean_, pos_mean_;
};

}  // namespace drct::model
