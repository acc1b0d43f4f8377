#pragma once

#include <sstream>

#include "drct/model/checkpoint.hpp"
#include "drct/model/network.hpp"
#include "drct/train/adam.hpp"
#include "drct/train/stage.hpp"

namespace drct::train {

struct DivergedError : std::runtime_error {
    int64_t iteration;
    DivergedError(int64_t iter)
        : std::runtime_error("training diverged: non-finite loss at iteration " +
                             std::to_string(iter)),
          iteration(iter) {}
};

/// Single-writer training loop state: stage machine, optimizer, iteration
/// counter, RNG. Parameters live in the network's store.
template <typename T>
class Trainer {
public:
    Trainer(model::Drct<T>& net, StagePlan plan, uint64_t seed)
        : net_(net), plan_(std::move(plan)), seed_(seed), rng_(seed) {
        plan_.validate();
        opt_.attach(net_.params());
    }

    const StageSpec& stage() const { return plan_.stages[static_cast<size_t>(stage_index_)]; }
    int stage_index() const { return stage_index_; }
    int64_t iteration() const { return iteration_; }
    bool stage_exhausted() const { return iteration_ >= stage().total_iters; }
    bool finished() const {
        return stage_index_ + 1 >= static_cast<int>(plan_.stages.size()) &&
               stage_exhausted();
    }
    double best_val_psnr() const { return best_val_psnr_; }
    void note_val_psnr(double p) { best_val_psnr_ = std::max(best_val_psnr_, p); }

    double current_lr() const {
        const auto& s = stage();
        int64_t it = std::min(iteration_, s.total_iters - 1);
        return lr_at(it, s.base_lr, s.total_iters, s.milestones);
    }

    /// One Adam update on one batch; returns the scalar loss.
    T train_step(const Tensor<T>& lr_batch, const Tensor<T>& hr_batch) {
        net_.params().zero_grads();
        auto sr = net_.forward(lr_batch);
        auto hr = make_var(hr_batch);
        auto loss = loss_of_kind(stage().loss, sr, hr);
        const T loss_val = loss->value[0];
        if (!std::isfinite(static_cast<double>(loss_val)))
            throw DivergedError(iteration_);
        backward(loss);
        opt_.step(net_.params(), static_cast<T>(current_lr()));
        ++iteration_;
        return loss_val;
    }

    /// Moves to the next stage: moments reset, schedule restarted, loss kind
    /// switched by the plan, parameters untouched. Returns false (completion)
    /// when there is no next stage.
    bool advance_stage() {
        if (stage_index_ + 1 >= static_cast<int>(plan_.stages.size())) return false;
        ++stage_index_;
        iteration_ = 0;
        opt_.reset();
        return true;
    }

    Adam<T>& optimizer() { return opt_; }
    std::mt19937_64& rng() { return rng_; }
    const StagePlan& plan() const { return plan_; }

    void save_checkpoint(const std::string& path) const {
        model::CheckpointMeta meta;
        meta.iteration = iteration_;
        meta.stage_index = stage_index_;
        meta.seed = seed_;
        meta.best_val_psnr = best_val_psnr_;
        std::ostringstream os;
        os << rng_;
        meta.rng_state = os.str();
        model::MomentBlob blob = opt_.to_blob();
        model::save_checkpoint(path, net_.config(), net_.params(), meta, &blob);
    }

    void resume(const std::string& path) {
        auto loaded = model::load_checkpoint(path, net_.params());
        iteration_ = loaded.meta.iteration;
        stage_index_ = loaded.meta.stage_index;
        best_val_psnr_ = loaded.meta.best_val_psnr;
        if (!loaded.meta.rng_state.empty()) {
            std::istringstream is(loaded.meta.rng_state);
            is >> rng_;
        }
        if (loaded.moments) opt_.from_blob(*loaded.moments);
    }

private:
    model::Drct<T>& net_;
    StagePlan plan_;
    uint64_t seed_;
    std::mt19937_64 rng_;
    Adam<T> opt_;
    int stage_index_ = 0;
    int64_t iteration_ = 0;
    double best_val_psnr_ = 0.0;
};

}  // namespace drct::train
