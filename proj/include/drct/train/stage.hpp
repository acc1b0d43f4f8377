#pragma once

#include <string>
#include <vector>

#include "drct/train/loss.hpp"
#include "drct/train/schedule.hpp"

namespace drct::train {

/// Progressive stages: pretrain (surrogate corpus at desk scale), L1
/// fine-tune, final L2 polish.
enum class StageId { pretrain, l1_finetune, l2_polish };

inline const char* stage_name(StageId id) {
    switch (id) {
        case StageId::pretrain: return "pretrain";
        case StageId::l1_finetune: return "l1_finetune";
        case StageId::l2_polish: return "l2_polish";
    }
    return "?";
}

struct StageSpec {
    StageId id = StageId::l1_finetune;
    LossKind loss = LossKind::l1;
    int64_t total_iters = 0;  // required, no silent default
    std::vector<double> milestones;  // fractions of total_iters
    double base_lr = 2e-4;
    std::string corpus_root;
};

struct StagePlan {
    std::vector<StageSpec> stages;

    void validate() const {
        if (stages.empty()) throw std::invalid_argument("stage plan: no stages");
        for (size_t i = 0; i < stages.size(); ++i) {
            const auto& s = stages[i];
            if (s.total_iters <= 0)
                throw std::invalid_argument(
                    "stage plan: total_iters must be set explicitly for stage '" +
                    std::string(stage_name(s.id)) + "'");
            if (s.base_lr <= 0.0)
                throw std::invalid_argument("stage plan: base_lr must be positive");
            double prev = 0.0;
            for (double f : s.milestones) {
                if (f <= prev || f >= 1.0)
                    throw std::invalid_argument(
                        "stage plan: milestones must be strictly increasing in (0,1)");
                prev = f;
            }
            if (s.loss == LossKind::l2 && i + 1 != stages.size())
                throw std::invalid_argument("stage plan: L2 loss only in the final stage");
        }
    }
};

}  // namespace drct::train
