#pragma once

#include <stdexcept>
#include <vector>

namespace drct::train {

/// Multistep halving schedule. Milestones are stored as fractions of the
/// total so desk-scale totals keep the same curve shape; the full-scale plan
/// is {300,500,650,700,750}/800 at base_lr 2e-4 over 800k iterations.
inline const std::vector<double>& default_milestone_fractions() {
    static const std::vector<double> f = {300.0 / 800, 500.0 / 800, 650.0 / 800,
                                          700.0 / 800, 750.0 / 800};
    return f;
}

inline double lr_at(int64_t iter, double base_lr, int64_t total,
                    const std::vector<double>& milestone_fractions) {
    if (iter < 0 || iter >= total)
        throw std::out_of_range("lr_at: iteration outside [0, total)");
    int passed = 0;
    for (double f : milestone_fractions)
        if (static_cast<double>(iter) >= f * static_cast<double>(total)) ++passed;
    double lr = base_lr;
    for (int i = 0; i < passed; ++i) lr *= 0.5;
    return lr;
}

}  // namespace drct::train
