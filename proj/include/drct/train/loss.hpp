#pragma once

#include "drct/nn/ops.hpp"

namespace drct::train {

enum class LossKind { l1, l2 };

/// Mean absolute deviation over all elements (mean reduction keeps the LR
/// scale-free across patch sizes).
template <typename T>
inline Var<T> l1_loss(const Var<T>& sr, const Var<T>& hr) {
    return nn::mean_abs_diff(sr, hr);
}

/// Mean squared deviation over all elements.
template <typename T>
inline Var<T> l2_loss(const Var<T>& sr, const Var<T>& hr) {
    return nn::mean_sq_diff(sr, hr);
}

template <typename T>
inline Var<T> loss_of_kind(LossKind kind, const Var<T>& sr, const Var<T>& hr) {
    return kind == LossKind::l1 ? l1_loss(sr, hr) : l2_loss(sr, hr);
}

}  // namespace drct::train
