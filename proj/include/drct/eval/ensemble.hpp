#pragma once

#include <functional>

#include "drct/data/dataset.hpp"

namespace drct::eval {

using SrFn = std::function<Tensor<float>(const Tensor<float>&)>;

/// x8 self-ensemble: run the operator on every dihedral transform of the
/// input (4 rotations x optional hflip), invert each output, average.
inline Tensor<float> self_ensemble(const SrFn& forward, const Tensor<float>& lr) {
    Tensor<float> acc;
    for (int flip = 0; flip < 2; ++flip)
        for (int rot = 0; rot < 4; ++rot) {
            Tensor<float> in = data::dihedral_transform(lr, rot, flip == 1);
            Tensor<float> sr = data::dihedral_inverse(forward(in), rot, flip == 1);
            if (acc.empty()) {
                acc = std::move(sr);
            } else {
                if (!acc.same_shape(sr))
                    throw std::runtime_error("self_ensemble: branch output shape mismatch");
                for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += sr[i];
            }
        }
    for (int64_t i = 0; i < acc.numel(); ++i) acc[i] /= 8.0f;
    return acc;
}

}  // namespace drct::eval
