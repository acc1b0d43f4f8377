#pragma once

#include <cmath>

#include "drct/model/checkpoint.hpp"
#include "drct/nn/init.hpp"
#include "drct/simd/ops.hpp"

namespace drct::train {

/// Adam with beta1 0.9, beta2 0.999, eps 1e-8 and no weight decay. Moments
/// are kept per parameter in store order.
template <typename T>
class Adam {
public:
    Adam(T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(const nn::ParamStore<T>& store) {
        m_.clear();
        v_.clear();
        for (const auto& [name, var] : store.entries()) {
            m_.emplace_back(var->value.shape());
            v_.emplace_back(var->value.shape());
        }
        step_ = 0;
    }

    void reset() {
        for (auto& t : m_) std::fill(t.vec().begin(), t.vec().end(), T(0));
        for (auto& t : v_) std::fill(t.vec().begin(), t.vec().end(), T(0));
        step_ = 0;
    }

    void step(nn::ParamStore<T>& store, T lr) {
        ++step_;
        const T b1c = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), step_));
        const T b2c = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), step_));
        const auto& entries = store.entries();
        for (size_t i = 0; i < entries.size(); ++i) {
            auto& var = *entries[i].second;
            if (var.grad.empty()) continue;  // parameter untouched this step
            simd::adam_update(var.value.data(), m_[i].data(), v_[i].data(),
                              var.grad.data(), static_cast<size_t>(var.value.numel()),
                              lr, beta1_, beta2_, eps_, b1c, b2c);
        }
    }

    int64_t step_count() const { return step_; }
    const std::vector<Tensor<T>>& first_moments() const { return m_; }
    const std::vector<Tensor<T>>& second_moments() const { return v_; }

    model::MomentBlob to_blob() const {
        model::MomentBlob blob;
        blob.step = step_;
        for (const auto& t : m_)
            for (int64_t i = 0; i < t.numel(); ++i) blob.m.push_back(static_cast<float>(t[i]));
        for (const auto& t : v_)
            for (int64_t i = 0; i < t.numel(); ++i) blob.v.push_back(static_cast<float>(t[i]));
        return blob;
    }

    void from_blob(const model::MomentBlob& blob) {
        step_ = blob.step;
        size_t off = 0;
        for (auto& t : m_)
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(blob.m[off++]);
        off = 0;
        for (auto& t : v_)
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(blob.v[off++]);
    }

private:
    T beta1_, beta2_, eps_;
    int64_t step_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace drct::train
