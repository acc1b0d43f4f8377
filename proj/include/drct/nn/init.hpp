#pragma once

#include <random>

#include "drct/autograd.hpp"

namespace drct::nn {

/// Truncated normal (rejection inside ±2σ).
template <typename T>
inline void fill_trunc_normal(Tensor<T>& t, std::mt19937_64& rng, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    for (auto& v : t.vec()) {
        double x;
        do {
            x = dist(rng);
        } while (std::fabs(x) > 2.0 * sigma);
        v = static_cast<T>(x);
    }
}

/// He-style normal for conv weights, fan_in = kh*kw*cin.
template <typename T>
inline void fill_he_normal(Tensor<T>& t, std::mt19937_64& rng, int fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
}

/// Named parameter registry; iteration order is creation order and defines
/// the checkpoint layout.
template <typename T>
class ParamStore {
public:
    Var<T> create(const std::string& name, std::vector<int> shape) {
        auto v = make_var<T>(Tensor<T>(std::move(shape)), /*requires_grad=*/true);
        v->name = name;
        params_.emplace_back(name, v);
        return v;
    }

    const std::vector<std::pair<std::string, Var<T>>>& entries() const { return params_; }

    Var<T> find(const std::string& name) const {
        for (const auto& [n, v] : params_)
            if (n == name) return v;
        return nullptr;
    }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& [name, v] : params_) n += v->value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [name, v] : params_) v->zero_grad();
    }

private:
    std::vector<std::pair<std::string, Var<T>>> params_;
};

}  // namespace drct::nn
