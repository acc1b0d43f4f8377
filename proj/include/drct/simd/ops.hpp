#pragma once

#include <cmath>

#include "drct/simd/kernels.hpp"

namespace drct::simd {

// Type-dispatched wrappers. Float routes through the selected kernel set;
// double has vector variants only where it is on a hot path (axpy, minmax).

template <typename T>
inline void axpy(T a, const T* x, T* y, size_t n) {
    if constexpr (std::is_same_v<T, float>)
        active_kernels().axpy_f32(a, x, y, n);
    else
        active_kernels().axpy_f64(a, x, y, n);
}

template <typename T>
inline void scale_add(T a, const T* x, const T* y, T* out, size_t n) {
    if constexpr (std::is_same_v<T, float>) {
        active_kernels().scale_add_f32(a, x, y, out, n);
    } else {
        for (size_t i = 0; i < n; ++i) out[i] = a * x[i] + y[i];
    }
}

template <typename T>
inline void leaky_relu(const T* x, T slope, T* out, size_t n) {
    if constexpr (std::is_same_v<T, float>) {
        active_kernels().leaky_relu_f32(x, slope, out, n);
    } else {
        for (size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : slope * x[i];
    }
}

template <typename T>
inline void leaky_relu_grad(const T* x, const T* gout, T slope, T* gin, size_t n) {
    if constexpr (std::is_same_v<T, float>) {
        active_kernels().leaky_relu_grad_f32(x, gout, slope, gin, n);
    } else {
        for (size_t i = 0; i < n; ++i) gin[i] += gout[i] * (x[i] > T(0) ? T(1) : slope);
    }
}

template <typename T>
inline void minmax(const T* x, size_t n, T* mn, T* mx) {
    if constexpr (std::is_same_v<T, float>)
        active_kernels().minmax_f32(x, n, mn, mx);
    else
        active_kernels().minmax_f64(x, n, mn, mx);
}

template <typename T>
inline double sum_abs(const T* x, size_t n) {
    if constexpr (std::is_same_v<T, float>) {
        return active_kernels().sum_abs_f32(x, n);
    } else {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += std::fabs(static_cast<double>(x[i]));
        return s;
    }
}

template <typename T>
inline double sum_sq(const T* x, size_t n) {
    if constexpr (std::is_same_v<T, float>) {
        return active_kernels().sum_sq_f32(x, n);
    } else {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
        return s;
    }
}

template <typename T>
inline void adam_update(T* p, T* m, T* v, const T* g, size_t n, T lr, T b1, T b2,
                        T eps, T b1c, T b2c) {
    if constexpr (std::is_same_v<T, float>) {
        active_kernels().adam_update_f32(p, m, v, g, n, lr, b1, b2, eps, b1c, b2c);
    } else {
        for (size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            p[i] -= lr * (m[i] / b1c) / (std::sqrt(v[i] / b2c) + eps);
        }
    }
}

}  // namespace drct::simd
