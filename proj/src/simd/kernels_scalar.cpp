#include "drct/simd/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace drct::simd {
namespace {

void axpy_f32(float a, const float* x, float* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_add_f32(float a, const float* x, const float* y, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a * x[i] + y[i];
}

void leaky_relu_f32(const float* x, float slope, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_grad_f32(const float* x, const float* gout, float slope,
                         float* gin, size_t n) {
    for (size_t i = 0; i < n; ++i) gin[i] += gout[i] * (x[i] > 0.0f ? 1.0f : slope);
}

void minmax_f32(const float* x, size_t n, float* mn, float* mx) {
    float lo = x[0], hi = x[0];
    for (size_t i = 1; i < n; ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
    *mn = lo;
    *mx = hi;
}

double sum_abs_f32(const float* x, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += std::fabs(static_cast<double>(x[i]));
    return s;
}

double sum_sq_f32(const float* x, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
    return s;
}

void adam_update_f32(float* p, float* m, float* v, const float* g, size_t n,
                     float lr, float b1, float b2, float eps, float b1c, float b2c) {
    for (size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * g[i];
        v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
        float mhat = m[i] / b1c;
        float vhat = v[i] / b2c;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void axpy_f64(double a, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void minmax_f64(const double* x, size_t n, double* mn, double* mx) {
    double lo = x[0], hi = x[0];
    for (size_t i = 1; i < n; ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
    *mn = lo;
    *mx = hi;
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels k{
        "scalar",         axpy_f32, scale_add_f32, leaky_relu_f32, leaky_relu_grad_f32,
        minmax_f32,       sum_abs_f32, sum_sq_f32, adam_update_f32,
        axpy_f64,         minmax_f64,
    };
    return k;
}

}  // namespace drct::simd
