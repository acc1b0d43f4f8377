#pragma once

#include <cstddef>
#include <cstdint>

namespace drct::simd {

// Hot elementwise / reduction kernels. Each entry has a scalar reference
// implementation and, on x86 with AVX2, a vectorized variant selected once
// at startup. Reductions may reassociate, so cross-variant comparisons are
// tolerance-based; a single selected variant is deterministic.
struct Kernels {
    const char* name;

    // y[i] += a * x[i]
    void (*axpy_f32)(float a, const float* x, float* y, size_t n);
    // out[i] = a * x[i] + y[i]
    void (*scale_add_f32)(float a, const float* x, const float* y, float* out, size_t n);
    // out[i] = x[i] > 0 ? x[i] : slope * x[i]
    void (*leaky_relu_f32)(const float* x, float slope, float* out, size_t n);
    // gin[i] += gout[i] * (x[i] > 0 ? 1 : slope)
    void (*leaky_relu_grad_f32)(const float* x, const float* gout, float slope,
                                float* gin, size_t n);
    void (*minmax_f32)(const float* x, size_t n, float* mn, float* mx);
    double (*sum_abs_f32)(const float* x, size_t n);
    double (*sum_sq_f32)(const float* x, size_t n);
    // One Adam update; b1c/b2c are the bias-correction factors 1-beta^t.
    void (*adam_update_f32)(float* p, float* m, float* v, const float* g, size_t n,
                            float lr, float b1, float b2, float eps,
                            float b1c, float b2c);

    void (*axpy_f64)(double a, const double* x, double* y, size_t n);
    void (*minmax_f64)(const double* x, size_t n, double* mn, double* mx);
};

const Kernels& scalar_kernels();
// Null when the CPU lacks AVX2.
const Kernels* avx2_kernels_if_supported();
// Best available variant, selected once.
const Kernels& active_kernels();

}  // namespace drct::simd
