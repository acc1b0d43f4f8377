#include "drct/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define DRCT_HAVE_AVX2_BUILD 1
#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace drct::simd {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

void axpy_f32(float a, const float* x, float* y, size_t n) {
    __m256 va = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale_add_f32(float a, const float* x, const float* y, float* out, size_t n) {
    __m256 va = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
        _mm256_storeu_ps(out + i, v);
    }
    for (; i < n; ++i) out[i] = std::fma(a, x[i], y[i]);
}

void leaky_relu_f32(const float* x, float slope, float* out, size_t n) {
    __m256 vs = _mm256_set1_ps(slope);
    __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        __m256 neg = _mm256_mul_ps(v, vs);
        __m256 gt = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(out + i, _mm256_blendv_ps(neg, v, gt));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_grad_f32(const float* x, const float* gout, float slope,
                         float* gin, size_t n) {
    __m256 vs = _mm256_set1_ps(slope);
    __m256 one = _mm256_set1_ps(1.0f);
    __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        __m256 gt = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
        __m256 d = _mm256_blendv_ps(vs, one, gt);
        __m256 g = _mm256_loadu_ps(gin + i);
        g = _mm256_fmadd_ps(_mm256_loadu_ps(gout + i), d, g);
        _mm256_storeu_ps(gin + i, g);
    }
    for (; i < n; ++i) gin[i] += gout[i] * (x[i] > 0.0f ? 1.0f : slope);
}

void minmax_f32(const float* x, size_t n, float* mn, float* mx) {
    size_t i = 0;
    float lo = x[0], hi = x[0];
    if (n >= 8) {
        __m256 vlo = _mm256_loadu_ps(x);
        __m256 vhi = vlo;
        for (i = 8; i + 8 <= n; i += 8) {
            __m256 v = _mm256_loadu_ps(x + i);
            vlo = _mm256_min_ps(vlo, v);
            vhi = _mm256_max_ps(vhi, v);
        }
        alignas(32) float bl[8], bh[8];
        _mm256_store_ps(bl, vlo);
        _mm256_store_ps(bh, vhi);
        lo = bl[0];
        hi = bh[0];
        for (int k = 1; k < 8; ++k) {
            lo = std::min(lo, bl[k]);
            hi = std::max(hi, bh[k]);
        }
    }
    for (; i < n; ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
    *mn = lo;
    *mx = hi;
}

double sum_abs_f32(const float* x, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
        v = _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
        acc = _mm256_add_pd(acc, v);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += std::fabs(static_cast<double>(x[i]));
    return s;
}

double sum_sq_f32(const float* x, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
    return s;
}

void adam_update_f32(float* p, float* m, float* v, const float* g, size_t n,
                     float lr, float b1, float b2, float eps, float b1c, float b2c) {
    __m256 vb1 = _mm256_set1_ps(b1), v1b1 = _mm256_set1_ps(1.0f - b1);
    __m256 vb2 = _mm256_set1_ps(b2), v1b2 = _mm256_set1_ps(1.0f - b2);
    __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
    __m256 vib1c = _mm256_set1_ps(1.0f / b1c), vib2c = _mm256_set1_ps(1.0f / b2c);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vg = _mm256_loadu_ps(g + i);
        __m256 vm = _mm256_fmadd_ps(v1b1, vg, _mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)));
        __m256 vv = _mm256_fmadd_ps(v1b2, _mm256_mul_ps(vg, vg),
                                    _mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)));
        _mm256_storeu_ps(m + i, vm);
        _mm256_storeu_ps(v + i, vv);
        __m256 mhat = _mm256_mul_ps(vm, vib1c);
        __m256 vhat = _mm256_mul_ps(vv, vib2c);
        __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
        __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), den);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
    }
    for (; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * g[i];
        v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
        p[i] -= lr * (m[i] / b1c) / (std::sqrt(v[i] / b2c) + eps);
    }
}

void axpy_f64(double a, const double* x, double* y, size_t n) {
    __m256d va = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void minmax_f64(const double* x, size_t n, double* mn, double* mx) {
    size_t i = 0;
    double lo = x[0], hi = x[0];
    if (n >= 4) {
        __m256d vlo = _mm256_loadu_pd(x);
        __m256d vhi = vlo;
        for (i = 4; i + 4 <= n; i += 4) {
            __m256d v = _mm256_loadu_pd(x + i);
            vlo = _mm256_min_pd(vlo, v);
            vhi = _mm256_max_pd(vhi, v);
        }
        alignas(32) double bl[4], bh[4];
        _mm256_store_pd(bl, vlo);
        _mm256_store_pd(bh, vhi);
        lo = bl[0];
        hi = bh[0];
        for (int k = 1; k < 4; ++k) {
            lo = std::min(lo, bl[k]);
            hi = std::max(hi, bh[k]);
        }
    }
    for (; i < n; ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
    *mn = lo;
    *mx = hi;
}

}  // namespace

const Kernels* avx2_kernels_impl() {
    static const Kernels k{
        "avx2",           axpy_f32, scale_add_f32, leaky_relu_f32, leaky_relu_grad_f32,
        minmax_f32,       sum_abs_f32, sum_sq_f32, adam_update_f32,
        axpy_f64,         minmax_f64,
    };
    return &k;
}

}  // namespace drct::simd

#else

namespace drct::simd {
const Kernels* avx2_kernels_impl() { return nullptr; }
}  // namespace drct::simd

#endif
