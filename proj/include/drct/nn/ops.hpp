#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numeric>

#include "drct/autograd.hpp"
#include "drct/simd/ops.hpp"
#include "drct/tensor.hpp"

namespace drct::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

template <typename T>
inline void accumulate(Tensor<T>& g, const Tensor<T>& delta) {
    simd::axpy(T(1), delta.data(), g.data(), static_cast<size_t>(g.numel()));
}

// C (MxN) = op(A) * op(B), optionally accumulating.
template <typename T>
inline void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool trans_a,
                 bool trans_b, bool acc) {
    CMatMap<T> A(a, trans_a ? k : m, trans_a ? m : k);
    CMatMap<T> B(b, trans_b ? n : k, trans_b ? k : n);
    MatMap<T> C(c, m, n);
    if (!trans_a && !trans_b) {
        if (acc) C.noalias() += A * B; else C.noalias() = A * B;
    } else if (trans_a && !trans_b) {
        if (acc) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
    } else if (!trans_a && trans_b) {
        if (acc) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
    } else {
        if (acc) C.noalias() += A.transpose() * B.transpose();
        else C.noalias() = A.transpose() * B.transpose();
    }
}

inline int64_t prod(const std::vector<int>& s, size_t from, size_t to) {
    int64_t p = 1;
    for (size_t i = from; i < to; ++i) p *= s[i];
    return p;
}

// Symmetric (edge-inclusive) mirror of index i into [0, n); period 2n.
inline int mirror_index(int i, int n) {
    if (n == 1) return 0;
    int m = i % (2 * n);
    if (m < 0) m += 2 * n;
    return m < n ? m : 2 * n - 1 - m;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename T>
inline Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("add: shape mismatch");
    Tensor<T> out = a->value;
    detail::accumulate(out, b->value);
    return make_result<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
        detail::accumulate(a->ensure_grad(), n.grad);
        detail::accumulate(b->ensure_grad(), n.grad);
    });
}

template <typename T>
inline Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a->value;
    for (auto& v : out.vec()) v *= s;
    return make_result<T>(std::move(out), {a}, [a, s](Node<T>& n) {
        simd::axpy(s, n.grad.data(), a->ensure_grad().data(),
                   static_cast<size_t>(n.grad.numel()));
    });
}

// out = alpha * x + y  (residual with scaling)
template <typename T>
inline Var<T> scaled_residual(T alpha, const Var<T>& x, const Var<T>& y) {
    if (!x->value.same_shape(y->value))
        throw std::invalid_argument("scaled_residual: shape mismatch");
    Tensor<T> out(x->value.shape());
    simd::scale_add(alpha, x->value.data(), y->value.data(), out.data(),
                    static_cast<size_t>(out.numel()));
    return make_result<T>(std::move(out), {x, y}, [x, y, alpha](Node<T>& n) {
        simd::axpy(alpha, n.grad.data(), x->ensure_grad().data(),
                   static_cast<size_t>(n.grad.numel()));
        detail::accumulate(y->ensure_grad(), n.grad);
    });
}

template <typename T>
inline Var<T> leaky_relu(const Var<T>& x, T slope) {
    Tensor<T> out(x->value.shape());
    simd::leaky_relu(x->value.data(), slope, out.data(),
                     static_cast<size_t>(out.numel()));
    return make_result<T>(std::move(out), {x}, [x, slope](Node<T>& n) {
        simd::leaky_relu_grad(x->value.data(), n.grad.data(), slope,
                              x->ensure_grad().data(),
                              static_cast<size_t>(n.grad.numel()));
    });
}

template <typename T>
inline Var<T> gelu(const Var<T>& x) {
    const T inv_sqrt2 = T(0.7071067811865475244);
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        T v = x->value[i];
        out[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
    }
    return make_result<T>(std::move(out), {x}, [x, inv_sqrt2](Node<T>& n) {
        const T inv_sqrt2pi = T(0.3989422804014326779);
        Tensor<T>& gx = x->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            T v = x->value[i];
            T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
            gx[i] += n.grad[i] * (cdf + v * pdf);
        }
    });
}

// ------------------------------------------------------------- shape movers

template <typename T>
inline Var<T> reshape(const Var<T>& x, std::vector<int> shape) {
    // allow a single -1 wildcard
    int64_t known = 1;
    int wild = -1;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) wild = static_cast<int>(i);
        else known *= shape[i];
    }
    if (wild >= 0) shape[static_cast<size_t>(wild)] = static_cast<int>(x->value.numel() / known);
    auto orig = x->value.shape();
    Tensor<T> out = x->value.reshaped(shape);
    return make_result<T>(std::move(out), {x}, [x, orig](Node<T>& n) {
        detail::accumulate(x->ensure_grad(), n.grad.reshaped(orig));
    });
}

template <typename T>
inline Var<T> permute(const Var<T>& x, const std::vector<int>& perm) {
    const auto& s = x->value.shape();
    const int r = static_cast<int>(s.size());
    if (static_cast<int>(perm.size()) != r)
        throw std::invalid_argument("permute: rank mismatch");
    std::vector<int> out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = s[perm[i]];
    std::vector<int64_t> in_stride(r, 1), out_stride(r, 1);
    for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * s[i + 1];
    for (int i = r - 2; i >= 0; --i) out_stride[i] = out_stride[i + 1] * out_shape[i + 1];
    Tensor<T> out(out_shape);
    const int64_t n = out.numel();
    std::vector<int> idx(r);
    for (int64_t o = 0; o < n; ++o) {
        int64_t rem = o, in_off = 0;
        for (int i = 0; i < r; ++i) {
            int64_t q = rem / out_stride[i];
            rem -= q * out_stride[i];
            in_off += q * in_stride[perm[i]];
        }
        out[o] = x->value[in_off];
    }
    return make_result<T>(std::move(out), {x},
                          [x, perm, out_stride, in_stride, r](Node<T>& n) {
        Tensor<T>& gx = x->ensure_grad();
        const int64_t cnt = n.grad.numel();
        for (int64_t o = 0; o < cnt; ++o) {
            int64_t rem = o, in_off = 0;
            for (int i = 0; i < r; ++i) {
                int64_t q = rem / out_stride[i];
                rem -= q * out_stride[i];
                in_off += q * in_stride[perm[i]];
            }
            gx[in_off] += n.grad[o];
        }
    });
}

// Select one slab along the first axis.
template <typename T>
inline Var<T> select_first(const Var<T>& x, int index) {
    const auto& s = x->value.shape();
    if (s.empty() || index < 0 || index >= s[0])
        throw std::out_of_range("select_first: index out of range");
    std::vector<int> out_shape(s.begin() + 1, s.end());
    int64_t slab = detail::prod(s, 1, s.size());
    Tensor<T> out(out_shape);
    std::copy_n(x->value.data() + index * slab, slab, out.data());
    return make_result<T>(std::move(out), {x}, [x, index, slab](Node<T>& n) {
        simd::axpy(T(1), n.grad.data(), x->ensure_grad().data() + index * slab,
                   static_cast<size_t>(slab));
    });
}

// Concatenate along the last axis; all inputs share leading dims.
template <typename T>
inline Var<T> concat_last(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_last: empty input list");
    const auto& s0 = xs[0]->value.shape();
    int64_t rows = detail::prod(s0, 0, s0.size() - 1);
    int total = 0;
    std::vector<int> widths;
    for (const auto& x : xs) {
        const auto& s = x->value.shape();
        if (std::vector<int>(s.begin(), s.end() - 1) !=
            std::vector<int>(s0.begin(), s0.end() - 1))
            throw std::invalid_argument("concat_last: leading dims differ");
        widths.push_back(s.back());
        total += s.back();
    }
    std::vector<int> out_shape(s0.begin(), s0.end() - 1);
    out_shape.push_back(total);
    Tensor<T> out(out_shape);
    int off = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
        const T* src = xs[k]->value.data();
        for (int64_t r = 0; r < rows; ++r)
            std::copy_n(src + r * widths[k], widths[k],
                        out.data() + r * total + off);
        off += widths[k];
    }
    std::vector<Var<T>> parents = xs;
    return make_result<T>(std::move(out), std::move(parents),
                          [xs, widths, rows, total](Node<T>& n) {
        int off2 = 0;
        for (size_t k = 0; k < xs.size(); ++k) {
            T* dst = xs[k]->ensure_grad().data();
            const T* g = n.grad.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int c = 0; c < widths[k]; ++c)
                    dst[r * widths[k] + c] += g[r * total + off2 + c];
            off2 += widths[k];
        }
    });
}

// Cyclic shift over H and W of a [B,H,W,C] tensor (positive = toward higher index).
template <typename T>
inline Var<T> roll_hw(const Var<T>& x, int sh, int sw) {
    const auto& s = x->value.shape();
    const int B = s[0], H = s[1], W = s[2], C = s[3];
    auto wrap = [](int i, int n) { int m = i % n; return m < 0 ? m + n : m; };
    Tensor<T> out(s);
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h) {
            int hs = wrap(h - sh, H);
            for (int w = 0; w < W; ++w) {
                int ws = wrap(w - sw, W);
                std::copy_n(x->value.data() + ((int64_t(b) * H + hs) * W + ws) * C, C,
                            out.data() + ((int64_t(b) * H + h) * W + w) * C);
            }
        }
    return make_result<T>(std::move(out), {x}, [x, sh, sw, B, H, W, C](Node<T>& n) {
        auto wrap2 = [](int i, int m) { int r = i % m; return r < 0 ? r + m : r; };
        Tensor<T>& gx = x->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h) {
                int hs = wrap2(h - sh, H);
                for (int w = 0; w < W; ++w) {
                    int ws = wrap2(w - sw, W);
                    const T* g = n.grad.data() + ((int64_t(b) * H + h) * W + w) * C;
                    T* dst = gx.data() + ((int64_t(b) * H + hs) * W + ws) * C;
                    for (int c = 0; c < C; ++c) dst[c] += g[c];
                }
            }
    });
}

// Mirror-pad bottom/right of a [B,H,W,C] tensor (symmetric reflection, works
// for any pad size including H or W of 1, where it degenerates to replication).
template <typename T>
inline Var<T> pad_mirror_hw(const Var<T>& x, int pad_b, int pad_r) {
    const auto& s = x->value.shape();
    const int B = s[0], H = s[1], W = s[2], C = s[3];
    const int Hp = H + pad_b, Wp = W + pad_r;
    Tensor<T> out({B, Hp, Wp, C});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < Hp; ++h) {
            int hs = detail::mirror_index(h, H);
            for (int w = 0; w < Wp; ++w) {
                int ws = detail::mirror_index(w, W);
                std::copy_n(x->value.data() + ((int64_t(b) * H + hs) * W + ws) * C, C,
                            out.data() + ((int64_t(b) * Hp + h) * Wp + w) * C);
            }
        }
    return make_result<T>(std::move(out), {x}, [x, B, H, W, C, Hp, Wp](Node<T>& n) {
        Tensor<T>& gx = x->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < Hp; ++h) {
                int hs = detail::mirror_index(h, H);
                for (int w = 0; w < Wp; ++w) {
                    int ws = detail::mirror_index(w, W);
                    const T* g = n.grad.data() + ((int64_t(b) * Hp + h) * Wp + w) * C;
                    T* dst = gx.data() + ((int64_t(b) * H + hs) * W + ws) * C;
                    for (int c = 0; c < C; ++c) dst[c] += g[c];
                }
            }
    });
}

// Top-left crop of a [B,H,W,C] tensor.
template <typename T>
inline Var<T> crop_hw(const Var<T>& x, int out_h, int out_w) {
    const auto& s = x->value.shape();
    const int B = s[0], H = s[1], W = s[2], C = s[3];
    if (out_h > H || out_w > W) throw std::invalid_argument("crop_hw: crop exceeds size");
    Tensor<T> out({B, out_h, out_w, C});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < out_h; ++h)
            for (int w = 0; w < out_w; ++w)
                std::copy_n(x->value.data() + ((int64_t(b) * H + h) * W + w) * C, C,
                            out.data() + ((int64_t(b) * out_h + h) * out_w + w) * C);
    return make_result<T>(std::move(out), {x}, [x, B, H, W, C, out_h, out_w](Node<T>& n) {
        Tensor<T>& gx = x->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < out_h; ++h)
                for (int w = 0; w < out_w; ++w) {
                    const T* g = n.grad.data() + ((int64_t(b) * out_h + h) * out_w + w) * C;
                    T* dst = gx.data() + ((int64_t(b) * H + h) * W + w) * C;
                    for (int c = 0; c < C; ++c) dst[c] += g[c];
                }
    });
}

// [B,H,W,C*r*r] -> [B,H*r,W*r,C]; channel c*r*r + i*r + j lands at spatial
// offset (i, j) inside each r x r cell.
template <typename T>
inline Var<T> pixel_shuffle(const Var<T>& x, int r) {
    const auto& s = x->value.shape();
    const int B = s[0], H = s[1], W = s[2], Cr2 = s[3];
    if (Cr2 % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
    const int C = Cr2 / (r * r);
    const int Ho = H * r, Wo = W * r;
    Tensor<T> out({B, Ho, Wo, C});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const T* src = x->value.data() + ((int64_t(b) * H + h) * W + w) * Cr2;
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < r; ++j)
                            out[((int64_t(b) * Ho + h * r + i) * Wo + (w * r + j)) * C + c] =
                                src[c * r * r + i * r + j];
            }
    return make_result<T>(std::move(out), {x}, [x, B, H, W, C, r, Cr2](Node<T>& n) {
        const int Ho = H * r, Wo = W * r;
        Tensor<T>& gx = x->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    T* dst = gx.data() + ((int64_t(b) * H + h) * W + w) * Cr2;
                    for (int c = 0; c < C; ++c)
                        for (int i = 0; i < r; ++i)
                            for (int j = 0; j < r; ++j)
                                dst[c * r * r + i * r + j] +=
                                    n.grad[((int64_t(b) * Ho + h * r + i) * Wo +
                                            (w * r + j)) * C + c];
                }
    });
}

// --------------------------------------------------------------- linear/conv

// x [..., in] * w [in, out] + b [out]; pass b = nullptr for no bias.
template <typename T>
inline Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const auto& xs = x->value.shape();
    const int in = xs.back();
    const int out_dim = w->value.dim(1);
    if (w->value.dim(0) != in) throw std::invalid_argument("linear: weight shape mismatch");
    const int64_t rows = detail::prod(xs, 0, xs.size() - 1);
    std::vector<int> out_shape(xs.begin(), xs.end() - 1);
    out_shape.push_back(out_dim);
    Tensor<T> out(out_shape);
    detail::gemm(x->value.data(), w->value.data(), out.data(),
                 static_cast<int>(rows), in, out_dim, false, false, false);
    if (b) {
        if (b->value.numel() != out_dim)
            throw std::invalid_argument("linear: bias shape mismatch");
        for (int64_t r = 0; r < rows; ++r)
            simd::axpy(T(1), b->value.data(), out.data() + r * out_dim,
                       static_cast<size_t>(out_dim));
    }
    std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b}
                                    : std::vector<Var<T>>{x, w};
    return make_result<T>(std::move(out), std::move(parents),
                          [x, w, b, rows, in, out_dim](Node<T>& n) {
        detail::gemm(n.grad.data(), w->value.data(), x->ensure_grad().data(),
                     static_cast<int>(rows), out_dim, in, false, true, true);
        detail::gemm(x->value.data(), n.grad.data(), w->ensure_grad().data(), in,
                     static_cast<int>(rows), out_dim, true, false, true);
        if (b) {
            Tensor<T>& gb = b->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                simd::axpy(T(1), n.grad.data() + r * out_dim, gb.data(),
                           static_cast<size_t>(out_dim));
        }
    });
}

namespace detail {

// NHWC im2col with zero padding, stride 1.
template <typename T>
inline Tensor<T> im2col(const Tensor<T>& x, int kh, int kw, int pad) {
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor<T> cols({B * H * W, kh * kw * C});
    int64_t row = 0;
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w, ++row) {
                T* dst = cols.data() + row * kh * kw * C;
                for (int i = 0; i < kh; ++i) {
                    int hs = h + i - pad;
                    for (int j = 0; j < kw; ++j, dst += C) {
                        int ws = w + j - pad;
                        if (hs < 0 || hs >= H || ws < 0 || ws >= W) continue;
                        std::copy_n(x.data() + ((int64_t(b) * H + hs) * W + ws) * C, C, dst);
                    }
                }
            }
    return cols;
}

template <typename T>
inline void col2im_acc(const Tensor<T>& cols, Tensor<T>& gx, int kh, int kw, int pad) {
    const int B = gx.dim(0), H = gx.dim(1), W = gx.dim(2), C = gx.dim(3);
    int64_t row = 0;
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w, ++row) {
                const T* src = cols.data() + row * kh * kw * C;
                for (int i = 0; i < kh; ++i) {
                    int hs = h + i - pad;
                    for (int j = 0; j < kw; ++j, src += C) {
                        int ws = w + j - pad;
                        if (hs < 0 || hs >= H || ws < 0 || ws >= W) continue;
                        T* dst = gx.data() + ((int64_t(b) * H + hs) * W + ws) * C;
                        for (int c = 0; c < C; ++c) dst[c] += src[c];
                    }
                }
            }
}

}  // namespace detail

// x [B,H,W,Cin], w [kh,kw,Cin,Cout], b [Cout] or null; stride 1, zero pad k/2.
template <typename T>
inline Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    const int kh = ws[0], kw = ws[1], cin = ws[2], cout = ws[3];
    if (xs[3] != cin) throw std::invalid_argument("conv2d: channel mismatch");
    const int pad = kh / 2;
    const int B = xs[0], H = xs[1], W = xs[2];
    Tensor<T> cols = detail::im2col(x->value, kh, kw, pad);
    const int64_t rows = cols.dim(0);
    const int cdim = kh * kw * cin;
    Tensor<T> out({B, H, W, cout});
    detail::gemm(cols.data(), w->value.data(), out.data(),
                 static_cast<int>(rows), cdim, cout, false, false, false);
    if (b) {
        for (int64_t r = 0; r < rows; ++r)
            simd::axpy(T(1), b->value.data(), out.data() + r * cout,
                       static_cast<size_t>(cout));
    }
    std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b}
                                    : std::vector<Var<T>>{x, w};
    auto cols_keep = grad_enabled()
                         ? std::make_shared<Tensor<T>>(std::move(cols))
                         : nullptr;
    return make_result<T>(std::move(out), std::move(parents),
                          [x, w, b, cols_keep, rows, cdim, cout, kh, kw, pad](Node<T>& n) {
        Tensor<T> gcols({static_cast<int>(rows), cdim});
        detail::gemm(n.grad.data(), w->value.data(), gcols.data(),
                     static_cast<int>(rows), cout, cdim, false, true, false);
        detail::col2im_acc(gcols, x->ensure_grad(), kh, kw, pad);
        detail::gemm(cols_keep->data(), n.grad.data(), w->ensure_grad().data(), cdim,
                     static_cast<int>(rows), cout, true, false, true);
        if (b) {
            Tensor<T>& gb = b->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                simd::axpy(T(1), n.grad.data() + r * cout, gb.data(),
                           static_cast<size_t>(cout));
        }
    });
}

// ------------------------------------------------------------ normalization

// LayerNorm over the last axis.
template <typename T>
inline Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
    const auto& s = x->value.shape();
    const int D = s.back();
    const int64_t rows = detail::prod(s, 0, s.size() - 1);
    Tensor<T> out(s);
    auto xhat = std::make_shared<Tensor<T>>(s);
    auto inv_std = std::make_shared<Tensor<T>>(std::vector<int>{static_cast<int>(rows)});
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x->value.data() + r * D;
        T mean = 0;
        for (int i = 0; i < D; ++i) mean += xr[i];
        mean /= T(D);
        T var = 0;
        for (int i = 0; i < D; ++i) var += (xr[i] - mean) * (xr[i] - mean);
        var /= T(D);
        T istd = T(1) / std::sqrt(var + eps);
        (*inv_std)[r] = istd;
        T* xh = xhat->data() + r * D;
        T* o = out.data() + r * D;
        for (int i = 0; i < D; ++i) {
            xh[i] = (xr[i] - mean) * istd;
            o[i] = xh[i] * gamma->value[i] + beta->value[i];
        }
    }
    return make_result<T>(std::move(out), {x, gamma, beta},
                          [x, gamma, beta, xhat, inv_std, rows, D](Node<T>& n) {
        Tensor<T>& gx = x->ensure_grad();
        Tensor<T>& gg = gamma->ensure_grad();
        Tensor<T>& gb = beta->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* g = n.grad.data() + r * D;
            const T* xh = xhat->data() + r * D;
            T istd = (*inv_std)[r];
            T sum_g = 0, sum_gx = 0;
            for (int i = 0; i < D; ++i) {
                T gh = g[i] * gamma->value[i];
                sum_g += gh;
                sum_gx += gh * xh[i];
                gg[i] += g[i] * xh[i];
                gb[i] += g[i];
            }
            T* gxr = gx.data() + r * D;
            for (int i = 0; i < D; ++i) {
                T gh = g[i] * gamma->value[i];
                gxr[i] += istd * (gh - sum_g / T(D) - xh[i] * sum_gx / T(D));
            }
        }
    });
}

template <typename T>
inline Var<T> softmax_last(const Var<T>& x) {
    const auto& s = x->value.shape();
    const int D = s.back();
    const int64_t rows = detail::prod(s, 0, s.size() - 1);
    Tensor<T> out(s);
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x->value.data() + r * D;
        T* o = out.data() + r * D;
        T mx = xr[0];
        for (int i = 1; i < D; ++i) mx = std::max(mx, xr[i]);
        T sum = 0;
        for (int i = 0; i < D; ++i) {
            o[i] = std::exp(xr[i] - mx);
            sum += o[i];
        }
        for (int i = 0; i < D; ++i) o[i] /= sum;
    }
    auto y = std::make_shared<Tensor<T>>(out);
    return make_result<T>(std::move(out), {x}, [x, y, rows, D](Node<T>& n) {
        Tensor<T>& gx = x->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* g = n.grad.data() + r * D;
            const T* yr = y->data() + r * D;
            T dot = 0;
            for (int i = 0; i < D; ++i) dot += g[i] * yr[i];
            T* gxr = gx.data() + r * D;
            for (int i = 0; i < D; ++i) gxr[i] += yr[i] * (g[i] - dot);
        }
    });
}

// -------------------------------------------------------------- batched gemm

// a [N,P,Q] x b [N,Q,R] -> [N,P,R]; trans flags apply per batch element.
template <typename T>
inline Var<T> bmm(const Var<T>& a, const Var<T>& b, bool trans_a, bool trans_b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0])
        throw std::invalid_argument("bmm: expects matching [N,·,·] inputs");
    const int N = as[0];
    const int m = trans_a ? as[2] : as[1];
    const int k = trans_a ? as[1] : as[2];
    const int kb = trans_b ? bs[2] : bs[1];
    const int n = trans_b ? bs[1] : bs[2];
    if (k != kb) throw std::invalid_argument("bmm: inner dims differ");
    Tensor<T> out({N, m, n});
    const int64_t sa = int64_t(as[1]) * as[2], sb = int64_t(bs[1]) * bs[2];
    const int64_t so = int64_t(m) * n;
    for (int i = 0; i < N; ++i)
        detail::gemm(a->value.data() + i * sa, b->value.data() + i * sb,
                     out.data() + i * so, m, k, n, trans_a, trans_b, false);
    return make_result<T>(std::move(out), {a, b},
                          [a, b, trans_a, trans_b, N, m, k, n, sa, sb, so](Node<T>& nd) {
        Tensor<T>& ga = a->ensure_grad();
        Tensor<T>& gb = b->ensure_grad();
        for (int i = 0; i < N; ++i) {
            const T* g = nd.grad.data() + i * so;
            const T* av = a->value.data() + i * sa;
            const T* bv = b->value.data() + i * sb;
            // dA = dC B^T (or variants), dB = A^T dC
            if (!trans_a)
                detail::gemm(g, bv, ga.data() + i * sa, m, n, k, false, !trans_b, true);
            else
                detail::gemm(bv, g, ga.data() + i * sa, k, n, m, trans_b, true, true);
            if (!trans_b)
                detail::gemm(av, g, gb.data() + i * sb, k, m, n, !trans_a, false, true);
            else
                detail::gemm(g, av, gb.data() + i * sb, n, m, k, true, trans_a, true);
        }
    });
}

// --------------------------------------------------------- attention helpers

// Gather rows of table [V, width] at flat indices -> [n, width].
template <typename T>
inline Var<T> embedding_rows(const Var<T>& table, std::vector<int> indices) {
    const int width = table->value.dim(1);
    const int n = static_cast<int>(indices.size());
    Tensor<T> out({n, width});
    for (int i = 0; i < n; ++i)
        std::copy_n(table->value.data() + int64_t(indices[i]) * width, width,
                    out.data() + int64_t(i) * width);
    return make_result<T>(std::move(out), {table},
                          [table, indices = std::move(indices), width, n](Node<T>& nd) {
        Tensor<T>& gt = table->ensure_grad();
        for (int i = 0; i < n; ++i)
            simd::axpy(T(1), nd.grad.data() + int64_t(i) * width,
                       gt.data() + int64_t(indices[i]) * width,
                       static_cast<size_t>(width));
    });
}

// x + y broadcast over leading dims: y's shape equals a suffix of x's shape.
template <typename T>
inline Var<T> broadcast_add_trailing(const Var<T>& x, const Var<T>& y) {
    const int64_t yn = y->value.numel();
    if (x->value.numel() % yn != 0)
        throw std::invalid_argument("broadcast_add_trailing: incompatible sizes");
    const int64_t reps = x->value.numel() / yn;
    Tensor<T> out = x->value;
    for (int64_t r = 0; r < reps; ++r)
        simd::axpy(T(1), y->value.data(), out.data() + r * yn, static_cast<size_t>(yn));
    return make_result<T>(std::move(out), {x, y}, [x, y, reps, yn](Node<T>& n) {
        detail::accumulate(x->ensure_grad(), n.grad);
        Tensor<T>& gy = y->ensure_grad();
        for (int64_t r = 0; r < reps; ++r)
            simd::axpy(T(1), n.grad.data() + r * yn, gy.data(), static_cast<size_t>(yn));
    });
}

// Add a constant per-window mask to logits [B*nW, heads, S, S]; mask [nW, S, S].
template <typename T>
inline Var<T> add_window_mask(const Var<T>& x, const Tensor<T>& mask, int num_windows) {
    const auto& s = x->value.shape();
    const int BW = s[0], heads = s[1], S = s[2];
    if (BW % num_windows != 0 || mask.dim(0) != num_windows || mask.dim(1) != S)
        throw std::invalid_argument("add_window_mask: shape mismatch");
    Tensor<T> out = x->value;
    const int64_t per_win = int64_t(S) * S;
    for (int bw = 0; bw < BW; ++bw) {
        const T* m = mask.data() + int64_t(bw % num_windows) * per_win;
        for (int h = 0; h < heads; ++h)
            simd::axpy(T(1), m, out.data() + (int64_t(bw) * heads + h) * per_win,
                       static_cast<size_t>(per_win));
    }
    return make_result<T>(std::move(out), {x}, [x](Node<T>& n) {
        detail::accumulate(x->ensure_grad(), n.grad);
    });
}

// --------------------------------------------------------------------- losses

template <typename T>
inline Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("mean_abs_diff: shape mismatch");
    const int64_t n = a->value.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i)
        s += std::fabs(static_cast<double>(a->value[i] - b->value[i]));
    Tensor<T> out({1});
    out[0] = static_cast<T>(s / static_cast<double>(n));
    return make_result<T>(std::move(out), {a, b}, [a, b, n](Node<T>& nd) {
        const T g = nd.grad[0] / T(n);
        Tensor<T>& ga = a->ensure_grad();
        Tensor<T>& gb = b->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            T d = a->value[i] - b->value[i];
            T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
            ga[i] += g * sgn;
            gb[i] -= g * sgn;
        }
    });
}

template <typename T>
inline Var<T> mean_sq_diff(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("mean_sq_diff: shape mismatch");
    const int64_t n = a->value.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]);
        s += d * d;
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(s / static_cast<double>(n));
    return make_result<T>(std::move(out), {a, b}, [a, b, n](Node<T>& nd) {
        const T g = nd.grad[0] * T(2) / T(n);
        Tensor<T>& ga = a->ensure_grad();
        Tensor<T>& gb = b->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            T d = a->value[i] - b->value[i];
            ga[i] += g * d;
            gb[i] -= g * d;
        }
    });
}

}  // namespace drct::nn
