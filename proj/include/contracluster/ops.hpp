#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "contracluster/autodiff.hpp"

namespace contracluster {
namespace ops {

// ---------------------------------------------------------------------------
// Shape checks
// ---------------------------------------------------------------------------

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
    if (!shape_eq(a.shape(), b.shape()))
        throw shape_error(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Array<T> out(a.shape());
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    T* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
    return Tensor<T>::op(std::move(out), {a, b}, [](TensorNode<T>& self) {
        Tensor<T>::accumulate(*self.parents[0], self.grad);
        Tensor<T>::accumulate(*self.parents[1], self.grad);
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "sub");
    Array<T> out(a.shape());
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    T* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];
    return Tensor<T>::op(std::move(out), {a, b}, [](TensorNode<T>& self) {
        Tensor<T>::accumulate(*self.parents[0], self.grad);
        TensorNode<T>& b_node = *self.parents[1];
        if (b_node.requires_grad) {
            b_node.ensure_grad();
            T* dst = b_node.grad.data();
            const T* g = self.grad.data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] -= g[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    Array<T> out(a.shape());
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    T* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
    return Tensor<T>::op(std::move(out), {a, b}, [](TensorNode<T>& self) {
        TensorNode<T>& an = *self.parents[0];
        TensorNode<T>& bn = *self.parents[1];
        const T* g = self.grad.data();
        if (an.requires_grad) {
            an.ensure_grad();
            T* dst = an.grad.data();
            const T* pb = bn.value.data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i] * pb[i];
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            T* dst = bn.grad.data();
            const T* pa = an.value.data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i] * pa[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double c) {
    Array<T> out(a.shape());
    const T* pa = a.value().data();
    T* po = out.data();
    const T tc = static_cast<T>(c);
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * tc;
    return Tensor<T>::op(std::move(out), {a}, [tc](TensorNode<T>& self) {
        TensorNode<T>& an = *self.parents[0];
        if (!an.requires_grad) return;
        an.ensure_grad();
        T* dst = an.grad.data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i] * tc;
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T s = T(0);
    const T* pa = a.value().data();
    for (std::size_t i = 0; i < a.size(); ++i) s += pa[i];
    return Tensor<T>::op(Array<T>::scalar(s), {a}, [](TensorNode<T>& self) {
        TensorNode<T>& an = *self.parents[0];
        if (!an.requires_grad) return;
        an.ensure_grad();
        const T g = self.grad[0];
        T* dst = an.grad.data();
        for (std::size_t i = 0; i < an.value.size(); ++i) dst[i] += g;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    if (a.size() == 0) throw argument_error("mean_all: empty tensor");
    T s = T(0);
    const T* pa = a.value().data();
    for (std::size_t i = 0; i < a.size(); ++i) s += pa[i];
    const T inv_n = T(1) / static_cast<T>(a.size());
    return Tensor<T>::op(Array<T>::scalar(s * inv_n), {a}, [inv_n](TensorNode<T>& self) {
        TensorNode<T>& an = *self.parents[0];
        if (!an.requires_grad) return;
        an.ensure_grad();
        const T g = self.grad[0] * inv_n;
        T* dst = an.grad.data();
        for (std::size_t i = 0; i < an.value.size(); ++i) dst[i] += g;
    });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
T normal_cdf(T x) {
    return T(0.5) * std::erfc(-x * T(0.7071067811865475244));
}
template <typename T>
T normal_pdf(T x) {
    return T(0.3989422804014326779) * std::exp(T(-0.5) * x * x);
}
} // namespace detail

// Exact GELU: x * Phi(x) with Phi evaluated through erfc (no tanh approximation).
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    Array<T> out(a.shape());
    const T* pa = a.value().data();
    T* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * detail::normal_cdf(pa[i]);
    return Tensor<T>::op(std::move(out), {a}, [](TensorNode<T>& self) {
        TensorNode<T>& an = *self.parents[0];
        if (!an.requires_grad) return;
        an.ensure_grad();
        const T* x = an.value.data();
        const T* g = self.grad.data();
        T* dst = an.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            dst[i] += g[i] * (detail::normal_cdf(x[i]) + x[i] * detail::normal_pdf(x[i]));
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    Array<T> out(a.shape());
    const T* pa = a.value().data();
    T* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T x = pa[i];
        if (x >= T(0)) {
            po[i] = T(1) / (T(1) + std::exp(-x));
        } else {
            const T e = std::exp(x);
            po[i] = e / (T(1) + e);
        }
    }
    return Tensor<T>::op(std::move(out), {a}, [](TensorNode<T>& self) {
        TensorNode<T>& an = *self.parents[0];
        if (!an.requires_grad) return;
        an.ensure_grad();
        const T* y = self.value.data();
        const T* g = self.grad.data();
        T* dst = an.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            dst[i] += g[i] * y[i] * (T(1) - y[i]);
    });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    Array<T> out = a.value().reshaped(std::move(new_shape));
    return Tensor<T>::op(std::move(out), {a}, [](TensorNode<T>& self) {
        TensorNode<T>& an = *self.parents[0];
        if (!an.requires_grad) return;
        an.ensure_grad();
        T* dst = an.grad.data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i];
    });
}

// Stack two row-major matrices vertically: (A x D) + (B x D) -> (A+B x D).
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[1])
        throw shape_error("concat_rows: need matching column counts, got " +
                          shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t ra = a.shape()[0], rb = b.shape()[0], d = a.shape()[1];
    Array<T> out({ra + rb, d});
    std::copy(a.value().data(), a.value().data() + ra * d, out.data());
    std::copy(b.value().data(), b.value().data() + rb * d, out.data() + ra * d);
    return Tensor<T>::op(std::move(out), {a, b}, [ra, rb, d](TensorNode<T>& self) {
        const T* g = self.grad.data();
        TensorNode<T>& an = *self.parents[0];
        TensorNode<T>& bn = *self.parents[1];
        if (an.requires_grad) {
            an.ensure_grad();
            T* dst = an.grad.data();
            for (std::size_t i = 0; i < ra * d; ++i) dst[i] += g[i];
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            T* dst = bn.grad.data();
            for (std::size_t i = 0; i < rb * d; ++i) dst[i] += g[ra * d + i];
        }
    });
}

// Concatenate along the feature dimension: (B x N1) + (B x N2) -> (B x N1+N2).
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[0] != b.shape()[0])
        throw shape_error("concat_cols: need matching row counts, got " + shape_str(a.shape()) +
                          " and " + shape_str(b.shape()));
    const std::size_t rows = a.shape()[0], n1 = a.shape()[1], n2 = b.shape()[1];
    Array<T> out({rows, n1 + n2});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(a.value().data() + r * n1, a.value().data() + (r + 1) * n1,
                  out.data() + r * (n1 + n2));
        std::copy(b.value().data() + r * n2, b.value().data() + (r + 1) * n2,
                  out.data() + r * (n1 + n2) + n1);
    }
    return Tensor<T>::op(std::move(out), {a, b}, [rows, n1, n2](TensorNode<T>& self) {
        const T* g = self.grad.data();
        TensorNode<T>& an = *self.parents[0];
        TensorNode<T>& bn = *self.parents[1];
        if (an.requires_grad) {
            an.ensure_grad();
            T* dst = an.grad.data();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n1; ++j) dst[r * n1 + j] += g[r * (n1 + n2) + j];
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            T* dst = bn.grad.data();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n2; ++j) dst[r * n2 + j] += g[r * (n1 + n2) + n1 + j];
        }
    });
}

// ---------------------------------------------------------------------------
// Dense linear algebra
// ---------------------------------------------------------------------------

// x (B x N) . w^T (N x M) + b -> (B x M)
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1)
        throw shape_error("linear: want x(B,N) w(M,N) b(M)");
    const std::size_t B = x.shape()[0], N = x.shape()[1], M = w.shape()[0];
    if (w.shape()[1] != N || b.shape()[0] != M)
        throw shape_error("linear: inner dims disagree: x" + shape_str(x.shape()) + " w" +
                          shape_str(w.shape()) + " b" + shape_str(b.shape()));

    Array<T> out({B, M});
    {
        const T* px = x.value().data();
        const T* pw = w.value().data();
        const T* pb = b.value().data();
        T* po = out.data();
#pragma omp parallel for schedule(static)
        for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(B); ++bi) {
            const T* xr = px + bi * N;
            T* orow = po + bi * M;
            for (std::size_t m = 0; m < M; ++m) {
                const T* wr = pw + m * N;
                T acc = T(0);
                for (std::size_t n = 0; n < N; ++n) acc += xr[n] * wr[n];
                orow[m] = acc + pb[m];
            }
        }
    }

    return Tensor<T>::op(std::move(out), {x, w, b}, [B, N, M](TensorNode<T>& self) {
        TensorNode<T>& xn = *self.parents[0];
        TensorNode<T>& wn = *self.parents[1];
        TensorNode<T>& bn = *self.parents[2];
        const T* g = self.grad.data();
        if (xn.requires_grad) {
            xn.ensure_grad();
            T* gx = xn.grad.data();
            const T* pw = wn.value.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(B); ++bi) {
                T* gxr = gx + bi * N;
                const T* gr = g + bi * M;
                for (std::size_t m = 0; m < M; ++m) {
                    const T gm = gr[m];
                    const T* wr = pw + m * N;
                    for (std::size_t n = 0; n < N; ++n) gxr[n] += gm * wr[n];
                }
            }
        }
        if (wn.requires_grad) {
            wn.ensure_grad();
            T* gw = wn.grad.data();
            const T* px = xn.value.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t m = 0; m < static_cast<std::int64_t>(M); ++m) {
                T* gwr = gw + m * N;
                for (std::size_t bi = 0; bi < B; ++bi) {
                    const T gm = g[bi * M + m];
                    const T* xr = px + bi * N;
                    for (std::size_t n = 0; n < N; ++n) gwr[n] += gm * xr[n];
                }
            }
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            T* gb = bn.grad.data();
            for (std::size_t bi = 0; bi < B; ++bi)
                for (std::size_t m = 0; m < M; ++m) gb[m] += g[bi * M + m];
        }
    });
}

// a (M x K) . b^T (K x N) -> (M x N); used for the similarity matrix.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[1])
        throw shape_error("matmul_nt: want (M,K) x (N,K), got " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
    const std::size_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[0];
    Array<T> out({M, N});
    {
        const T* pa = a.value().data();
        const T* pb = b.value().data();
        T* po = out.data();
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(M); ++i) {
            const T* ar = pa + i * K;
            T* orow = po + i * N;
            for (std::size_t j = 0; j < N; ++j) {
                const T* br = pb + j * K;
                T acc = T(0);
                for (std::size_t k = 0; k < K; ++k) acc += ar[k] * br[k];
                orow[j] = acc;
            }
        }
    }
    return Tensor<T>::op(std::move(out), {a, b}, [M, K, N](TensorNode<T>& self) {
        TensorNode<T>& an = *self.parents[0];
        TensorNode<T>& bn = *self.parents[1];
        const T* g = self.grad.data();
        if (an.requires_grad) {
            an.ensure_grad();
            T* ga = an.grad.data();
            const T* pb = bn.value.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(M); ++i) {
                T* gar = ga + i * K;
                const T* gr = g + i * N;
                for (std::size_t j = 0; j < N; ++j) {
                    const T gj = gr[j];
                    const T* br = pb + j * K;
                    for (std::size_t k = 0; k < K; ++k) gar[k] += gj * br[k];
                }
            }
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            T* gb = bn.grad.data();
            const T* pa = an.value.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t j = 0; j < static_cast<std::int64_t>(N); ++j) {
                T* gbr = gb + j * K;
                for (std::size_t i = 0; i < M; ++i) {
                    const T gj = g[i * N + j];
                    const T* ar = pa + i * K;
                    for (std::size_t k = 0; k < K; ++k) gbr[k] += gj * ar[k];
                }
            }
        }
    });
}

// Row-wise L2 normalization with an epsilon guard: n_i = x_i / (||x_i|| + eps).
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& x, double eps = 1e-12) {
    if (x.shape().size() != 2) throw shape_error("normalize_rows: want a matrix");
    const std::size_t B = x.shape()[0], D = x.shape()[1];
    Array<T> out({B, D});
    const T* px = x.value().data();
    T* po = out.data();
    for (std::size_t i = 0; i < B; ++i) {
        T sq = T(0);
        for (std::size_t d = 0; d < D; ++d) sq += px[i * D + d] * px[i * D + d];
        const T s = std::sqrt(sq) + static_cast<T>(eps);
        for (std::size_t d = 0; d < D; ++d) po[i * D + d] = px[i * D + d] / s;
    }
    return Tensor<T>::op(std::move(out), {x}, [B, D, eps](TensorNode<T>& self) {
        TensorNode<T>& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        const T* px = xn.value.data();
        const T* g = self.grad.data();
        T* gx = xn.grad.data();
        for (std::size_t i = 0; i < B; ++i) {
            T sq = T(0), gdotx = T(0);
            for (std::size_t d = 0; d < D; ++d) {
                sq += px[i * D + d] * px[i * D + d];
                gdotx += g[i * D + d] * px[i * D + d];
            }
            const T r = std::sqrt(sq);
            const T s = r + static_cast<T>(eps);
            const T r_safe = std::max(r, static_cast<T>(1e-30));
            const T coeff = gdotx / (s * s * r_safe);
            for (std::size_t d = 0; d < D; ++d)
                gx[i * D + d] += g[i * D + d] / s - coeff * px[i * D + d];
        }
    });
}

// Mean categorical cross-entropy straight from logits (stable log-softmax).
template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, const std::vector<int>& targets) {
    if (logits.shape().size() != 2) throw shape_error("cross_entropy_logits: want (B,C) logits");
    const std::size_t B = logits.shape()[0], C = logits.shape()[1];
    if (targets.size() != B)
        throw shape_error("cross_entropy_logits: target count " + std::to_string(targets.size()) +
                          " != batch " + std::to_string(B));
    for (int t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= C)
            throw argument_error("cross_entropy_logits: target out of range");

    const T* pl = logits.value().data();
    T total = T(0);
    for (std::size_t i = 0; i < B; ++i) {
        const T* row = pl + i * C;
        T m = row[0];
        for (std::size_t c = 1; c < C; ++c) m = std::max(m, row[c]);
        T sum = T(0);
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(row[c] - m);
        total += m + std::log(sum) - row[targets[i]];
    }
    total /= static_cast<T>(B);

    return Tensor<T>::op(Array<T>::scalar(total), {logits},
                         [B, C, targets](TensorNode<T>& self) {
        TensorNode<T>& ln = *self.parents[0];
        if (!ln.requires_grad) return;
        ln.ensure_grad();
        const T g = self.grad[0] / static_cast<T>(B);
        const T* pl = ln.value.data();
        T* gl = ln.grad.data();
        for (std::size_t i = 0; i < B; ++i) {
            const T* row = pl + i * C;
            T m = row[0];
            for (std::size_t c = 1; c < C; ++c) m = std::max(m, row[c]);
            T sum = T(0);
            for (std::size_t c = 0; c < C; ++c) sum += std::exp(row[c] - m);
            for (std::size_t c = 0; c < C; ++c) {
                T p = std::exp(row[c] - m) / sum;
                if (static_cast<int>(c) == targets[i]) p -= T(1);
                gl[i * C + c] += g * p;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

namespace detail {

// col[(c*K+ky)*K+kx][y*dW+x] = src[c][y*stride-pad+ky][x*stride-pad+kx], 0 outside.
template <typename T>
void im2col(const T* src, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
            std::size_t stride, std::size_t pad, std::size_t dH, std::size_t dW, T* col) {
    const std::size_t plane = dH * dW;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ky = 0; ky < K; ++ky) {
            for (std::size_t kx = 0; kx < K; ++kx) {
                T* crow = col + ((c * K + ky) * K + kx) * plane;
                for (std::size_t y = 0; y < dH; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * stride + ky) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) {
                        for (std::size_t x = 0; x < dW; ++x) crow[y * dW + x] = T(0);
                        continue;
                    }
                    const T* srow = src + (c * H + sy) * W;
                    for (std::size_t x = 0; x < dW; ++x) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        crow[y * dW + x] =
                            (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) ? T(0) : srow[sx];
                    }
                }
            }
        }
    }
}

// Adjoint scatter of im2col (accumulates into dst).
template <typename T>
void col2im_add(const T* col, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
                std::size_t stride, std::size_t pad, std::size_t dH, std::size_t dW, T* dst) {
    const std::size_t plane = dH * dW;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ky = 0; ky < K; ++ky) {
            for (std::size_t kx = 0; kx < K; ++kx) {
                const T* crow = col + ((c * K + ky) * K + kx) * plane;
                for (std::size_t y = 0; y < dH; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * stride + ky) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
                    T* drow = dst + (c * H + sy) * W;
                    for (std::size_t x = 0; x < dW; ++x) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
                        drow[sx] += crow[y * dW + x];
                    }
                }
            }
        }
    }
}

} // namespace detail

// x (B,Cin,H,W) * w (Cout,Cin,K,K) + b (Cout), stride/pad as configured.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t stride = 2, std::size_t pad = 1) {
    if (x.shape().size() != 4 || w.shape().size() != 4 || b.shape().size() != 1)
        throw shape_error("conv2d: want x(B,C,H,W) w(Cout,Cin,K,K) b(Cout)");
    const std::size_t B = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t Cout = w.shape()[0], K = w.shape()[2];
    if (w.shape()[1] != Cin || w.shape()[3] != K || b.shape()[0] != Cout)
        throw shape_error("conv2d: weight/bias shapes inconsistent with input: x" +
                          shape_str(x.shape()) + " w" + shape_str(w.shape()));
    if (H + 2 * pad < K || W + 2 * pad < K)
        throw shape_error("conv2d: spatial dims smaller than kernel after padding");
    const std::size_t oH = (H + 2 * pad - K) / stride + 1;
    const std::size_t oW = (W + 2 * pad - K) / stride + 1;
    const std::size_t ckk = Cin * K * K;
    const std::size_t plane = oH * oW;

    Array<T> out({B, Cout, oH, oW});
    {
        std::vector<T> cols(B * ckk * plane);
        const T* px = x.value().data();
        const T* pw = w.value().data();
        const T* pb = b.value().data();
        T* po = out.data();
#pragma omp parallel for schedule(static)
        for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(B); ++bi) {
            T* col = cols.data() + bi * ckk * plane;
            detail::im2col(px + bi * Cin * H * W, Cin, H, W, K, stride, pad, oH, oW, col);
            T* ob = po + bi * Cout * plane;
            for (std::size_t co = 0; co < Cout; ++co) {
                const T* wr = pw + co * ckk;
                T* orow = ob + co * plane;
                for (std::size_t s = 0; s < plane; ++s) orow[s] = pb[co];
                for (std::size_t k = 0; k < ckk; ++k) {
                    const T wv = wr[k];
                    const T* crow = col + k * plane;
                    for (std::size_t s = 0; s < plane; ++s) orow[s] += wv * crow[s];
                }
            }
        }
    }

    auto bp = [B, Cin, H, W, Cout, K, stride, pad, oH, oW, ckk, plane](TensorNode<T>& self) {
        TensorNode<T>& xn = *self.parents[0];
        TensorNode<T>& wn = *self.parents[1];
        TensorNode<T>& bn = *self.parents[2];
        const T* g = self.grad.data();
        const bool need_cols = wn.requires_grad;
        std::vector<T> cols;
        if (need_cols) {
            cols.resize(B * ckk * plane);
            const T* px = xn.value.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(B); ++bi)
                detail::im2col(px + bi * Cin * H * W, Cin, H, W, K, stride, pad, oH, oW,
                               cols.data() + bi * ckk * plane);
        }
        if (xn.requires_grad) {
            xn.ensure_grad();
            T* gx = xn.grad.data();
            const T* pw = wn.value.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(B); ++bi) {
                std::vector<T> gcol(ckk * plane, T(0));
                const T* gb = g + bi * Cout * plane;
                for (std::size_t k = 0; k < ckk; ++k) {
                    T* crow = gcol.data() + k * plane;
                    for (std::size_t co = 0; co < Cout; ++co) {
                        const T wv = pw[co * ckk + k];
                        const T* grow = gb + co * plane;
                        for (std::size_t s = 0; s < plane; ++s) crow[s] += wv * grow[s];
                    }
                }
                detail::col2im_add(gcol.data(), Cin, H, W, K, stride, pad, oH, oW,
                                   gx + bi * Cin * H * W);
            }
        }
        if (wn.requires_grad) {
            wn.ensure_grad();
            T* gw = wn.grad.data();
#pragma omp parallel for collapse(2) schedule(static)
            for (std::int64_t co = 0; co < static_cast<std::int64_t>(Cout); ++co) {
                for (std::int64_t k = 0; k < static_cast<std::int64_t>(ckk); ++k) {
                    T acc = T(0);
                    for (std::size_t bi = 0; bi < B; ++bi) {
                        const T* grow = g + (bi * Cout + co) * plane;
                        const T* crow = cols.data() + (bi * ckk + k) * plane;
                        for (std::size_t s = 0; s < plane; ++s) acc += grow[s] * crow[s];
                    }
                    gw[co * ckk + k] += acc;
                }
            }
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            T* gbv = bn.grad.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t co = 0; co < static_cast<std::int64_t>(Cout); ++co) {
                T acc = T(0);
                for (std::size_t bi = 0; bi < B; ++bi) {
                    const T* grow = g + (bi * Cout + co) * plane;
                    for (std::size_t s = 0; s < plane; ++s) acc += grow[s];
                }
                gbv[co] += acc;
            }
        }
    };
    return Tensor<T>::op(std::move(out), {x, w, b}, std::move(bp));
}

// Transposed convolution, the exact adjoint of conv2d in its spatial mapping.
// x (B,C,H,W) with w (C,C2,K,K) + b (C2) -> (B,C2,oH,oW),
// oH = (H-1)*stride - 2*pad + K + output_pad.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           std::size_t stride = 2, std::size_t pad = 1,
                           std::size_t output_pad = 0) {
    if (x.shape().size() != 4 || w.shape().size() != 4 || b.shape().size() != 1)
        throw shape_error("conv2d_transpose: want x(B,C,H,W) w(C,C2,K,K) b(C2)");
    const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t C2 = w.shape()[1], K = w.shape()[2];
    if (w.shape()[0] != C || w.shape()[3] != K || b.shape()[0] != C2)
        throw shape_error("conv2d_transpose: weight/bias shapes inconsistent: x" +
                          shape_str(x.shape()) + " w" + shape_str(w.shape()));
    if (output_pad > 1) throw argument_error("conv2d_transpose: output_pad must be 0 or 1");
    const std::ptrdiff_t oH_s = static_cast<std::ptrdiff_t>((H - 1) * stride + K + output_pad) -
                                2 * static_cast<std::ptrdiff_t>(pad);
    if (H == 0 || W == 0 || oH_s < 1) throw shape_error("conv2d_transpose: degenerate output");
    const std::size_t oH = static_cast<std::size_t>(oH_s);
    const std::size_t oW = (W - 1) * stride - 2 * pad + K + output_pad;
    const std::size_t c2kk = C2 * K * K;
    const std::size_t in_plane = H * W;
    const std::size_t out_plane = oH * oW;

    Array<T> out({B, C2, oH, oW});
    {
        const T* px = x.value().data();
        const T* pw = w.value().data();
        const T* pb = b.value().data();
        T* po = out.data();
#pragma omp parallel for schedule(static)
        for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(B); ++bi) {
            std::vector<T> col(c2kk * in_plane, T(0));
            const T* xb = px + bi * C * in_plane;
            for (std::size_t k = 0; k < c2kk; ++k) {
                T* crow = col.data() + k * in_plane;
                for (std::size_t c = 0; c < C; ++c) {
                    const T wv = pw[c * c2kk + k];
                    const T* xrow = xb + c * in_plane;
                    for (std::size_t s = 0; s < in_plane; ++s) crow[s] += wv * xrow[s];
                }
            }
            T* ob = po + bi * C2 * out_plane;
            for (std::size_t c2 = 0; c2 < C2; ++c2) {
                T* orow = ob + c2 * out_plane;
                for (std::size_t s = 0; s < out_plane; ++s) orow[s] = pb[c2];
            }
            detail::col2im_add(col.data(), C2, oH, oW, K, stride, pad, H, W, ob);
        }
    }

    auto bp = [B, C, H, W, C2, K, stride, pad, oH, oW, c2kk, in_plane,
               out_plane](TensorNode<T>& self) {
        TensorNode<T>& xn = *self.parents[0];
        TensorNode<T>& wn = *self.parents[1];
        TensorNode<T>& bn = *self.parents[2];
        const T* g = self.grad.data();
        const bool need_gcols = xn.requires_grad || wn.requires_grad;
        std::vector<T> gcols;
        if (need_gcols) {
            gcols.resize(B * c2kk * in_plane);
#pragma omp parallel for schedule(static)
            for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(B); ++bi)
                detail::im2col(g + bi * C2 * out_plane, C2, oH, oW, K, stride, pad, H, W,
                               gcols.data() + bi * c2kk * in_plane);
        }
        if (xn.requires_grad) {
            xn.ensure_grad();
            T* gx = xn.grad.data();
            const T* pw = wn.value.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(B); ++bi) {
                const T* gcol = gcols.data() + bi * c2kk * in_plane;
                T* gxb = gx + bi * C * in_plane;
                for (std::size_t c = 0; c < C; ++c) {
                    T* gxrow = gxb + c * in_plane;
                    const T* wr = pw + c * c2kk;
                    for (std::size_t k = 0; k < c2kk; ++k) {
                        const T wv = wr[k];
                        const T* crow = gcol + k * in_plane;
                        for (std::size_t s = 0; s < in_plane; ++s) gxrow[s] += wv * crow[s];
                    }
                }
            }
        }
        if (wn.requires_grad) {
            wn.ensure_grad();
            T* gw = wn.grad.data();
            const T* px = xn.value.data();
#pragma omp parallel for collapse(2) schedule(static)
            for (std::int64_t c = 0; c < static_cast<std::int64_t>(C); ++c) {
                for (std::int64_t k = 0; k < static_cast<std::int64_t>(c2kk); ++k) {
                    T acc = T(0);
                    for (std::size_t bi = 0; bi < B; ++bi) {
                        const T* xrow = px + (bi * C + c) * in_plane;
                        const T* crow = gcols.data() + (bi * c2kk + k) * in_plane;
                        for (std::size_t s = 0; s < in_plane; ++s) acc += xrow[s] * crow[s];
                    }
                    gw[c * c2kk + k] += acc;
                }
            }
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            T* gbv = bn.grad.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t c2 = 0; c2 < static_cast<std::int64_t>(C2); ++c2) {
                T acc = T(0);
                for (std::size_t bi = 0; bi < B; ++bi) {
                    const T* grow = g + (bi * C2 + c2) * out_plane;
                    for (std::size_t s = 0; s < out_plane; ++s) acc += grow[s];
                }
                gbv[c2] += acc;
            }
        }
    };
    return Tensor<T>::op(std::move(out), {x, w, b}, std::move(bp));
}

// 2x2 average pooling with floor semantics on odd inputs.
template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, std::size_t kernel = 2, std::size_t stride = 2) {
    if (x.shape().size() != 4) throw shape_error("avgpool2d: want (B,C,H,W)");
    const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    if (H < kernel || W < kernel) throw shape_error("avgpool2d: input smaller than kernel");
    const std::size_t oH = (H - kernel) / stride + 1;
    const std::size_t oW = (W - kernel) / stride + 1;
    const T inv = T(1) / static_cast<T>(kernel * kernel);

    Array<T> out({B, C, oH, oW});
    const T* px = x.value().data();
    T* po = out.data();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const T* src = px + bc * H * W;
        T* dst = po + bc * oH * oW;
        for (std::size_t y = 0; y < oH; ++y) {
            for (std::size_t xo = 0; xo < oW; ++xo) {
                T acc = T(0);
                for (std::size_t ky = 0; ky < kernel; ++ky)
                    for (std::size_t kx = 0; kx < kernel; ++kx)
                        acc += src[(y * stride + ky) * W + xo * stride + kx];
                dst[y * oW + xo] = acc * inv;
            }
        }
    }
    return Tensor<T>::op(std::move(out), {x},
                         [B, C, H, W, oH, oW, kernel, stride, inv](TensorNode<T>& self) {
        TensorNode<T>& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        const T* g = self.grad.data();
        T* gx = xn.grad.data();
        for (std::size_t bc = 0; bc < B * C; ++bc) {
            const T* grow = g + bc * oH * oW;
            T* gxp = gx + bc * H * W;
            for (std::size_t y = 0; y < oH; ++y)
                for (std::size_t xo = 0; xo < oW; ++xo) {
                    const T gv = grow[y * oW + xo] * inv;
                    for (std::size_t ky = 0; ky < kernel; ++ky)
                        for (std::size_t kx = 0; kx < kernel; ++kx)
                            gxp[(y * stride + ky) * W + xo * stride + kx] += gv;
                }
        }
    });
}

} // namespace ops
} // namespace contracluster
