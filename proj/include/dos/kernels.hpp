#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "dos/errors.hpp"
#include "dos/rng.hpp"
#include "dos/tensor.hpp"

namespace dos {

namespace detail {

// Dot product with four independent accumulators.  The summation order is
// fixed by construction, so results are reproducible, and the compiler can
// vectorize without reassociation flags.  Every dense layer in the library
// funnels through this one function, which also guarantees the per-sample
// and batched code paths produce bit-identical numbers.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

// y += alpha * x
template <typename T>
inline void axpy(T* y, T alpha, const T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
inline T sq_dist(const T* a, const T* b, std::size_t n) {
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        T d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Cross-correlation with valid padding into a caller-zeroed buffer.
template <typename T>
void conv2d_raw(const T* in, std::size_t cin, std::size_t h, std::size_t w, const T* kernels,
                std::size_t cout, std::size_t kh, std::size_t kw, std::size_t stride, T* out) {
    const std::size_t oh = (h - kh) / stride + 1;
    const std::size_t ow = (w - kw) / stride + 1;
    for (std::size_t co = 0; co < cout; ++co) {
        T* oplane = out + co * oh * ow;
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* iplane = in + ci * h * w;
            const T* kplane = kernels + (co * cin + ci) * kh * kw;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const T kv = kplane[ky * kw + kx];
                    if (stride == 1) {
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            axpy(oplane + oy * ow, kv, iplane + (oy + ky) * w + kx, ow);
                        }
                    } else {
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            T* orow = oplane + oy * ow;
                            const T* irow = iplane + (oy * stride + ky) * w + kx;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                orow[ox] += kv * irow[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Kernel gradient for stride-1 cross-correlation; accumulates into grad_k.
template <typename T>
void conv2d_bwd_kernels_raw(const T* in, std::size_t cin, std::size_t h, std::size_t w,
                            const T* up, std::size_t cout, std::size_t oh, std::size_t ow,
                            std::size_t kh, std::size_t kw, T* grad_k) {
    for (std::size_t co = 0; co < cout; ++co) {
        const T* uplane = up + co * oh * ow;
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* iplane = in + ci * h * w;
            T* kplane = grad_k + (co * cin + ci) * kh * kw;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    T s = 0;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        s += dot(uplane + oy * ow, iplane + (oy + ky) * w + kx, ow);
                    }
                    kplane[ky * kw + kx] += s;
                }
            }
        }
    }
}

// Input gradient for stride-1 cross-correlation; accumulates into grad_in.
template <typename T>
void conv2d_bwd_input_raw(const T* kernels, std::size_t cin, std::size_t h, std::size_t w,
                          const T* up, std::size_t cout, std::size_t oh, std::size_t ow,
                          std::size_t kh, std::size_t kw, T* grad_in) {
    for (std::size_t co = 0; co < cout; ++co) {
        const T* uplane = up + co * oh * ow;
        for (std::size_t ci = 0; ci < cin; ++ci) {
            T* gplane = grad_in + ci * h * w;
            const T* kplane = kernels + (co * cin + ci) * kh * kw;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const T kv = kplane[ky * kw + kx];
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        axpy(gplane + (oy + ky) * w + kx, kv, uplane + oy * ow, ow);
                    }
                }
            }
        }
    }
}

// In-place softmax over a contiguous row, with max subtraction.
template <typename T>
inline void softmax_row(T* p, std::size_t n) {
    T mx = p[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, p[i]);
    T z = 0;
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = std::exp(p[i] - mx);
        z += p[i];
    }
    for (std::size_t i = 0; i < n; ++i) p[i] /= z;
}

} // namespace detail

// a[m x k] * b[k x n] -> [m x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul expects rank-2 tensors, got " + a.shape_str() + " and " +
                             b.shape_str());
    }
    const std::size_t m = a.extent(0), k = a.extent(1);
    if (b.extent(0) != k) {
        throw DimensionError("matmul inner dimensions disagree: " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    const std::size_t n = b.extent(1);
    Tensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c.data() + i * n;
        const T* arow = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            detail::axpy(crow, arow[p], b.data() + p * n, n);
        }
    }
    return c;
}

// Cross-correlation (no kernel flip), valid padding.
// input [C_in x H x W], kernels [C_out x C_in x kH x kW] -> [C_out x H' x W']
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, std::size_t stride = 1) {
    if (input.rank() != 3 || kernels.rank() != 4) {
        throw DimensionError("conv2d expects input rank 3 and kernels rank 4, got " +
                             input.shape_str() + " and " + kernels.shape_str());
    }
    if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
    const std::size_t cin = input.extent(0), h = input.extent(1), w = input.extent(2);
    const std::size_t cout = kernels.extent(0), kh = kernels.extent(2), kw = kernels.extent(3);
    if (kernels.extent(1) != cin) {
        throw DimensionError("conv2d: kernel channel count " + std::to_string(kernels.extent(1)) +
                             " does not match input channels " + std::to_string(cin));
    }
    if (kh > h || kw > w) {
        throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                             " larger than input " + std::to_string(h) + "x" + std::to_string(w));
    }
    const std::size_t oh = (h - kh) / stride + 1;
    const std::size_t ow = (w - kw) / stride + 1;
    Tensor<T> out({cout, oh, ow});
    detail::conv2d_raw(input.data(), cin, h, w, kernels.data(), cout, kh, kw, stride, out.data());
    return out;
}

// Gradient of stride-1 conv2d with respect to the kernels (accumulating).
template <typename T>
void conv2d_backward_kernels(const Tensor<T>& input, const Tensor<T>& upstream,
                             Tensor<T>& grad_kernels) {
    detail::conv2d_bwd_kernels_raw(input.data(), input.extent(0), input.extent(1), input.extent(2),
                                   upstream.data(), upstream.extent(0), upstream.extent(1),
                                   upstream.extent(2), grad_kernels.extent(2),
                                   grad_kernels.extent(3), grad_kernels.data());
}

// Gradient of stride-1 conv2d with respect to the input (accumulating).
template <typename T>
void conv2d_backward_input(const Tensor<T>& kernels, const Tensor<T>& upstream,
                           Tensor<T>& grad_input) {
    detail::conv2d_bwd_input_raw(kernels.data(), grad_input.extent(0), grad_input.extent(1),
                                 grad_input.extent(2), upstream.data(), upstream.extent(0),
                                 upstream.extent(1), upstream.extent(2), kernels.extent(2),
                                 kernels.extent(3), grad_input.data());
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return out;
}

// Pass-through where the pre-activation was positive; the subgradient at
// exactly 0 is taken as 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& upstream) {
    if (x.shape() != upstream.shape()) {
        throw DimensionError("relu_backward shape mismatch: " + x.shape_str() + " vs " +
                             upstream.shape_str());
    }
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? upstream[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (logits.size() == 0) throw DimensionError("softmax on empty tensor");
    Tensor<T> out = logits;
    detail::softmax_row(out.data(), out.size());
    return out;
}

// Uniform draw from the probability simplex (Dirichlet with unit
// concentrations): normalized independent unit-exponential deviates.
template <typename T>
Tensor<T> sample_simplex(std::size_t dim, SeededRng& rng) {
    if (dim == 0) throw ArgumentError("sample_simplex: dim must be at least 1");
    std::vector<double> e(dim);
    double sum = 0.0;
    do {
        sum = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            e[i] = rng.exponential();
            sum += e[i];
        }
    } while (sum <= 0.0);
    Tensor<T> w({dim});
    for (std::size_t i = 0; i < dim; ++i) w[i] = static_cast<T>(e[i] / sum);
    return w;
}

} // namespace dos
