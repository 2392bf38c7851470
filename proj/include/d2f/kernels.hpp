#pragma once

#include <cmath>
#include <cstddef>

#include "d2f/matrix.hpp"

namespace d2f::kernels {

// Parallel kernels, generic over Mat / MatRef. Every output element is owned
// by exactly one loop iteration and accumulated in a fixed index order, so
// results are bitwise identical to the serial reference for any thread count.
//
// GEMM uses the i-k-j loop order: the inner j loop updates a contiguous row
// of C with independent elementwise FMAs, which vectorizes without
// reassociating any per-element sum.

// C = A * B, or C += A * B when accumulate is set. A: [m x k], B: [k x n].
template <typename MC, typename MA, typename MB>
void gemm(MC&& C, const MA& A, const MB& B, bool accumulate = false) {
    require(A.cols == B.rows && C.rows == A.rows && C.cols == B.cols, "gemm: shape mismatch");
    const int m = A.rows, k = A.cols, n = B.cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        auto* c = C.row(i);
        if (!accumulate) {
            for (int j = 0; j < n; ++j) {
                c[j] = 0;
            }
        }
        const auto* a = A.row(i);
        for (int p = 0; p < k; ++p) {
            const auto av = a[p];
            const auto* b = B.row(p);
            for (int j = 0; j < n; ++j) {
                c[j] += av * b[j];
            }
        }
    }
}

// C = A^T * B, or C += A^T * B. A: [m x k], B: [m x n], C: [k x n].
// Parallel over rows of C; the m-loop runs ascending inside each row.
template <typename MC, typename MA, typename MB>
void gemm_at(MC&& C, const MA& A, const MB& B, bool accumulate = false) {
    require(A.rows == B.rows && C.rows == A.cols && C.cols == B.cols, "gemm_at: shape mismatch");
    const int m = A.rows, k = A.cols, n = B.cols;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < k; ++p) {
        auto* c = C.row(p);
        if (!accumulate) {
            for (int j = 0; j < n; ++j) {
                c[j] = 0;
            }
        }
        for (int i = 0; i < m; ++i) {
            const auto av = A.at(i, p);
            const auto* b = B.row(i);
            for (int j = 0; j < n; ++j) {
                c[j] += av * b[j];
            }
        }
    }
}

template <typename MD, typename MS>
void transpose(MD&& dst, const MS& src) {
    require(dst.rows == src.cols && dst.cols == src.rows, "transpose: shape mismatch");
#pragma omp parallel for schedule(static)
    for (int i = 0; i < src.rows; ++i) {
        const auto* s = src.row(i);
        for (int j = 0; j < src.cols; ++j) {
            dst.at(j, i) = s[j];
        }
    }
}

template <typename MD, typename MS>
void add_inplace(MD&& dst, const MS& src) {
    require(dst.rows == src.rows && dst.cols == src.cols, "add_inplace: shape mismatch");
    const long long n = static_cast<long long>(dst.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        dst.ptr()[i] += src.ptr()[i];
    }
}

inline constexpr double kInvSqrt2 = 0.7071067811865475;
inline constexpr double kInvSqrt2Pi = 0.3989422804014327;

// y = gelu(x), exact erf form.
template <typename MY, typename MX>
void gelu(MY&& y, const MX& x) {
    using Real = std::decay_t<decltype(x.ptr()[0])>;
    require(y.size() == x.size(), "gelu: shape mismatch");
    const long long n = static_cast<long long>(x.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        const Real v = x.ptr()[i];
        y.ptr()[i] = Real(0.5) * v * (Real(1) + std::erf(v * Real(kInvSqrt2)));
    }
}

// dx += gelu'(x) * dy, with gelu'(x) = Phi(x) + x * phi(x).
template <typename MDX, typename MX, typename MDY>
void gelu_backward(MDX&& dx, const MX& x, const MDY& dy) {
    using Real = std::decay_t<decltype(x.ptr()[0])>;
    require(dx.size() == x.size() && dy.size() == x.size(), "gelu_backward: shape mismatch");
    const long long n = static_cast<long long>(x.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        const Real v = x.ptr()[i];
        const Real cdf = Real(0.5) * (Real(1) + std::erf(v * Real(kInvSqrt2)));
        const Real pdf = std::exp(Real(-0.5) * v * v) * Real(kInvSqrt2Pi);
        dx.ptr()[i] += (cdf + v * pdf) * dy.ptr()[i];
    }
}

// Row-wise layer norm: y = (x - mean) / sqrt(var + eps) * gain + bias.
// Saves the per-row mean and reciprocal std for the backward pass.
template <typename Real, typename MY, typename MX>
void layernorm(MY&& y, Real* mean, Real* rstd, const MX& x, const Real* gain, const Real* bias,
               Real eps) {
    const int n = x.cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < x.rows; ++i) {
        const auto* xr = x.row(i);
        Real m = Real(0);
        for (int j = 0; j < n; ++j) {
            m += xr[j];
        }
        m /= Real(n);
        Real var = Real(0);
        for (int j = 0; j < n; ++j) {
            const Real d = xr[j] - m;
            var += d * d;
        }
        var /= Real(n);
        const Real rs = Real(1) / std::sqrt(var + eps);
        mean[i] = m;
        rstd[i] = rs;
        auto* yr = y.row(i);
        for (int j = 0; j < n; ++j) {
            yr[j] = (xr[j] - m) * rs * gain[j] + bias[j];
        }
    }
}

// Backward of layernorm. dx rows are accumulated in parallel (each row is
// owned by one iteration); dgain/dbias reduce over rows serially so the
// summation order is fixed.
template <typename Real, typename MDX, typename MDY, typename MX>
void layernorm_backward(MDX&& dx, Real* dgain, Real* dbias, const MDY& dy, const MX& x,
                        const Real* mean, const Real* rstd, const Real* gain) {
    const int n = x.cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < x.rows; ++i) {
        const auto* xr = x.row(i);
        const auto* dyr = dy.row(i);
        auto* dxr = dx.row(i);
        const Real m = mean[i];
        const Real rs = rstd[i];
        Real sum_dn = Real(0);
        Real sum_dn_h = Real(0);
        for (int j = 0; j < n; ++j) {
            const Real h = (xr[j] - m) * rs;
            const Real dn = dyr[j] * gain[j];
            sum_dn += dn;
            sum_dn_h += dn * h;
        }
        const Real inv_n = Real(1) / Real(n);
        for (int j = 0; j < n; ++j) {
            const Real h = (xr[j] - m) * rs;
            const Real dn = dyr[j] * gain[j];
            dxr[j] += rs * (dn - inv_n * sum_dn - h * inv_n * sum_dn_h);
        }
    }
    for (int i = 0; i < x.rows; ++i) {
        const auto* xr = x.row(i);
        const auto* dyr = dy.row(i);
        const Real m = mean[i];
        const Real rs = rstd[i];
        for (int j = 0; j < n; ++j) {
            dgain[j] += dyr[j] * (xr[j] - m) * rs;
            dbias[j] += dyr[j];
        }
    }
}

// Serial reference implementations. Same arithmetic, no pragmas; the parity
// tests assert bitwise-equal outputs and the bench target times both.
namespace serial {

template <typename MC, typename MA, typename MB>
void gemm(MC&& C, const MA& A, const MB& B, bool accumulate = false) {
    require(A.cols == B.rows && C.rows == A.rows && C.cols == B.cols, "gemm: shape mismatch");
    const int m = A.rows, k = A.cols, n = B.cols;
    for (int i = 0; i < m; ++i) {
        auto* c = C.row(i);
        if (!accumulate) {
            for (int j = 0; j < n; ++j) {
                c[j] = 0;
            }
        }
        const auto* a = A.row(i);
        for (int p = 0; p < k; ++p) {
            const auto av = a[p];
            const auto* b = B.row(p);
            for (int j = 0; j < n; ++j) {
                c[j] += av * b[j];
            }
        }
    }
}

template <typename MC, typename MA, typename MB>
void gemm_at(MC&& C, const MA& A, const MB& B, bool accumulate = false) {
    require(A.rows == B.rows && C.rows == A.cols && C.cols == B.cols, "gemm_at: shape mismatch");
    const int m = A.rows, k = A.cols, n = B.cols;
    for (int p = 0; p < k; ++p) {
        auto* c = C.row(p);
        if (!accumulate) {
            for (int j = 0; j < n; ++j) {
                c[j] = 0;
            }
        }
        for (int i = 0; i < m; ++i) {
            const auto av = A.at(i, p);
            const auto* b = B.row(i);
            for (int j = 0; j < n; ++j) {
                c[j] += av * b[j];
            }
        }
    }
}

template <typename Real, typename MY, typename MX>
void layernorm(MY&& y, Real* mean, Real* rstd, const MX& x, const Real* gain, const Real* bias,
               Real eps) {
    const int n = x.cols;
    for (int i = 0; i < x.rows; ++i) {
        const auto* xr = x.row(i);
        Real m = Real(0);
        for (int j = 0; j < n; ++j) {
            m += xr[j];
        }
        m /= Real(n);
        Real var = Real(0);
        for (int j = 0; j < n; ++j) {
            const Real d = xr[j] - m;
            var += d * d;
        }
        var /= Real(n);
        const Real rs = Real(1) / std::sqrt(var + eps);
        mean[i] = m;
        rstd[i] = rs;
        auto* yr = y.row(i);
        for (int j = 0; j < n; ++j) {
            yr[j] = (xr[j] - m) * rs * gain[j] + bias[j];
        }
    }
}

template <typename MY, typename MX>
void gelu(MY&& y, const MX& x) {
    using Real = std::decay_t<decltype(x.ptr()[0])>;
    require(y.size() == x.size(), "gelu: shape mismatch");
    for (size_t i = 0; i < x.size(); ++i) {
        const Real v = x.ptr()[i];
        y.ptr()[i] = Real(0.5) * v * (Real(1) + std::erf(v * Real(kInvSqrt2)));
    }
}

}  // namespace serial

int max_threads();

}  // namespace d2f::kernels
