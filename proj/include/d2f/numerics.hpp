#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "d2f/matrix.hpp"

namespace d2f::numerics {

// Stable softmax of one row, in place. Serial: callers parallelize over rows.
template <typename Real>
void softmax_row(Real* p, int n) {
    Real mx = p[0];
    for (int j = 1; j < n; ++j) {
        mx = p[j] > mx ? p[j] : mx;
    }
    Real sum = Real(0);
    for (int j = 0; j < n; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
    }
    const Real inv = Real(1) / sum;
    for (int j = 0; j < n; ++j) {
        p[j] *= inv;
    }
}

template <typename Real>
void softmax_rows(Mat<Real>& x) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < x.rows; ++i) {
        softmax_row(x.row(i), x.cols);
    }
}

// KL(p || q) for one distribution pair. Terms with p[j] == 0 contribute 0.
template <typename Real>
Real kl_row(const Real* p, const Real* q, int n) {
    Real s = Real(0);
    for (int j = 0; j < n; ++j) {
        if (p[j] > Real(0)) {
            s += p[j] * (std::log(p[j]) - std::log(q[j]));
        }
    }
    return s;
}

// Scales g so its global L2 norm is at most max_norm. The squared-norm
// reduction runs serially in index order. Returns the pre-clip norm.
template <typename Real>
Real clip_global_norm(std::vector<Real>& g, Real max_norm) {
    Real sq = Real(0);
    for (const Real v : g) {
        sq += v * v;
    }
    const Real norm = std::sqrt(sq);
    if (norm > max_norm) {
        const Real scale = max_norm / norm;
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(g.size()); ++i) {
            g[i] *= scale;
        }
    }
    return norm;
}

template <typename Real>
struct AdamState {
    std::vector<Real> m;
    std::vector<Real> v;
    long step = 0;

    explicit AdamState(size_t n = 0) : m(n, Real(0)), v(n, Real(0)) {}
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// One AdamW update with bias correction and decoupled weight decay. Each
// element is independent, so the parallel loop is order-free.
template <typename Real>
void adamw_step(std::vector<Real>& p, const std::vector<Real>& g, AdamState<Real>& st,
                const AdamConfig& cfg) {
    require(p.size() == g.size() && p.size() == st.m.size(), "adamw_step: size mismatch");
    st.step += 1;
    const Real b1 = Real(cfg.beta1), b2 = Real(cfg.beta2);
    const Real bc1 = Real(1) - std::pow(b1, Real(st.step));
    const Real bc2 = Real(1) - std::pow(b2, Real(st.step));
    const Real lr = Real(cfg.lr), eps = Real(cfg.eps), wd = Real(cfg.weight_decay);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(p.size()); ++i) {
        const Real gi = g[i];
        st.m[i] = b1 * st.m[i] + (Real(1) - b1) * gi;
        st.v[i] = b2 * st.v[i] + (Real(1) - b2) * gi * gi;
        const Real mhat = st.m[i] / bc1;
        const Real vhat = st.v[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
}

// Central-difference gradient check (double only; float rounding drowns the
// signal). loss() must read the current contents of params. Returns the max
// relative error |analytic - numeric| / (|analytic| + |numeric| + 1e-5)
// over the checked indices; the denominator floor keeps sub-noise-floor
// gradients from dominating the ratio.
double grad_check(const std::function<double()>& loss, std::vector<double>& params,
                  const std::vector<double>& analytic_grad, const std::vector<size_t>& indices,
                  double eps = 1e-5);

}  // namespace d2f::numerics
