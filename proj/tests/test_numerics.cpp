#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "d2f/numerics.hpp"

using namespace d2f;

TEST_CASE("softmax on a pinned row") {
    std::vector<double> p = {1.0, 2.0, 3.0};
    numerics::softmax_row(p.data(), 3);
    // exp(k)/sum over k in {1,2,3}, computed independently.
    CHECK(p[0] == doctest::Approx(0.09003057317038046).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.24472847105479767).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(0.6652409557748219).epsilon(1e-14));
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("softmax is shift invariant and handles large logits") {
    std::vector<double> a = {1.0, 2.0, 3.0};
    std::vector<double> b = {1001.0, 1002.0, 1003.0};
    numerics::softmax_row(a.data(), 3);
    numerics::softmax_row(b.data(), 3);
    for (int j = 0; j < 3; ++j) {
        CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
        CHECK(std::isfinite(b[j]));
    }
}

TEST_CASE("softmax_rows applies per row") {
    Mat<float> m(2, 2);
    m.data = {0.0f, 0.0f, 100.0f, 0.0f};
    numerics::softmax_rows(m);
    CHECK(m.at(0, 0) == doctest::Approx(0.5));
    CHECK(m.at(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("kl_row on a pinned pair") {
    const std::vector<double> p = {0.5, 0.5};
    const std::vector<double> q = {0.9, 0.1};
    // 0.5*ln(0.5/0.9) + 0.5*ln(0.5/0.1) = ln(5/3)
    CHECK(numerics::kl_row(p.data(), q.data(), 2) ==
          doctest::Approx(0.5108256237659907).epsilon(1e-14));
    CHECK(numerics::kl_row(p.data(), p.data(), 2) == doctest::Approx(0.0));
}

TEST_CASE("kl_row ignores zero-probability terms") {
    const std::vector<double> p = {1.0, 0.0};
    const std::vector<double> q = {0.5, 0.5};
    CHECK(numerics::kl_row(p.data(), q.data(), 2) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(std::isfinite(numerics::kl_row(p.data(), q.data(), 2)));
}

TEST_CASE("clip_global_norm") {
    std::vector<double> g = {3.0, 4.0};  // norm 5
    const double pre = numerics::clip_global_norm(g, 1.0);
    CHECK(pre == doctest::Approx(5.0));
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));

    std::vector<double> h = {0.3, 0.4};  // norm 0.5, under the cap
    const double pre2 = numerics::clip_global_norm(h, 1.0);
    CHECK(pre2 == doctest::Approx(0.5));
    CHECK(h[0] == 0.3);
    CHECK(h[1] == 0.4);
}

TEST_CASE("adamw first step matches the closed form") {
    // After one step: m_hat = g, v_hat = g^2, so the update is
    // p -= lr * (g/(|g|+eps) + wd*p) regardless of the betas.
    std::vector<double> p = {1.0, -2.0};
    const std::vector<double> g = {0.5, -0.25};
    numerics::AdamState<double> st(2);
    numerics::AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;
    numerics::adamw_step(p, g, st, cfg);
    CHECK(st.step == 1);
    for (int i = 0; i < 2; ++i) {
        const double pi = (i == 0 ? 1.0 : -2.0);
        const double gi = g[i];
        const double want = pi - 0.1 * (gi / (std::abs(gi) + cfg.eps) + 0.01 * pi);
        CHECK(p[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("adamw weight decay is decoupled from the gradient") {
    std::vector<double> p = {2.0};
    const std::vector<double> g = {0.0};
    numerics::AdamState<double> st(1);
    numerics::AdamConfig cfg;
    cfg.lr = 0.5;
    cfg.weight_decay = 0.1;
    numerics::adamw_step(p, g, st, cfg);
    // Zero gradient still shrinks the weight: p *= (1 - lr*wd).
    CHECK(p[0] == doctest::Approx(2.0 * (1.0 - 0.5 * 0.1)).epsilon(1e-12));
}

TEST_CASE("adamw consecutive steps track the bias-corrected moments") {
    std::vector<double> p = {0.0};
    const std::vector<double> g = {1.0};
    numerics::AdamState<double> st(1);
    numerics::AdamConfig cfg;
    cfg.lr = 1e-2;
    double m = 0.0, v = 0.0, ref = 0.0;
    for (int k = 1; k <= 5; ++k) {
        numerics::adamw_step(p, g, st, cfg);
        m = cfg.beta1 * m + (1 - cfg.beta1);
        v = cfg.beta2 * v + (1 - cfg.beta2);
        const double mh = m / (1 - std::pow(cfg.beta1, k));
        const double vh = v / (1 - std::pow(cfg.beta2, k));
        ref -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        CHECK(p[0] == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("grad_check flags a correct and a broken gradient") {
    // f(p) = sum(p^2): exact gradient 2p.
    std::vector<double> params = {0.7, -1.3, 2.1};
    const auto loss = [&] {
        double s = 0;
        for (const double x : params) s += x * x;
        return s;
    };
    std::vector<double> grad = {1.4, -2.6, 4.2};
    const std::vector<size_t> idx = {0, 1, 2};
    CHECK(numerics::grad_check(loss, params, grad, idx) < 1e-8);

    grad[1] = -2.0;  // wrong on purpose
    CHECK(numerics::grad_check(loss, params, grad, idx) > 1e-2);
}
