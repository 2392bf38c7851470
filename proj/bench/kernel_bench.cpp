// Times the OpenMP kernels against their serial reference twins on shapes
// typical of training and decoding. The two must agree bitwise (the tests
// enforce that); this target shows what the parallel versions buy.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "d2f/kernels.hpp"
#include "d2f/matrix.hpp"
#include "d2f/rng.hpp"

using namespace d2f;

namespace {

Mat<float> random_mat(int rows, int cols, Rng& rng) {
    Mat<float> m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m.data[i] = float(rng.normal());
    return m;
}

double time_ms(const std::function<void()>& fn) {
    fn();  // warm up
    int reps = 1;
    double ms = 0.0;
    while (true) {
        const auto t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < reps; ++r) fn();
        ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                 .count();
        if (ms > 50.0 || reps >= 1 << 20) return ms / reps;
        reps *= 4;
    }
}

void row(const std::string& name, double serial_ms, double parallel_ms) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name.c_str(), serial_ms, parallel_ms,
                parallel_ms > 0 ? serial_ms / parallel_ms : 0.0);
}

}  // namespace

int main() {
    Rng rng(42, 0);
    std::printf("threads: %d\n\n", kernels::max_threads());
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    struct Shape {
        int m, k, n;
    };
    for (const Shape s : {Shape{152, 64, 64}, Shape{304, 64, 256}, Shape{512, 128, 512}}) {
        auto a = random_mat(s.m, s.k, rng);
        auto b = random_mat(s.k, s.n, rng);
        Mat<float> c(s.m, s.n);
        char name[64];
        std::snprintf(name, sizeof(name), "gemm %dx%dx%d", s.m, s.k, s.n);
        row(name, time_ms([&] { kernels::serial::gemm(c, a, b, false); }),
            time_ms([&] { kernels::gemm(c, a, b, false); }));

        auto at = random_mat(s.k, s.m, rng);
        Mat<float> ct(s.m, s.n);
        std::snprintf(name, sizeof(name), "gemm_at %dx%dx%d", s.m, s.k, s.n);
        row(name, time_ms([&] { kernels::serial::gemm_at(ct, at, b, false); }),
            time_ms([&] { kernels::gemm_at(ct, at, b, false); }));
    }

    {
        const int rows = 512, dim = 128;
        auto x = random_mat(rows, dim, rng);
        auto gain = random_mat(1, dim, rng);
        auto bias = random_mat(1, dim, rng);
        Mat<float> y(rows, dim);
        std::vector<float> mean(rows), rstd(rows);
        row("layernorm 512x128",
            time_ms([&] {
                kernels::serial::layernorm(y, mean.data(), rstd.data(), x, gain.row(0),
                                           bias.row(0), 1e-5f);
            }),
            time_ms([&] {
                kernels::layernorm(y, mean.data(), rstd.data(), x, gain.row(0), bias.row(0),
                                   1e-5f);
            }));

        auto u = random_mat(rows, 4 * dim, rng);
        Mat<float> act(rows, 4 * dim);
        row("gelu 512x512", time_ms([&] { kernels::serial::gelu(act, u); }),
            time_ms([&] { kernels::gelu(act, u); }));
    }
    return 0;
}
