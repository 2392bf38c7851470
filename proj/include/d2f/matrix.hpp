#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace d2f {

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw std::runtime_error(msg);
    }
}

// Row-major dense matrix that owns its storage.
template <typename Real>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<Real> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(size_t(r) * size_t(c), Real(0)) {}

    void resize(int r, int c) {
        rows = r;
        cols = c;
        data.assign(size_t(r) * size_t(c), Real(0));
    }

    Real& at(int r, int c) { return data[size_t(r) * cols + c]; }
    Real at(int r, int c) const { return data[size_t(r) * cols + c]; }
    Real* row(int r) { return data.data() + size_t(r) * cols; }
    const Real* row(int r) const { return data.data() + size_t(r) * cols; }
    Real* ptr() { return data.data(); }
    const Real* ptr() const { return data.data(); }
    size_t size() const { return data.size(); }

    void zero() { std::fill(data.begin(), data.end(), Real(0)); }

    bool all_finite() const {
        for (const Real v : data) {
            if (!std::isfinite(double(v))) {
                return false;
            }
        }
        return true;
    }
};

// Non-owning view with the same access surface as Mat, so kernels can run on
// slices of a flat parameter vector. Use MatRef<const Real> for read-only.
template <typename Real>
struct MatRef {
    Real* base = nullptr;
    int rows = 0;
    int cols = 0;

    MatRef() = default;
    MatRef(Real* p, int r, int c) : base(p), rows(r), cols(c) {}

    Real& at(int r, int c) const { return base[size_t(r) * cols + c]; }
    Real* row(int r) const { return base + size_t(r) * cols; }
    Real* ptr() const { return base; }
    size_t size() const { return size_t(rows) * size_t(cols); }
};

template <typename Real>
MatRef<Real> mref(std::vector<Real>& v, size_t offset, int rows, int cols) {
    return MatRef<Real>(v.data() + offset, rows, cols);
}

template <typename Real>
MatRef<const Real> mref(const std::vector<Real>& v, size_t offset, int rows, int cols) {
    return MatRef<const Real>(v.data() + offset, rows, cols);
}

}  // namespace d2f
