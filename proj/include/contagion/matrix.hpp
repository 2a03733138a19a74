#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "contagion/errors.hpp"
#include "contagion/rng.hpp"

namespace contagion {

/// Dense row-major matrix of doubles. Everything in the numerical core is
/// 64-bit so finite-difference audits are meaningful.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    static Matrix zeros(int r, int c) { return Matrix(r, c); }

    static Matrix full(int r, int c, double v) {
        Matrix m(r, c);
        for (double& x : m.a) x = v;
        return m;
    }

    static Matrix uniform(int r, int c, double lo, double hi, Rng& rng) {
        Matrix m(r, c);
        for (double& x : m.a) x = rng.uniform(lo, hi);
        return m;
    }

    double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : a)
            if (!std::isfinite(x)) return false;
        return true;
    }

    friend bool operator==(const Matrix& x, const Matrix& y) {
        return x.rows == y.rows && x.cols == y.cols && x.a == y.a;
    }
};

inline void require_shape(const Matrix& m, int r, int c, const char* what) {
    if (m.rows != r || m.cols != c)
        throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(r) + "x" +
                                std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                                std::to_string(m.cols));
}

inline Matrix matmul(const Matrix& A, const Matrix& B) {
    if (A.cols != B.rows) throw DimensionMismatch("matmul inner dimensions");
    Matrix C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int k = 0; k < A.cols; ++k) {
            const double aik = A(i, k);
            if (aik == 0.0) continue;
            const double* brow = &B.a[static_cast<std::size_t>(k) * B.cols];
            double* crow = &C.a[static_cast<std::size_t>(i) * C.cols];
            for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    return C;
}

/// A * B^T
inline Matrix matmul_nt(const Matrix& A, const Matrix& B) {
    if (A.cols != B.cols) throw DimensionMismatch("matmul_nt inner dimensions");
    Matrix C(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < B.rows; ++j) {
            double s = 0.0;
            const double* ar = &A.a[static_cast<std::size_t>(i) * A.cols];
            const double* br = &B.a[static_cast<std::size_t>(j) * B.cols];
            for (int k = 0; k < A.cols; ++k) s += ar[k] * br[k];
            C(i, j) = s;
        }
    return C;
}

/// A^T * B
inline Matrix matmul_tn(const Matrix& A, const Matrix& B) {
    if (A.rows != B.rows) throw DimensionMismatch("matmul_tn inner dimensions");
    Matrix C(A.cols, B.cols);
    for (int k = 0; k < A.rows; ++k)
        for (int i = 0; i < A.cols; ++i) {
            const double aki = A(k, i);
            if (aki == 0.0) continue;
            const double* brow = &B.a[static_cast<std::size_t>(k) * B.cols];
            double* crow = &C.a[static_cast<std::size_t>(i) * C.cols];
            for (int j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
        }
    return C;
}

inline void axpy(Matrix& y, double alpha, const Matrix& x) {
    if (!y.same_shape(x)) throw DimensionMismatch("axpy shapes");
    for (std::size_t i = 0; i < y.a.size(); ++i) y.a[i] += alpha * x.a[i];
}

} // namespace contagion
