#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace lreg {

// Dense row-major 2-D array of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols)
            throw std::invalid_argument("Matrix: data length != rows*cols");
    }

    static Matrix of(std::initializer_list<std::initializer_list<double>> rws) {
        Matrix m(rws.size(), rws.size() ? rws.begin()->size() : 0);
        std::size_t r = 0;
        for (const auto& row : rws) {
            if (row.size() != m.cols)
                throw std::invalid_argument("Matrix::of: ragged rows");
            std::size_t c = 0;
            for (double v : row) m(r, c++) = v;
            ++r;
        }
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row_ptr(std::size_t r) { return data.data() + r * cols; }
    const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }

    std::size_t size() const { return data.size(); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_finite(const std::string& who) const {
        if (!all_finite()) throw std::invalid_argument(who + ": non-finite entries");
    }
};

inline void require_shape(const Matrix& m, std::size_t r, std::size_t c, const std::string& who) {
    if (m.rows != r || m.cols != c)
        throw std::invalid_argument(who + ": expected " + std::to_string(r) + "x" +
                                    std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                                    std::to_string(m.cols));
}

// C = A * B
inline Matrix matmul(const Matrix& A, const Matrix& B) {
    if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix C(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        double* crow = C.row_ptr(i);
        const double* arow = A.row_ptr(i);
        for (std::size_t l = 0; l < A.cols; ++l) {
            const double a = arow[l];
            if (a == 0.0) continue;
            const double* brow = B.row_ptr(l);
            for (std::size_t j = 0; j < B.cols; ++j) crow[j] += a * brow[j];
        }
    }
    return C;
}

// C = A * B^T, with a multi-accumulator dot so -O3 can vectorize without -ffast-math.
inline Matrix matmul_nt(const Matrix& A, const Matrix& B) {
    if (A.cols != B.cols) throw std::invalid_argument("matmul_nt: inner dimensions differ");
    Matrix C(A.rows, B.rows);
    const std::size_t k = A.cols;
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* a = A.row_ptr(i);
        double* crow = C.row_ptr(i);
        for (std::size_t j = 0; j < B.rows; ++j) {
            const double* b = B.row_ptr(j);
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            std::size_t l = 0;
            for (; l + 4 <= k; l += 4) {
                s0 += a[l] * b[l];
                s1 += a[l + 1] * b[l + 1];
                s2 += a[l + 2] * b[l + 2];
                s3 += a[l + 3] * b[l + 3];
            }
            double s = (s0 + s1) + (s2 + s3);
            for (; l < k; ++l) s += a[l] * b[l];
            crow[j] = s;
        }
    }
    return C;
}

// C = A^T * B
inline Matrix matmul_tn(const Matrix& A, const Matrix& B) {
    if (A.rows != B.rows) throw std::invalid_argument("matmul_tn: inner dimensions differ");
    Matrix C(A.cols, B.cols);
    for (std::size_t l = 0; l < A.rows; ++l) {
        const double* arow = A.row_ptr(l);
        const double* brow = B.row_ptr(l);
        for (std::size_t i = 0; i < A.cols; ++i) {
            const double a = arow[i];
            if (a == 0.0) continue;
            double* crow = C.row_ptr(i);
            for (std::size_t j = 0; j < B.cols; ++j) crow[j] += a * brow[j];
        }
    }
    return C;
}

inline Matrix transpose(const Matrix& A) {
    Matrix T(A.cols, A.rows);
    for (std::size_t r = 0; r < A.rows; ++r)
        for (std::size_t c = 0; c < A.cols; ++c) T(c, r) = A(r, c);
    return T;
}

}  // namespace lreg
