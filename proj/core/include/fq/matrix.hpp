// matrix.hpp - dense row-major matrices and the reference double-precision GEMM
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fq {

// Dense 2-D tensor. Activations are tokens x channels, weights are
// in_channels x out_channels, both row-major.
struct Matrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::int64_t r, std::int64_t c);  // zero-filled; requires r,c >= 1
    Matrix(std::int64_t r, std::int64_t c, std::vector<double> values);

    double& at(std::int64_t i, std::int64_t j) { return data[i * cols + j]; }
    double at(std::int64_t i, std::int64_t j) const { return data[i * cols + j]; }
    std::int64_t size() const { return rows * cols; }

    bool operator==(const Matrix&) const = default;
};

// Integer matrix backing quantized tensors; stored as int32 on disk.
struct IntMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<std::int32_t> data;

    IntMatrix() = default;
    IntMatrix(std::int64_t r, std::int64_t c);
    IntMatrix(std::int64_t r, std::int64_t c, std::vector<std::int32_t> values);

    std::int32_t& at(std::int64_t i, std::int64_t j) { return data[i * cols + j]; }
    std::int32_t at(std::int64_t i, std::int64_t j) const { return data[i * cols + j]; }
    std::int64_t size() const { return rows * cols; }

    bool operator==(const IntMatrix&) const = default;
};

// Reference GEMM in double precision, deterministic i-k-j loop order.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

double max_abs(const Matrix& m);
// Largest |a - b| over all entries; shapes must match.
double max_abs_diff(const Matrix& a, const Matrix& b);

// Per-channel maxima of |value|.
std::vector<double> column_max_abs(const Matrix& m);
std::vector<double> row_max_abs(const Matrix& m);

bool all_finite(const Matrix& m);

}  // namespace fq
