#include "fq/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace fq {

namespace {

void check_shape(std::int64_t r, std::int64_t c) {
    if (r < 1 || c < 1) {
        throw std::invalid_argument("matrix dims must be >= 1");
    }
}

}  // namespace

Matrix::Matrix(std::int64_t r, std::int64_t c) : rows(r), cols(c) {
    check_shape(r, c);
    data.assign(static_cast<std::size_t>(r * c), 0.0);
}

Matrix::Matrix(std::int64_t r, std::int64_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    check_shape(r, c);
    if (static_cast<std::int64_t>(data.size()) != r * c) {
        throw std::invalid_argument("matrix data length does not match dims");
    }
}

IntMatrix::IntMatrix(std::int64_t r, std::int64_t c) : rows(r), cols(c) {
    check_shape(r, c);
    data.assign(static_cast<std::size_t>(r * c), 0);
}

IntMatrix::IntMatrix(std::int64_t r, std::int64_t c, std::vector<std::int32_t> values)
    : rows(r), cols(c), data(std::move(values)) {
    check_shape(r, c);
    if (static_cast<std::int64_t>(data.size()) != r * c) {
        throw std::invalid_argument("matrix data length does not match dims");
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions do not match");
    }
    Matrix out(a.rows, b.cols);
    for (std::int64_t i = 0; i < a.rows; ++i) {
        for (std::int64_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::int64_t j = 0; j < b.cols; ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::int64_t i = 0; i < m.rows; ++i) {
        for (std::int64_t j = 0; j < m.cols; ++j) {
            out.at(j, i) = m.at(i, j);
        }
    }
    return out;
}

double max_abs(const Matrix& m) {
    double mx = 0.0;
    for (double v : m.data) mx = std::max(mx, std::abs(v));
    return mx;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    }
    double mx = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        mx = std::max(mx, std::abs(a.data[i] - b.data[i]));
    }
    return mx;
}

std::vector<double> column_max_abs(const Matrix& m) {
    std::vector<double> mx(static_cast<std::size_t>(m.cols), 0.0);
    for (std::int64_t i = 0; i < m.rows; ++i) {
        for (std::int64_t j = 0; j < m.cols; ++j) {
            mx[j] = std::max(mx[j], std::abs(m.at(i, j)));
        }
    }
    return mx;
}

std::vector<double> row_max_abs(const Matrix& m) {
    std::vector<double> mx(static_cast<std::size_t>(m.rows), 0.0);
    for (std::int64_t i = 0; i < m.rows; ++i) {
        for (std::int64_t j = 0; j < m.cols; ++j) {
            mx[i] = std::max(mx[i], std::abs(m.at(i, j)));
        }
    }
    return mx;
}

bool all_finite(const Matrix& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace fq
