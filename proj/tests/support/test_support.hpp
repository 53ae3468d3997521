// Shared helpers for unit and acceptance tests: deterministic random data,
// independent reference implementations, and the quantization baselines the
// flatten pipeline is compared against.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fq/calibration.hpp"
#include "fq/matrix.hpp"
#include "fq/pipeline.hpp"
#include "fq/quantize.hpp"
#include "fq/smoothing.hpp"
#include "fq/synthetic.hpp"

namespace fqtest {

inline fq::Matrix random_matrix(fq::Rng& rng, std::int64_t rows, std::int64_t cols,
                                double scale = 1.0) {
    fq::Matrix m(rows, cols);
    for (auto& v : m.data) v = scale * rng.gaussian();
    return m;
}

// Random activations with a few channels magnified, the shape that breaks
// naive per-tensor scales.
inline fq::Matrix outlier_matrix(fq::Rng& rng, std::int64_t rows, std::int64_t cols,
                                 std::int64_t n_outliers, double factor_lo, double factor_hi) {
    fq::Matrix m = random_matrix(rng, rows, cols);
    for (std::int64_t k = 0; k < n_outliers; ++k) {
        const std::int64_t c = rng.index(cols);
        const double f = rng.uniform(factor_lo, factor_hi);
        for (std::int64_t i = 0; i < rows; ++i) m.at(i, c) *= f;
    }
    return m;
}

// Independent integer GEMM accumulating in __int128; the oracle for the
// int64-accumulator implementation.
inline std::vector<std::int64_t> reference_int_gemm(const fq::IntMatrix& a,
                                                    const fq::IntMatrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("reference_int_gemm: shape mismatch");
    std::vector<std::int64_t> out(static_cast<std::size_t>(a.rows * b.cols), 0);
    for (std::int64_t i = 0; i < a.rows; ++i) {
        for (std::int64_t j = 0; j < b.cols; ++j) {
            __int128 acc = 0;
            for (std::int64_t k = 0; k < a.cols; ++k) {
                acc += static_cast<__int128>(a.at(i, k)) * static_cast<__int128>(b.at(k, j));
            }
            if (acc > INT64_MAX || acc < INT64_MIN) {
                throw std::overflow_error("reference_int_gemm: accumulator exceeded int64");
            }
            out[static_cast<std::size_t>(i * b.cols + j)] = static_cast<std::int64_t>(acc);
        }
    }
    return out;
}

inline double mse(const fq::Matrix& a, const fq::Matrix& b) {
    double e = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        e += d * d;
    }
    return e / static_cast<double>(a.size());
}

// Naive per-tensor W8A8: static activation scale from the calibration max,
// no smoothing, no flattening.
inline double baseline_w8a8_mse(const fq::Matrix& weight, std::span<const fq::Matrix> calib,
                                const fq::Matrix& x_test) {
    double calib_max = 0.0;
    for (const auto& s : calib) calib_max = std::max(calib_max, fq::max_abs(s));
    const fq::QuantizedTensor qw = fq::quantize_per_tensor(weight, 8);
    const fq::QuantizedTensor qx = fq::quantize_per_tensor(x_test, 8, calib_max / 127.0);
    return mse(fq::int_matmul(qx, qw), fq::matmul(x_test, weight));
}

// Smoothing-only INT8: migrate magnitude between activations and weights,
// then per-tensor static quantization without flattening.
inline double baseline_smooth_only_mse(const fq::Matrix& weight,
                                       std::span<const fq::Matrix> calib,
                                       const fq::Matrix& x_test, double alpha) {
    const fq::ChannelStats stats = fq::collect_channel_maxes(calib);
    const fq::SmoothingScales scales =
        fq::smoothing_scales(stats.max_abs, fq::row_max_abs(weight), alpha);
    const fq::Matrix w_s = fq::scale_rows(weight, scales.s);
    double calib_max = 0.0;
    for (std::size_t j = 0; j < stats.max_abs.size(); ++j) {
        calib_max = std::max(calib_max, stats.max_abs[j] / scales.s[j]);
    }
    const fq::QuantizedTensor qw = fq::quantize_per_tensor(w_s, 8);
    const fq::Matrix x_s = fq::divide_columns(x_test, scales.s);
    const fq::QuantizedTensor qx = fq::quantize_per_tensor(x_s, 8, calib_max / 127.0);
    return mse(fq::int_matmul(qx, qw), fq::matmul(x_test, weight));
}

}  // namespace fqtest
