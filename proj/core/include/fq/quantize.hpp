// quantize.hpp - symmetric per-tensor quantization, KL-divergence bit-width
// selection, and the simulated integer GEMM.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fq/matrix.hpp"

namespace fq {

struct QuantParams {
    int bits = 8;  // 4 or 8
    double scale = 1.0;

    std::int32_t qmax() const { return static_cast<std::int32_t>((1 << (bits - 1)) - 1); }
};

struct QuantizedTensor {
    IntMatrix q;
    QuantParams params;
};

// Probability histogram over a symmetric value range, epsilon-floored so KL
// divergence is always finite.
struct HistogramDistribution {
    std::int64_t bin_count = 0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::int64_t> counts;
    std::vector<double> p;

    bool same_layout(const HistogramDistribution& other) const {
        return bin_count == other.bin_count && lo == other.lo && hi == other.hi;
    }
};

// s = scale_override if given, else max|M| / qmax. q = clamp(round(M/s)),
// rounding half away from zero. An all-zero tensor without an override is a
// "degenerate scale" error.
QuantizedTensor quantize_per_tensor(const Matrix& m, int bits,
                                    std::optional<double> scale_override = std::nullopt);

Matrix dequantize(const QuantizedTensor& qt);

// Uniform bins over [-max|M|, +max|M|]; an all-zero tensor becomes a single
// spike at the center bin. Counts are normalized, floored by eps = 1e-10,
// then renormalized.
HistogramDistribution build_histogram(const Matrix& m, std::int64_t bin_count = 2048);
// Same, with an explicit range (used to put quantized data on the reference
// tensor's bin layout).
HistogramDistribution build_histogram(const Matrix& m, std::int64_t bin_count, double lo,
                                      double hi);

// sum p * ln(p/q); layouts must match.
double kl_divergence(const HistogramDistribution& p, const HistogramDistribution& q);

struct BitChoice {
    int bits = 8;
    double ratio_act = 0.0;
    double ratio_weight = 0.0;
};

// A layer earns 4 bits only when KL(P,Q4)/KL(P,Q8) < gamma for BOTH the
// activation and the weight tensor. A near-zero INT8 divergence (< 1e-12)
// is regularized to 1e-12, forcing 8-bit unless INT4 is also lossless.
BitChoice select_bit_width(const Matrix& act, const Matrix& weight, double gamma,
                           std::int64_t bins = 2048);

// True when |acc| <= inner_dim * qmax_x * qmax_w provably fits an int64.
bool accumulator_bound_ok(std::int64_t qmax_x, std::int64_t qmax_w, std::int64_t inner_dim);

// Integer products accumulated in int64; rejects shapes whose worst-case
// accumulator could overflow.
std::vector<std::int64_t> int_matmul_raw(const QuantizedTensor& qx, const QuantizedTensor& qw);

// int_matmul_raw dequantized by s_x * s_w.
Matrix int_matmul(const QuantizedTensor& qx, const QuantizedTensor& qw);

}  // namespace fq
