#include "fq/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fq {

namespace {

constexpr double kHistogramEps = 1e-10;
constexpr double kKlFloor = 1e-12;

void check_bits(int bits) {
    if (bits != 4 && bits != 8) {
        throw std::invalid_argument("bits must be 4 or 8");
    }
}

}  // namespace

QuantizedTensor quantize_per_tensor(const Matrix& m, int bits,
                                    std::optional<double> scale_override) {
    check_bits(bits);
    QuantizedTensor qt;
    qt.params.bits = bits;
    const double qmax = static_cast<double>(qt.params.qmax());
    if (scale_override.has_value()) {
        if (*scale_override <= 0.0 || !std::isfinite(*scale_override)) {
            throw std::invalid_argument("quantize_per_tensor: scale override must be positive");
        }
        qt.params.scale = *scale_override;
    } else {
        const double mx = max_abs(m);
        if (mx == 0.0) {
            throw std::runtime_error("degenerate scale: all-zero tensor and no override");
        }
        qt.params.scale = mx / qmax;
    }
    qt.q = IntMatrix(m.rows, m.cols);
    const double s = qt.params.scale;
    for (std::int64_t i = 0; i < m.size(); ++i) {
        const double r = std::round(m.data[i] / s);  // half away from zero
        qt.q.data[i] = static_cast<std::int32_t>(std::clamp(r, -qmax, qmax));
    }
    return qt;
}

Matrix dequantize(const QuantizedTensor& qt) {
    Matrix out(qt.q.rows, qt.q.cols);
    for (std::int64_t i = 0; i < qt.q.size(); ++i) {
        out.data[i] = static_cast<double>(qt.q.data[i]) * qt.params.scale;
    }
    return out;
}

HistogramDistribution build_histogram(const Matrix& m, std::int64_t bin_count) {
    const double mx = max_abs(m);
    if (mx == 0.0) {
        // Degenerate all-zero tensor: a spike at the center of a fixed range.
        HistogramDistribution h;
        if (bin_count < 16) throw std::invalid_argument("build_histogram: bin_count < 16");
        h.bin_count = bin_count;
        h.lo = -1.0;
        h.hi = 1.0;
        h.counts.assign(static_cast<std::size_t>(bin_count), 0);
        h.counts[static_cast<std::size_t>(bin_count / 2)] = m.size();
        h.p.assign(static_cast<std::size_t>(bin_count), 0.0);
        const double total = static_cast<double>(m.size());
        double norm = 0.0;
        for (std::size_t i = 0; i < h.p.size(); ++i) {
            h.p[i] = static_cast<double>(h.counts[i]) / total + kHistogramEps;
            norm += h.p[i];
        }
        for (double& v : h.p) v /= norm;
        return h;
    }
    return build_histogram(m, bin_count, -mx, mx);
}

HistogramDistribution build_histogram(const Matrix& m, std::int64_t bin_count, double lo,
                                      double hi) {
    if (bin_count < 16) {
        throw std::invalid_argument("build_histogram: bin_count < 16");
    }
    if (!(hi > lo)) {
        throw std::invalid_argument("build_histogram: empty range");
    }
    HistogramDistribution h;
    h.bin_count = bin_count;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(static_cast<std::size_t>(bin_count), 0);
    const double width = (hi - lo) / static_cast<double>(bin_count);
    for (double v : m.data) {
        auto bin = static_cast<std::int64_t>(std::floor((v - lo) / width));
        bin = std::clamp<std::int64_t>(bin, 0, bin_count - 1);
        ++h.counts[static_cast<std::size_t>(bin)];
    }
    const double total = static_cast<double>(m.size());
    h.p.assign(static_cast<std::size_t>(bin_count), 0.0);
    double norm = 0.0;
    for (std::size_t i = 0; i < h.p.size(); ++i) {
        h.p[i] = static_cast<double>(h.counts[i]) / total + kHistogramEps;
        norm += h.p[i];
    }
    for (double& v : h.p) v /= norm;
    return h;
}

double kl_divergence(const HistogramDistribution& p, const HistogramDistribution& q) {
    if (!p.same_layout(q)) {
        throw std::invalid_argument("kl_divergence: bin layouts differ");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < p.p.size(); ++i) {
        kl += p.p[i] * std::log(p.p[i] / q.p[i]);
    }
    return std::max(kl, 0.0);
}

namespace {

// KL(P, Q_bits) with Q built from the round-tripped tensor on P's bin layout.
double quantization_divergence(const Matrix& m, const HistogramDistribution& reference,
                               int bits) {
    const QuantizedTensor qt = quantize_per_tensor(m, bits);
    const Matrix deq = dequantize(qt);
    const HistogramDistribution q =
        build_histogram(deq, reference.bin_count, reference.lo, reference.hi);
    return kl_divergence(reference, q);
}

double divergence_ratio(const Matrix& m, std::int64_t bins) {
    if (max_abs(m) == 0.0) {
        // Zero tensor: INT4 is already lossless.
        return 0.0;
    }
    const HistogramDistribution p = build_histogram(m, bins);
    const double kl4 = quantization_divergence(m, p, 4);
    const double kl8 = quantization_divergence(m, p, 8);
    return kl4 / std::max(kl8, kKlFloor);
}

}  // namespace

BitChoice select_bit_width(const Matrix& act, const Matrix& weight, double gamma,
                           std::int64_t bins) {
    if (gamma < 0.0) {
        throw std::invalid_argument("select_bit_width: gamma must be >= 0");
    }
    BitChoice choice;
    choice.ratio_act = divergence_ratio(act, bins);
    choice.ratio_weight = divergence_ratio(weight, bins);
    choice.bits = (choice.ratio_act < gamma && choice.ratio_weight < gamma) ? 4 : 8;
    return choice;
}

bool accumulator_bound_ok(std::int64_t qmax_x, std::int64_t qmax_w, std::int64_t inner_dim) {
    if (qmax_x <= 0 || qmax_w <= 0 || inner_dim <= 0) return false;
    const std::int64_t limit = std::numeric_limits<std::int64_t>::max();
    return inner_dim <= limit / (qmax_x * qmax_w);
}

std::vector<std::int64_t> int_matmul_raw(const QuantizedTensor& qx, const QuantizedTensor& qw) {
    const IntMatrix& a = qx.q;
    const IntMatrix& b = qw.q;
    if (a.cols != b.rows) {
        throw std::invalid_argument("int_matmul: inner dimensions do not match");
    }
    if (!accumulator_bound_ok(qx.params.qmax(), qw.params.qmax(), a.cols)) {
        throw std::invalid_argument(
            "int_matmul: accumulator could overflow int64 for this shape");
    }
    std::vector<std::int64_t> acc(static_cast<std::size_t>(a.rows * b.cols), 0);
    for (std::int64_t i = 0; i < a.rows; ++i) {
        for (std::int64_t k = 0; k < a.cols; ++k) {
            const std::int64_t aik = a.at(i, k);
            if (aik == 0) continue;
            for (std::int64_t j = 0; j < b.cols; ++j) {
                acc[static_cast<std::size_t>(i * b.cols + j)] +=
                    aik * static_cast<std::int64_t>(b.at(k, j));
            }
        }
    }
    return acc;
}

Matrix int_matmul(const QuantizedTensor& qx, const QuantizedTensor& qw) {
    const auto acc = int_matmul_raw(qx, qw);
    Matrix out(qx.q.rows, qw.q.cols);
    const double s = qx.params.scale * qw.params.scale;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        out.data[i] = static_cast<double>(acc[i]) * s;
    }
    return out;
}

}  // namespace fq
