#include "fq/smoothing.hpp"

#include <cmath>
#include <stdexcept>

namespace fq {

namespace {

struct Moments {
    double mu = 0.0;
    double sigma = 0.0;
};

Moments channel_moments(std::span<const double> maxes) {
    Moments m;
    double sum = 0.0;
    for (double v : maxes) sum += v;
    m.mu = sum / static_cast<double>(maxes.size());
    double sq = 0.0;
    for (double v : maxes) sq += (v - m.mu) * (v - m.mu);
    m.sigma = std::sqrt(sq / static_cast<double>(maxes.size()));
    return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double normalized(double v, const Moments& m) {
    return m.sigma > 0.0 ? (v - m.mu) / m.sigma : 0.0;
}

}  // namespace

SmoothingScales smoothing_scales(std::span<const double> act_maxes,
                                 std::span<const double> weight_maxes, double alpha) {
    if (act_maxes.size() != weight_maxes.size()) {
        throw std::invalid_argument("smoothing_scales: channel count mismatch");
    }
    if (act_maxes.empty()) {
        throw std::invalid_argument("smoothing_scales: empty channel maxima");
    }
    if (alpha < 0.0 || alpha > 1.0) {
        throw std::invalid_argument("smoothing_scales: alpha must be in [0,1]");
    }
    const auto nonzero = [](std::span<const double> v) {
        for (double x : v)
            if (x != 0.0) return true;
        return false;
    };
    if (!nonzero(act_maxes) || !nonzero(weight_maxes)) {
        throw std::invalid_argument("smoothing_scales: all channel maxima are zero");
    }

    SmoothingScales out;
    out.alpha = alpha;
    const Moments m = channel_moments(act_maxes);
    out.mu = m.mu;
    out.sigma = m.sigma;
    out.s.resize(act_maxes.size());
    for (std::size_t j = 0; j < act_maxes.size(); ++j) {
        const double num = std::pow(sigmoid(normalized(act_maxes[j], m)), alpha);
        const double den = std::pow(sigmoid(normalized(weight_maxes[j], m)), 1.0 - alpha);
        out.s[j] = num / den;
    }
    return out;
}

Matrix divide_columns(const Matrix& x, std::span<const double> s) {
    if (static_cast<std::size_t>(x.cols) != s.size()) {
        throw std::invalid_argument("divide_columns: scale length mismatch");
    }
    Matrix out = x;
    for (std::int64_t i = 0; i < out.rows; ++i) {
        for (std::int64_t j = 0; j < out.cols; ++j) {
            out.at(i, j) /= s[j];
        }
    }
    return out;
}

Matrix scale_rows(const Matrix& w, std::span<const double> s) {
    if (static_cast<std::size_t>(w.rows) != s.size()) {
        throw std::invalid_argument("scale_rows: scale length mismatch");
    }
    Matrix out = w;
    for (std::int64_t i = 0; i < out.rows; ++i) {
        for (std::int64_t j = 0; j < out.cols; ++j) {
            out.at(i, j) *= s[i];
        }
    }
    return out;
}

std::pair<Matrix, Matrix> apply_smoothing(const Matrix& x, const Matrix& w,
                                          const SmoothingScales& scales) {
    if (x.cols != w.rows) {
        throw std::invalid_argument("apply_smoothing: X cols must equal W rows");
    }
    return {divide_columns(x, scales.s), scale_rows(w, scales.s)};
}

}  // namespace fq
