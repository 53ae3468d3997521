#include "fq/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fq {

ChannelStats collect_channel_maxes(std::span<const Matrix> samples) {
    if (samples.empty()) {
        throw std::invalid_argument("empty calibration set");
    }
    const std::int64_t cols = samples.front().cols;
    ChannelStats stats;
    stats.max_abs.assign(static_cast<std::size_t>(cols), 0.0);
    for (const Matrix& m : samples) {
        if (m.cols != cols) {
            throw std::invalid_argument("calibration samples disagree on channel count");
        }
        for (std::int64_t i = 0; i < m.rows; ++i) {
            for (std::int64_t j = 0; j < m.cols; ++j) {
                stats.max_abs[j] = std::max(stats.max_abs[j], std::abs(m.at(i, j)));
            }
        }
        stats.sample_count += m.rows;
    }
    return stats;
}

Quartiles channel_quartiles(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("quartiles of empty vector");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto at_fraction = [&](double p) {
        const double pos = p * static_cast<double>(sorted.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    };
    Quartiles q;
    q.q1 = at_fraction(0.25);
    q.q3 = at_fraction(0.75);
    q.iqr = q.q3 - q.q1;
    return q;
}

std::vector<double> clip_outlier_channels(std::span<const double> channel_maxes) {
    const Quartiles q = channel_quartiles(channel_maxes);
    const double lo = q.q1 - 1.5 * q.iqr;
    const double hi = q.q3 + 1.5 * q.iqr;
    std::vector<double> clipped(channel_maxes.begin(), channel_maxes.end());
    for (double& v : clipped) v = std::clamp(v, lo, hi);
    return clipped;
}

double truncation_threshold(std::span<const double> clipped, double beta) {
    if (clipped.empty()) {
        throw std::invalid_argument("truncation_threshold: empty vector");
    }
    if (beta <= 0.0) {
        throw std::invalid_argument("truncation_threshold: beta must be > 0");
    }
    double sum = 0.0;
    for (double v : clipped) sum += v;
    const double mean = sum / static_cast<double>(clipped.size());
    if (mean <= 0.0) {
        throw std::runtime_error("degenerate calibration: all channel maxima are zero");
    }
    return beta * mean;
}

TruncationPolicy derive_truncation(std::span<const double> channel_maxes, double beta,
                                   bool clip_outliers) {
    TruncationPolicy policy;
    policy.beta = beta;
    const Quartiles q = channel_quartiles(channel_maxes);
    policy.q1 = q.q1;
    policy.q3 = q.q3;
    policy.iqr = q.iqr;
    if (clip_outliers) {
        policy.clipped_max = clip_outlier_channels(channel_maxes);
    } else {
        policy.clipped_max.assign(channel_maxes.begin(), channel_maxes.end());
    }
    policy.threshold = truncation_threshold(policy.clipped_max, beta);
    return policy;
}

}  // namespace fq
