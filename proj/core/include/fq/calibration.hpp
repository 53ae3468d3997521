// calibration.hpp - per-channel activation statistics and the truncation
// threshold derived from boxplot outlier suppression.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fq/matrix.hpp"

namespace fq {

// Per-channel maxima of |value| aggregated over a calibration set.
struct ChannelStats {
    std::vector<double> max_abs;
    std::int64_t sample_count = 0;
};

// Boxplot-clipped channel maxima and the resulting truncation threshold
// T = beta * mean(clipped).
struct TruncationPolicy {
    double beta = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    std::vector<double> clipped_max;
    double threshold = 0.0;
};

// max_abs[j] = max over all samples and rows of |X[i,j]|. All samples must
// share the same column count; the list must be non-empty.
ChannelStats collect_channel_maxes(std::span<const Matrix> samples);

// Quartiles over the vector of channel maxima (linear interpolation between
// order statistics); every entry clipped to [Q1 - 1.5*IQR, Q3 + 1.5*IQR].
std::vector<double> clip_outlier_channels(std::span<const double> channel_maxes);

// T = beta * mean(clipped). Throws "degenerate calibration" when the clipped
// vector is all zero.
double truncation_threshold(std::span<const double> clipped, double beta);

struct Quartiles {
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
};
Quartiles channel_quartiles(std::span<const double> values);

// Full clip-then-threshold recipe; clipping can be disabled for ablations,
// in which case the quartiles are still reported but no fence is applied.
TruncationPolicy derive_truncation(std::span<const double> channel_maxes, double beta,
                                   bool clip_outliers = true);

}  // namespace fq
