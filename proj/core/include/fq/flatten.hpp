// flatten.hpp - channel flattening: oversized values are split across
// extension channels capped at the truncation threshold T, and the partner
// tensor repeats the corresponding channels so the matmul is unchanged.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fq/matrix.hpp"

namespace fq {

// Channel extension layout. Channel j owns slot j plus E[j] extension slots
// starting at channels() + ext_offset[j]; remaining columns up to
// padded_width are zero alignment padding.
struct FlattenPlan {
    double threshold = 0.0;
    std::vector<std::int64_t> extensions;
    std::vector<std::int64_t> ext_offset;  // prefix sums of extensions
    std::int64_t c_extend = 0;
    std::int64_t padded_width = 0;
    std::int64_t block = 32;

    std::int64_t channels() const { return static_cast<std::int64_t>(extensions.size()); }
    std::int64_t width() const { return channels() + c_extend; }
    bool identity() const { return c_extend == 0; }
    double flatten_ratio() const {
        return static_cast<double>(c_extend) / static_cast<double>(channels());
    }
    // Ordered slot list [j, first_ext .. first_ext + E[j] - 1].
    std::vector<std::int64_t> slot_of(std::int64_t j) const;
};

// E_j = floor(max_j / T); padded_width is width() rounded up to block.
FlattenPlan build_flatten_plan(std::span<const double> channel_maxes, double threshold,
                               std::int64_t block = 32);

// Value split for one element: |x| = count*T + remainder with remainder in
// [0, T); count == E+1 only for exact capacity fits. Shared by planning and
// flattening so plans built from true maxima can never overflow.
struct SlotSplit {
    std::int64_t count = 0;
    double remainder = 0.0;
};
SlotSplit split_against_threshold(double abs_value, double threshold);

// Columns are channels. Strict variant throws when an element exceeds the
// plan capacity (E+1)*T; the saturating variant clips such elements to
// capacity and counts them (inference-time path).
Matrix flatten_tensor(const Matrix& x, const FlattenPlan& plan);
Matrix flatten_tensor(const Matrix& x, const FlattenPlan& plan, std::int64_t& saturated);

// Rows are channels: row j is copied into every slot of slot_of(j).
Matrix repeat_channels(const Matrix& w, const FlattenPlan& plan);

// Transposed counterparts used for the weight-side flatten stage.
Matrix flatten_rows(const Matrix& w, const FlattenPlan& plan);
Matrix repeat_columns(const Matrix& x, const FlattenPlan& plan);

// Two-stage flatten: activations split by plan_x with weight rows repeated,
// then weight rows split by plan_w with activation columns repeated.
// x * w is preserved exactly (up to reassociation) throughout.
struct FlattenPair {
    Matrix x;
    Matrix w;
    FlattenPlan plan_x;
    FlattenPlan plan_w;
};
FlattenPair flatten_pair(const Matrix& x, const Matrix& w, double t_x, double t_w,
                         std::int64_t block = 32);

}  // namespace fq
