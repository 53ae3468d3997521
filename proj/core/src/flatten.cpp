#include "fq/flatten.hpp"

#include <cmath>
#include <stdexcept>

namespace fq {

SlotSplit split_against_threshold(double abs_value, double threshold) {
    // fmod is exact, so abs_value == count*threshold + remainder holds as a
    // real-number identity and the remainder is strictly below threshold.
    SlotSplit s;
    s.remainder = std::fmod(abs_value, threshold);
    s.count = static_cast<std::int64_t>(std::llround((abs_value - s.remainder) / threshold));
    return s;
}

FlattenPlan build_flatten_plan(std::span<const double> channel_maxes, double threshold,
                               std::int64_t block) {
    if (threshold <= 0.0) {
        throw std::invalid_argument("build_flatten_plan: threshold must be > 0");
    }
    if (block < 1) {
        throw std::invalid_argument("build_flatten_plan: block must be >= 1");
    }
    if (channel_maxes.empty()) {
        throw std::invalid_argument("build_flatten_plan: no channels");
    }
    FlattenPlan plan;
    plan.threshold = threshold;
    plan.block = block;
    plan.extensions.reserve(channel_maxes.size());
    plan.ext_offset.reserve(channel_maxes.size());
    for (double mx : channel_maxes) {
        if (mx < 0.0 || !std::isfinite(mx)) {
            throw std::invalid_argument("build_flatten_plan: channel maxima must be finite and >= 0");
        }
        plan.ext_offset.push_back(plan.c_extend);
        const std::int64_t e = split_against_threshold(mx, threshold).count;
        plan.extensions.push_back(e);
        plan.c_extend += e;
    }
    const std::int64_t width = plan.width();
    plan.padded_width = (width + block - 1) / block * block;
    return plan;
}

std::vector<std::int64_t> FlattenPlan::slot_of(std::int64_t j) const {
    std::vector<std::int64_t> slots;
    slots.reserve(static_cast<std::size_t>(extensions[j]) + 1);
    slots.push_back(j);
    const std::int64_t first = channels() + ext_offset[j];
    for (std::int64_t k = 0; k < extensions[j]; ++k) slots.push_back(first + k);
    return slots;
}

namespace {

// Writes the split of x into the slot group of channel j. `put(slot_index,
// value)` receives positions within the ordered slot list [j, ext...].
template <typename Put>
bool split_into_slots(double x, double t, std::int64_t capacity_slots, Put&& put) {
    const double sign = x < 0.0 ? -1.0 : 1.0;
    SlotSplit s = split_against_threshold(std::abs(x), t);
    bool saturated = false;
    if (s.count > capacity_slots || (s.count == capacity_slots && s.remainder > 0.0)) {
        // Exceeds (E+1)*T: clip to channel capacity.
        s.count = capacity_slots;
        s.remainder = 0.0;
        saturated = true;
    }
    for (std::int64_t k = 0; k < s.count; ++k) put(k, sign * t);
    if (s.count < capacity_slots) put(s.count, sign * s.remainder);
    return saturated;
}

Matrix flatten_columns_impl(const Matrix& x, const FlattenPlan& plan, bool strict,
                            std::int64_t* saturated_out) {
    if (x.cols != plan.channels()) {
        throw std::invalid_argument("flatten_tensor: column count does not match plan");
    }
    Matrix out(x.rows, plan.padded_width);
    std::int64_t saturated = 0;
    for (std::int64_t i = 0; i < x.rows; ++i) {
        for (std::int64_t j = 0; j < x.cols; ++j) {
            const double v = x.at(i, j);
            const std::int64_t first_ext = plan.channels() + plan.ext_offset[j];
            const auto put = [&](std::int64_t k, double val) {
                out.at(i, k == 0 ? j : first_ext + k - 1) = val;
            };
            if (split_into_slots(v, plan.threshold, plan.extensions[j] + 1, put)) {
                if (strict) {
                    throw std::runtime_error(
                        "flatten_tensor: value exceeds plan capacity (plan built from "
                        "different statistics)");
                }
                ++saturated;
            }
        }
    }
    if (saturated_out != nullptr) *saturated_out = saturated;
    return out;
}

Matrix flatten_rows_impl(const Matrix& w, const FlattenPlan& plan, bool strict) {
    if (w.rows != plan.channels()) {
        throw std::invalid_argument("flatten_rows: row count does not match plan");
    }
    Matrix out(plan.padded_width, w.cols);
    for (std::int64_t j = 0; j < w.rows; ++j) {
        const std::int64_t first_ext = plan.channels() + plan.ext_offset[j];
        for (std::int64_t c = 0; c < w.cols; ++c) {
            const double v = w.at(j, c);
            const auto put = [&](std::int64_t k, double val) {
                out.at(k == 0 ? j : first_ext + k - 1, c) = val;
            };
            if (split_into_slots(v, plan.threshold, plan.extensions[j] + 1, put) && strict) {
                throw std::runtime_error(
                    "flatten_rows: value exceeds plan capacity (plan built from different "
                    "statistics)");
            }
        }
    }
    return out;
}

}  // namespace

Matrix flatten_tensor(const Matrix& x, const FlattenPlan& plan) {
    return flatten_columns_impl(x, plan, /*strict=*/true, nullptr);
}

Matrix flatten_tensor(const Matrix& x, const FlattenPlan& plan, std::int64_t& saturated) {
    return flatten_columns_impl(x, plan, /*strict=*/false, &saturated);
}

Matrix repeat_channels(const Matrix& w, const FlattenPlan& plan) {
    if (w.rows != plan.channels()) {
        throw std::invalid_argument("repeat_channels: row count does not match plan");
    }
    Matrix out(plan.padded_width, w.cols);
    for (std::int64_t j = 0; j < w.rows; ++j) {
        const std::int64_t first_ext = plan.channels() + plan.ext_offset[j];
        for (std::int64_t c = 0; c < w.cols; ++c) {
            const double v = w.at(j, c);
            out.at(j, c) = v;
            for (std::int64_t k = 0; k < plan.extensions[j]; ++k) {
                out.at(first_ext + k, c) = v;
            }
        }
    }
    return out;
}

Matrix flatten_rows(const Matrix& w, const FlattenPlan& plan) {
    return flatten_rows_impl(w, plan, /*strict=*/true);
}

Matrix repeat_columns(const Matrix& x, const FlattenPlan& plan) {
    if (x.cols != plan.channels()) {
        throw std::invalid_argument("repeat_columns: column count does not match plan");
    }
    Matrix out(x.rows, plan.padded_width);
    for (std::int64_t i = 0; i < x.rows; ++i) {
        for (std::int64_t j = 0; j < x.cols; ++j) {
            const double v = x.at(i, j);
            out.at(i, j) = v;
            const std::int64_t first_ext = plan.channels() + plan.ext_offset[j];
            for (std::int64_t k = 0; k < plan.extensions[j]; ++k) {
                out.at(i, first_ext + k) = v;
            }
        }
    }
    return out;
}

FlattenPair flatten_pair(const Matrix& x, const Matrix& w, double t_x, double t_w,
                         std::int64_t block) {
    if (x.cols != w.rows) {
        throw std::invalid_argument("flatten_pair: X cols must equal W rows");
    }
    FlattenPair out;
    // Stage 1: flatten activation channels, repeat weight rows.
    out.plan_x = build_flatten_plan(column_max_abs(x), t_x, block);
    Matrix x1 = flatten_tensor(x, out.plan_x);
    Matrix w1 = repeat_channels(w, out.plan_x);
    // Stage 2: flatten weight rows, repeat activation columns.
    out.plan_w = build_flatten_plan(row_max_abs(w1), t_w, block);
    out.w = flatten_rows(w1, out.plan_w);
    out.x = repeat_columns(x1, out.plan_w);
    return out;
}

}  // namespace fq
