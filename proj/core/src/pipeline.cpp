#include "fq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fq {

namespace {

constexpr double kSqnrCapDb = 300.0;

int qmax_for(int bits) { return (1 << (bits - 1)) - 1; }

std::vector<double> unit_scales(std::size_t n) { return std::vector<double>(n, 1.0); }

}  // namespace

std::string to_string(QuantMode mode) {
    switch (mode) {
        case QuantMode::O1: return "o1";
        case QuantMode::O2: return "o2";
        case QuantMode::O3: return "o3";
    }
    throw std::logic_error("unreachable");
}

QuantMode parse_quant_mode(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "o1") return QuantMode::O1;
    if (s == "o2") return QuantMode::O2;
    if (s == "o3") return QuantMode::O3;
    throw std::invalid_argument("unknown quantization mode: " + name);
}

std::string to_string(SweepParam param) {
    switch (param) {
        case SweepParam::Beta: return "beta";
        case SweepParam::Gamma: return "gamma";
        case SweepParam::Alpha: return "alpha";
        case SweepParam::Clip: return "clip";
        case SweepParam::Smooth: return "smooth";
    }
    throw std::logic_error("unreachable");
}

SweepParam parse_sweep_param(const std::string& name) {
    if (name == "beta") return SweepParam::Beta;
    if (name == "gamma") return SweepParam::Gamma;
    if (name == "alpha") return SweepParam::Alpha;
    if (name == "clip") return SweepParam::Clip;
    if (name == "smooth") return SweepParam::Smooth;
    throw std::invalid_argument("unknown sweep parameter: " + name);
}

Matrix vstack(std::span<const Matrix> samples) {
    if (samples.empty()) {
        throw std::invalid_argument("vstack: no samples");
    }
    const std::int64_t cols = samples.front().cols;
    std::int64_t rows = 0;
    for (const Matrix& m : samples) {
        if (m.cols != cols) throw std::invalid_argument("vstack: column mismatch");
        rows += m.rows;
    }
    Matrix out(rows, cols);
    std::int64_t r = 0;
    for (const Matrix& m : samples) {
        std::copy(m.data.begin(), m.data.end(), out.data.begin() + r * cols);
        r += m.rows;
    }
    return out;
}

LayerQuantConfig quantize_layer(const Matrix& weight, std::span<const Matrix> calib,
                                const QuantOptions& options) {
    if (calib.empty()) {
        throw std::invalid_argument("quantize_layer: empty calibration set");
    }
    if (weight.rows != calib.front().cols) {
        throw std::invalid_argument("quantize_layer: weight rows must match activation channels");
    }

    LayerQuantConfig cfg;
    cfg.options = options;

    // Raw per-channel statistics.
    const ChannelStats act_stats = collect_channel_maxes(calib);
    const std::vector<double> weight_maxes = row_max_abs(weight);

    // Channel smoothing (scales fold into the stored weight; activations are
    // divided at inference).
    if (options.smooth) {
        cfg.smooth_scales = smoothing_scales(act_stats.max_abs, weight_maxes, options.alpha);
    } else {
        cfg.smooth_scales.alpha = options.alpha;
        cfg.smooth_scales.s = unit_scales(act_stats.max_abs.size());
    }
    const Matrix w_smoothed = scale_rows(weight, cfg.smooth_scales.s);

    std::vector<double> smoothed_act_maxes(act_stats.max_abs.size());
    for (std::size_t j = 0; j < smoothed_act_maxes.size(); ++j) {
        smoothed_act_maxes[j] = act_stats.max_abs[j] / cfg.smooth_scales.s[j];
    }

    // Activation truncation threshold and plan.
    cfg.truncation = derive_truncation(smoothed_act_maxes, options.beta, options.clip);
    cfg.plan_x = build_flatten_plan(smoothed_act_maxes, cfg.truncation.threshold, options.block);

    // Weight side: repeat rows per the activation plan, then flatten rows by
    // the weight's own threshold. Alignment pad rows are excluded from the
    // threshold statistics (their maxima are structurally zero).
    const Matrix w_repeated = repeat_channels(w_smoothed, cfg.plan_x);
    const std::vector<double> w_row_maxes = row_max_abs(w_repeated);
    const std::span<const double> w_real_maxes(w_row_maxes.data(),
                                               static_cast<std::size_t>(cfg.plan_x.width()));
    cfg.truncation_w = derive_truncation(w_real_maxes, options.beta, options.clip);
    cfg.plan_w = build_flatten_plan(w_row_maxes, cfg.truncation_w.threshold, options.block);
    const Matrix w_flat = flatten_rows(w_repeated, cfg.plan_w);

    // Calibration activations through the inference-time transform.
    std::vector<Matrix> flat_acts;
    flat_acts.reserve(calib.size());
    for (const Matrix& sample : calib) {
        const Matrix divided = divide_columns(sample, cfg.smooth_scales.s);
        flat_acts.push_back(repeat_columns(flatten_tensor(divided, cfg.plan_x), cfg.plan_w));
    }

    // Bit-width selection. O1 pins 8 bits; the ratios are still recorded.
    const Matrix stacked = vstack(flat_acts);
    const BitChoice choice = select_bit_width(stacked, w_flat, options.gamma, options.bins);
    cfg.kl_ratio_act = choice.ratio_act;
    cfg.kl_ratio_w = choice.ratio_weight;
    cfg.bits = options.mode == QuantMode::O1 ? 8 : choice.bits;

    // Static activation scale; weight scale from the actual post-flatten max.
    cfg.act_scale = cfg.truncation.threshold / static_cast<double>(qmax_for(cfg.bits));
    const double w_max = max_abs(w_flat);
    if (w_max == 0.0) {
        throw std::runtime_error("quantize_layer: weight is all zero");
    }
    const double w_scale = w_max / static_cast<double>(qmax_for(cfg.bits));
    QuantParams w_params{cfg.bits, w_scale};
    if (options.mode == QuantMode::O3) {
        const HessianEstimate hess = hessian_from_calibration(flat_acts, options.damping);
        cfg.weight_q = gptq_optimize(w_flat, hess, w_params);
    } else {
        cfg.weight_q = quantize_per_tensor(w_flat, cfg.bits, w_scale);
    }
    return cfg;
}

Matrix run_layer(const LayerQuantConfig& cfg, const Matrix& x) {
    std::int64_t ignored = 0;
    return run_layer(cfg, x, ignored);
}

Matrix run_layer(const LayerQuantConfig& cfg, const Matrix& x,
                 std::int64_t& saturation_events) {
    if (x.cols != cfg.plan_x.channels()) {
        throw std::invalid_argument("run_layer: input channel count does not match recipe");
    }
    const Matrix divided = divide_columns(x, cfg.smooth_scales.s);
    const Matrix flat = flatten_tensor(divided, cfg.plan_x, saturation_events);
    const Matrix repeated = repeat_columns(flat, cfg.plan_w);
    const QuantizedTensor qx = quantize_per_tensor(repeated, cfg.bits, cfg.act_scale);
    return int_matmul(qx, cfg.weight_q);
}

LayerReport evaluate_layer(const LayerQuantConfig& cfg, const Matrix& x_test,
                           const Matrix& w_ref) {
    const Matrix reference = matmul(x_test, w_ref);
    LayerReport rep;
    Matrix actual = run_layer(cfg, x_test, rep.saturation_events);

    double err_sq = 0.0;
    double sig_sq = 0.0;
    double dot = 0.0;
    double act_sq = 0.0;
    for (std::int64_t i = 0; i < reference.size(); ++i) {
        const double r = reference.data[i];
        const double a = actual.data[i];
        err_sq += (a - r) * (a - r);
        sig_sq += r * r;
        act_sq += a * a;
        dot += a * r;
    }
    const auto n = static_cast<double>(reference.size());
    rep.output_mse = err_sq / n;
    if (err_sq == 0.0) {
        rep.sqnr_db = kSqnrCapDb;
    } else if (sig_sq == 0.0) {
        rep.sqnr_db = -kSqnrCapDb;
    } else {
        rep.sqnr_db = std::clamp(10.0 * std::log10(sig_sq / err_sq), -kSqnrCapDb, kSqnrCapDb);
    }
    const double norms = std::sqrt(sig_sq) * std::sqrt(act_sq);
    if (norms == 0.0) {
        rep.cosine_sim = (sig_sq == 0.0 && act_sq == 0.0) ? 1.0 : 0.0;
    } else {
        rep.cosine_sim = dot / norms;
    }

    rep.flatten_ratio_x = cfg.plan_x.flatten_ratio();
    rep.flatten_ratio_w = cfg.plan_w.flatten_ratio();
    rep.bits = cfg.bits;
    rep.weight_bytes_quantized =
        cfg.weight_q.q.rows * cfg.weight_q.q.cols * static_cast<std::int64_t>(cfg.bits) / 8;
    rep.weight_bytes_fp16 = w_ref.rows * w_ref.cols * 2;
    rep.bitops = 2 * x_test.rows * cfg.weight_q.q.cols * cfg.plan_w.padded_width *
                 static_cast<std::int64_t>(cfg.bits) * static_cast<std::int64_t>(cfg.bits);
    return rep;
}

std::vector<LayerQuantConfig> quantize_model(const Model& model, const QuantOptions& options) {
    std::vector<LayerQuantConfig> configs;
    configs.reserve(model.layers.size());
    for (const ModelLayer& layer : model.layers) {
        configs.push_back(quantize_layer(layer.weight, layer.calib, options));
    }
    return configs;
}

AggregateMetrics aggregate_reports(std::span<const LayerReport> reports) {
    AggregateMetrics agg;
    if (reports.empty()) return agg;
    std::int64_t int4 = 0;
    for (const LayerReport& r : reports) {
        agg.mean_output_mse += r.output_mse;
        agg.mean_sqnr_db += r.sqnr_db;
        agg.mean_cosine_sim += r.cosine_sim;
        agg.mean_flatten_ratio_x += r.flatten_ratio_x;
        agg.mean_flatten_ratio_w += r.flatten_ratio_w;
        agg.total_bytes_quantized += r.weight_bytes_quantized;
        agg.total_bytes_fp16 += r.weight_bytes_fp16;
        agg.total_bitops += r.bitops;
        agg.total_saturation_events += r.saturation_events;
        if (r.bits == 4) ++int4;
    }
    const auto n = static_cast<double>(reports.size());
    agg.mean_output_mse /= n;
    agg.mean_sqnr_db /= n;
    agg.mean_cosine_sim /= n;
    agg.mean_flatten_ratio_x /= n;
    agg.mean_flatten_ratio_w /= n;
    agg.int4_fraction = static_cast<double>(int4) / n;
    return agg;
}

std::vector<SweepRow> sweep_parameter(SweepParam param, std::span<const double> values,
                                      const QuantOptions& base, const Model& model) {
    if (values.empty()) {
        throw std::invalid_argument("sweep_parameter: no values");
    }
    std::vector<SweepRow> rows;
    rows.reserve(values.size());
    for (double v : values) {
        QuantOptions opts = base;
        switch (param) {
            case SweepParam::Beta: opts.beta = v; break;
            case SweepParam::Gamma: opts.gamma = v; break;
            case SweepParam::Alpha: opts.alpha = v; break;
            case SweepParam::Clip: opts.clip = v != 0.0; break;
            case SweepParam::Smooth: opts.smooth = v != 0.0; break;
        }
        std::vector<LayerReport> reports;
        reports.reserve(model.layers.size());
        for (const ModelLayer& layer : model.layers) {
            const LayerQuantConfig cfg = quantize_layer(layer.weight, layer.calib, opts);
            reports.push_back(evaluate_layer(cfg, vstack(layer.calib), layer.weight));
        }
        rows.push_back({v, aggregate_reports(reports)});
    }
    return rows;
}

}  // namespace fq
