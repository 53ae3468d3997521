// pipeline.hpp - per-layer orchestration: smooth, clip, threshold, plan,
// flatten, select bits, quantize (optionally GPTQ), execute, report.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fq/calibration.hpp"
#include "fq/flatten.hpp"
#include "fq/gptq.hpp"
#include "fq/matrix.hpp"
#include "fq/quantize.hpp"
#include "fq/smoothing.hpp"

namespace fq {

enum class QuantMode { O1, O2, O3 };

std::string to_string(QuantMode mode);
QuantMode parse_quant_mode(const std::string& name);

struct QuantOptions {
    QuantMode mode = QuantMode::O2;
    double alpha = 0.5;
    double beta = 1.3;
    double gamma = 1.86;
    std::int64_t block = 32;
    std::int64_t bins = 2048;
    double damping = 0.01;
    bool smooth = true;  // channel smoothing (ablation toggle)
    bool clip = true;    // boxplot outlier suppression (ablation toggle)
};

// Complete frozen recipe for one linear layer.
struct LayerQuantConfig {
    QuantOptions options;
    int bits = 8;  // resolved; O1 forces 8
    SmoothingScales smooth_scales;
    TruncationPolicy truncation;    // activation threshold T_x
    TruncationPolicy truncation_w;  // weight threshold T_w (same recipe, same beta)
    FlattenPlan plan_x;
    FlattenPlan plan_w;
    QuantizedTensor weight_q;
    double act_scale = 0.0;  // static, T_x / qmax(bits)
    double kl_ratio_act = 0.0;
    double kl_ratio_w = 0.0;
};

struct LayerReport {
    double output_mse = 0.0;
    double sqnr_db = 0.0;  // capped at +/-300 dB
    double cosine_sim = 0.0;
    double flatten_ratio_x = 0.0;
    double flatten_ratio_w = 0.0;
    int bits = 8;
    std::int64_t weight_bytes_quantized = 0;  // padded rows * cols * bits / 8
    std::int64_t weight_bytes_fp16 = 0;       // original rows * cols * 2
    std::int64_t bitops = 0;  // 2 * M * N * K_padded * bits_act * bits_w
    std::int64_t saturation_events = 0;
};

struct ModelLayer {
    std::string name;
    Matrix weight;               // in_channels x out_channels
    std::vector<Matrix> calib;   // tokens x in_channels each
};

struct Model {
    std::vector<ModelLayer> layers;
};

// Calibration-time path. Stage order: stats -> smoothing -> clip ->
// activation threshold -> activation plan -> repeat weight -> weight stats
// -> weight threshold/plan -> bit selection -> weight quantization.
LayerQuantConfig quantize_layer(const Matrix& weight, std::span<const Matrix> calib,
                                const QuantOptions& options);

// Inference-time path: smoothing division, flatten, column repeat, static
// quantization, integer matmul, dequantize. Activations that exceed the
// calibrated plan capacity saturate and are counted, never an error.
Matrix run_layer(const LayerQuantConfig& cfg, const Matrix& x);
Matrix run_layer(const LayerQuantConfig& cfg, const Matrix& x, std::int64_t& saturation_events);

// Compares run_layer output against the double-precision reference x * w_ref.
LayerReport evaluate_layer(const LayerQuantConfig& cfg, const Matrix& x_test,
                           const Matrix& w_ref);

std::vector<LayerQuantConfig> quantize_model(const Model& model, const QuantOptions& options);

struct AggregateMetrics {
    double mean_output_mse = 0.0;
    double mean_sqnr_db = 0.0;
    double mean_cosine_sim = 0.0;
    double mean_flatten_ratio_x = 0.0;
    double mean_flatten_ratio_w = 0.0;
    double int4_fraction = 0.0;
    std::int64_t total_bytes_quantized = 0;
    std::int64_t total_bytes_fp16 = 0;
    std::int64_t total_bitops = 0;
    std::int64_t total_saturation_events = 0;
};

AggregateMetrics aggregate_reports(std::span<const LayerReport> reports);

enum class SweepParam { Beta, Gamma, Alpha, Clip, Smooth };

std::string to_string(SweepParam param);
SweepParam parse_sweep_param(const std::string& name);

struct SweepRow {
    double value = 0.0;
    AggregateMetrics metrics;
};

// Re-runs quantize_layer + evaluate_layer over the whole model per value.
// Each layer is evaluated on its stacked calibration samples. Clip and
// Smooth treat the value as a boolean toggle (nonzero = on).
std::vector<SweepRow> sweep_parameter(SweepParam param, std::span<const double> values,
                                      const QuantOptions& base, const Model& model);

// Rows of all samples stacked in order; used as the evaluation input.
Matrix vstack(std::span<const Matrix> samples);

}  // namespace fq
