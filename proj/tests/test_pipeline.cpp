#include <cmath>
#include <vector>

#include "doctest.h"
#include "fq/gptq.hpp"
#include "fq/pipeline.hpp"
#include "fq/schemas.hpp"
#include "fq/synthetic.hpp"
#include "test_support.hpp"

namespace {

// A layer whose activations and weights already live on the 4-bit integer
// grid with unit scales end to end (beta = 1 pins T to the channel max).
fq::ModelLayer exact_grid_layer(std::int64_t channels, std::int64_t out) {
    fq::Rng rng(211);
    fq::ModelLayer layer;
    layer.name = "grid";
    layer.weight = fq::Matrix(channels, out);
    for (std::int64_t i = 0; i < channels; ++i) {
        layer.weight.at(i, 0) = 7.0;  // pin every row max to 7
        for (std::int64_t j = 1; j < out; ++j) {
            layer.weight.at(i, j) = static_cast<double>(rng.index(15) - 7);
        }
    }
    fq::Matrix sample(8, channels);
    for (std::int64_t j = 0; j < channels; ++j) {
        sample.at(0, j) = 7.0;  // pin every channel max to 7
        for (std::int64_t i = 1; i < 8; ++i) {
            sample.at(i, j) = static_cast<double>(rng.index(15) - 7);
        }
    }
    layer.calib = {sample};
    return layer;
}

fq::SyntheticOptions small_outlier_options() {
    fq::SyntheticOptions opts;
    opts.layers = 6;
    opts.rows = 16;
    opts.samples = 4;
    opts.in_channels = 64;
    opts.out_channels = 48;
    opts.outlier_fraction = 0.02;
    opts.outlier_min = 20.0;
    opts.outlier_max = 60.0;
    return opts;
}

// Rebuild the flattened weight and activations a config was derived from.
fq::Matrix rebuild_flat_weight(const fq::LayerQuantConfig& cfg, const fq::Matrix& weight) {
    const fq::Matrix w_s = fq::scale_rows(weight, cfg.smooth_scales.s);
    return fq::flatten_rows(fq::repeat_channels(w_s, cfg.plan_x), cfg.plan_w);
}

std::vector<fq::Matrix> rebuild_flat_acts(const fq::LayerQuantConfig& cfg,
                                          std::span<const fq::Matrix> calib) {
    std::vector<fq::Matrix> out;
    for (const auto& sample : calib) {
        const fq::Matrix divided = fq::divide_columns(sample, cfg.smooth_scales.s);
        out.push_back(fq::repeat_columns(fq::flatten_tensor(divided, cfg.plan_x), cfg.plan_w));
    }
    return out;
}

}  // namespace

TEST_CASE("O1 forces 8 bits regardless of the KL ratios") {
    fq::ModelLayer layer = exact_grid_layer(16, 8);
    fq::QuantOptions opts;
    opts.mode = fq::QuantMode::O1;
    opts.beta = 1.0;
    const fq::LayerQuantConfig cfg = fq::quantize_layer(layer.weight, layer.calib, opts);
    CHECK(cfg.bits == 8);
}

TEST_CASE("a perfect 4-bit grid layer is selected at 4 bits and reproduced exactly") {
    fq::ModelLayer layer = exact_grid_layer(16, 8);
    fq::QuantOptions opts;
    opts.mode = fq::QuantMode::O2;
    opts.beta = 1.0;
    const fq::LayerQuantConfig cfg = fq::quantize_layer(layer.weight, layer.calib, opts);
    CHECK(cfg.bits == 4);
    CHECK(cfg.act_scale == 1.0);
    CHECK(cfg.weight_q.params.scale == 1.0);

    const fq::LayerReport rep = fq::evaluate_layer(cfg, layer.calib[0], layer.weight);
    CHECK(rep.output_mse == 0.0);
    CHECK(rep.sqnr_db == 300.0);  // capped sentinel for an exact match
    CHECK(rep.cosine_sim == doctest::Approx(1.0));
    CHECK(rep.saturation_events == 0);
}

TEST_CASE("defaults are echoed into the recipe") {
    fq::ModelLayer layer = exact_grid_layer(16, 8);
    const fq::QuantOptions opts;
    const fq::LayerQuantConfig cfg = fq::quantize_layer(layer.weight, layer.calib, opts);
    CHECK(cfg.options.alpha == 0.5);
    CHECK(cfg.options.beta == 1.3);
    CHECK(cfg.options.gamma == 1.86);
    CHECK(cfg.options.block == 32);
    CHECK(cfg.truncation.beta == 1.3);
    CHECK(cfg.plan_x.block == 32);
    CHECK(cfg.plan_x.padded_width % 32 == 0);
}

TEST_CASE("zero input produces zero output") {
    fq::ModelLayer layer = exact_grid_layer(16, 8);
    const fq::LayerQuantConfig cfg =
        fq::quantize_layer(layer.weight, layer.calib, fq::QuantOptions{});
    const fq::Matrix out = fq::run_layer(cfg, fq::Matrix(3, 16));
    CHECK(out == fq::Matrix(3, 8));
}

TEST_CASE("run_layer validates the input channel count") {
    fq::ModelLayer layer = exact_grid_layer(16, 8);
    const fq::LayerQuantConfig cfg =
        fq::quantize_layer(layer.weight, layer.calib, fq::QuantOptions{});
    CHECK_THROWS(fq::run_layer(cfg, fq::Matrix(3, 17)));
}

TEST_CASE("an INT4-selected layer loses accuracy against its O1 twin") {
    const fq::Model model = fq::make_synthetic_model(small_outlier_options());
    const fq::ModelLayer& layer = model.layers[0];
    fq::QuantOptions o1;
    o1.mode = fq::QuantMode::O1;
    fq::QuantOptions o2;
    o2.mode = fq::QuantMode::O2;
    o2.gamma = 1e6;  // force the 4-bit choice
    const fq::LayerQuantConfig cfg1 = fq::quantize_layer(layer.weight, layer.calib, o1);
    const fq::LayerQuantConfig cfg2 = fq::quantize_layer(layer.weight, layer.calib, o2);
    REQUIRE(cfg2.bits == 4);
    const fq::Matrix x = fq::vstack(layer.calib);
    const fq::LayerReport r1 = fq::evaluate_layer(cfg1, x, layer.weight);
    const fq::LayerReport r2 = fq::evaluate_layer(cfg2, x, layer.weight);
    CHECK(r2.output_mse >= r1.output_mse);
    CHECK(std::isfinite(r2.output_mse));
}

TEST_CASE("O1 first-order error bound holds elementwise") {
    const fq::Model model = fq::make_synthetic_model(small_outlier_options());
    fq::QuantOptions opts;
    opts.mode = fq::QuantMode::O1;
    for (const auto& layer : model.layers) {
        const fq::LayerQuantConfig cfg = fq::quantize_layer(layer.weight, layer.calib, opts);
        const fq::Matrix x = fq::vstack(layer.calib);
        const fq::Matrix actual = fq::run_layer(cfg, x);
        const fq::Matrix reference = fq::matmul(x, layer.weight);

        const fq::Matrix x_flat = fq::vstack(rebuild_flat_acts(cfg, layer.calib));
        const fq::Matrix w_flat = rebuild_flat_weight(cfg, layer.weight);
        const double s_x = cfg.act_scale;
        const double s_w = cfg.weight_q.params.scale;
        const auto k_padded = static_cast<double>(cfg.plan_w.padded_width);

        for (std::int64_t i = 0; i < actual.rows; ++i) {
            double x_rowsum = 0.0;
            for (std::int64_t k = 0; k < x_flat.cols; ++k) x_rowsum += std::abs(x_flat.at(i, k));
            for (std::int64_t o = 0; o < actual.cols; ++o) {
                double w_colsum = 0.0;
                for (std::int64_t k = 0; k < w_flat.rows; ++k) {
                    w_colsum += std::abs(w_flat.at(k, o));
                }
                const double bound = (s_w / 2.0) * x_rowsum + (s_x / 2.0) * w_colsum +
                                     (s_x * s_w / 4.0) * k_padded;
                const double err = std::abs(actual.at(i, o) - reference.at(i, o));
                CHECK(err <= bound * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}

TEST_CASE("GPTQ mode never worsens the hessian objective") {
    const fq::Model model = fq::make_synthetic_model(small_outlier_options());
    fq::QuantOptions o2;
    o2.mode = fq::QuantMode::O2;
    fq::QuantOptions o3;
    o3.mode = fq::QuantMode::O3;
    for (const auto& layer : model.layers) {
        const fq::LayerQuantConfig cfg2 = fq::quantize_layer(layer.weight, layer.calib, o2);
        const fq::LayerQuantConfig cfg3 = fq::quantize_layer(layer.weight, layer.calib, o3);
        REQUIRE(cfg2.bits == cfg3.bits);
        REQUIRE(cfg2.weight_q.params.scale == cfg3.weight_q.params.scale);

        const fq::Matrix w_flat = rebuild_flat_weight(cfg2, layer.weight);
        const auto acts = rebuild_flat_acts(cfg2, layer.calib);
        const fq::HessianEstimate est = fq::hessian_from_calibration(acts, o3.damping);
        const double obj2 = fq::reconstruction_objective(w_flat, cfg2.weight_q, est.h);
        const double obj3 = fq::reconstruction_objective(w_flat, cfg3.weight_q, est.h);
        CHECK(obj3 <= obj2 * (1.0 + 1e-12));
    }
}

TEST_CASE("flatten pipeline beats naive per-tensor INT8 on outlier data") {
    fq::SyntheticOptions opts = small_outlier_options();
    opts.layers = 8;
    const auto layers = fq::make_synthetic_layers(opts);
    fq::QuantOptions o1;
    o1.mode = fq::QuantMode::O1;
    int wins = 0;
    for (const auto& layer : layers) {
        const fq::LayerQuantConfig cfg = fq::quantize_layer(layer.weight, layer.calib, o1);
        const fq::LayerReport rep = fq::evaluate_layer(cfg, layer.test_input, layer.weight);
        const double naive = fqtest::baseline_w8a8_mse(layer.weight, layer.calib,
                                                       layer.test_input);
        if (rep.output_mse < naive) ++wins;
    }
    CHECK(wins >= 7);  // strictly lower on essentially every outlier layer
}

TEST_CASE("weight byte accounting follows the formula") {
    const auto layers = fq::make_synthetic_layers(small_outlier_options());
    const fq::SyntheticLayer& layer = layers[1];
    fq::QuantOptions opts;
    opts.gamma = 1e6;  // 4-bit
    const fq::LayerQuantConfig cfg = fq::quantize_layer(layer.weight, layer.calib, opts);
    REQUIRE(cfg.bits == 4);
    const fq::LayerReport rep = fq::evaluate_layer(cfg, layer.test_input, layer.weight);
    CHECK(rep.weight_bytes_quantized == cfg.plan_w.padded_width * 48 / 2);
    CHECK(rep.weight_bytes_fp16 == 64 * 48 * 2);
    CHECK(rep.bitops == 2 * layer.test_input.rows * 48 * cfg.plan_w.padded_width * 4 * 4);
}

TEST_CASE("mixed-precision bytes sit below INT8 below FP16") {
    const fq::Model model = fq::make_synthetic_model(small_outlier_options());
    fq::QuantOptions o1;
    o1.mode = fq::QuantMode::O1;
    fq::QuantOptions o2;
    o2.mode = fq::QuantMode::O2;
    o2.gamma = 1e6;  // every layer 4-bit: the most aggressive mix
    std::int64_t mixed = 0, int8 = 0, fp16 = 0;
    for (const auto& layer : model.layers) {
        const auto cfg1 = fq::quantize_layer(layer.weight, layer.calib, o1);
        const auto cfg2 = fq::quantize_layer(layer.weight, layer.calib, o2);
        const auto r1 = fq::evaluate_layer(cfg1, layer.calib[0], layer.weight);
        const auto r2 = fq::evaluate_layer(cfg2, layer.calib[0], layer.weight);
        mixed += r2.weight_bytes_quantized;
        int8 += r1.weight_bytes_quantized;
        fp16 += r1.weight_bytes_fp16;
    }
    CHECK(mixed < int8);
    CHECK(int8 < fp16);
}

TEST_CASE("quantize_layer is deterministic") {
    const fq::Model model = fq::make_synthetic_model(small_outlier_options());
    const fq::ModelLayer& layer = model.layers[2];
    fq::QuantOptions opts;
    opts.mode = fq::QuantMode::O3;
    const fq::LayerQuantConfig a = fq::quantize_layer(layer.weight, layer.calib, opts);
    const fq::LayerQuantConfig b = fq::quantize_layer(layer.weight, layer.calib, opts);
    CHECK(a.weight_q.q == b.weight_q.q);

    fq::RecipeFile ra, rb;
    ra.options = opts;
    rb.options = opts;
    ra.layers.push_back({layer.name, a});
    rb.layers.push_back({layer.name, b});
    CHECK(fq::to_json(ra) == fq::to_json(rb));
}

TEST_CASE("beta sweep: flatten ratio is non-increasing") {
    const fq::Model model = fq::make_synthetic_model(small_outlier_options());
    const std::vector<double> betas{1.1, 1.2, 1.3, 1.4, 1.5};
    const auto rows = fq::sweep_parameter(fq::SweepParam::Beta, betas, fq::QuantOptions{}, model);
    REQUIRE(rows.size() == betas.size());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].metrics.mean_flatten_ratio_x <=
              rows[i - 1].metrics.mean_flatten_ratio_x + 1e-15);
    }
    CHECK(rows.front().metrics.mean_flatten_ratio_x > 0.0);
}

TEST_CASE("gamma sweep: INT4 fraction is non-decreasing") {
    const fq::Model model = fq::make_synthetic_model(small_outlier_options());
    const std::vector<double> gammas{1.82, 1.84, 1.86, 1.88, 1.90};
    const auto rows =
        fq::sweep_parameter(fq::SweepParam::Gamma, gammas, fq::QuantOptions{}, model);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].metrics.int4_fraction >= rows[i - 1].metrics.int4_fraction);
    }
}

TEST_CASE("smoothing and clipping ablations improve outlier-structured data") {
    fq::SyntheticOptions sopts = small_outlier_options();
    sopts.layers = 8;
    const fq::Model model = fq::make_synthetic_model(sopts);
    const std::vector<double> toggles{0.0, 1.0};

    const auto smooth_rows =
        fq::sweep_parameter(fq::SweepParam::Smooth, toggles, fq::QuantOptions{}, model);
    CHECK(smooth_rows[1].metrics.mean_output_mse < smooth_rows[0].metrics.mean_output_mse);

    const auto clip_rows =
        fq::sweep_parameter(fq::SweepParam::Clip, toggles, fq::QuantOptions{}, model);
    CHECK(clip_rows[1].metrics.mean_output_mse < clip_rows[0].metrics.mean_output_mse);
}

TEST_CASE("sweep rejects an empty value list") {
    const fq::Model model = fq::make_synthetic_model(small_outlier_options());
    CHECK_THROWS(fq::sweep_parameter(fq::SweepParam::Beta, {}, fq::QuantOptions{}, model));
}
