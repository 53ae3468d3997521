// flattenquant - per-tensor INT4/INT8 post-training quantization toolkit.
//
// Workflow: gen -> calibrate -> plan -> quantize -> infer / report / sweep.
// Every command is deterministic given its inputs and flags.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fq/archive.hpp"
#include "fq/pipeline.hpp"
#include "fq/schemas.hpp"
#include "fq/synthetic.hpp"

namespace {

struct CommonConfig {
    fq::QuantOptions options;
    std::string mode = "o2";
    bool no_smooth = false;
    bool no_clip = false;

    fq::QuantOptions resolve() const {
        fq::QuantOptions o = options;
        o.mode = fq::parse_quant_mode(mode);
        o.smooth = !no_smooth;
        o.clip = !no_clip;
        return o;
    }
};

void add_common_flags(CLI::App* cmd, CommonConfig& cfg) {
    cmd->add_option("--mode", cfg.mode, "Quantization mode: o1, o2, or o3")
        ->check(CLI::IsMember({"o1", "o2", "o3"}));
    cmd->add_option("--alpha", cfg.options.alpha, "Smoothing migration strength");
    cmd->add_option("--beta", cfg.options.beta, "Truncation threshold coefficient");
    cmd->add_option("--gamma", cfg.options.gamma, "KL-ratio tolerance for INT4 selection");
    cmd->add_option("--block", cfg.options.block, "Channel padding block size");
    cmd->add_option("--bins", cfg.options.bins, "Histogram bins for KL selection");
    cmd->add_option("--damping", cfg.options.damping, "GPTQ Hessian damping factor");
    cmd->add_flag("--no-smooth", cfg.no_smooth, "Disable channel smoothing");
    cmd->add_flag("--no-clip", cfg.no_clip, "Disable boxplot outlier suppression");
}

// Calibration archives group samples as "<layer>/<sample>"; insertion order
// of first appearance fixes the layer order.
std::map<std::string, std::vector<fq::Matrix>> group_samples(const fq::TensorArchive& archive,
                                                             std::vector<std::string>& order) {
    std::map<std::string, std::vector<fq::Matrix>> groups;
    for (const auto& entry : archive.entries) {
        const auto slash = entry.name.find('/');
        if (slash == std::string::npos || !entry.is_float()) continue;
        const std::string layer = entry.name.substr(0, slash);
        if (groups.find(layer) == groups.end()) order.push_back(layer);
        groups[layer].push_back(entry.matrix());
    }
    return groups;
}

fq::Model load_model(const std::filesystem::path& model_path,
                     const std::filesystem::path& calib_path) {
    const fq::TensorArchive model_archive = fq::read_archive(model_path);
    const fq::TensorArchive calib_archive = fq::read_archive(calib_path);
    std::vector<std::string> order;
    auto groups = group_samples(calib_archive, order);

    fq::Model model;
    for (const auto& entry : model_archive.entries) {
        const auto dot = entry.name.rfind(".weight");
        if (dot == std::string::npos || !entry.is_float()) continue;
        const std::string layer = entry.name.substr(0, dot);
        auto it = groups.find(layer);
        if (it == groups.end()) {
            throw std::runtime_error("no calibration samples for " + layer);
        }
        model.layers.push_back({layer, entry.matrix(), std::move(it->second)});
    }
    if (model.layers.empty()) {
        throw std::runtime_error("model archive contains no *.weight tensors");
    }
    return model;
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const auto comma = csv.find(',', start);
        const std::string tok =
            csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!tok.empty()) values.push_back(fq::parse_real(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (values.empty()) {
        throw std::runtime_error("no values given");
    }
    return values;
}

int cmd_gen(const fq::SyntheticOptions& opts, const std::string& out_model,
            const std::string& out_calib, const std::string& out_inputs) {
    const auto layers = fq::make_synthetic_layers(opts);
    fq::TensorArchive model, calib, inputs;
    for (const auto& layer : layers) {
        model.add(layer.name + ".weight", layer.weight);
        for (std::size_t s = 0; s < layer.calib.size(); ++s) {
            calib.add(layer.name + "/sample" + std::to_string(s), layer.calib[s]);
        }
        inputs.add(layer.name + "/input0", layer.test_input);
    }
    fq::write_archive(model, out_model);
    fq::write_archive(calib, out_calib);
    if (!out_inputs.empty()) {
        fq::write_archive(inputs, out_inputs);
    }
    std::printf("wrote %zu layers to %s, %s\n", layers.size(), out_model.c_str(),
                out_calib.c_str());
    return 0;
}

int cmd_calibrate(const std::string& calib_path, const std::string& out_path, double beta,
                  bool clip) {
    const fq::TensorArchive archive = fq::read_archive(calib_path);
    std::vector<std::string> order;
    auto groups = group_samples(archive, order);
    if (groups.empty()) {
        throw std::runtime_error("empty calibration set: " + calib_path);
    }
    fq::StatsFile stats;
    stats.beta = beta;
    stats.clip = clip;
    for (const std::string& layer : order) {
        fq::LayerStatsRecord rec;
        rec.layer = layer;
        rec.stats = fq::collect_channel_maxes(groups[layer]);
        rec.truncation = fq::derive_truncation(rec.stats.max_abs, beta, clip);
        stats.layers.push_back(std::move(rec));
    }
    fq::save_text(out_path, fq::to_json(stats));
    std::printf("wrote stats for %zu layers to %s\n", stats.layers.size(), out_path.c_str());
    return 0;
}

int cmd_plan(const std::string& stats_path, const std::string& out_path, std::int64_t block) {
    const fq::StatsFile stats = fq::parse_stats_json(fq::load_text(stats_path));
    fq::PlanFile plans;
    plans.block = block;
    for (const auto& rec : stats.layers) {
        fq::LayerPlanRecord p;
        p.layer = rec.layer;
        p.plan = fq::build_flatten_plan(rec.stats.max_abs, rec.truncation.threshold, block);
        plans.layers.push_back(std::move(p));
    }
    fq::save_text(out_path, fq::to_json(plans));
    std::printf("wrote plans for %zu layers to %s\n", plans.layers.size(), out_path.c_str());
    return 0;
}

// Raw-statistics stats/plan files are validated against what the pipeline
// derives. A plan file describes pre-smoothing plans, so it is only
// accepted when smoothing is off.
void check_stats_consistency(const fq::StatsFile& stats, const fq::Model& model) {
    for (const auto& layer : model.layers) {
        const fq::LayerStatsRecord* match = nullptr;
        for (const auto& rec : stats.layers) {
            if (rec.layer == layer.name) {
                match = &rec;
                break;
            }
        }
        if (match == nullptr) {
            throw std::runtime_error("stats file has no entry for " + layer.name);
        }
        const fq::ChannelStats fresh = fq::collect_channel_maxes(layer.calib);
        if (fresh.max_abs != match->stats.max_abs) {
            throw std::runtime_error("stats file does not match calibration archive for " +
                                     layer.name);
        }
    }
}

void check_plan_consistency(const fq::PlanFile& plans, const std::string& layer,
                            const fq::FlattenPlan& derived) {
    for (const auto& rec : plans.layers) {
        if (rec.layer != layer) continue;
        if (rec.plan.threshold != derived.threshold || rec.plan.extensions != derived.extensions) {
            throw std::runtime_error("plan file does not match derived plan for " + layer);
        }
        return;
    }
    throw std::runtime_error("plan file has no entry for " + layer);
}

int cmd_quantize(const CommonConfig& common, const std::string& model_path,
                 const std::string& calib_path, const std::string& stats_path,
                 const std::string& plan_path, const std::string& out_model,
                 const std::string& out_recipe) {
    const fq::QuantOptions options = common.resolve();
    const fq::Model model = load_model(model_path, calib_path);

    if (!stats_path.empty()) {
        check_stats_consistency(fq::parse_stats_json(fq::load_text(stats_path)), model);
    }
    fq::PlanFile plans;
    if (!plan_path.empty()) {
        if (options.smooth) {
            throw std::runtime_error(
                "--plan requires --no-smooth: plans are recomputed after smoothing");
        }
        plans = fq::parse_plan_json(fq::load_text(plan_path));
    }

    fq::TensorArchive qmodel;
    fq::RecipeFile recipe;
    recipe.options = options;
    for (const auto& layer : model.layers) {
        fq::LayerQuantConfig cfg = fq::quantize_layer(layer.weight, layer.calib, options);
        if (!plan_path.empty()) {
            check_plan_consistency(plans, layer.name, cfg.plan_x);
        }
        qmodel.add(layer.name + ".qweight", cfg.weight_q.q);
        recipe.layers.push_back({layer.name, std::move(cfg)});
    }
    fq::write_archive(qmodel, out_model);
    fq::save_text(out_recipe, fq::to_json(recipe));

    std::int64_t int4 = 0;
    for (const auto& rec : recipe.layers) {
        if (rec.config.bits == 4) ++int4;
    }
    std::printf("quantized %zu layers (%lld at INT4) -> %s, %s\n", recipe.layers.size(),
                static_cast<long long>(int4), out_model.c_str(), out_recipe.c_str());
    return 0;
}

// Recipe plus quantized archive reassembled into runnable layer configs.
std::map<std::string, fq::LayerQuantConfig> load_recipes(const std::string& recipe_path,
                                                         const std::string& qmodel_path) {
    const fq::RecipeFile recipe = fq::parse_recipe_json(fq::load_text(recipe_path));
    const fq::TensorArchive qmodel = fq::read_archive(qmodel_path);
    std::map<std::string, fq::LayerQuantConfig> configs;
    for (const auto& rec : recipe.layers) {
        fq::LayerQuantConfig cfg = rec.config;
        cfg.weight_q.q = qmodel.require(rec.layer + ".qweight").int_matrix();
        configs.emplace(rec.layer, std::move(cfg));
    }
    return configs;
}

int cmd_infer(const std::string& qmodel_path, const std::string& recipe_path,
              const std::string& input_path, const std::string& out_path) {
    const auto configs = load_recipes(recipe_path, qmodel_path);
    const fq::TensorArchive inputs = fq::read_archive(input_path);
    fq::TensorArchive outputs;
    std::int64_t saturated_total = 0;
    std::size_t ran = 0;
    for (const auto& entry : inputs.entries) {
        const auto slash = entry.name.find('/');
        if (slash == std::string::npos || !entry.is_float()) continue;
        const std::string layer = entry.name.substr(0, slash);
        const auto it = configs.find(layer);
        if (it == configs.end()) {
            throw std::runtime_error("no recipe for " + layer);
        }
        std::int64_t saturated = 0;
        outputs.add(entry.name, fq::run_layer(it->second, entry.matrix(), saturated));
        saturated_total += saturated;
        ++ran;
    }
    if (ran == 0) {
        throw std::runtime_error("input archive has no <layer>/<name> tensors");
    }
    fq::write_archive(outputs, out_path);
    std::printf("ran %zu inputs (%lld saturated elements) -> %s\n", ran,
                static_cast<long long>(saturated_total), out_path.c_str());
    return 0;
}

int cmd_report(const std::string& model_path, const std::string& qmodel_path,
               const std::string& recipe_path, const std::string& input_path,
               const std::string& calib_path, const std::string& out_path) {
    const fq::TensorArchive model_archive = fq::read_archive(model_path);
    auto configs = load_recipes(recipe_path, qmodel_path);

    // Evaluation inputs: an explicit input archive, or stacked calibration
    // samples when only a calibration archive is given.
    std::map<std::string, fq::Matrix> eval_inputs;
    std::vector<std::string> order;
    if (!input_path.empty()) {
        const fq::TensorArchive inputs = fq::read_archive(input_path);
        auto groups = group_samples(inputs, order);
        for (auto& [layer, samples] : groups) eval_inputs[layer] = fq::vstack(samples);
    } else {
        const fq::TensorArchive calib = fq::read_archive(calib_path);
        auto groups = group_samples(calib, order);
        for (auto& [layer, samples] : groups) eval_inputs[layer] = fq::vstack(samples);
    }

    fq::ReportFile report;
    std::vector<fq::LayerReport> layer_reports;
    for (const std::string& layer : order) {
        const auto cfg_it = configs.find(layer);
        if (cfg_it == configs.end()) {
            throw std::runtime_error("no recipe for " + layer);
        }
        report.options = cfg_it->second.options;
        const fq::Matrix& w_ref = model_archive.require(layer + ".weight").matrix();
        fq::LayerReport rep =
            fq::evaluate_layer(cfg_it->second, eval_inputs.at(layer), w_ref);
        layer_reports.push_back(rep);
        report.layers.push_back({layer, rep});
    }
    report.totals = fq::aggregate_reports(layer_reports);
    fq::save_text(out_path, fq::to_json(report));
    std::printf("report for %zu layers -> %s (int4 fraction %.3f, %.2fx weight compression)\n",
                report.layers.size(), out_path.c_str(), report.totals.int4_fraction,
                report.totals.total_bytes_quantized > 0
                    ? static_cast<double>(report.totals.total_bytes_fp16) /
                          static_cast<double>(report.totals.total_bytes_quantized)
                    : 0.0);
    return 0;
}

int cmd_sweep(const CommonConfig& common, const std::string& model_path,
              const std::string& calib_path, const std::string& param_name,
              const std::string& values_csv, const std::string& out_json,
              const std::string& out_csv) {
    const fq::QuantOptions options = common.resolve();
    const fq::Model model = load_model(model_path, calib_path);
    const fq::SweepParam param = fq::parse_sweep_param(param_name);
    const std::vector<double> values = parse_values(values_csv);

    fq::SweepFile sweep;
    sweep.param = param_name;
    sweep.options = options;
    sweep.rows = fq::sweep_parameter(param, values, options, model);
    fq::save_text(out_json, fq::to_json(sweep));
    if (!out_csv.empty()) {
        fq::save_text(out_csv, fq::to_csv(sweep));
    }
    std::printf("swept %s over %zu values -> %s\n", param_name.c_str(), values.size(),
                out_json.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flattenquant: outlier-flattening per-tensor INT4/INT8 quantization"};
    app.require_subcommand(1);

    // gen
    fq::SyntheticOptions gen_opts;
    std::string gen_model = "model.fqta";
    std::string gen_calib = "calib.fqta";
    std::string gen_inputs;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic model and calibration set");
    gen->add_option("--layers", gen_opts.layers, "Number of linear layers");
    gen->add_option("--rows", gen_opts.rows, "Tokens per calibration sample");
    gen->add_option("--samples", gen_opts.samples, "Calibration samples per layer");
    gen->add_option("--in-ch", gen_opts.in_channels, "Input channels");
    gen->add_option("--out-ch", gen_opts.out_channels, "Output channels");
    gen->add_option("--outlier-frac", gen_opts.outlier_fraction, "Fraction of outlier channels");
    gen->add_option("--outlier-min", gen_opts.outlier_min, "Minimum outlier magnification");
    gen->add_option("--outlier-max", gen_opts.outlier_max, "Maximum outlier magnification");
    gen->add_option("--channel-spread", gen_opts.channel_spread,
                    "Lognormal sigma of bulk per-channel scales");
    gen->add_option("--tail-prob-max", gen_opts.act_tail_prob_max,
                    "Upper bound of per-layer heavy-tail mixing probability");
    gen->add_option("--tail-scale", gen_opts.act_tail_scale, "Heavy-tail magnitude multiplier");
    gen->add_option("--row-spread", gen_opts.weight_row_spread,
                    "Lognormal sigma of per-row weight scales");
    gen->add_option("--seed", gen_opts.seed, "RNG seed");
    gen->add_option("--out-model", gen_model, "Output model archive");
    gen->add_option("--out-calib", gen_calib, "Output calibration archive");
    gen->add_option("--out-inputs", gen_inputs, "Optional held-out input archive");

    // calibrate
    std::string cal_calib, cal_out = "stats.json";
    double cal_beta = 1.3;
    bool cal_no_clip = false;
    auto* cal = app.add_subcommand("calibrate", "Collect per-channel activation statistics");
    cal->add_option("--calib", cal_calib, "Calibration archive")->required();
    cal->add_option("--out", cal_out, "Output stats JSON");
    cal->add_option("--beta", cal_beta, "Truncation threshold coefficient");
    cal->add_flag("--no-clip", cal_no_clip, "Disable boxplot outlier suppression");

    // plan
    std::string plan_stats, plan_out = "plan.json";
    std::int64_t plan_block = 32;
    auto* plan = app.add_subcommand("plan", "Build flatten plans from stats");
    plan->add_option("--stats", plan_stats, "Stats JSON from calibrate")->required();
    plan->add_option("--out", plan_out, "Output plan JSON");
    plan->add_option("--block", plan_block, "Channel padding block size");

    // quantize
    CommonConfig q_cfg;
    std::string q_model, q_calib, q_stats, q_plan;
    std::string q_out_model = "qmodel.fqta", q_out_recipe = "recipe.json";
    auto* quant = app.add_subcommand("quantize", "Quantize a model end to end");
    quant->add_option("--model", q_model, "Model archive")->required();
    quant->add_option("--calib", q_calib, "Calibration archive")->required();
    quant->add_option("--stats", q_stats, "Stats JSON (validated against the archive)");
    quant->add_option("--plan", q_plan, "Plan JSON (requires --no-smooth)");
    quant->add_option("--out-model", q_out_model, "Output quantized archive");
    quant->add_option("--out-recipe", q_out_recipe, "Output recipe JSON");
    add_common_flags(quant, q_cfg);

    // infer
    std::string inf_qmodel, inf_recipe, inf_input, inf_out = "output.fqta";
    auto* infer = app.add_subcommand("infer", "Run inputs through quantized layers");
    infer->add_option("--qmodel", inf_qmodel, "Quantized model archive")->required();
    infer->add_option("--recipe", inf_recipe, "Recipe JSON")->required();
    infer->add_option("--input", inf_input, "Input archive (<layer>/<name> entries)")->required();
    infer->add_option("--out", inf_out, "Output archive");

    // report
    std::string rep_model, rep_qmodel, rep_recipe, rep_input, rep_calib, rep_out = "report.json";
    auto* rep = app.add_subcommand("report", "Error and cost report against the FP reference");
    rep->add_option("--model", rep_model, "Original model archive")->required();
    rep->add_option("--qmodel", rep_qmodel, "Quantized model archive")->required();
    rep->add_option("--recipe", rep_recipe, "Recipe JSON")->required();
    rep->add_option("--input", rep_input, "Evaluation input archive");
    rep->add_option("--calib", rep_calib, "Calibration archive (fallback evaluation input)");
    rep->add_option("--out", rep_out, "Output report JSON");

    // sweep
    CommonConfig s_cfg;
    std::string s_model, s_calib, s_param, s_values;
    std::string s_out_json = "sweep.json", s_out_csv;
    auto* sweep = app.add_subcommand("sweep", "Ablation sweep over one parameter");
    sweep->add_option("--model", s_model, "Model archive")->required();
    sweep->add_option("--calib", s_calib, "Calibration archive")->required();
    sweep->add_option("--param", s_param, "beta, gamma, alpha, clip, or smooth")->required();
    sweep->add_option("--values", s_values, "Comma-separated values")->required();
    sweep->add_option("--out-json", s_out_json, "Output sweep JSON");
    sweep->add_option("--out-csv", s_out_csv, "Output sweep CSV");
    add_common_flags(sweep, s_cfg);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_opts, gen_model, gen_calib, gen_inputs);
        if (cal->parsed()) return cmd_calibrate(cal_calib, cal_out, cal_beta, !cal_no_clip);
        if (plan->parsed()) return cmd_plan(plan_stats, plan_out, plan_block);
        if (quant->parsed()) {
            return cmd_quantize(q_cfg, q_model, q_calib, q_stats, q_plan, q_out_model,
                                q_out_recipe);
        }
        if (infer->parsed()) return cmd_infer(inf_qmodel, inf_recipe, inf_input, inf_out);
        if (rep->parsed()) {
            if (rep_input.empty() && rep_calib.empty()) {
                throw std::runtime_error("report needs --input or --calib");
            }
            return cmd_report(rep_model, rep_qmodel, rep_recipe, rep_input, rep_calib, rep_out);
        }
        if (sweep->parsed()) {
            return cmd_sweep(s_cfg, s_model, s_calib, s_param, s_values, s_out_json, s_out_csv);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
