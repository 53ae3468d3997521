#include "fq/schemas.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fq {

using nlohmann::json;

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_real(const std::string& text) {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) {
        throw std::invalid_argument("bad real literal: " + text);
    }
    return v;
}

namespace {

json scales_to_json(const std::vector<double>& values) {
    json arr = json::array();
    for (double v : values) arr.push_back(format_real(v));
    return arr;
}

std::vector<double> scales_from_json(const json& arr) {
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) out.push_back(parse_real(v.get<std::string>()));
    return out;
}

json truncation_to_json(const TruncationPolicy& t, bool with_clipped) {
    json j;
    j["beta"] = t.beta;
    j["q1"] = t.q1;
    j["q3"] = t.q3;
    j["iqr"] = t.iqr;
    j["threshold"] = t.threshold;
    if (with_clipped) j["clipped_max"] = t.clipped_max;
    return j;
}

TruncationPolicy truncation_from_json(const json& j) {
    TruncationPolicy t;
    t.beta = j.at("beta").get<double>();
    t.q1 = j.at("q1").get<double>();
    t.q3 = j.at("q3").get<double>();
    t.iqr = j.at("iqr").get<double>();
    t.threshold = j.at("threshold").get<double>();
    if (j.contains("clipped_max")) {
        t.clipped_max = j.at("clipped_max").get<std::vector<double>>();
    }
    return t;
}

json plan_to_json(const FlattenPlan& p) {
    json j;
    j["T"] = p.threshold;
    j["E"] = p.extensions;
    j["c_extend"] = p.c_extend;
    j["padded_width"] = p.padded_width;
    j["block"] = p.block;
    j["flatten_ratio"] = p.flatten_ratio();
    return j;
}

FlattenPlan plan_from_json(const json& j) {
    FlattenPlan p;
    p.threshold = j.at("T").get<double>();
    p.extensions = j.at("E").get<std::vector<std::int64_t>>();
    p.block = j.at("block").get<std::int64_t>();
    p.ext_offset.clear();
    p.c_extend = 0;
    for (std::int64_t e : p.extensions) {
        if (e < 0) throw std::invalid_argument("plan: negative extension count");
        p.ext_offset.push_back(p.c_extend);
        p.c_extend += e;
    }
    p.padded_width = j.at("padded_width").get<std::int64_t>();
    const std::int64_t expected = (p.width() + p.block - 1) / p.block * p.block;
    if (p.c_extend != j.at("c_extend").get<std::int64_t>() || p.padded_width != expected) {
        throw std::invalid_argument("plan: inconsistent extension counts");
    }
    return p;
}

json options_to_json(const QuantOptions& o) {
    json j;
    j["mode"] = to_string(o.mode);
    j["alpha"] = o.alpha;
    j["beta"] = o.beta;
    j["gamma"] = o.gamma;
    j["block"] = o.block;
    j["bins"] = o.bins;
    j["damping"] = o.damping;
    j["smooth"] = o.smooth;
    j["clip"] = o.clip;
    return j;
}

QuantOptions options_from_json(const json& j) {
    QuantOptions o;
    o.mode = parse_quant_mode(j.at("mode").get<std::string>());
    o.alpha = j.at("alpha").get<double>();
    o.beta = j.at("beta").get<double>();
    o.gamma = j.at("gamma").get<double>();
    o.block = j.at("block").get<std::int64_t>();
    o.bins = j.at("bins").get<std::int64_t>();
    o.damping = j.at("damping").get<double>();
    o.smooth = j.at("smooth").get<bool>();
    o.clip = j.at("clip").get<bool>();
    return o;
}

json report_to_json(const LayerReport& r) {
    json j;
    j["output_mse"] = r.output_mse;
    j["sqnr_db"] = r.sqnr_db;
    j["cosine_sim"] = r.cosine_sim;
    j["flatten_ratio_x"] = r.flatten_ratio_x;
    j["flatten_ratio_w"] = r.flatten_ratio_w;
    j["bits"] = r.bits;
    j["weight_bytes_quantized"] = r.weight_bytes_quantized;
    j["weight_bytes_fp16"] = r.weight_bytes_fp16;
    j["bitops"] = r.bitops;
    j["saturation_events"] = r.saturation_events;
    return j;
}

json aggregate_to_json(const AggregateMetrics& a) {
    json j;
    j["mean_output_mse"] = a.mean_output_mse;
    j["mean_sqnr_db"] = a.mean_sqnr_db;
    j["mean_cosine_sim"] = a.mean_cosine_sim;
    j["mean_flatten_ratio_x"] = a.mean_flatten_ratio_x;
    j["mean_flatten_ratio_w"] = a.mean_flatten_ratio_w;
    j["int4_fraction"] = a.int4_fraction;
    j["total_bytes_quantized"] = a.total_bytes_quantized;
    j["total_bytes_fp16"] = a.total_bytes_fp16;
    j["total_bitops"] = a.total_bitops;
    j["total_saturation_events"] = a.total_saturation_events;
    return j;
}

int check_version(const json& j) {
    const int v = j.at("schema_version").get<int>();
    if (v != kSchemaVersion) {
        throw std::invalid_argument("unsupported schema_version " + std::to_string(v));
    }
    return v;
}

}  // namespace

std::string to_json(const StatsFile& f) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["beta"] = f.beta;
    j["clip"] = f.clip;
    json layers = json::array();
    for (const auto& rec : f.layers) {
        json l;
        l["layer"] = rec.layer;
        l["channels"] = rec.stats.max_abs.size();
        l["sample_count"] = rec.stats.sample_count;
        l["max_abs"] = rec.stats.max_abs;
        l["q1"] = rec.truncation.q1;
        l["q3"] = rec.truncation.q3;
        l["iqr"] = rec.truncation.iqr;
        l["clipped_max"] = rec.truncation.clipped_max;
        l["threshold"] = rec.truncation.threshold;
        l["beta"] = rec.truncation.beta;
        layers.push_back(std::move(l));
    }
    j["layers"] = std::move(layers);
    return j.dump(2) + "\n";
}

StatsFile parse_stats_json(const std::string& text) {
    const json j = json::parse(text);
    check_version(j);
    StatsFile f;
    f.beta = j.at("beta").get<double>();
    f.clip = j.at("clip").get<bool>();
    for (const auto& l : j.at("layers")) {
        LayerStatsRecord rec;
        rec.layer = l.at("layer").get<std::string>();
        rec.stats.max_abs = l.at("max_abs").get<std::vector<double>>();
        rec.stats.sample_count = l.at("sample_count").get<std::int64_t>();
        rec.truncation.beta = l.at("beta").get<double>();
        rec.truncation.q1 = l.at("q1").get<double>();
        rec.truncation.q3 = l.at("q3").get<double>();
        rec.truncation.iqr = l.at("iqr").get<double>();
        rec.truncation.clipped_max = l.at("clipped_max").get<std::vector<double>>();
        rec.truncation.threshold = l.at("threshold").get<double>();
        f.layers.push_back(std::move(rec));
    }
    return f;
}

std::string to_json(const PlanFile& f) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["block"] = f.block;
    json layers = json::array();
    for (const auto& rec : f.layers) {
        json l = plan_to_json(rec.plan);
        l["layer"] = rec.layer;
        layers.push_back(std::move(l));
    }
    j["layers"] = std::move(layers);
    return j.dump(2) + "\n";
}

PlanFile parse_plan_json(const std::string& text) {
    const json j = json::parse(text);
    check_version(j);
    PlanFile f;
    f.block = j.at("block").get<std::int64_t>();
    for (const auto& l : j.at("layers")) {
        LayerPlanRecord rec;
        rec.layer = l.at("layer").get<std::string>();
        rec.plan = plan_from_json(l);
        f.layers.push_back(std::move(rec));
    }
    return f;
}

std::string to_json(const RecipeFile& f) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = options_to_json(f.options);
    json layers = json::array();
    for (const auto& rec : f.layers) {
        const LayerQuantConfig& c = rec.config;
        json l;
        l["layer"] = rec.layer;
        l["bits"] = c.bits;
        l["mode"] = to_string(c.options.mode);
        l["smooth_scales"] = scales_to_json(c.smooth_scales.s);
        l["smooth_alpha"] = c.smooth_scales.alpha;
        l["truncation"] = truncation_to_json(c.truncation, /*with_clipped=*/false);
        l["truncation_w"] = truncation_to_json(c.truncation_w, /*with_clipped=*/false);
        l["plan_x"] = plan_to_json(c.plan_x);
        l["plan_w"] = plan_to_json(c.plan_w);
        l["act_scale"] = format_real(c.act_scale);
        l["weight_scale"] = format_real(c.weight_q.params.scale);
        l["kl_ratio_act"] = c.kl_ratio_act;
        l["kl_ratio_w"] = c.kl_ratio_w;
        l["gptq"] = c.options.mode == QuantMode::O3;
        l["damping"] = c.options.damping;
        layers.push_back(std::move(l));
    }
    j["layers"] = std::move(layers);
    return j.dump(2) + "\n";
}

RecipeFile parse_recipe_json(const std::string& text) {
    const json j = json::parse(text);
    check_version(j);
    RecipeFile f;
    f.options = options_from_json(j.at("config"));
    for (const auto& l : j.at("layers")) {
        LayerRecipeRecord rec;
        rec.layer = l.at("layer").get<std::string>();
        LayerQuantConfig& c = rec.config;
        c.options = f.options;
        c.options.mode = parse_quant_mode(l.at("mode").get<std::string>());
        c.bits = l.at("bits").get<int>();
        if (c.bits != 4 && c.bits != 8) {
            throw std::invalid_argument("recipe: bits must be 4 or 8");
        }
        c.smooth_scales.s = scales_from_json(l.at("smooth_scales"));
        c.smooth_scales.alpha = l.at("smooth_alpha").get<double>();
        c.truncation = truncation_from_json(l.at("truncation"));
        c.truncation_w = truncation_from_json(l.at("truncation_w"));
        c.plan_x = plan_from_json(l.at("plan_x"));
        c.plan_w = plan_from_json(l.at("plan_w"));
        c.act_scale = parse_real(l.at("act_scale").get<std::string>());
        c.weight_q.params.bits = c.bits;
        c.weight_q.params.scale = parse_real(l.at("weight_scale").get<std::string>());
        c.kl_ratio_act = l.at("kl_ratio_act").get<double>();
        c.kl_ratio_w = l.at("kl_ratio_w").get<double>();
        f.layers.push_back(std::move(rec));
    }
    return f;
}

std::string to_json(const ReportFile& f) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = options_to_json(f.options);
    json layers = json::array();
    for (const auto& rec : f.layers) {
        json l = report_to_json(rec.report);
        l["layer"] = rec.layer;
        layers.push_back(std::move(l));
    }
    j["layers"] = std::move(layers);
    const json agg = aggregate_to_json(f.totals);
    j["int4_fraction"] = agg.at("int4_fraction");
    j["total_bytes"] = agg.at("total_bytes_quantized");
    j["total_bytes_fp16"] = agg.at("total_bytes_fp16");
    j["total_bitops"] = agg.at("total_bitops");
    j["totals"] = agg;
    return j.dump(2) + "\n";
}

std::string to_json(const SweepFile& f) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["param"] = f.param;
    j["config"] = options_to_json(f.options);
    json rows = json::array();
    for (const auto& row : f.rows) {
        json r;
        r["value"] = row.value;
        r["metrics"] = aggregate_to_json(row.metrics);
        rows.push_back(std::move(r));
    }
    j["rows"] = std::move(rows);
    return j.dump(2) + "\n";
}

std::string to_csv(const SweepFile& f) {
    std::string out =
        "value,int4_fraction,mean_flatten_ratio_x,mean_flatten_ratio_w,mean_output_mse,"
        "mean_sqnr_db,total_bytes_quantized,total_bytes_fp16,total_bitops\n";
    char buf[256];
    for (const auto& row : f.rows) {
        const AggregateMetrics& m = row.metrics;
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%lld,%lld,%lld\n",
                      row.value, m.int4_fraction, m.mean_flatten_ratio_x, m.mean_flatten_ratio_w,
                      m.mean_output_mse, m.mean_sqnr_db,
                      static_cast<long long>(m.total_bytes_quantized),
                      static_cast<long long>(m.total_bytes_fp16),
                      static_cast<long long>(m.total_bitops));
        out += buf;
    }
    return out;
}

void save_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

std::string load_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace fq
