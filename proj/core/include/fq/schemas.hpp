// schemas.hpp - JSON file formats exchanged by the CLI commands. Every file
// carries schema_version and the resolved configuration; quantization scales
// are serialized as decimal strings so outputs are deterministic.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fq/calibration.hpp"
#include "fq/flatten.hpp"
#include "fq/pipeline.hpp"

namespace fq {

inline constexpr int kSchemaVersion = 1;

struct LayerStatsRecord {
    std::string layer;
    ChannelStats stats;
    TruncationPolicy truncation;
};

struct StatsFile {
    double beta = 1.3;
    bool clip = true;
    std::vector<LayerStatsRecord> layers;
};

struct LayerPlanRecord {
    std::string layer;
    FlattenPlan plan;
};

struct PlanFile {
    std::int64_t block = 32;
    std::vector<LayerPlanRecord> layers;
};

// Per-layer recipe; the quantized integer weights live in the model archive,
// everything else needed by run_layer round-trips through this file.
struct LayerRecipeRecord {
    std::string layer;
    LayerQuantConfig config;  // weight_q.q is not serialized
};

struct RecipeFile {
    QuantOptions options;
    std::vector<LayerRecipeRecord> layers;
};

struct LayerReportRecord {
    std::string layer;
    LayerReport report;
};

struct ReportFile {
    QuantOptions options;
    std::vector<LayerReportRecord> layers;
    AggregateMetrics totals;
};

struct SweepFile {
    std::string param;
    QuantOptions options;
    std::vector<SweepRow> rows;
};

std::string to_json(const StatsFile& f);
StatsFile parse_stats_json(const std::string& text);

std::string to_json(const PlanFile& f);
PlanFile parse_plan_json(const std::string& text);

std::string to_json(const RecipeFile& f);
RecipeFile parse_recipe_json(const std::string& text);

std::string to_json(const ReportFile& f);

std::string to_json(const SweepFile& f);
std::string to_csv(const SweepFile& f);

// Decimal string with 17 significant digits (exact double round-trip).
std::string format_real(double v);
double parse_real(const std::string& text);

void save_text(const std::filesystem::path& path, const std::string& text);
std::string load_text(const std::filesystem::path& path);

}  // namespace fq
