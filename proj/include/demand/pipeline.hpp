#pragma once

#include "demand/compression.hpp"
#include "demand/config.hpp"
#include "demand/dml.hpp"
#include "demand/panel.hpp"
#include "demand/simulator.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace demand::pipeline {

/// Workflow stages in execution order, as named in the manifest.
inline constexpr std::array<const char*, 7> kStages{
    "dataset_split",    "embedding_fine_tuning", "embedding_computation", "feature_computation",
    "partialling_out",  "homogeneous_effect",    "heterogeneous_effect"};

struct Inputs {
    PanelDataset panel;
    std::optional<ProductEmbeddings> embeddings;  // absent: use the panel's own feature blocks
    std::optional<sim::GroundTruth> truth;        // simulate mode only
};

/// Simulates or reads the panel and raw embeddings named by the config.
Inputs load_inputs(const config::RunConfig& config);

struct FeatureResult {
    compression::CompressionModel model;
    PanelDataset panel;  // embedding, PCA and similarity blocks filled in
};

/// Fits the compression on the rows of `fit_products` and transforms every
/// product in the panel.
FeatureResult compute_features(const PanelDataset& panel, const ProductEmbeddings& embeddings,
                               const std::vector<std::string>& fit_products,
                               const compression::CompressionOptions& options);

struct Estimates {
    dml::ResidualPanel residuals;
    std::optional<dml::EffectEstimate> homogeneous;
    std::optional<dml::EffectEstimate> heterogeneous;
    std::optional<dml::WaldTest> wald_all;
    std::optional<dml::WaldTest> wald_similarities;  // absent when there are no similarity terms
    std::optional<dml::SortedEffects> sorted;
};

/// Step 5: state table and fold plan for the estimation panel, then residuals.
dml::ResidualPanel partial_out(const PanelDataset& estimation_panel, const config::RunConfig& config);
/// Steps 6 and 7 as selected by `config.effect_model`.
void estimate_effects(Estimates& est, const config::RunConfig& config);

/// Row label such as "DML Boosted Trees [Similarities]".
std::string model_label(const config::RunConfig& config);

struct StageRecord {
    std::string name;
    std::string status;  // "done", "skipped" or "substituted"
    double wall_seconds = 0.0;
    std::vector<std::string> artifacts;
    std::string note;
};

struct RunResult {
    std::filesystem::path output_dir;
    std::string config_hash;
    std::vector<StageRecord> stages;
    Estimates estimates;
};

/// Raw ground truth of a simulated panel, tagged with the config hash.
nlohmann::json ground_truth_json(const sim::GroundTruth& truth, const std::string& hash);

/// Per-observation truth: `product_id,period,a_it,cace` in panel order.
void write_ground_truth_csv(std::ostream& out, const PanelDataset& panel, const sim::GroundTruth& truth);

/// Output directory for a run: `config.output_dir` if set, otherwise
/// `$DEMAND_OUTPUT_ROOT` (default `runs`) joined with the config hash.
std::filesystem::path resolve_output_dir(const config::RunConfig& config);

/// Creates `dir`; throws ConfigError when it exists and is not empty.
void prepare_output_dir(const std::filesystem::path& dir);

/// Runs the seven workflow stages and writes the report bundle.
RunResult run_pipeline(const config::RunConfig& config);

/// Writes the estimate files (tables, JSON, Wald table, sorted effects).
/// Returns the file names written.
std::vector<std::string> write_effect_reports(const std::filesystem::path& dir, const Estimates& est,
                                              const config::RunConfig& config, const std::string& hash);

// Predictive evaluation.

/// Table headers (UTF-8) and their ASCII CSV column names.
inline constexpr std::array<const char*, 4> kEvalTargets{"Q_it", "P_it", "\u0394Q_it", "\u0394P_it"};
inline constexpr std::array<const char*, 4> kEvalColumns{"Q_it", "P_it", "dQ_it", "dP_it"};

struct EvalRow {
    std::string label;  // e.g. "Linear Reg [+5 Similarities]"
    std::string learner;
    std::string feature_set;
    std::array<double, 4> r2{};  // test R^2 per target, kEvalTargets order
};

struct EvalData {
    std::vector<std::string> product_ids;
    LabeledMatrix features;  // lagged tabular controls, then product-level features
    std::array<Vector, 4> targets;
};

/// Rows t >= 1 of `panel`. Tabular controls enter at lag one; `feature_set`
/// adds one embedding-derived block.
EvalData eval_data(const PanelDataset& panel, const std::string& feature_set);

/// Trains every (learner, feature set) pair on `train` and scores `test`.
std::vector<EvalRow> run_predictive_eval(const PanelDataset& train, const PanelDataset& test,
                                         const config::EvalConfig& eval, unsigned jobs = 1);

/// Loads inputs, splits, computes features and evaluates.
std::vector<EvalRow> run_predictive_eval(const config::RunConfig& config);

/// Fixed-width table of R^2 in percent, two decimals.
std::string format_eval_table(const std::vector<EvalRow>& rows);
void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows);

}  // namespace demand::pipeline
