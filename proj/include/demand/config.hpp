#pragma once

#include "demand/compression.hpp"
#include "demand/dml.hpp"
#include "demand/learners.hpp"
#include "demand/panel.hpp"
#include "demand/simulator.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace demand::config {

enum class InputSource { Simulate, Load };
enum class EffectModel { Homogeneous, Heterogeneous, Both };

struct InputConfig {
    InputSource source = InputSource::Simulate;
    sim::SemConfig simulate;
    std::string panel_path;       // load mode: panel CSV
    std::string embeddings_path;  // load mode: product_id,e_0,... (optional)
};

/// One row of the predictive-evaluation table.
struct EvalLearner {
    std::string label;
    learn::LearnerSpec spec;
};

struct EvalConfig {
    std::vector<EvalLearner> learners;
    /// Subset of "tabular", "pca", "similarities", "embeddings".
    std::vector<std::string> feature_sets{"tabular", "pca", "similarities", "embeddings"};
};

struct RunConfig {
    InputConfig input;
    double split_fraction = 0.5;
    std::uint64_t split_seed = 11;
    compression::CompressionOptions compression{256, 5, 3, {}};
    ControlSet controls;
    learn::LearnerSpec q_learner;
    learn::LearnerSpec p_learner;
    dml::NuisanceMode nuisance_mode = dml::NuisanceMode::CrossFit;
    EffectModel effect_model = EffectModel::Both;
    int folds = 5;
    std::uint64_t fold_seed = 17;
    dml::InferenceOptions inference;
    dml::ModifierOptions modifiers;
    double theta = 0.5;
    EvalConfig eval;

    // Runtime options: they do not change results and are left out of the
    // canonical form and the hash.
    unsigned jobs = 1;
    std::string output_dir;
};

/// Default configuration used when a file omits keys.
RunConfig default_run_config();

nlohmann::json to_json(const sim::SemConfig& c);
sim::SemConfig sem_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const learn::LearnerSpec& s);
learn::LearnerSpec learner_spec_from_json(const nlohmann::json& j);

/// Full form including runtime options.
nlohmann::json to_json(const RunConfig& c);
/// Throws ConfigError on unknown keys or wrongly typed values.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);
sim::SemConfig load_sem_config(const std::string& path);

/// Sorted-key JSON without runtime options; the hashed representation.
std::string canonical_json(const RunConfig& c);
/// FNV-1a 64 of canonical_json, as 16 hex digits.
std::string config_hash(const RunConfig& c);

/// Checks values that the modules would only reject late.
void validate(const RunConfig& c);

std::string to_string(EffectModel m);
std::string to_string(EmbeddingControls e);

}  // namespace demand::config
