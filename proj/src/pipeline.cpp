#include "demand/pipeline.hpp"

#include "demand/csv.hpp"
#include "demand/errors.hpp"
#include "demand/learners.hpp"
#include "demand/parallel.hpp"
#include "demand/report.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace demand::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reruns `f`, prefixing any project error with the stage and artifact.
template <class F>
auto in_stage(const std::string& stage, const std::string& artifact, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        std::string where = "stage " + stage;
        if (!artifact.empty()) where += " (" + artifact + ")";
        throw Error(e.category(), where + ": " + e.what());
    }
}

std::ifstream open_input(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(std::string("cannot open ") + what + " file " + path);
    return in;
}

std::string write_file(const fs::path& dir, const std::string& name, const std::string& content) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StructureError("cannot write " + path.string());
    out << content;
    out.close();
    if (!out) throw StructureError("failed writing " + path.string());
    return name;
}

std::string learner_display(learn::LearnerKind k) {
    switch (k) {
        case learn::LearnerKind::Linear: return "Linear";
        case learn::LearnerKind::LinearInteractions: return "Linear Interactions";
        case learn::LearnerKind::BoostedTrees: return "Boosted Trees";
    }
    return "?";
}

std::string controls_display(const ControlSet& c) {
    std::string s;
    switch (c.embedding) {
        case EmbeddingControls::None: s = "No Embeddings"; break;
        case EmbeddingControls::Embeddings: s = "Embeddings"; break;
        case EmbeddingControls::Similarities: s = "Similarities"; break;
        case EmbeddingControls::Pca: s = "PCAs"; break;
    }
    return c.tabular ? s + " + Tabular" : s;
}

json estimate_json(const dml::EffectEstimate& est, const std::string& hash, double theta) {
    json coefs = report::to_json(est);
    json el = json::array();
    for (Eigen::Index i = 0; i < est.coef.size(); ++i) {
        el.push_back({{"name", est.names[static_cast<std::size_t>(i)]},
                      {"elasticity", rank_to_demand_elasticity(est.coef(i), theta)},
                      {"ci_lo", rank_to_demand_elasticity(est.ci_lo(i), theta)},
                      {"ci_hi", rank_to_demand_elasticity(est.ci_hi(i), theta)}});
    }
    return {{"config_hash", hash}, {"estimate", coefs}, {"theta", theta}, {"elasticity", el}};
}

std::string residuals_csv(const dml::ResidualPanel& r, const std::string& hash) {
    std::ostringstream out;
    out << report::hash_header(hash) << "product_id,period,fold,q,p,q_hat,p_hat,q_perp,p_perp\n";
    for (std::size_t i = 0; i < r.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out << r.product_ids[i] << ',' << r.periods[i] << ',' << r.fold[i] << ',' << csv::format(r.q(k)) << ','
            << csv::format(r.p(k)) << ',' << csv::format(r.q_hat(k)) << ',' << csv::format(r.p_hat(k)) << ','
            << csv::format(r.q_perp(k)) << ',' << csv::format(r.p_perp(k)) << '\n';
    }
    return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

json ground_truth_json(const sim::GroundTruth& t, const std::string& hash) {
    return {{"config_hash", hash},
            {"ace", t.ace},
            {"elasticity",
             {{"intercept", t.elasticity.intercept},
              {"q_lag", t.elasticity.q_lag},
              {"p_lag", t.elasticity.p_lag},
              {"sim", t.elasticity.sim}}},
            {"centering",
             {{"q_center", t.centering.q_center},
              {"q_scale", t.centering.q_scale},
              {"p_center", t.centering.p_center},
              {"p_scale", t.centering.p_scale},
              {"sim_center", t.centering.sim_center}}},
            {"cluster_label", t.cluster_label}};
}

void write_ground_truth_csv(std::ostream& out, const PanelDataset& panel, const sim::GroundTruth& truth) {
    const auto& obs = panel.observations();
    if (truth.a_it.size() != obs.size() || truth.cace.size() != obs.size()) {
        throw DimensionError("ground truth does not match the panel rows");
    }
    out << "product_id,period,a_it,cace\n";
    for (std::size_t i = 0; i < obs.size(); ++i) {
        out << obs[i].product_id << ',' << obs[i].period << ',' << csv::format(truth.a_it[i]) << ','
            << csv::format(truth.cace[i]) << '\n';
    }
}

Inputs load_inputs(const config::RunConfig& config) {
    Inputs in;
    if (config.input.source == config::InputSource::Simulate) {
        auto [panel, truth] = sim::simulate(config.input.simulate);
        in.embeddings = ProductEmbeddings{truth.product_ids, truth.true_embeddings};
        in.panel = std::move(panel);
        in.truth = std::move(truth);
        return in;
    }
    {
        auto f = open_input(config.input.panel_path, "panel");
        in.panel = in_stage("dataset_split", config.input.panel_path, [&] { return read_panel_csv(f); });
    }
    if (!config.input.embeddings_path.empty()) {
        auto f = open_input(config.input.embeddings_path, "embeddings");
        in.embeddings =
            in_stage("embedding_computation", config.input.embeddings_path, [&] { return read_embeddings_csv(f); });
    }
    return in;
}

FeatureResult compute_features(const PanelDataset& panel, const ProductEmbeddings& embeddings,
                               const std::vector<std::string>& fit_products,
                               const compression::CompressionOptions& options) {
    std::map<std::string, Eigen::Index> row_of;
    for (std::size_t i = 0; i < embeddings.product_ids.size(); ++i) {
        row_of.emplace(embeddings.product_ids[i], static_cast<Eigen::Index>(i));
    }
    auto gather = [&](const std::vector<std::string>& ids) {
        Matrix out(static_cast<Eigen::Index>(ids.size()), embeddings.vectors.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const auto it = row_of.find(ids[i]);
            if (it == row_of.end()) throw StructureError("no embedding for product " + ids[i]);
            out.row(static_cast<Eigen::Index>(i)) = embeddings.vectors.row(it->second);
        }
        return out;
    };
    FeatureResult result;
    result.model = compression::fit(gather(fit_products), options).model;
    const auto ids = panel.product_ids();
    const auto f = compression::transform(result.model, gather(ids));
    result.panel = panel.with_product_features({ids, f.embedding, f.pca, f.similarity});
    return result;
}

dml::ResidualPanel partial_out(const PanelDataset& estimation_panel, const config::RunConfig& config) {
    const auto rows = build_state(estimation_panel, config.controls);
    const bool full = config.nuisance_mode == dml::NuisanceMode::FullSample;
    const auto plan = dml::make_folds(estimation_panel.product_ids(), full ? 1 : config.folds, config.fold_seed, full);
    dml::PartialOutOptions options;
    options.q_spec = config.q_learner;
    options.p_spec = config.p_learner;
    options.mode = config.nuisance_mode;
    options.jobs = config.jobs;
    options.modifiers = config.modifiers;
    return dml::partial_out(rows, plan, options);
}

void estimate_effects(Estimates& est, const config::RunConfig& config) {
    using config::EffectModel;
    if (config.effect_model != EffectModel::Heterogeneous) {
        est.homogeneous = dml::estimate_homogeneous(est.residuals, config.inference);
    }
    if (config.effect_model != EffectModel::Homogeneous) {
        est.heterogeneous = dml::estimate_heterogeneous(est.residuals, config.inference);
        const auto terms = dml::modifier_terms(*est.heterogeneous);
        if (!terms.empty()) est.wald_all = dml::wald_joint_test(*est.heterogeneous, terms);
        const auto sims = dml::similarity_terms(*est.heterogeneous, config.modifiers.similarity_prefix);
        if (!sims.empty()) est.wald_similarities = dml::wald_joint_test(*est.heterogeneous, sims);
        est.sorted = dml::sorted_effects(*est.heterogeneous, est.residuals.modifiers, config.inference.level);
    }
}

std::string model_label(const config::RunConfig& config) {
    std::string learners = config.q_learner.kind == config.p_learner.kind
                               ? learner_display(config.q_learner.kind)
                               : "Q " + learner_display(config.q_learner.kind) + " / P " +
                                     learner_display(config.p_learner.kind);
    return "DML " + learners + " [" + controls_display(config.controls) + "]";
}

fs::path resolve_output_dir(const config::RunConfig& config) {
    if (!config.output_dir.empty()) return config.output_dir;
    const char* root = std::getenv("DEMAND_OUTPUT_ROOT");
    return fs::path(root && *root ? root : "runs") / ("run-" + config::config_hash(config));
}

void prepare_output_dir(const fs::path& dir) {
    std::error_code ec;
    if (fs::exists(dir, ec)) {
        if (!fs::is_directory(dir, ec)) throw ConfigError("output path " + dir.string() + " is not a directory");
        if (!fs::is_empty(dir, ec)) {
            throw ConfigError("output directory " + dir.string() + " is not empty; refusing to overwrite a previous run");
        }
        return;
    }
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::vector<std::string> write_effect_reports(const fs::path& dir, const Estimates& est,
                                              const config::RunConfig& config, const std::string& hash) {
    std::vector<std::string> files;
    const auto header = report::hash_header(hash);
    const auto label = model_label(config);
    if (est.homogeneous) {
        report::EffectTable table;
        table.title = "Homogeneous effect";
        table.level = est.homogeneous->level;
        table.rows.push_back(report::effect_row(*est.homogeneous, 0, label));
        files.push_back(write_file(dir, "homogeneous.txt",
                                   header + report::format_table(report::report_elasticity(table, config.theta))));
        files.push_back(write_file(dir, "homogeneous.json",
                                   estimate_json(*est.homogeneous, hash, config.theta).dump(2) + "\n"));
    }
    if (est.heterogeneous) {
        const auto table = report::effect_table(*est.heterogeneous, "Heterogeneous effect: " + label);
        files.push_back(write_file(dir, "heterogeneous.txt",
                                   header + report::format_table(report::report_elasticity(table, config.theta))));
        json j = estimate_json(*est.heterogeneous, hash, config.theta);
        j["wald_all_modifiers"] = est.wald_all ? report::to_json(*est.wald_all) : json(nullptr);
        j["wald_similarities"] = est.wald_similarities ? report::to_json(*est.wald_similarities) : json(nullptr);
        files.push_back(write_file(dir, "heterogeneous.json", j.dump(2) + "\n"));

        const double nan = std::numeric_limits<double>::quiet_NaN();
        const dml::WaldTest missing{nan, 0, nan};
        report::WaldRow row{label, est.wald_all.value_or(missing), est.wald_similarities.value_or(missing)};
        files.push_back(write_file(dir, "wald.txt", header + "Joint significance p-values\n" + report::format_wald_table({row})));

        if (est.sorted) {
            std::ostringstream rank, elasticity;
            rank << header;
            report::write_sorted_effects_csv(rank, *est.sorted);
            elasticity << header;
            report::write_sorted_effects_csv(elasticity, report::report_elasticity(*est.sorted, config.theta));
            files.push_back(write_file(dir, "sorted_effects.csv", rank.str()));
            files.push_back(write_file(dir, "sorted_elasticity.csv", elasticity.str()));
        }
    }
    return files;
}

RunResult run_pipeline(const config::RunConfig& config) {
    config::validate(config);
    RunResult result;
    result.config_hash = config::config_hash(config);
    result.output_dir = resolve_output_dir(config);
    prepare_output_dir(result.output_dir);
    const auto& dir = result.output_dir;
    const auto& hash = result.config_hash;
    const auto header = report::hash_header(hash);

    auto stage = [&](const char* name) -> StageRecord& {
        result.stages.push_back(StageRecord{name, "done", 0.0, {}, ""});
        return result.stages.back();
    };
    using clock = std::chrono::steady_clock;

    // 1. Dataset split.
    auto start = clock::now();
    auto& split_stage = stage(kStages[0]);
    Inputs inputs = in_stage(kStages[0], config.input.panel_path, [&] { return load_inputs(config); });
    auto [train, estimation] =
        in_stage(kStages[0], "", [&] { return split_by_product(inputs.panel, config.split_fraction, config.split_seed); });
    {
        std::ostringstream out;
        out << header << "product_id,subset\n";
        for (const auto& id : train.product_ids()) out << id << ",I1\n";
        for (const auto& id : estimation.product_ids()) out << id << ",I2\n";
        split_stage.artifacts.push_back(write_file(dir, "split.csv", out.str()));
    }
    if (inputs.truth) {
        split_stage.artifacts.push_back(
            write_file(dir, "ground_truth.json", ground_truth_json(*inputs.truth, hash).dump(2) + "\n"));
    }
    split_stage.wall_seconds = seconds_since(start);

    // 2. Fine-tuning has no counterpart here.
    auto& tune_stage = stage(kStages[1]);
    tune_stage.status = "substituted";
    tune_stage.note = inputs.embeddings && config.input.source == config::InputSource::Simulate
                          ? "embedding fine-tuning not performed; simulator embeddings used as the step-3 embeddings"
                          : "embedding fine-tuning not performed; embeddings taken as given";

    // 3. Embedding computation: the raw embeddings are loaded or simulated.
    start = clock::now();
    auto& emb_stage = stage(kStages[2]);
    if (inputs.embeddings) {
        emb_stage.note = std::to_string(inputs.embeddings->vectors.rows()) + " products, dimension " +
                         std::to_string(inputs.embeddings->vectors.cols());
    } else {
        emb_stage.status = "skipped";
        emb_stage.note = "no embeddings supplied; feature blocks taken from the panel";
    }
    emb_stage.wall_seconds = seconds_since(start);

    // 4. Feature computation: compression fit on I1, applied to every product.
    start = clock::now();
    auto& feat_stage = stage(kStages[3]);
    if (inputs.embeddings) {
        auto features = in_stage(kStages[3], config.input.embeddings_path, [&] {
            return compute_features(estimation, *inputs.embeddings, train.product_ids(), config.compression);
        });
        estimation = std::move(features.panel);
        std::ostringstream model;
        compression::save_model(model, features.model);
        feat_stage.artifacts.push_back(write_file(dir, "compression_model.txt", model.str()));
        for (const auto& w : features.model.warnings) feat_stage.note += (feat_stage.note.empty() ? "" : "; ") + w;
    } else {
        feat_stage.status = "skipped";
    }
    feat_stage.wall_seconds = seconds_since(start);

    // 5. Partialling out on I2.
    start = clock::now();
    auto& po_stage = stage(kStages[4]);
    result.estimates.residuals = in_stage(kStages[4], "", [&] { return partial_out(estimation, config); });
    po_stage.artifacts.push_back(write_file(dir, "residuals.csv", residuals_csv(result.estimates.residuals, hash)));
    po_stage.wall_seconds = seconds_since(start);

    // 6 and 7. Effects.
    config::RunConfig homogeneous_only = config;
    homogeneous_only.effect_model = config::EffectModel::Homogeneous;
    config::RunConfig heterogeneous_only = config;
    heterogeneous_only.effect_model = config::EffectModel::Heterogeneous;
    const bool want_hom = config.effect_model != config::EffectModel::Heterogeneous;
    const bool want_het = config.effect_model != config::EffectModel::Homogeneous;

    start = clock::now();
    auto& hom_stage = stage(kStages[5]);
    if (want_hom) {
        Estimates part{result.estimates.residuals, {}, {}, {}, {}, {}};
        in_stage(kStages[5], "", [&] { estimate_effects(part, homogeneous_only); });
        result.estimates.homogeneous = part.homogeneous;
        hom_stage.artifacts = write_effect_reports(dir, part, config, hash);
    } else {
        hom_stage.status = "skipped";
    }
    hom_stage.wall_seconds = seconds_since(start);

    start = clock::now();
    auto& het_stage = stage(kStages[6]);
    if (want_het) {
        Estimates part{result.estimates.residuals, {}, {}, {}, {}, {}};
        in_stage(kStages[6], "", [&] { estimate_effects(part, heterogeneous_only); });
        result.estimates.heterogeneous = part.heterogeneous;
        result.estimates.wald_all = part.wald_all;
        result.estimates.wald_similarities = part.wald_similarities;
        result.estimates.sorted = part.sorted;
        het_stage.artifacts = write_effect_reports(dir, part, config, hash);
        if (!part.heterogeneous->dropped.empty()) {
            std::string dropped;
            for (const auto& d : part.heterogeneous->dropped) dropped += (dropped.empty() ? "" : ", ") + d;
            het_stage.note = "constant modifiers dropped: " + dropped;
        }
    } else {
        het_stage.status = "skipped";
    }
    het_stage.wall_seconds = seconds_since(start);

    // Canonical config next to the results, then the manifest.
    write_file(dir, "config.json", config::canonical_json(config));
    json stages = json::array();
    for (const auto& s : result.stages) {
        stages.push_back({{"name", s.name},
                          {"status", s.status},
                          {"wall_seconds", s.wall_seconds},
                          {"artifacts", s.artifacts},
                          {"note", s.note}});
    }
    const auto& sc = config.input.simulate;
    json seeds = {{"split", config.split_seed},
                  {"compression", config.compression.seed},
                  {"folds", config.fold_seed},
                  {"q_learner", config.q_learner.trees.seed},
                  {"p_learner", config.p_learner.trees.seed}};
    if (config.input.source == config::InputSource::Simulate) seeds["simulate"] = sc.seed;
    json manifest = {{"format", "demand-run-v1"},
                     {"config_hash", hash},
                     {"config", "config.json"},
                     {"seeds", seeds},
                     {"n_train_products", train.n_products()},
                     {"n_estimation_products", estimation.n_products()},
                     {"stages", stages}};
    write_file(dir, "manifest.json", manifest.dump(2) + "\n");
    return result;
}

// Predictive evaluation.

EvalData eval_data(const PanelDataset& panel, const std::string& feature_set) {
    const auto& obs = panel.observations();
    const auto n_tab = panel.tabular_names().size();
    std::size_t n_block = 0;
    std::string prefix;
    if (feature_set == "pca") {
        n_block = panel.pca_dim();
        prefix = "pc_";
    } else if (feature_set == "similarities") {
        n_block = panel.similarity_dim();
        prefix = "cs_";
    } else if (feature_set == "embeddings") {
        n_block = panel.embedding_dim();
        prefix = "emb_";
    } else if (feature_set != "tabular") {
        throw ConfigError("unknown eval feature set '" + feature_set + "'");
    }
    if (feature_set != "tabular" && n_block == 0) {
        throw DimensionError("feature set '" + feature_set + "' is empty in this panel");
    }

    std::vector<std::size_t> rows;
    for (std::size_t i = 1; i < obs.size(); ++i) {
        if (obs[i].product_id == obs[i - 1].product_id) rows.push_back(i);
    }
    EvalData d;
    const auto n = static_cast<Eigen::Index>(rows.size());
    d.features.values.resize(n, static_cast<Eigen::Index>(n_tab + n_block));
    for (const auto& name : panel.tabular_names()) d.features.names.push_back(name + "_lag");
    for (std::size_t j = 0; j < n_block; ++j) {
        d.features.names.push_back(prefix + std::to_string(prefix == "emb_" ? j : j + 1));
    }
    for (auto& t : d.targets) t.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& cur = obs[rows[static_cast<std::size_t>(r)]];
        const auto& prev = obs[rows[static_cast<std::size_t>(r)] - 1];
        d.product_ids.push_back(cur.product_id);
        Eigen::Index c = 0;
        for (double v : prev.tabular) d.features.values(r, c++) = v;
        const std::vector<double>* block = feature_set == "pca"            ? &cur.pca
                                           : feature_set == "similarities" ? &cur.similarity
                                           : feature_set == "embeddings"   ? &cur.embedding
                                                                           : nullptr;
        if (block) {
            for (double v : *block) d.features.values(r, c++) = v;
        }
        d.targets[0](r) = cur.q;
        d.targets[1](r) = cur.p;
        d.targets[2](r) = cur.q - prev.q;
        d.targets[3](r) = cur.p - prev.p;
    }
    return d;
}

std::vector<EvalRow> run_predictive_eval(const PanelDataset& train, const PanelDataset& test,
                                         const config::EvalConfig& eval, unsigned jobs) {
    struct Cell {
        std::size_t row;
        std::size_t target;
    };
    std::vector<EvalRow> rows;
    std::vector<std::pair<EvalData, EvalData>> data;
    std::vector<std::pair<std::size_t, std::size_t>> row_source;  // (learner, feature set)
    for (const auto& f : eval.feature_sets) data.emplace_back(eval_data(train, f), eval_data(test, f));
    for (std::size_t l = 0; l < eval.learners.size(); ++l) {
        for (std::size_t f = 0; f < eval.feature_sets.size(); ++f) {
            const auto& fs_name = eval.feature_sets[f];
            const auto block = data[f].first.features.cols() - static_cast<Eigen::Index>(train.tabular_names().size());
            std::string features = fs_name == "tabular"        ? "tabular"
                                   : fs_name == "pca"          ? "+" + std::to_string(block) + " PCAs"
                                   : fs_name == "similarities" ? "+" + std::to_string(block) + " Similarities"
                                                               : "+" + std::to_string(block) + " Embeddings";
            rows.push_back(EvalRow{eval.learners[l].label + " [" + features + "]", eval.learners[l].label, fs_name, {}});
            row_source.emplace_back(l, f);
        }
    }
    std::vector<Cell> cells;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t t = 0; t < kEvalTargets.size(); ++t) cells.push_back({r, t});
    }
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        const auto [r, t] = cells[i];
        const auto [l, f] = row_source[r];
        const auto& [tr, te] = data[f];
        const auto model = learn::fit(eval.learners[l].spec, tr.features, tr.targets[t]);
        rows[r].r2[t] = learn::r2_score(te.targets[t], model.predict(te.features));
    });
    return rows;
}

std::vector<EvalRow> run_predictive_eval(const config::RunConfig& config) {
    config::validate(config);
    Inputs inputs = load_inputs(config);
    const auto [train, test] = split_by_product(inputs.panel, config.split_fraction, config.split_seed);
    if (!inputs.embeddings) return run_predictive_eval(train, test, config.eval, config.jobs);
    const auto panel =
        compute_features(inputs.panel, *inputs.embeddings, train.product_ids(), config.compression).panel;
    return run_predictive_eval(panel.subset(train.product_ids()), panel.subset(test.product_ids()), config.eval,
                               config.jobs);
}

std::string format_eval_table(const std::vector<EvalRow>& rows) {
    // Display width in code points, so the UTF-8 headers line up.
    auto width = [](const std::string& s) {
        return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
    };
    auto pad = [&](const std::string& s, std::size_t w, bool left) {
        const auto n = width(s);
        const std::string fill(w > n ? w - n : 0, ' ');
        return left ? fill + s : s + fill;
    };
    const std::string corner = "Method [features] \\ Target";
    std::size_t w0 = width(corner);
    for (const auto& r : rows) w0 = std::max(w0, width(r.label));
    const std::size_t w = 9;
    const std::size_t total = w0 + kEvalTargets.size() * (w + 2);
    std::ostringstream out;
    out << std::string(total, '=') << '\n' << pad(corner, w0, false);
    for (const auto* t : kEvalTargets) out << "  " << pad(t, w, true);
    out << '\n' << std::string(total, '-') << '\n';
    for (const auto& r : rows) {
        out << pad(r.label, w0, false);
        for (double v : r.r2) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
            out << "  " << pad(buf, w, true);
        }
        out << '\n';
    }
    out << std::string(total, '=') << '\n';
    return out.str();
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
    out << "method,learner,feature_set";
    for (const auto* t : kEvalColumns) out << ',' << t;
    out << '\n';
    for (const auto& r : rows) {
        out << r.label << ',' << r.learner << ',' << r.feature_set;
        for (double v : r.r2) out << ',' << csv::format(v);
        out << '\n';
    }
}

}  // namespace demand::pipeline
