// Command-line driver: simulate, compress, estimate, eval, report and run.

#include "demand/compression.hpp"
#include "demand/config.hpp"
#include "demand/csv.hpp"
#include "demand/errors.hpp"
#include "demand/panel.hpp"
#include "demand/pipeline.hpp"
#include "demand/report.hpp"
#include "demand/simulator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace demand;
using nlohmann::json;

namespace {

struct Common {
    std::string config_path;
    std::string output;
    int jobs = -1;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = false) {
    auto* opt = cmd->add_option("-c,--config", c.config_path, "JSON run configuration");
    if (needs_config) opt->required();
    opt->check(CLI::ExistingFile);
    cmd->add_option("-o,--output", c.output, "Output directory (must be absent or empty)");
    cmd->add_option("-j,--jobs", c.jobs, "Worker threads; 0 uses every core")->check(CLI::NonNegativeNumber);
}

config::RunConfig load_config(const Common& c) {
    auto cfg = c.config_path.empty() ? config::default_run_config() : config::load_run_config(c.config_path);
    if (!c.output.empty()) cfg.output_dir = c.output;
    if (c.jobs >= 0) cfg.jobs = static_cast<unsigned>(c.jobs);
    config::validate(cfg);
    return cfg;
}

/// Output directory for a subcommand without its own bundle layout.
fs::path output_dir(const config::RunConfig& cfg, const std::string& command) {
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    const char* root = std::getenv("DEMAND_OUTPUT_ROOT");
    return fs::path(root && *root ? root : "runs") / (command + "-" + config::config_hash(cfg));
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StructureError("cannot write " + path.string());
    out << content;
}

template <class F>
void write_with(const fs::path& path, F&& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StructureError("cannot write " + path.string());
    f(out);
}

std::ifstream open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    return in;
}

int cmd_simulate(const Common& c) {
    auto cfg = load_config(c);
    const auto hash = config::config_hash(cfg);
    const auto dir = output_dir(cfg, "simulate");
    pipeline::prepare_output_dir(dir);
    const auto [panel, truth] = sim::simulate(cfg.input.simulate);
    write_with(dir / "panel.csv", [&](std::ostream& o) { write_panel_csv(o, panel); });
    write_with(dir / "embeddings.csv",
               [&](std::ostream& o) { write_embeddings_csv(o, {truth.product_ids, truth.true_embeddings}); });
    write_text(dir / "ground_truth.json", pipeline::ground_truth_json(truth, hash).dump(2) + "\n");
    write_with(dir / "ground_truth.csv", [&](std::ostream& o) { pipeline::write_ground_truth_csv(o, panel, truth); });
    write_text(dir / "simulate.json", config::to_json(cfg.input.simulate).dump(2) + "\n");
    std::cout << "simulated " << panel.n_products() << " products x " << panel.n_periods() << " periods into "
              << dir.string() << "\n";
    return 0;
}

int cmd_compress(const Common& c, const std::string& embeddings_path, const std::string& fit_list,
                 const std::string& panel_path) {
    auto cfg = load_config(c);
    auto in = open(embeddings_path);
    const auto emb = read_embeddings_csv(in);
    std::vector<std::string> fit_ids = emb.product_ids;
    if (!fit_list.empty()) {
        auto f = open(fit_list);
        fit_ids.clear();
        std::string line;
        while (csv::next_record(f, line)) fit_ids.push_back(csv::split(line).front());
    }
    std::set<std::string> fit_set(fit_ids.begin(), fit_ids.end());
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < emb.product_ids.size(); ++i) {
        if (fit_set.count(emb.product_ids[i])) rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (rows.size() != fit_set.size()) throw StructureError("fit list names products missing from " + embeddings_path);
    const auto model = compression::fit(emb.vectors(rows, Eigen::all), cfg.compression).model;
    const auto f = compression::transform(model, emb.vectors);

    const auto dir = output_dir(cfg, "compress");
    pipeline::prepare_output_dir(dir);
    write_with(dir / "compression_model.txt", [&](std::ostream& o) { compression::save_model(o, model); });
    write_with(dir / "features.csv", [&](std::ostream& o) {
        o << "product_id";
        for (Eigen::Index j = 0; j < f.embedding.cols(); ++j) o << ",emb_" << j;
        for (Eigen::Index j = 0; j < f.pca.cols(); ++j) o << ",pc_" << j + 1;
        for (Eigen::Index j = 0; j < f.similarity.cols(); ++j) o << ",cs_" << j + 1;
        o << '\n';
        for (Eigen::Index i = 0; i < f.embedding.rows(); ++i) {
            o << emb.product_ids[static_cast<std::size_t>(i)];
            for (const Matrix* m : {&f.embedding, &f.pca, &f.similarity}) {
                for (Eigen::Index j = 0; j < m->cols(); ++j) o << ',' << csv::format((*m)(i, j));
            }
            o << '\n';
        }
    });
    if (!panel_path.empty()) {
        auto p = open(panel_path);
        const auto panel = read_panel_csv(p);
        const auto with = pipeline::compute_features(panel, emb, fit_ids, cfg.compression).panel;
        write_with(dir / "panel.csv", [&](std::ostream& o) { write_panel_csv(o, with); });
    }
    for (const auto& w : model.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "compressed " << emb.vectors.rows() << " embeddings (d=" << model.input_dim()
              << ", m=" << model.target_dim() << ", K=" << model.K << ") into " << dir.string() << "\n";
    return 0;
}

int cmd_estimate(const Common& c, const std::string& panel_path) {
    auto cfg = load_config(c);
    const auto hash = config::config_hash(cfg);
    auto in = open(panel_path);
    const auto panel = read_panel_csv(in);
    const auto dir = output_dir(cfg, "estimate");
    pipeline::prepare_output_dir(dir);
    pipeline::Estimates est;
    est.residuals = pipeline::partial_out(panel, cfg);
    pipeline::estimate_effects(est, cfg);
    pipeline::write_effect_reports(dir, est, cfg, hash);
    write_text(dir / "config.json", config::canonical_json(cfg));
    if (est.homogeneous) std::cout << report::format_table([&] {
        report::EffectTable t;
        t.title = "Homogeneous effect";
        t.level = est.homogeneous->level;
        t.rows.push_back(report::effect_row(*est.homogeneous, 0, pipeline::model_label(cfg)));
        return report::report_elasticity(t, cfg.theta);
    }());
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

int cmd_eval(const Common& c) {
    auto cfg = load_config(c);
    const auto hash = config::config_hash(cfg);
    const auto rows = pipeline::run_predictive_eval(cfg);
    const auto dir = output_dir(cfg, "eval");
    pipeline::prepare_output_dir(dir);
    const auto table = pipeline::format_eval_table(rows);
    write_text(dir / "eval.txt", report::hash_header(hash) + "Test R^2\n" + table);
    write_with(dir / "eval.csv", [&](std::ostream& o) {
        o << report::hash_header(hash);
        pipeline::write_eval_csv(o, rows);
    });
    std::cout << table << "wrote " << dir.string() << "\n";
    return 0;
}

int cmd_report(const std::string& bundle, double theta) {
    if (!(theta > 0.0)) throw ConfigError("theta must be positive");
    bool any = false;
    for (const char* name : {"homogeneous.json", "heterogeneous.json"}) {
        const auto path = fs::path(bundle) / name;
        if (!fs::exists(path)) continue;
        auto in = open(path.string());
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw StructureError(path.string() + ": " + e.what());
        }
        const auto est = report::estimate_from_json(j.at("estimate"));
        auto table = report::effect_table(est, std::string(name) == "homogeneous.json" ? "Homogeneous effect"
                                                                                       : "Heterogeneous effect");
        if (j.contains("config_hash")) std::cout << report::hash_header(j["config_hash"].get<std::string>());
        std::cout << report::format_table(report::report_elasticity(table, theta)) << "\n";
        any = true;
    }
    if (!any) throw StructureError("no homogeneous.json or heterogeneous.json in " + bundle);
    return 0;
}

int cmd_run(const Common& c) {
    const auto cfg = load_config(c);
    const auto result = pipeline::run_pipeline(cfg);
    for (const auto& s : result.stages) {
        std::printf("%-22s %-11s %8.2fs\n", s.name.c_str(), s.status.c_str(), s.wall_seconds);
    }
    const auto& est = result.estimates;
    if (est.homogeneous) {
        std::printf("homogeneous effect %.3f (se %.3f)\n", est.homogeneous->coef(0), est.homogeneous->se(0));
    }
    if (est.wald_similarities) std::printf("similarities Wald p-value %.3f\n", est.wald_similarities->p_value);
    std::cout << "wrote " << result.output_dir.string() << " (config " << result.config_hash << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Price elasticity estimation with embedding-derived controls"};
    app.require_subcommand(1);

    Common common;
    auto* simulate = app.add_subcommand("simulate", "Simulate a panel with embeddings and ground truth");
    add_common(simulate, common);

    std::string embeddings_path, fit_list, panel_path;
    auto* compress = app.add_subcommand("compress", "Fit the embedding compression and write features");
    add_common(compress, common);
    compress->add_option("--embeddings", embeddings_path, "CSV product_id,e_0,...")->required()->check(CLI::ExistingFile);
    compress->add_option("--fit-products", fit_list, "File of product ids to fit on (default: all)")
        ->check(CLI::ExistingFile);
    compress->add_option("--panel", panel_path, "Panel CSV to attach the features to")->check(CLI::ExistingFile);

    std::string estimate_panel;
    auto* estimate = app.add_subcommand("estimate", "Partial out and estimate effects on a featured panel");
    add_common(estimate, common);
    estimate->add_option("--panel", estimate_panel, "Panel CSV with feature columns")->required()->check(CLI::ExistingFile);

    auto* eval = app.add_subcommand("eval", "Predictive evaluation: test R^2 per learner and feature set");
    add_common(eval, common);

    std::string bundle;
    double theta = 0.5;
    auto* report_cmd = app.add_subcommand("report", "Print the effect tables of a bundle with elasticities");
    report_cmd->add_option("bundle", bundle, "Report bundle directory")->required()->check(CLI::ExistingDirectory);
    report_cmd->add_option("--theta", theta, "Pareto shape for the elasticity conversion")->capture_default_str();

    auto* run = app.add_subcommand("run", "Run the full workflow and write a report bundle");
    add_common(run, common);

    auto* defaults = app.add_subcommand("default-config", "Print the default configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*simulate) return cmd_simulate(common);
        if (*compress) return cmd_compress(common, embeddings_path, fit_list, panel_path);
        if (*estimate) return cmd_estimate(common, estimate_panel);
        if (*eval) return cmd_eval(common);
        if (*report_cmd) return cmd_report(bundle, theta);
        if (*run) return cmd_run(common);
        if (*defaults) {
            std::cout << config::to_json(config::default_run_config()).dump(2) << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
