#include "demand/config.hpp"
#include "demand/errors.hpp"
#include "demand/pipeline.hpp"
#include "demand/report.hpp"
#include "demand/simulator.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace demand;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

config::RunConfig small_run(const fs::path& out) {
    auto c = config::default_run_config();
    auto& s = c.input.simulate;
    s.n_products = 120;
    s.n_periods = 5;
    s.embedding_dim = 48;
    s.seed = 5;
    c.compression.target_dim = 16;
    c.q_learner.kind = c.p_learner.kind = learn::LearnerKind::Linear;
    c.folds = 3;
    c.output_dir = out.string();
    return c;
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("demand-test-" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// The manifest with per-stage wall times removed.
json manifest_without_times(const fs::path& dir) {
    auto m = json::parse(slurp(dir / "manifest.json"));
    for (auto& s : m["stages"]) s.erase("wall_seconds");
    return m;
}

dml::EffectEstimate one_coefficient(double coef, double se) {
    dml::EffectEstimate e;
    e.names = {"price"};
    e.coef = Vector::Constant(1, coef);
    e.covariance = Matrix::Constant(1, 1, se * se);
    e.n_obs = 100;
    e.n_clusters = 20;
    return e;
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
    auto c = config::default_run_config();
    c.split_seed = 99;
    c.q_learner.trees.max_depth = 4;
    c.eval.feature_sets = {"tabular", "similarities"};
    c.input.simulate.elasticity.centering = sim::Centering{0.1, 2.0, -0.3, 0.5, {0, 0.1, 0.2, 0.3, 0.4}};
    const auto j = config::to_json(c);
    const auto back = config::run_config_from_json(j);
    CHECK(config::to_json(back) == j);
    CHECK(config::canonical_json(back) == config::canonical_json(c));
    CHECK(back.input.simulate.elasticity.centering->p_scale == 0.5);
}

TEST_CASE("config rejects unknown keys and wrong types") {
    auto j = config::to_json(config::default_run_config());
    j["foo"] = 1;
    try {
        config::run_config_from_json(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("foo") != std::string::npos);
    }
    j = config::to_json(config::default_run_config());
    j["folds"] = "five";
    CHECK_THROWS_AS(config::run_config_from_json(j), ConfigError);
    j = config::to_json(config::default_run_config());
    j["split"]["seed"] = -1;
    CHECK_THROWS_AS(config::run_config_from_json(j), ConfigError);
    j = config::to_json(config::default_run_config());
    j["learners"]["q"]["kind"] = "forest";
    CHECK_THROWS_AS(config::run_config_from_json(j), ConfigError);
    j = config::to_json(config::default_run_config());
    j["input"]["simulate"]["elasticity"]["bogus"] = 0;
    CHECK_THROWS_AS(config::run_config_from_json(j), ConfigError);
}

TEST_CASE("missing keys take defaults") {
    const auto c = config::run_config_from_json(json::object());
    CHECK(config::canonical_json(c) == config::canonical_json(config::default_run_config()));
}

TEST_CASE("config hash ignores runtime options only") {
    auto c = config::default_run_config();
    const auto h = config::config_hash(c);
    CHECK(h.size() == 16);
    c.jobs = 8;
    c.output_dir = "/elsewhere";
    CHECK(config::config_hash(c) == h);
    c.fold_seed += 1;
    CHECK(config::config_hash(c) != h);
}

TEST_CASE("config validation") {
    auto c = config::default_run_config();
    CHECK_NOTHROW(config::validate(c));
    c.split_fraction = 1.0;
    CHECK_THROWS_AS(config::validate(c), ConfigError);
    c = config::default_run_config();
    c.folds = 1;
    CHECK_THROWS_AS(config::validate(c), ConfigError);
    c.nuisance_mode = dml::NuisanceMode::FullSample;
    CHECK_NOTHROW(config::validate(c));
    c = config::default_run_config();
    c.theta = 0.0;
    CHECK_THROWS_AS(config::validate(c), ConfigError);
    c = config::default_run_config();
    c.inference.level = 1.5;
    CHECK_THROWS_AS(config::validate(c), ConfigError);
    c = config::default_run_config();
    c.input.source = config::InputSource::Load;
    CHECK_THROWS_AS(config::validate(c), ConfigError);
    c = config::default_run_config();
    c.eval.feature_sets = {"colors"};
    CHECK_THROWS_AS(config::validate(c), ConfigError);
    c = config::default_run_config();
    c.input.simulate.outcome.q_lag = 1.2;
    CHECK_THROWS_AS(config::validate(c), StabilityError);
}

TEST_CASE("all seeds are explicit in the serialized config") {
    const auto j = config::to_json(config::default_run_config());
    CHECK(j["split"]["seed"].is_number_unsigned());
    CHECK(j["fold_seed"].is_number_unsigned());
    CHECK(j["compression"]["seed"].is_number_unsigned());
    CHECK(j["input"]["simulate"]["seed"].is_number_unsigned());
    CHECK(j["learners"]["q"]["trees"]["seed"].is_number_unsigned());
}

TEST_CASE("elasticity conversion examples") {
    report::EffectTable t;
    report::EffectRow r;
    r.label = "x";
    r.coef = -0.525;
    r.lo = -0.6;
    r.hi = -0.45;
    t.rows.push_back(r);
    r.coef = r.lo = r.hi = 0.0;
    t.rows.push_back(r);
    const auto out = report::report_elasticity(t, 0.5);
    CHECK(*out.rows[0].elasticity_lo == doctest::Approx(-1.2));
    CHECK(*out.rows[0].elasticity_hi == doctest::Approx(-0.9));
    CHECK(*out.rows[1].elasticity == 0.0);
    CHECK_THROWS_AS(report::report_elasticity(t, 0.0), DomainError);
    CHECK_THROWS_AS(report::report_elasticity(t, -1.0), DomainError);

    dml::SortedEffects curve;
    curve.index = {0.5, 1.0};
    curve.alpha = {-1.4, 0.0};
    curve.lo = {-1.5, -0.1};
    curve.hi = {-1.3, 0.1};
    const auto c2 = report::report_elasticity(curve, 0.5);
    CHECK(c2.alpha.front() == doctest::Approx(-2.8));
    CHECK(c2.alpha.back() == 0.0);
}

TEST_CASE("effect table column layout and number format") {
    report::EffectTable t;
    t.level = 0.90;
    t.rows.push_back({"I-1. Linear (P_{t-1}, Q_{t-1})", -0.542, 0.041, -13.372, 0.0, -0.608, -0.475, {}, {}, {}});
    const auto text = report::format_table(t);
    std::istringstream lines(text);
    std::string rule, header, dashes, row;
    std::getline(lines, rule);
    std::getline(lines, header);
    std::getline(lines, dashes);
    std::getline(lines, row);
    CHECK(rule.find_first_not_of('=') == std::string::npos);
    for (const char* col : {"coef", "std err", "t", "P-val.", "[5.0%", "95.0%]"}) {
        CHECK(header.find(col) != std::string::npos);
    }
    CHECK(header.find("coef") < header.find("std err"));
    CHECK(header.find("P-val.") < header.find("[5.0%"));
    for (const char* cell : {"-0.542", "0.041", "-13.372", "0.000", "-0.608", "-0.475"}) {
        CHECK(row.find(cell) != std::string::npos);
    }
    CHECK(report::ci_headers(0.95) == std::pair<std::string, std::string>{"[2.5%", "97.5%]"});
    CHECK(report::fixed3(-0.0001) == "0.000");
    CHECK(report::fixed3(1.23456) == "1.235");
}

TEST_CASE("heterogeneous table labels") {
    CHECK(report::coefficient_label("const") == "Centercept");
    CHECK(report::coefficient_label("q_lag") == "Lagged Quantity");
    CHECK(report::coefficient_label("p_lag") == "Lagged Price");
    CHECK(report::coefficient_label("cs_1") == "Cluster Similarity 0");
    CHECK(report::coefficient_label("cs_5") == "Cluster Similarity 4");
}

TEST_CASE("estimate JSON round trip and Wald layout") {
    dml::EffectEstimate e;
    e.names = {"const", "q_lag"};
    e.coef = Vector{{-0.6, 0.1}};
    e.covariance = Matrix{{0.01, 0.001}, {0.001, 0.04}};
    e.n_obs = 50;
    e.n_clusters = 10;
    e.level = 0.95;
    e.dropped = {"cs_3"};
    const auto back = report::estimate_from_json(report::to_json(e));
    CHECK(back.names == e.names);
    CHECK(back.coef == e.coef);
    CHECK(back.covariance == e.covariance);
    CHECK(back.level == 0.95);
    CHECK(back.dropped == e.dropped);
    CHECK_THROWS_AS(report::estimate_from_json(json{{"names", 3}}), StructureError);

    const auto wald = report::format_wald_table({{"DML Linear", {4.0, 2, 0.135}, {1.0, 1, 0.317}}});
    CHECK(wald.find("All Modifiers") != std::string::npos);
    CHECK(wald.find("Similarities Only") != std::string::npos);
    CHECK(wald.find("0.135") != std::string::npos);

    dml::SortedEffects curve{{0.5, 1.0}, {-1.0, -0.5}, {-1.2, -0.7}, {-0.8, -0.3}, {1, 0}};
    std::ostringstream csv;
    report::write_sorted_effects_csv(csv, curve);
    CHECK(csv.str().rfind("index,alpha,lo,hi\n", 0) == 0);
    CHECK(report::hash_header("abc") == "# config_hash: abc\n");
}

TEST_CASE("single-coefficient row uses t and CI of the estimate") {
    const auto e = one_coefficient(-0.5, 0.05);
    const auto row = report::effect_row(e, 0, "DML");
    CHECK(row.t == doctest::Approx(-10.0));
    CHECK(row.lo == doctest::Approx(e.ci_lo(0)));
}

TEST_CASE("noiseless linear demand gives test R^2 of one") {
    // Q and P are exact linear functions of the lagged tabular control and
    // the similarities: X_t = 0.5 X_{t-1} + 0.3 Q_{t-1}, P_t = 0.5 X_t,
    // Q_t = -0.5 P_t + X_t + sim'c.
    sim::SemConfig s;
    s.n_products = 200;
    s.n_periods = 8;
    s.embedding_dim = 32;
    s.seed = 3;
    s.elasticity.a0 = -0.5;
    s.state.n_tabular = 1;
    s.state.intercept = {0.0};
    s.state.own_lag = {0.5};
    s.state.q_loading = {0.3};
    s.state.noise = 0.0;
    s.outcome.sim = {1.0, -0.5, 0.8, -1.2, 0.3};
    s.outcome.tabular = {1.0};
    s.outcome.noise = 0.0;
    s.price.tabular = {0.5};
    s.price.noise = 0.0;
    const auto panel = sim::simulate(s).first;
    const auto [train, test] = split_by_product(panel, 0.5, 1);

    config::EvalConfig eval;
    learn::LearnerSpec lin;
    lin.kind = learn::LearnerKind::Linear;
    eval.learners = {{"Linear Reg", lin}};
    eval.feature_sets = {"tabular", "similarities"};
    const auto rows = pipeline::run_predictive_eval(train, test, eval);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].label == "Linear Reg [tabular]");
    CHECK(rows[1].label == "Linear Reg [+5 Similarities]");
    for (double r2 : rows[1].r2) CHECK(std::abs(r2 - 1.0) < 1e-9);
    CHECK(rows[0].r2[0] < 0.99);

    const auto table = pipeline::format_eval_table(rows);
    for (const char* col : pipeline::kEvalTargets) CHECK(table.find(col) != std::string::npos);
    CHECK(table.find("100.00%") != std::string::npos);
    std::ostringstream csv;
    pipeline::write_eval_csv(csv, rows);
    CHECK(csv.str().find("Q_it,P_it,dQ_it,dP_it") != std::string::npos);
}

TEST_CASE("eval features lag the tabular controls") {
    sim::SemConfig s;
    s.n_products = 20;
    s.n_periods = 3;
    s.embedding_dim = 16;
    const auto panel = sim::simulate(s).first;
    const auto d = pipeline::eval_data(panel, "similarities");
    CHECK(d.features.names.front() == "x1_lag");
    CHECK(d.features.cols() == 2 + 5);
    CHECK(d.targets[0].size() == 20 * 3);
    const auto& obs = panel.observations();
    CHECK(d.features.values(0, 0) == obs[0].tabular[0]);
    CHECK(d.targets[0](0) == obs[1].q);
    CHECK(d.targets[2](0) == obs[1].q - obs[0].q);
    CHECK_THROWS_AS(pipeline::eval_data(panel, "colors"), ConfigError);
    CHECK_THROWS_AS(pipeline::eval_data(panel, "pca"), DimensionError);
}

TEST_CASE("pipeline writes a manifest of the seven stages and is deterministic") {
    const auto a = fresh_dir("run-a");
    const auto b = fresh_dir("run-b");
    const auto ra = pipeline::run_pipeline(small_run(a));
    const auto rb = pipeline::run_pipeline(small_run(b));
    CHECK(ra.config_hash == rb.config_hash);

    const auto m = json::parse(slurp(a / "manifest.json"));
    REQUIRE(m["stages"].size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(m["stages"][i]["name"] == pipeline::kStages[i]);
        CHECK(m["stages"][i]["wall_seconds"].is_number());
    }
    CHECK(m["stages"][1]["status"] == "substituted");
    CHECK(m["config_hash"] == ra.config_hash);

    std::set<std::string> files_a, files_b;
    for (const auto& e : fs::directory_iterator(a)) files_a.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b)) files_b.insert(e.path().filename().string());
    CHECK(files_a == files_b);
    for (const char* f : {"split.csv", "residuals.csv", "homogeneous.txt", "heterogeneous.json", "wald.txt",
                          "sorted_effects.csv", "config.json", "compression_model.txt"}) {
        CHECK(files_a.count(f) == 1);
    }
    for (const auto& f : files_a) {
        if (f == "manifest.json") continue;
        CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
    }
    CHECK(manifest_without_times(a) == manifest_without_times(b));
    CHECK(slurp(a / "homogeneous.txt").rfind("# config_hash: " + ra.config_hash, 0) == 0);

    // The saved config reproduces the hash.
    const auto reloaded = config::load_run_config((a / "config.json").string());
    CHECK(config::config_hash(reloaded) == ra.config_hash);

    // A populated output directory is never overwritten.
    CHECK_THROWS_AS(pipeline::run_pipeline(small_run(a)), ConfigError);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("homogeneous -0.5 is inside its own interval in a simulated run") {
    const auto dir = fresh_dir("run-h");
    auto c = small_run(dir);
    c.input.simulate.n_products = 600;
    c.input.simulate.elasticity = sim::ElasticitySpec{};
    c.input.simulate.elasticity.a0 = -0.5;
    c.effect_model = config::EffectModel::Homogeneous;
    const auto r = pipeline::run_pipeline(c);
    REQUIRE(r.estimates.homogeneous);
    const auto& h = *r.estimates.homogeneous;
    CHECK(h.ci_lo(0) <= -0.5);
    CHECK(-0.5 <= h.ci_hi(0));
    CHECK(!fs::exists(dir / "heterogeneous.json"));
    fs::remove_all(dir);
}

TEST_CASE("stage errors name the stage and the artifact") {
    const auto dir = fresh_dir("run-bad");
    auto c = small_run(dir);
    c.input.source = config::InputSource::Load;
    const auto panel_path = fs::temp_directory_path() / "demand-test-bad-panel.csv";
    {
        std::ofstream out(panel_path);
        out << "product_id,period,q,p\nA,0,1,nan\n";
    }
    c.input.panel_path = panel_path.string();
    try {
        pipeline::run_pipeline(c);
        FAIL("expected a data error");
    } catch (const Error& e) {
        const std::string what = e.what();
        CHECK(what.find("dataset_split") != std::string::npos);
        CHECK(what.find(panel_path.string()) != std::string::npos);
        CHECK(e.category() == ErrorCategory::Data);
    }
    c.input.panel_path = "/nonexistent/panel.csv";
    try {
        pipeline::run_pipeline(c);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Config);
    }
    fs::remove(panel_path);
    fs::remove_all(dir);
}

TEST_CASE("output directory resolution") {
    auto c = config::default_run_config();
    c.output_dir = "/tmp/x";
    CHECK(pipeline::resolve_output_dir(c) == fs::path("/tmp/x"));
    c.output_dir.clear();
    CHECK(pipeline::resolve_output_dir(c).filename().string() == "run-" + config::config_hash(c));
}

TEST_CASE("ground truth CSV has one row per observation") {
    sim::SemConfig s;
    s.n_products = 6;
    s.n_periods = 2;
    s.embedding_dim = 16;
    const auto [panel, truth] = sim::simulate(s);
    std::ostringstream out;
    pipeline::write_ground_truth_csv(out, panel, truth);
    std::istringstream lines(out.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "product_id,period,a_it,cace");
    std::size_t n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == panel.observations().size());
    CHECK(out.str().find("P000000,0,") != std::string::npos);
    auto short_truth = truth;
    short_truth.a_it.pop_back();
    CHECK_THROWS_AS(pipeline::write_ground_truth_csv(out, panel, short_truth), DimensionError);
}
