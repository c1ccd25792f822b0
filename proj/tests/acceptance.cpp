// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
//   acceptance <demand-binary> [criterion numbers...]

#include "demand/compression.hpp"
#include "demand/config.hpp"
#include "demand/dml.hpp"
#include "demand/errors.hpp"
#include "demand/pipeline.hpp"
#include "demand/simulator.hpp"
#include "demand/stats.hpp"
#include "support.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace demand;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> unique_products(const StateTable& rows) {
    const std::set<std::string> s(rows.product_ids.begin(), rows.product_ids.end());
    return {s.begin(), s.end()};
}

dml::PartialOutOptions nuisances(learn::LearnerKind kind) {
    dml::PartialOutOptions o;
    o.q_spec.kind = o.p_spec.kind = kind;
    return o;
}

dml::ResidualPanel residuals(const StateTable& rows, dml::PartialOutOptions o, std::uint64_t seed) {
    o.q_spec.trees.seed = o.p_spec.trees.seed = seed;
    return dml::partial_out(rows, dml::make_folds(unique_products(rows), 5, seed), o);
}

// ---------------------------------------------------------------------------
// AC-1

Outcome ac1_fwl() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Eigen::Index n = 200, p = 5;
        StateTable t;
        const Matrix x = testsupport::random_normal(n, p + 2, 500 + s);
        t.state.values = x.leftCols(p);
        for (Eigen::Index j = 0; j < p; ++j) t.state.names.push_back("x" + std::to_string(j));
        const Vector beta = Vector::LinSpaced(p, -1.0, 1.0);
        t.p = t.state.values * beta + x.col(p);
        t.q = -0.7 * t.p + t.state.values * beta.reverse() + x.col(p + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            t.product_ids.push_back(sim::product_id(static_cast<std::size_t>(i)));
            t.periods.push_back(1);
        }
        const auto c = dml::rank_fwl_check(t);
        worst = std::max(worst, std::abs(c.dml - c.ols));
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-8 && secs < 5.0, fmt("max |slope - OLS| = %.2e over 50 datasets in %.2f s", worst, secs)};
}

// ---------------------------------------------------------------------------
// AC-2

/// Homogeneous design with boosted-tree nuisances. Price loads weakly on the
/// state so that tree approximation error in the two nuisances stays small
/// relative to the sampling error.
sim::SemConfig homogeneous_design(std::uint64_t seed) {
    sim::SemConfig c;
    c.n_products = 2000;
    c.n_periods = 9;
    c.seed = seed;
    c.elasticity.a0 = -0.54;
    c.confounding = 0.0;
    c.outcome.q_lag = 0.5;
    c.outcome.p_lag = 0.2;
    c.outcome.sim = {1.0, -0.5, 0.8, -1.2, 0.3};
    c.outcome.tabular = {0.3, -0.2};
    c.outcome.tanh_weight = 0.5;
    c.outcome.noise = 1.0;
    c.price.q_lag = 0.1;
    c.price.p_lag = 0.25;
    c.price.sim = {0.125, 0.05, -0.1, 0.075, -0.075};
    c.price.tabular = {0.05, 0.025};
    c.price.noise = 0.5;
    c.state.intercept = {0.0, 0.0};
    c.state.own_lag = {0.6, 0.6};
    c.state.q_loading = {0.2, 0.2};
    return c;
}

dml::PartialOutOptions tree_nuisances() {
    auto o = nuisances(learn::LearnerKind::BoostedTrees);
    for (auto* s : {&o.q_spec, &o.p_spec}) {
        s->trees.n_trees = 300;
        s->trees.learning_rate = 0.05;
        s->trees.max_depth = 3;
        s->trees.min_samples_leaf = 20;
        s->trees.subsample = 0.8;
    }
    return o;
}

Outcome ac2_homogeneous() {
    const int reps = 100;
    int covered = 0;
    double first = 0.0, bias = 0.0;
    for (int r = 0; r < reps; ++r) {
        const auto c = homogeneous_design(1000 + static_cast<std::uint64_t>(r));
        const auto panel = sim::simulate(c).first;
        const auto est = dml::estimate_homogeneous(residuals(build_state(panel, {}), tree_nuisances(), c.seed));
        if (r == 0) first = est.coef(0);
        bias += (est.coef(0) + 0.54) / reps;
        covered += est.ci_lo(0) <= -0.54 && -0.54 <= est.ci_hi(0);
    }
    const bool pass = std::abs(first + 0.54) < 0.05 && covered >= 83 && covered <= 96;
    return {pass, fmt("single run %.4f (|err| %.4f); 90%% CI coverage %d/%d; mean bias %+.4f", first,
                      std::abs(first + 0.54), covered, reps, bias)};
}

// ---------------------------------------------------------------------------
// AC-3

Outcome ac3_confounding() {
    sim::SemConfig c;
    c.n_products = 2000;
    c.n_periods = 9;
    c.seed = 303;
    c.elasticity.a0 = -0.54;
    c.outcome.q_lag = 0.5;
    c.outcome.noise = 0.5;
    c.outcome.sim = {0.5, -0.3, 0.2, -0.4, 0.1};
    c.price.q_lag = 0.4;
    c.price.noise = 0.3;
    c.state.intercept = {0.0, 0.0};
    c.state.own_lag = {0.5, 0.5};
    c.state.q_loading = {0.0, 0.0};
    const auto panel = sim::simulate(c).first;
    auto rows = build_state(panel, {});
    const auto o = nuisances(learn::LearnerKind::Linear);
    const double full = dml::estimate_homogeneous(residuals(rows, o, c.seed)).coef(0);
    rows.state = rows.state.without({"q_lag"});
    const double naive = dml::estimate_homogeneous(residuals(rows, o, c.seed)).coef(0);
    const double attenuation = (naive - (-0.54)) / 0.54;
    const bool pass = attenuation >= 0.5 && std::abs(full + 0.54) < 0.05;
    return {pass, fmt("naive (no q_lag) %.4f, attenuation %.0f%%; full state %.4f", naive, 100 * attenuation, full)};
}

// ---------------------------------------------------------------------------
// AC-4 and AC-5

/// Heterogeneous design from the default configuration at a smaller
/// embedding dimension.
sim::SemConfig heterogeneous_design(std::uint64_t seed) {
    auto c = config::default_run_config().input.simulate;
    c.embedding_dim = 64;
    c.seed = seed;
    return c;
}

/// True elasticity coefficients in the estimator's modifier coordinates:
/// lags standardized and similarities centered over the estimation rows.
Vector generating_values(const dml::EffectEstimate& est, const dml::ResidualPanel& res,
                         const sim::LinearElasticity& truth) {
    const auto center = [&](const std::string& n) { return res.modifier_center(res.modifiers.index_of(n)); };
    std::vector<double> sims;
    for (std::size_t k = 0; k < truth.sim.size(); ++k) sims.push_back(center("cs_" + std::to_string(k + 1)));
    Vector out(est.coef.size());
    for (Eigen::Index j = 0; j < est.coef.size(); ++j) {
        const auto& n = est.names[static_cast<std::size_t>(j)];
        const auto col = res.modifiers.index_of(n);
        if (n == "const") {
            out(j) = truth(center("q_lag"), center("p_lag"), sims);
        } else if (n == "q_lag") {
            out(j) = truth.q_lag * res.modifier_scale(col);
        } else if (n == "p_lag") {
            out(j) = truth.p_lag * res.modifier_scale(col);
        } else {
            out(j) = truth.sim[static_cast<std::size_t>(std::stoi(n.substr(3)) - 1)] * res.modifier_scale(col);
        }
    }
    return out;
}

Outcome ac4_heterogeneous() {
    const int reps = 100;
    std::vector<int> within;
    std::vector<std::string> names;
    double worst_centercept = 0.0;
    for (int r = 0; r < reps; ++r) {
        const auto c = heterogeneous_design(4000 + static_cast<std::uint64_t>(r));
        const auto [panel, truth] = sim::simulate(c);
        const auto res = residuals(build_state(panel, {}), nuisances(learn::LearnerKind::Linear), c.seed);
        const auto est = dml::estimate_heterogeneous(res);
        const Vector target = generating_values(est, res, truth.elasticity);
        if (within.empty()) {
            within.assign(static_cast<std::size_t>(est.coef.size()), 0);
            names = est.names;
        }
        for (Eigen::Index j = 0; j < est.coef.size(); ++j) {
            within[static_cast<std::size_t>(j)] += std::abs(est.coef(j) - target(j)) <= 2.0 * est.se(j);
        }
        const auto curve = dml::sorted_effects(est, res.modifiers, 0.90);
        double mean = 0.0;
        for (double a : curve.alpha) mean += a;
        mean /= static_cast<double>(curve.alpha.size());
        worst_centercept = std::max(worst_centercept, std::abs(mean - est.coef(0)));
    }
    const int fewest = *std::min_element(within.begin(), within.end());
    std::string counts;
    for (std::size_t j = 0; j < names.size(); ++j) counts += (j ? " " : "") + names[j] + "=" + std::to_string(within[j]);
    const bool pass = fewest >= 90 && worst_centercept < 1e-8;
    return {pass, fmt("within 2 SE per coefficient (of %d): %s; max |centercept - mean alpha| %.1e", reps,
                      counts.c_str(), worst_centercept)};
}

Outcome ac5_wald() {
    const int reps = 200;
    int size_rejections = 0, power_rejections = 0;
    for (int r = 0; r < reps; ++r) {
        for (bool null : {true, false}) {
            auto c = heterogeneous_design(5000 + static_cast<std::uint64_t>(r));
            c.n_products = 1000;
            if (null) c.elasticity.sim_coef.assign(c.elasticity.sim_coef.size(), 0.0);
            const auto panel = sim::simulate(c).first;
            const auto res = residuals(build_state(panel, {}), nuisances(learn::LearnerKind::Linear), c.seed);
            const auto est = dml::estimate_heterogeneous(res);
            const bool reject = dml::wald_joint_test(est, dml::similarity_terms(est)).p_value < 0.05;
            (null ? size_rejections : power_rejections) += reject;
        }
    }
    const double size = static_cast<double>(size_rejections) / reps;
    const double power = static_cast<double>(power_rejections) / reps;
    const bool pass = size >= 0.02 && size <= 0.10 && power >= 0.90;
    return {pass, fmt("similarities-only test at 5%%: size %.1f%%, power %.1f%% over %d replications", 100 * size,
                      100 * power, reps)};
}

// ---------------------------------------------------------------------------
// AC-6

/// Pointwise standard error of each sorted-curve point, from its band.
std::vector<double> pointwise_se(const dml::SortedEffects& curve, double level) {
    const double z = stats::normal_quantile(0.5 + level / 2.0);
    std::vector<double> se(curve.alpha.size());
    for (std::size_t i = 0; i < se.size(); ++i) se[i] = (curve.hi[i] - curve.alpha[i]) / z;
    return se;
}

Outcome ac6_sorted_effects() {
    const int reps = 100;
    const double level = 0.90;
    bool monotone = true;
    double flat_share = 0.0;
    int spans = 0;
    for (int r = 0; r < reps; ++r) {
        // Flat truth: share of points whose two-SE interval holds -0.54.
        auto flat = heterogeneous_design(6000 + static_cast<std::uint64_t>(r));
        flat.elasticity = sim::ElasticitySpec{};
        flat.elasticity.a0 = -0.54;
        const auto flat_panel = sim::simulate(flat).first;
        const auto flat_res = residuals(build_state(flat_panel, {}), nuisances(learn::LearnerKind::Linear), flat.seed);
        const auto flat_curve = dml::sorted_effects(dml::estimate_heterogeneous(flat_res), flat_res.modifiers, level);
        monotone = monotone && std::is_sorted(flat_curve.alpha.begin(), flat_curve.alpha.end());
        const auto flat_se = pointwise_se(flat_curve, level);
        std::size_t inside = 0;
        for (std::size_t i = 0; i < flat_se.size(); ++i) inside += std::abs(flat_curve.alpha[i] + 0.54) <= 2.0 * flat_se[i];
        flat_share += static_cast<double>(inside) / static_cast<double>(flat_se.size()) / reps;

        // Heterogeneous truth: the curve reaches the extremes of the true
        // alpha(s_i) up to two SEs at each end.
        const auto het = heterogeneous_design(6500 + static_cast<std::uint64_t>(r));
        const auto [panel, truth] = sim::simulate(het);
        const auto rows = build_state(panel, {});
        const auto res = residuals(rows, nuisances(learn::LearnerKind::Linear), het.seed);
        const auto curve = dml::sorted_effects(dml::estimate_heterogeneous(res), res.modifiers, level);
        monotone = monotone && std::is_sorted(curve.alpha.begin(), curve.alpha.end());
        const auto se = pointwise_se(curve, level);
        double lo_true = 1e300, hi_true = -1e300;
        const auto iq = rows.state.index_of("q_lag"), ip = rows.state.index_of("p_lag");
        std::vector<Eigen::Index> sim_cols;
        for (std::size_t k = 1; k <= truth.elasticity.sim.size(); ++k) {
            sim_cols.push_back(rows.state.index_of("cs_" + std::to_string(k)));
        }
        for (Eigen::Index i = 0; i < rows.state.values.rows(); ++i) {
            std::vector<double> s;
            for (auto col : sim_cols) s.push_back(rows.state.values(i, col));
            const double a = truth.elasticity(rows.state.values(i, iq), rows.state.values(i, ip), s);
            lo_true = std::min(lo_true, a);
            hi_true = std::max(hi_true, a);
        }
        spans += curve.alpha.front() <= lo_true + 2.0 * se.front() && curve.alpha.back() >= hi_true - 2.0 * se.back();
    }
    const bool pass = monotone && flat_share >= 0.90 && spans >= 90;
    return {pass, fmt("nondecreasing in all runs: %s; flat truth inside the 2-SE band at %.1f%% of points; "
                      "heterogeneous span covers the true range in %d/%d",
                      monotone ? "yes" : "no", 100 * flat_share, spans, reps)};
}

// ---------------------------------------------------------------------------
// AC-7

Outcome ac7_compression() {
    using namespace compression;
    // Unit norm after center_normalize.
    const Matrix x = testsupport::random_normal(500, 40, 71);
    const auto cn = center_normalize(x);
    double norm_err = 0.0;
    for (Eigen::Index i = 0; i < cn.rows.rows(); ++i) norm_err = std::max(norm_err, std::abs(cn.rows.row(i).norm() - 1.0));

    // PCA hand example: axes e1, e2 with scores equal to the coordinates.
    Matrix toy(4, 2);
    toy << 2, 0, -2, 0, 0, 1, 0, -1;
    const auto pca = pca_features(toy, 2);
    const bool pca_exact = pca.axes.isApprox(Matrix::Identity(2, 2), 1e-12) && (pca.features - toy).norm() < 1e-12 &&
                           std::abs(pca.eigenvalues(0) - 8.0 / 3.0) < 1e-12 &&
                           std::abs(pca.eigenvalues(1) - 2.0 / 3.0) < 1e-12;

    // k-means on five clusters on the sphere.
    sim::SemConfig sc;
    sc.n_products = 1000;
    sc.embedding_dim = 64;
    sc.seed = 72;
    const auto emb = sim::simulate_embeddings(sc);
    const auto km = kmeans(emb.vectors, 5, 73);
    const double ari = testsupport::adjusted_rand_index(emb.labels, km.labels);

    // JL: squared distances scale by m within 35% for 95% of pairs.
    const Eigen::Index n = 1000, d = 768, m = 256;
    Matrix e = testsupport::random_normal(n, d, 74);
    e.rowwise().normalize();
    const Matrix y = jl_project(e, m, 75);
    auto rng = make_engine(76, 0);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    int good = 0;
    const int pairs = 2000;
    for (int s = 0; s < pairs; ++s) {
        Eigen::Index a = pick(rng), b = pick(rng);
        if (a == b) b = (b + 1) % n;
        const double ratio =
            (y.row(a) - y.row(b)).squaredNorm() / (static_cast<double>(m) * (e.row(a) - e.row(b)).squaredNorm());
        good += std::abs(ratio - 1.0) <= 0.35;
    }
    const double frac = static_cast<double>(good) / pairs;
    const bool pass = norm_err <= 1e-12 && pca_exact && ari >= 0.9 && frac >= 0.95;
    return {pass, fmt("max | |x| - 1 | %.1e; PCA hand example %s; k-means ARI %.3f; JL pairs within bound %.1f%%",
                      norm_err, pca_exact ? "exact" : "wrong", ari, 100 * frac)};
}

// ---------------------------------------------------------------------------
// AC-8

Outcome ac8_eval() {
    auto c = config::default_run_config();
    auto& s = c.input.simulate;
    s.n_products = 1500;
    s.embedding_dim = 768;
    s.seed = 81;
    s.elasticity = sim::ElasticitySpec{};
    s.outcome.sim = {2.0, -1.0, 1.6, -2.4, 0.6};
    c.compression.target_dim = 256;
    c.eval.learners = {{"Linear Reg", {learn::LearnerKind::Linear, {}, {}}}};
    c.eval.feature_sets = {"tabular", "similarities", "embeddings"};
    const auto rows = pipeline::run_predictive_eval(c);
    const double tab = rows.at(0).r2[0], sims = rows.at(1).r2[0], embs = rows.at(2).r2[0];
    const bool pass = sims - tab >= 0.10 && std::abs(sims - embs) <= 0.03;
    return {pass, fmt("test R^2 for Q: tabular %.2f%%, +5 similarities %.2f%%, embeddings %.2f%%", 100 * tab,
                      100 * sims, 100 * embs)};
}

// ---------------------------------------------------------------------------
// AC-9

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome ac9_determinism(const std::string& binary) {
    const auto root = fs::temp_directory_path() / "demand-acceptance-ac9";
    fs::remove_all(root);
    fs::create_directories(root);
    auto c = config::default_run_config();
    c.input.simulate.n_products = 400;
    c.input.simulate.embedding_dim = 128;
    c.compression.target_dim = 64;
    c.eval.feature_sets = {"tabular", "similarities"};
    {
        std::ofstream out(root / "config.json");
        out << config::to_json(c).dump(2);
    }
    for (const char* run : {"a", "b"}) {
        const std::string cmd = "\"" + binary + "\" run -c \"" + (root / "config.json").string() + "\" -o \"" +
                                (root / run).string() + "\" > \"" + (root / run).string() + ".log\" 2>&1";
        if (std::system(cmd.c_str()) != 0) return {false, std::string("run ") + run + " failed: " + slurp(root / (std::string(run) + ".log"))};
    }
    std::set<std::string> names;
    for (const auto* run : {"a", "b"}) {
        for (const auto& e : fs::directory_iterator(root / run)) names.insert(e.path().filename().string());
    }
    int identical = 0;
    std::vector<std::string> differing;
    for (const auto& n : names) {
        std::string a = slurp(root / "a" / n), b = slurp(root / "b" / n);
        if (n == "manifest.json") {
            auto strip = [](const std::string& text) {
                auto j = nlohmann::json::parse(text);
                for (auto& stage : j["stages"]) stage.erase("wall_seconds");
                return j.dump();
            };
            a = strip(a);
            b = strip(b);
        }
        if (a == b && fs::exists(root / "a" / n) && fs::exists(root / "b" / n)) {
            ++identical;
        } else {
            differing.push_back(n);
        }
    }
    std::string diff;
    for (const auto& n : differing) diff += " " + n;
    fs::remove_all(root);
    return {differing.empty() && identical > 0,
            fmt("%d/%zu bundle files byte-identical (manifest compared without wall_seconds)%s%s", identical,
                names.size(), differing.empty() ? "" : "; differ:", diff.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <demand-binary> [criteria...]\n");
        return 2;
    }
    const std::string binary = argv[1];
    std::set<int> only;
    for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, ac1_fwl},
        {2, ac2_homogeneous},
        {3, ac3_confounding},
        {4, ac4_heterogeneous},
        {5, ac5_wald},
        {6, ac6_sorted_effects},
        {7, ac7_compression},
        {8, ac8_eval},
        {9, [&] { return ac9_determinism(binary); }},
    };
    int failed = 0;
    for (const auto& [id, check] : criteria) {
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("AC-%d %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
