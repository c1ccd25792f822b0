#include "demand/config.hpp"

#include "demand/errors.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace demand::config {

using nlohmann::json;

namespace {

/// Strict object reader: every key must be consumed, types must convert.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(where(key) + " must be true or false");
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw ConfigError(where(key) + " must be a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
        }
        try {
            out = v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    /// Nested object, or nullptr when absent.
    const json* object(const char* key) {
        seen_.insert(key);
        if (!j_.contains(key)) return nullptr;
        if (!j_.at(key).is_object()) throw ConfigError(where(key) + " must be a JSON object");
        return &j_.at(key);
    }

    const json* raw(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string where(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError("unknown config key " + path_ + "." + item.key());
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json equation_json(const sim::Equation& e) {
    return {{"intercept", e.intercept}, {"q_lag", e.q_lag}, {"p_lag", e.p_lag},
            {"sim", e.sim},             {"tabular", e.tabular}, {"noise", e.noise}};
}

void read_equation(Reader& r, sim::Equation& e) {
    r.get("intercept", e.intercept);
    r.get("q_lag", e.q_lag);
    r.get("p_lag", e.p_lag);
    r.get("sim", e.sim);
    r.get("tabular", e.tabular);
    r.get("noise", e.noise);
}

template <class Enum>
Enum parse_enum(const std::string& value, const std::vector<std::pair<const char*, Enum>>& options,
                const std::string& where) {
    std::string names;
    for (const auto& [name, e] : options) {
        if (value == name) return e;
        names += (names.empty() ? "" : ", ") + std::string(name);
    }
    throw ConfigError(where + ": unknown value '" + value + "' (expected one of " + names + ")");
}

const std::vector<std::pair<const char*, EmbeddingControls>> kEmbeddingControls{
    {"none", EmbeddingControls::None},
    {"embeddings", EmbeddingControls::Embeddings},
    {"similarities", EmbeddingControls::Similarities},
    {"pca", EmbeddingControls::Pca}};

const std::vector<std::pair<const char*, EffectModel>> kEffectModels{
    {"homogeneous", EffectModel::Homogeneous}, {"heterogeneous", EffectModel::Heterogeneous}, {"both", EffectModel::Both}};

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

}  // namespace

std::string to_string(EffectModel m) {
    for (const auto& [name, e] : kEffectModels) {
        if (e == m) return name;
    }
    return "unknown";
}

std::string to_string(EmbeddingControls c) {
    for (const auto& [name, e] : kEmbeddingControls) {
        if (e == c) return name;
    }
    return "unknown";
}

json to_json(const sim::SemConfig& c) {
    const auto& e = c.elasticity;
    json centering = nullptr;
    if (e.centering) {
        centering = {{"q_center", e.centering->q_center}, {"q_scale", e.centering->q_scale},
                     {"p_center", e.centering->p_center}, {"p_scale", e.centering->p_scale},
                     {"sim_center", e.centering->sim_center}};
    }
    json outcome = equation_json(c.outcome);
    outcome["tanh_weight"] = c.outcome.tanh_weight;
    outcome["tanh_scale"] = c.outcome.tanh_scale;
    return {{"n_products", c.n_products},
            {"n_periods", c.n_periods},
            {"embedding_dim", c.embedding_dim},
            {"n_latent_clusters", c.n_latent_clusters},
            {"embedding_noise", c.embedding_noise},
            {"elasticity",
             {{"kind", e.kind == sim::ElasticitySpec::Kind::Homogeneous ? "homogeneous" : "heterogeneous"},
              {"a0", e.a0},
              {"sim_coef", e.sim_coef},
              {"p_lag_coef", e.p_lag_coef},
              {"q_lag_coef", e.q_lag_coef},
              {"noise", e.noise},
              {"centering", centering}}},
            {"outcome", outcome},
            {"price", equation_json(c.price)},
            {"confounding", c.confounding},
            {"state",
             {{"n_tabular", c.state.n_tabular},
              {"intercept", c.state.intercept},
              {"own_lag", c.state.own_lag},
              {"q_loading", c.state.q_loading},
              {"noise", c.state.noise}}},
            {"burn_in", c.burn_in},
            {"seed", c.seed}};
}

sim::SemConfig sem_config_from_json(const json& j) {
    sim::SemConfig c;
    Reader r(j, "simulate");
    r.get("n_products", c.n_products);
    r.get("n_periods", c.n_periods);
    r.get("embedding_dim", c.embedding_dim);
    r.get("n_latent_clusters", c.n_latent_clusters);
    r.get("embedding_noise", c.embedding_noise);
    r.get("confounding", c.confounding);
    r.get("burn_in", c.burn_in);
    r.get("seed", c.seed);
    if (const auto* e = r.object("elasticity")) {
        Reader er(*e, "simulate.elasticity");
        std::string kind = "homogeneous";
        er.get("kind", kind);
        c.elasticity.kind = parse_enum<sim::ElasticitySpec::Kind>(
            kind, {{"homogeneous", sim::ElasticitySpec::Kind::Homogeneous}, {"heterogeneous", sim::ElasticitySpec::Kind::Heterogeneous}},
            "simulate.elasticity.kind");
        er.get("a0", c.elasticity.a0);
        er.get("sim_coef", c.elasticity.sim_coef);
        er.get("p_lag_coef", c.elasticity.p_lag_coef);
        er.get("q_lag_coef", c.elasticity.q_lag_coef);
        er.get("noise", c.elasticity.noise);
        if (const auto* cj = er.raw("centering"); cj && !cj->is_null()) {
            Reader cr(*cj, "simulate.elasticity.centering");
            sim::Centering cent;
            cr.get("q_center", cent.q_center);
            cr.get("q_scale", cent.q_scale);
            cr.get("p_center", cent.p_center);
            cr.get("p_scale", cent.p_scale);
            cr.get("sim_center", cent.sim_center);
            cr.finish();
            c.elasticity.centering = cent;
        }
        er.finish();
    }
    if (const auto* o = r.object("outcome")) {
        Reader orr(*o, "simulate.outcome");
        read_equation(orr, c.outcome);
        orr.get("tanh_weight", c.outcome.tanh_weight);
        orr.get("tanh_scale", c.outcome.tanh_scale);
        orr.finish();
    }
    if (const auto* p = r.object("price")) {
        Reader pr(*p, "simulate.price");
        read_equation(pr, c.price);
        pr.finish();
    }
    if (const auto* s = r.object("state")) {
        Reader sr(*s, "simulate.state");
        sr.get("n_tabular", c.state.n_tabular);
        sr.get("intercept", c.state.intercept);
        sr.get("own_lag", c.state.own_lag);
        sr.get("q_loading", c.state.q_loading);
        sr.get("noise", c.state.noise);
        sr.finish();
    }
    r.finish();
    return c;
}

json to_json(const learn::LearnerSpec& s) {
    const auto& t = s.trees;
    return {{"kind", learn::to_string(s.kind)},
            {"interactions",
             {{"left", s.interactions.left}, {"right", s.interactions.right}, {"right_prefix", s.interactions.right_prefix}}},
            {"trees",
             {{"n_trees", t.n_trees},
              {"learning_rate", t.learning_rate},
              {"max_depth", t.max_depth},
              {"min_samples_leaf", t.min_samples_leaf},
              {"subsample", t.subsample},
              {"seed", t.seed},
              {"early_stopping_rounds", t.early_stopping_rounds},
              {"validation_fraction", t.validation_fraction}}}};
}

learn::LearnerSpec learner_spec_from_json(const json& j) {
    learn::LearnerSpec s;
    Reader r(j, "learner");
    std::string kind = learn::to_string(s.kind);
    r.get("kind", kind);
    s.kind = learn::parse_learner_kind(kind);
    if (const auto* i = r.object("interactions")) {
        Reader ir(*i, "learner.interactions");
        ir.get("left", s.interactions.left);
        ir.get("right", s.interactions.right);
        ir.get("right_prefix", s.interactions.right_prefix);
        ir.finish();
    }
    if (const auto* t = r.object("trees")) {
        Reader tr(*t, "learner.trees");
        tr.get("n_trees", s.trees.n_trees);
        tr.get("learning_rate", s.trees.learning_rate);
        tr.get("max_depth", s.trees.max_depth);
        tr.get("min_samples_leaf", s.trees.min_samples_leaf);
        tr.get("subsample", s.trees.subsample);
        tr.get("seed", s.trees.seed);
        tr.get("early_stopping_rounds", s.trees.early_stopping_rounds);
        tr.get("validation_fraction", s.trees.validation_fraction);
        tr.finish();
    }
    r.finish();
    s.validate();
    return s;
}

RunConfig default_run_config() {
    RunConfig c;
    auto& s = c.input.simulate;
    s.n_products = 2000;
    s.embedding_dim = 768;
    s.elasticity.kind = sim::ElasticitySpec::Kind::Heterogeneous;
    s.elasticity.a0 = -0.643;
    s.elasticity.p_lag_coef = -0.167;
    s.elasticity.q_lag_coef = -0.226;
    s.elasticity.sim_coef = {0.0, -0.355, 0.03, -0.345, 0.13};
    s.outcome.q_lag = 0.5;
    s.outcome.p_lag = 0.1;
    s.outcome.sim = {1.0, -0.5, 0.8, -1.2, 0.3};
    s.outcome.tabular = {0.3, -0.2};
    s.outcome.noise = 0.5;
    s.price.q_lag = 0.2;
    s.price.p_lag = 0.5;
    s.price.sim = {0.25, 0.1, -0.2, 0.15, -0.15};
    s.price.tabular = {0.1, 0.05};
    s.price.noise = 0.5;
    s.state.intercept = {0.0, 0.0};
    s.state.own_lag = {0.6, 0.6};
    s.state.q_loading = {0.2, 0.2};
    c.eval.learners = {{"Linear Reg", {learn::LearnerKind::Linear, {}, {}}},
                       {"Boosted Trees Reg", {learn::LearnerKind::BoostedTrees, {}, {}}}};
    return c;
}

json to_json(const RunConfig& c) {
    json eval_learners = json::array();
    for (const auto& l : c.eval.learners) eval_learners.push_back({{"label", l.label}, {"spec", to_json(l.spec)}});
    const auto& km = c.compression.kmeans;
    return {{"input",
             {{"source", c.input.source == InputSource::Simulate ? "simulate" : "load"},
              {"simulate", to_json(c.input.simulate)},
              {"panel", c.input.panel_path},
              {"embeddings", c.input.embeddings_path}}},
            {"split", {{"fraction", c.split_fraction}, {"seed", c.split_seed}}},
            {"compression",
             {{"target_dim", c.compression.target_dim},
              {"k", c.compression.K},
              {"seed", c.compression.seed},
              {"kmeans", {{"restarts", km.restarts}, {"max_iterations", km.max_iterations}, {"tolerance", km.tolerance}}}}},
            {"controls", {{"embedding", to_string(c.controls.embedding)}, {"tabular", c.controls.tabular}}},
            {"learners", {{"q", to_json(c.q_learner)}, {"p", to_json(c.p_learner)}}},
            {"nuisance_mode", c.nuisance_mode == dml::NuisanceMode::CrossFit ? "cross_fit" : "full_sample"},
            {"effect_model", to_string(c.effect_model)},
            {"folds", c.folds},
            {"fold_seed", c.fold_seed},
            {"inference", {{"level", c.inference.level}, {"critical", c.inference.t_critical ? "t" : "normal"}}},
            {"modifiers",
             {{"standardize_lags", c.modifiers.standardize_lags},
              {"scale_similarities", c.modifiers.scale_similarities},
              {"similarity_prefix", c.modifiers.similarity_prefix}}},
            {"theta", c.theta},
            {"eval", {{"learners", eval_learners}, {"feature_sets", c.eval.feature_sets}}},
            {"runtime", {{"jobs", c.jobs}, {"output_dir", c.output_dir}}}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c = default_run_config();
    Reader r(j, "config");
    if (const auto* in = r.object("input")) {
        Reader ir(*in, "config.input");
        std::string source = "simulate";
        ir.get("source", source);
        c.input.source = parse_enum<InputSource>(source, {{"simulate", InputSource::Simulate}, {"load", InputSource::Load}},
                                                 "config.input.source");
        if (const auto* s = ir.object("simulate")) c.input.simulate = sem_config_from_json(*s);
        ir.get("panel", c.input.panel_path);
        ir.get("embeddings", c.input.embeddings_path);
        ir.finish();
    }
    if (const auto* s = r.object("split")) {
        Reader sr(*s, "config.split");
        sr.get("fraction", c.split_fraction);
        sr.get("seed", c.split_seed);
        sr.finish();
    }
    if (const auto* s = r.object("compression")) {
        Reader cr(*s, "config.compression");
        cr.get("target_dim", c.compression.target_dim);
        cr.get("k", c.compression.K);
        cr.get("seed", c.compression.seed);
        if (const auto* k = cr.object("kmeans")) {
            Reader kr(*k, "config.compression.kmeans");
            kr.get("restarts", c.compression.kmeans.restarts);
            kr.get("max_iterations", c.compression.kmeans.max_iterations);
            kr.get("tolerance", c.compression.kmeans.tolerance);
            kr.finish();
        }
        cr.finish();
    }
    if (const auto* s = r.object("controls")) {
        Reader cr(*s, "config.controls");
        std::string emb = to_string(c.controls.embedding);
        cr.get("embedding", emb);
        c.controls.embedding = parse_enum(emb, kEmbeddingControls, "config.controls.embedding");
        cr.get("tabular", c.controls.tabular);
        cr.finish();
    }
    if (const auto* s = r.object("learners")) {
        Reader lr(*s, "config.learners");
        if (const auto* q = lr.object("q")) c.q_learner = learner_spec_from_json(*q);
        if (const auto* p = lr.object("p")) c.p_learner = learner_spec_from_json(*p);
        lr.finish();
    }
    std::string mode = c.nuisance_mode == dml::NuisanceMode::CrossFit ? "cross_fit" : "full_sample";
    r.get("nuisance_mode", mode);
    c.nuisance_mode = parse_enum<dml::NuisanceMode>(
        mode, {{"cross_fit", dml::NuisanceMode::CrossFit}, {"full_sample", dml::NuisanceMode::FullSample}},
        "config.nuisance_mode");
    std::string model = to_string(c.effect_model);
    r.get("effect_model", model);
    c.effect_model = parse_enum(model, kEffectModels, "config.effect_model");
    r.get("folds", c.folds);
    r.get("fold_seed", c.fold_seed);
    if (const auto* s = r.object("inference")) {
        Reader ir(*s, "config.inference");
        ir.get("level", c.inference.level);
        std::string critical = c.inference.t_critical ? "t" : "normal";
        ir.get("critical", critical);
        c.inference.t_critical = parse_enum<bool>(critical, {{"normal", false}, {"t", true}}, "config.inference.critical");
        ir.finish();
    }
    if (const auto* s = r.object("modifiers")) {
        Reader mr(*s, "config.modifiers");
        mr.get("standardize_lags", c.modifiers.standardize_lags);
        mr.get("scale_similarities", c.modifiers.scale_similarities);
        mr.get("similarity_prefix", c.modifiers.similarity_prefix);
        mr.finish();
    }
    r.get("theta", c.theta);
    if (const auto* s = r.object("eval")) {
        Reader er(*s, "config.eval");
        if (const auto* ls = er.raw("learners")) {
            if (!ls->is_array()) throw ConfigError("config.eval.learners must be an array");
            c.eval.learners.clear();
            for (const auto& item : *ls) {
                Reader ir(item, "config.eval.learners[]");
                EvalLearner l;
                ir.get("label", l.label);
                if (const auto* spec = ir.object("spec")) l.spec = learner_spec_from_json(*spec);
                ir.finish();
                c.eval.learners.push_back(std::move(l));
            }
        }
        er.get("feature_sets", c.eval.feature_sets);
        er.finish();
    }
    if (const auto* s = r.object("runtime")) {
        Reader rr(*s, "config.runtime");
        rr.get("jobs", c.jobs);
        rr.get("output_dir", c.output_dir);
        rr.finish();
    }
    r.finish();
    validate(c);
    return c;
}

RunConfig load_run_config(const std::string& path) { return run_config_from_json(parse_file(path)); }

sim::SemConfig load_sem_config(const std::string& path) {
    const auto j = parse_file(path);
    // Accept either a bare simulator block or a full run config.
    if (j.is_object() && j.contains("input")) return run_config_from_json(j).input.simulate;
    return sem_config_from_json(j);
}

std::string canonical_json(const RunConfig& c) {
    json j = to_json(c);
    j.erase("runtime");
    return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_json(c)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void validate(const RunConfig& c) {
    if (!(c.split_fraction > 0.0 && c.split_fraction < 1.0)) throw ConfigError("split.fraction must lie in (0, 1)");
    if (c.folds < 1) throw ConfigError("folds must be positive");
    if (c.nuisance_mode == dml::NuisanceMode::CrossFit && c.folds < 2) {
        throw ConfigError("cross-fitting needs folds >= 2; use nuisance_mode full_sample for a single fold");
    }
    if (!(c.inference.level > 0.0 && c.inference.level < 1.0)) throw ConfigError("inference.level must lie in (0, 1)");
    if (!(c.theta > 0.0)) throw ConfigError("theta must be positive");
    if (c.compression.K < 1 || c.compression.target_dim < 1) throw ConfigError("compression k and target_dim must be positive");
    if (c.input.source == InputSource::Load && c.input.panel_path.empty()) {
        throw ConfigError("input.source 'load' needs input.panel");
    }
    for (const auto& f : c.eval.feature_sets) {
        if (f != "tabular" && f != "pca" && f != "similarities" && f != "embeddings") {
            throw ConfigError("unknown eval feature set '" + f + "'");
        }
    }
    c.q_learner.validate();
    c.p_learner.validate();
    if (c.input.source == InputSource::Simulate) sim::validate(c.input.simulate);
}

}  // namespace demand::config
