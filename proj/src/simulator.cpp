#include "demand/simulator.hpp"

#include "demand/errors.hpp"
#include "demand/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

namespace demand::sim {

namespace {

constexpr std::uint64_t kEmbeddingStream = 0xe1;
constexpr std::uint64_t kNoiseStream = 0xd7;
constexpr int kCentroidTries = 1000;
constexpr double kMaxCentroidCosine = 0.5;

std::vector<double> padded(const std::vector<double>& v, std::size_t n, double fill = 0.0) {
    return v.empty() ? std::vector<double>(n, fill) : v;
}

double dot(const std::vector<double>& a, const double* b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

/// Coefficients with every optional vector expanded to full length.
struct Resolved {
    std::size_t K = 0, n_tab = 0;
    std::vector<double> q_sim, q_tab, p_sim, p_tab;
    std::vector<double> s_int, s_lag, s_q;
};

Resolved resolve(const SemConfig& c) {
    Resolved r;
    r.K = c.n_latent_clusters;
    r.n_tab = c.state.n_tabular;
    r.q_sim = padded(c.outcome.sim, r.K);
    r.q_tab = padded(c.outcome.tabular, r.n_tab);
    r.p_sim = padded(c.price.sim, r.K);
    r.p_tab = padded(c.price.tabular, r.n_tab);
    r.s_int = padded(c.state.intercept, r.n_tab);
    r.s_lag = padded(c.state.own_lag, r.n_tab, 0.5);
    r.s_q = padded(c.state.q_loading, r.n_tab);
    return r;
}

/// Linear part of the dynamics at elasticity a0 (no tanh, no similarities):
/// x_t = M x_{t-1} + c with x = (Q, P, tabular...).
std::pair<Matrix, Vector> linear_dynamics(const SemConfig& c, const Resolved& r) {
    const auto n = static_cast<Eigen::Index>(2 + r.n_tab);
    Matrix M = Matrix::Zero(n, n);
    Vector b = Vector::Zero(n);
    const double a0 = c.elasticity.a0;
    for (std::size_t j = 0; j < r.n_tab; ++j) {
        const auto t = static_cast<Eigen::Index>(2 + j);
        M(t, t) = r.s_lag[j];
        M(t, 0) = r.s_q[j];
        b(t) = r.s_int[j];
    }
    // P_t = p.int + p.q Q + p.p P + p_tab . tab_t
    M(1, 0) = c.price.q_lag;
    M(1, 1) = c.price.p_lag;
    b(1) = c.price.intercept;
    for (std::size_t j = 0; j < r.n_tab; ++j) {
        const auto t = static_cast<Eigen::Index>(2 + j);
        M.row(1) += r.p_tab[j] * M.row(t);
        b(1) += r.p_tab[j] * b(t);
    }
    // Q_t = a0 P_t + q.int + q.q Q + q.p P + q_tab . tab_t
    M.row(0) = a0 * M.row(1);
    b(0) = a0 * b(1) + c.outcome.intercept;
    M(0, 0) += c.outcome.q_lag;
    M(0, 1) += c.outcome.p_lag;
    for (std::size_t j = 0; j < r.n_tab; ++j) {
        const auto t = static_cast<Eigen::Index>(2 + j);
        M.row(0) += r.q_tab[j] * M.row(t);
        b(0) += r.q_tab[j] * b(t);
    }
    return {M, b};
}

struct Paths {
    // [product][period], periods 0..T
    std::vector<std::vector<double>> q, p, a, cace;
    std::vector<std::vector<std::vector<double>>> tab;
};

Paths run_dynamics(const SemConfig& c, const Resolved& r, const Matrix& sims,
                   const LinearElasticity& alpha, double alpha_noise) {
    auto [M, b] = linear_dynamics(c, r);
    const auto n_state = M.rows();
    const Vector start = (Matrix::Identity(n_state, n_state) - M).partialPivLu().solve(b);

    const std::size_t N = c.n_products;
    const std::size_t n_keep = c.n_periods + 1;
    Paths out;
    out.q.assign(N, std::vector<double>(n_keep));
    out.p = out.a = out.cace = out.q;
    out.tab.assign(N, std::vector<std::vector<double>>(n_keep, std::vector<double>(r.n_tab)));

    Engine rng = make_engine(c.seed, kNoiseStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> tab(r.n_tab), tab_lag(r.n_tab), sim_row(r.K);

    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < r.K; ++k) sim_row[k] = sims(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        double q_lag = start(0), p_lag = start(1);
        for (std::size_t j = 0; j < r.n_tab; ++j) tab_lag[j] = start(static_cast<Eigen::Index>(2 + j));

        for (std::size_t step = 0; step < c.burn_in + n_keep; ++step) {
            for (std::size_t j = 0; j < r.n_tab; ++j) {
                tab[j] = r.s_int[j] + r.s_lag[j] * tab_lag[j] + r.s_q[j] * q_lag + c.state.noise * normal(rng);
            }
            const double eps_p = normal(rng);
            const double eps = normal(rng);
            const double eta = normal(rng);

            const double cace = alpha(q_lag, p_lag, sim_row);
            const double price = c.price.intercept + c.price.q_lag * q_lag + c.price.p_lag * p_lag +
                                 dot(r.p_sim, sim_row.data()) + dot(r.p_tab, tab.data()) +
                                 c.price.noise * eps_p + c.confounding * eps;
            const double a = cace + alpha_noise * eta;
            const double baseline = c.outcome.intercept + c.outcome.q_lag * q_lag + c.outcome.p_lag * p_lag +
                                    dot(r.q_sim, sim_row.data()) + dot(r.q_tab, tab.data()) +
                                    c.outcome.tanh_weight * std::tanh(c.outcome.tanh_scale * q_lag);
            const double quantity = a * price + baseline + c.outcome.noise * eps;

            if (step >= c.burn_in) {
                const auto t = step - c.burn_in;
                out.q[i][t] = quantity;
                out.p[i][t] = price;
                out.a[i][t] = a;
                out.cace[i][t] = cace;
                out.tab[i][t] = tab;
            }
            q_lag = quantity;
            p_lag = price;
            tab_lag = tab;
        }
    }
    return out;
}

LinearElasticity to_raw(const ElasticitySpec& e, const Centering& c, std::size_t K) {
    LinearElasticity f;
    if (e.kind == ElasticitySpec::Kind::Homogeneous) {
        f.intercept = e.a0;
        f.sim.assign(K, 0.0);
        return f;
    }
    f.q_lag = e.q_lag_coef / c.q_scale;
    f.p_lag = e.p_lag_coef / c.p_scale;
    f.sim = padded(e.sim_coef, K);
    f.intercept = e.a0 - f.q_lag * c.q_center - f.p_lag * c.p_center;
    const auto center = padded(c.sim_center, K);
    for (std::size_t k = 0; k < K; ++k) f.intercept -= f.sim[k] * center[k];
    return f;
}

void moments(const std::vector<std::vector<double>>& x, std::size_t last_lag, double& mean, double& sd) {
    // Lags of periods 1..T are periods 0..T-1.
    double s = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (const auto& row : x) {
        for (std::size_t t = 0; t <= last_lag; ++t) {
            s += row[t];
            ++n;
        }
    }
    mean = s / static_cast<double>(n);
    for (const auto& row : x) {
        for (std::size_t t = 0; t <= last_lag; ++t) ss += (row[t] - mean) * (row[t] - mean);
    }
    sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0)) sd = 1.0;
}

}  // namespace

double LinearElasticity::operator()(double q_lag_value, double p_lag_value,
                                    const std::vector<double>& sims) const {
    double v = intercept + q_lag * q_lag_value + p_lag * p_lag_value;
    for (std::size_t k = 0; k < sim.size() && k < sims.size(); ++k) v += sim[k] * sims[k];
    return v;
}

std::string product_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "P%06zu", i);
    return buf;
}

void validate(const SemConfig& c) {
    const std::size_t K = c.n_latent_clusters;
    if (c.n_products < 1 || c.n_periods < 1) throw ConfigError("n_products and n_periods must be positive");
    if (K < 1) throw ConfigError("n_latent_clusters must be at least 1");
    if (c.embedding_dim < 1) throw ConfigError("embedding_dim must be positive");
    if (K > c.n_products) throw ConfigError("n_latent_clusters exceeds n_products");
    for (double s : {c.embedding_noise, c.outcome.noise, c.price.noise, c.state.noise, c.elasticity.noise}) {
        if (!(s >= 0.0)) throw ConfigError("noise scales must be non-negative");
    }
    auto check_len = [](const std::vector<double>& v, std::size_t n, const char* what) {
        if (!v.empty() && v.size() != n) {
            throw ConfigError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                              std::to_string(n));
        }
    };
    const std::size_t T = c.state.n_tabular;
    check_len(c.outcome.sim, K, "outcome.sim");
    check_len(c.price.sim, K, "price.sim");
    check_len(c.outcome.tabular, T, "outcome.tabular");
    check_len(c.price.tabular, T, "price.tabular");
    check_len(c.state.intercept, T, "state.intercept");
    check_len(c.state.own_lag, T, "state.own_lag");
    check_len(c.state.q_loading, T, "state.q_loading");
    check_len(c.elasticity.sim_coef, K, "elasticity.sim_coef");
    if (c.elasticity.centering) {
        check_len(c.elasticity.centering->sim_center, K, "elasticity.centering.sim_center");
        if (!(c.elasticity.centering->q_scale > 0.0) || !(c.elasticity.centering->p_scale > 0.0)) {
            throw ConfigError("centering scales must be positive");
        }
    }

    const auto r = resolve(c);
    auto own = [](double v, const std::string& what) {
        if (std::abs(v) >= 1.0) {
            throw StabilityError("explosive recursion: |" + what + "| = " + std::to_string(std::abs(v)) + " >= 1");
        }
    };
    own(c.outcome.q_lag, "outcome coefficient on own lag Q_{t-1}");
    own(c.price.p_lag, "price coefficient on own lag P_{t-1}");
    for (std::size_t j = 0; j < T; ++j) own(r.s_lag[j], "state own_lag[" + std::to_string(j) + "]");

    const auto [M, b] = linear_dynamics(c, r);
    const double radius = M.eigenvalues().cwiseAbs().maxCoeff();
    if (radius >= 1.0) {
        throw StabilityError("explosive recursion: spectral radius of the (Q, P, X^o) dynamics at a0 is " +
                             std::to_string(radius));
    }
}

Embeddings simulate_embeddings(const SemConfig& c) {
    const std::size_t K = c.n_latent_clusters, d = c.embedding_dim, N = c.n_products;
    if (K < 1 || d < 1) throw ConfigError("embeddings need K >= 1 and d >= 1");
    if (K > N) throw ConfigError("n_latent_clusters exceeds n_products");

    Engine rng = make_engine(c.seed, kEmbeddingStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto dd = static_cast<Eigen::Index>(d);

    Embeddings out;
    out.centroids.resize(static_cast<Eigen::Index>(K), dd);
    for (std::size_t k = 0; k < K; ++k) {
        bool accepted = false;
        for (int attempt = 0; attempt < kCentroidTries && !accepted; ++attempt) {
            Vector v(dd);
            for (Eigen::Index j = 0; j < dd; ++j) v(j) = normal(rng);
            v.normalize();
            accepted = true;
            for (std::size_t prev = 0; prev < k; ++prev) {
                if (out.centroids.row(static_cast<Eigen::Index>(prev)).dot(v) >= kMaxCentroidCosine) {
                    accepted = false;
                    break;
                }
            }
            if (accepted) out.centroids.row(static_cast<Eigen::Index>(k)) = v.transpose();
        }
        if (!accepted) {
            throw GeometryError("could not place " + std::to_string(K) +
                                " centroid directions with pairwise cosine < 0.5 in dimension " +
                                std::to_string(d) + "; increase embedding_dim");
        }
    }

    out.labels.resize(N);
    for (std::size_t i = 0; i < N; ++i) out.labels[i] = static_cast<int>(i % K);
    std::shuffle(out.labels.begin(), out.labels.end(), rng);

    const double coord_sd = c.embedding_noise / std::sqrt(static_cast<double>(d));
    out.vectors.resize(static_cast<Eigen::Index>(N), dd);
    for (std::size_t i = 0; i < N; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        Vector v = out.centroids.row(out.labels[i]).transpose();
        if (c.embedding_noise > 0.0) {
            for (Eigen::Index j = 0; j < dd; ++j) v(j) += coord_sd * normal(rng);
            v.normalize();
        }
        out.vectors.row(row) = v.transpose();
    }
    return out;
}

std::pair<PanelDataset, GroundTruth> simulate(const SemConfig& c) {
    validate(c);
    const auto r = resolve(c);
    auto emb = simulate_embeddings(c);

    const auto N = static_cast<Eigen::Index>(c.n_products);
    const auto K = static_cast<Eigen::Index>(r.K);
    Matrix sims(N, K);
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index k = 0; k < K; ++k) sims(i, k) = emb.vectors.row(i).dot(emb.centroids.row(k));
    }

    Centering centering;
    const auto& es = c.elasticity;
    if (es.kind == ElasticitySpec::Kind::Heterogeneous) {
        if (es.centering) {
            centering = *es.centering;
        } else {
            LinearElasticity pilot_alpha;
            pilot_alpha.intercept = es.a0;
            const auto pilot = run_dynamics(c, r, sims, pilot_alpha, 0.0);
            moments(pilot.q, c.n_periods - 1, centering.q_center, centering.q_scale);
            moments(pilot.p, c.n_periods - 1, centering.p_center, centering.p_scale);
            centering.sim_center.resize(r.K);
            for (Eigen::Index k = 0; k < K; ++k) centering.sim_center[static_cast<std::size_t>(k)] = sims.col(k).mean();
        }
    }
    const auto alpha = to_raw(es, centering, r.K);
    const auto paths = run_dynamics(c, r, sims, alpha, es.noise);

    std::vector<std::string> tab_names;
    for (std::size_t j = 0; j < r.n_tab; ++j) tab_names.push_back("x" + std::to_string(j + 1));

    GroundTruth truth;
    truth.ace = es.a0;
    truth.elasticity = alpha;
    truth.centering = centering;
    truth.true_embeddings = emb.vectors;
    truth.centroids = emb.centroids;
    truth.cluster_label = emb.labels;

    std::vector<PanelObservation> obs;
    obs.reserve(c.n_products * (c.n_periods + 1));
    for (std::size_t i = 0; i < c.n_products; ++i) {
        const auto id = product_id(i);
        truth.product_ids.push_back(id);
        std::vector<double> sim_row(r.K);
        for (std::size_t k = 0; k < r.K; ++k) sim_row[k] = sims(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        for (std::size_t t = 0; t <= c.n_periods; ++t) {
            PanelObservation o;
            o.product_id = id;
            o.period = static_cast<int>(t);
            o.q = paths.q[i][t];
            o.p = paths.p[i][t];
            o.tabular = paths.tab[i][t];
            o.similarity = sim_row;
            obs.push_back(std::move(o));
            truth.a_it.push_back(paths.a[i][t]);
            truth.cace.push_back(paths.cace[i][t]);
        }
    }
    return {PanelDataset(std::move(obs), std::move(tab_names)), std::move(truth)};
}

double ground_truth_cace(const GroundTruth& truth, const StateVector& state, const SemConfig& config) {
    if (config.elasticity.kind == ElasticitySpec::Kind::Homogeneous) return config.elasticity.a0;
    const auto K = config.n_latent_clusters;
    if (state.controls.size() < K) {
        throw DimensionError("state controls must start with the " + std::to_string(K) + " similarities");
    }
    std::vector<double> sims(state.controls.begin(), state.controls.begin() + static_cast<std::ptrdiff_t>(K));
    return truth.elasticity(state.q_lag, state.p_lag, sims);
}

}  // namespace demand::sim
