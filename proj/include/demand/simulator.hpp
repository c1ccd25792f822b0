#pragma once

#include "demand/labeled_matrix.hpp"
#include "demand/panel.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace demand::sim {

/// Fixed centering used by the heterogeneous elasticity function:
///   alpha(S) = a0 + b1 (p_lag - p_center)/p_scale + b2 (q_lag - q_center)/q_scale
///              + sum_k alpha_k (cs_k - sim_center_k)
struct Centering {
    double q_center = 0.0;
    double q_scale = 1.0;
    double p_center = 0.0;
    double p_scale = 1.0;
    std::vector<double> sim_center;
};

struct ElasticitySpec {
    enum class Kind { Homogeneous, Heterogeneous };
    Kind kind = Kind::Homogeneous;
    double a0 = -0.54;
    std::vector<double> sim_coef;  // alpha_k, length K (heterogeneous only)
    double p_lag_coef = 0.0;       // b1, per standardized P_{t-1}
    double q_lag_coef = 0.0;       // b2, per standardized Q_{t-1}
    double noise = 0.0;            // sigma_a: A_it = alpha(S_it) + sigma_a * eta_it
    /// When empty, centers come from a homogeneous pilot run at a0 with the
    /// same seed (lag moments) and the product mean of the similarities.
    std::optional<Centering> centering;
};

/// Linear structural equation in the state
/// (intercept + lags + similarities + tabular controls) plus Gaussian noise.
struct Equation {
    double intercept = 0.0;
    double q_lag = 0.0;
    double p_lag = 0.0;
    std::vector<double> sim;      // length K, or empty for zeros
    std::vector<double> tabular;  // length n_tabular, or empty for zeros
    double noise = 0.0;
};

struct OutcomeSpec : Equation {
    /// Additive tanh_weight * tanh(tanh_scale * Q_{t-1}) in q_t.
    double tanh_weight = 0.0;
    double tanh_scale = 1.0;
};

/// Time-varying tabular controls:
///   X^o_{j,t} = intercept_j + own_lag_j X^o_{j,t-1} + q_loading_j Q_{t-1} + noise eps^s
struct StateSpec {
    std::size_t n_tabular = 2;
    std::vector<double> intercept;
    std::vector<double> own_lag;
    std::vector<double> q_loading;
    double noise = 0.5;
};

struct SemConfig {
    std::size_t n_products = 500;
    std::size_t n_periods = 9;  // T; the panel holds periods 0..T
    std::size_t embedding_dim = 64;
    std::size_t n_latent_clusters = 5;
    /// Norm of the isotropic perturbation around each centroid direction
    /// (each coordinate has sd embedding_noise / sqrt(d)).
    double embedding_noise = 0.3;
    ElasticitySpec elasticity;
    OutcomeSpec outcome;
    Equation price;
    double confounding = 0.0;  // kappa: weight of eps_it in the price equation
    StateSpec state;
    std::size_t burn_in = 1;
    std::uint64_t seed = 1;
};

/// Realized elasticity function in raw (uncentered) coordinates:
///   alpha(S) = intercept + q_lag * Q_{t-1} + p_lag * P_{t-1} + sum_k sim_k cs_k
struct LinearElasticity {
    double intercept = 0.0;
    double q_lag = 0.0;
    double p_lag = 0.0;
    std::vector<double> sim;

    double operator()(double q_lag_value, double p_lag_value, const std::vector<double>& sims) const;
};

struct GroundTruth {
    /// Per observation, aligned with the panel's (product_id, period) order.
    std::vector<double> a_it;
    std::vector<double> cace;
    double ace = 0.0;
    std::vector<int> cluster_label;   // per product, panel product order
    std::vector<std::string> product_ids;
    Matrix true_embeddings;           // n_products x d, unit rows
    Matrix centroids;                 // K x d, unit rows
    LinearElasticity elasticity;
    Centering centering;
};

struct Embeddings {
    Matrix vectors;            // n x d
    std::vector<int> labels;   // n
    Matrix centroids;          // K x d
};

/// Unit-norm product embeddings scattered around K well-separated centroid
/// directions. Cluster sizes differ by at most one.
Embeddings simulate_embeddings(const SemConfig& config);

/// Checks the configuration; throws ConfigError / StabilityError.
void validate(const SemConfig& config);

std::pair<PanelDataset, GroundTruth> simulate(const SemConfig& config);

/// alpha(S) at a state vector whose controls start with the K similarities.
double ground_truth_cace(const GroundTruth& truth, const StateVector& state, const SemConfig& config);

/// Product ids as the simulator names them ("P00000", ...).
std::string product_id(std::size_t i);

}  // namespace demand::sim
