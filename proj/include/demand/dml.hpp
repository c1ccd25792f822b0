#pragma once

#include "demand/labeled_matrix.hpp"
#include "demand/learners.hpp"
#include "demand/panel.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace demand::dml {

/// Product-level fold assignment: all rows of a product share one fold.
struct FoldPlan {
    int L = 0;
    std::map<std::string, int> assignment;

    int fold_of(const std::string& product) const;  // throws StructureError when absent
    std::vector<std::size_t> fold_sizes() const;
};

/// Shuffles the (sorted) product ids with `seed` and deals them round-robin,
/// so fold sizes differ by at most one product. L = 1 requires
/// `allow_single_fold` (the full-sample mode).
FoldPlan make_folds(const std::vector<std::string>& products, int L, std::uint64_t seed,
                    bool allow_single_fold = false);

enum class NuisanceMode { CrossFit, FullSample };

struct ModifierOptions {
    bool standardize_lags = true;     // q_lag, p_lag to mean 0, variance 1
    bool scale_similarities = false;  // similarities are centered only by default
    std::string similarity_prefix = "cs_";
};

struct PartialOutOptions {
    learn::LearnerSpec q_spec;
    learn::LearnerSpec p_spec;
    NuisanceMode mode = NuisanceMode::CrossFit;
    unsigned jobs = 1;
    ModifierOptions modifiers;
};

/// Cross-fitted residuals in canonical (product_id, period) order.
struct ResidualPanel {
    std::vector<std::string> product_ids;
    std::vector<int> periods;
    std::vector<int> fold;
    Vector q, p;
    Vector q_hat, p_hat;
    Vector q_perp, p_perp;
    /// Columns `const`, `q_lag`, `p_lag`, then similarity columns, all but
    /// `const` centered over these rows. A zero-variance column is stored as
    /// exact zeros and listed in `constant_modifiers`.
    LabeledMatrix modifiers;
    Vector modifier_center;
    Vector modifier_scale;
    std::vector<std::string> constant_modifiers;

    std::size_t size() const { return product_ids.size(); }
};

/// Rows are first put in canonical order, so the result does not depend on
/// the input row order. Fold fits run on up to `options.jobs` threads.
ResidualPanel partial_out(const StateTable& rows, const FoldPlan& plan, const PartialOutOptions& options);

/// Builds the centered modifier block for already-ordered rows.
void attach_modifiers(ResidualPanel& res, const LabeledMatrix& state, const ModifierOptions& options);

struct InferenceOptions {
    double level = 0.90;
    bool t_critical = false;  // t with G - 1 df instead of the standard normal
};

struct EffectEstimate {
    std::vector<std::string> names;
    Vector coef;
    Matrix covariance;
    std::size_t n_obs = 0;
    std::size_t n_clusters = 0;
    double level = 0.90;
    bool t_critical = false;
    std::vector<std::string> dropped;  // zero-variance modifiers left out of the design

    Eigen::Index index_of(const std::string& name) const;
    double se(Eigen::Index i) const;
    double t(Eigen::Index i) const;
    double p_value(Eigen::Index i) const;
    /// Two-sided critical value at `level`.
    double critical(double level) const;
    double ci_lo(Eigen::Index i) const;
    double ci_hi(Eigen::Index i) const;
};

/// delta = sum(p_perp q_perp) / sum(p_perp^2) with product-clustered SE.
EffectEstimate estimate_homogeneous(const ResidualPanel& res, const InferenceOptions& options = {});

/// q_perp on p_perp x modifiers. The `const` coefficient is the centercept.
EffectEstimate estimate_heterogeneous(const ResidualPanel& res, const InferenceOptions& options = {});

/// Sandwich (X'X)^-1 (sum_g X_g' e_g e_g' X_g) (X'X)^-1 scaled by
/// G/(G-1) * (n-1)/(n-k).
Matrix clustered_covariance(const Matrix& design, const Vector& residuals, const std::vector<std::string>& clusters);

struct WaldTest {
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
};

WaldTest wald_joint_test(const EffectEstimate& est, const std::vector<std::string>& subset);

/// Coefficient names whose label starts with the similarity prefix.
std::vector<std::string> similarity_terms(const EffectEstimate& est, const std::string& prefix = "cs_");
/// Every coefficient except `const`.
std::vector<std::string> modifier_terms(const EffectEstimate& est);

struct SortedEffects {
    std::vector<double> index;  // rank / n, rank starting at 1
    std::vector<double> alpha;
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<std::size_t> row;  // source row of each point
};

/// alpha_i = x_i' theta with pointwise variance x_i' V x_i, sorted ascending.
/// `modifiers` must contain every coefficient name as a column.
SortedEffects sorted_effects(const EffectEstimate& est, const LabeledMatrix& modifiers, double level);

struct FwlCheck {
    double dml = 0.0;  // residual-on-residual slope, full-sample linear nuisances
    double ols = 0.0;  // coefficient on p in OLS of q on (1, p, state)
};

FwlCheck rank_fwl_check(const StateTable& rows);

}  // namespace demand::dml
