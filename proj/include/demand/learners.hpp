#pragma once

#include "demand/labeled_matrix.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace demand::learn {

enum class LearnerKind { Linear, LinearInteractions, BoostedTrees };

std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(const std::string& name);

/// Each `left` column is crossed with each `right` column. An empty `right`
/// list means every column whose name starts with `right_prefix`.
struct InteractionRule {
    std::vector<std::string> left{"q_lag", "p_lag"};
    std::vector<std::string> right;
    std::string right_prefix = "cs_";
};

struct TreeParams {
    int n_trees = 300;
    double learning_rate = 0.05;
    int max_depth = 3;
    int min_samples_leaf = 20;
    double subsample = 0.8;
    std::uint64_t seed = 0;
    // Validation-based early stopping; 0 disables it.
    int early_stopping_rounds = 0;
    double validation_fraction = 0.1;
};

struct LearnerSpec {
    LearnerKind kind = LearnerKind::BoostedTrees;
    InteractionRule interactions;
    TreeParams trees;

    /// Throws ConfigError on non-positive tree params or a learning rate outside (0, 1].
    void validate() const;
    /// Smallest training set `fit` accepts for `p` input columns.
    Eigen::Index min_rows(Eigen::Index p) const;
};

/// Appends `a×b` product columns per the rule. Throws ConfigError for unknown names.
LabeledMatrix expand_interactions(const LabeledMatrix& x, const InteractionRule& rule);

struct PivotReport {
    Eigen::Index rank = 0;
    std::vector<std::string> dropped;  // columns removed as linearly dependent
};

struct LinearModel {
    double intercept = 0.0;
    Vector coefficients;  // one per design column; dropped columns are 0
    PivotReport pivots;
};

/// Regression tree stored as a flat node array; node 0 is the root.
struct Tree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;  // x <= threshold goes left
        int left = -1;
        int right = -1;
        double value = 0.0;
    };
    std::vector<Node> nodes;

    double predict(const Matrix& x, Eigen::Index row) const;
    int n_leaves() const;
};

struct TreeEnsemble {
    double init = 0.0;
    double learning_rate = 0.1;
    std::vector<Tree> trees;
    std::vector<double> train_loss;  // MSE on the training rows; entry s is after s stages
    std::vector<double> validation_loss;  // only with early stopping
};

class FittedLearner {
public:
    FittedLearner() = default;

    LearnerKind kind() const { return kind_; }
    const std::vector<std::string>& feature_names() const { return features_; }
    /// Design column names after interaction expansion.
    const std::vector<std::string>& design_names() const { return design_; }
    const LinearModel& linear() const { return linear_; }
    const TreeEnsemble& ensemble() const { return ensemble_; }

    /// Predictions with every stage.
    Vector predict(const LabeledMatrix& x) const;
    /// Boosted trees truncated to the first `stages` trees; linear kinds ignore `stages`.
    Vector predict(const LabeledMatrix& x, int stages) const;

    static FittedLearner from_linear(std::vector<std::string> features, LinearModel model);
    static FittedLearner from_ensemble(std::vector<std::string> features, TreeEnsemble ensemble);

private:
    friend FittedLearner fit(const LearnerSpec&, const LabeledMatrix&, const Vector&);

    LearnerKind kind_ = LearnerKind::Linear;
    std::vector<std::string> features_;
    std::vector<std::string> design_;
    InteractionRule rule_;
    LinearModel linear_;
    TreeEnsemble ensemble_;
};

FittedLearner fit(const LearnerSpec& spec, const LabeledMatrix& x, const Vector& y);
/// Unlabeled convenience overload; columns are named x0, x1, ...
FittedLearner fit(const LearnerSpec& spec, const Matrix& x, const Vector& y);

LabeledMatrix unlabeled(const Matrix& x);

/// Least squares with intercept via column-pivoted QR on centered columns.
LinearModel fit_linear(const Matrix& x, const Vector& y, const std::vector<std::string>& names);
TreeEnsemble fit_boosted_trees(const Matrix& x, const Vector& y, const TreeParams& params);

/// 1 - SS_res / SS_tot. Throws DegenerateInputError when y is constant.
double r2_score(const Vector& y, const Vector& y_hat);

/// `term,coef` rows: intercept first, then design columns.
void write_coefficients_csv(std::ostream& out, const FittedLearner& model);

}  // namespace demand::learn
