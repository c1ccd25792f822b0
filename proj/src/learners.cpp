#include "demand/learners.hpp"

#include "demand/csv.hpp"
#include "demand/errors.hpp"

#include <Eigen/QR>

#include <cmath>
#include <ostream>

namespace demand::learn {

namespace {

constexpr double kRankThreshold = 1e-10;

std::string check_names(const std::vector<std::string>& expected, const LabeledMatrix& x) {
    if (static_cast<Eigen::Index>(expected.size()) != x.cols()) {
        return "learner was trained on " + std::to_string(expected.size()) + " columns, got " +
               std::to_string(x.cols());
    }
    for (std::size_t j = 0; j < expected.size(); ++j) {
        if (expected[j] != x.names[j]) {
            return "column " + std::to_string(j) + " is '" + x.names[j] + "', trained as '" + expected[j] + "'";
        }
    }
    return {};
}

}  // namespace

std::string to_string(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::Linear: return "linear";
        case LearnerKind::LinearInteractions: return "linear_interactions";
        case LearnerKind::BoostedTrees: return "boosted_trees";
    }
    return "unknown";
}

LearnerKind parse_learner_kind(const std::string& name) {
    if (name == "linear") return LearnerKind::Linear;
    if (name == "linear_interactions") return LearnerKind::LinearInteractions;
    if (name == "boosted_trees") return LearnerKind::BoostedTrees;
    throw ConfigError("unknown learner kind '" + name + "' (linear, linear_interactions, boosted_trees)");
}

void LearnerSpec::validate() const {
    if (kind != LearnerKind::BoostedTrees) return;
    const auto& t = trees;
    if (t.n_trees < 1) throw ConfigError("n_trees must be positive");
    if (t.max_depth < 1) throw ConfigError("max_depth must be positive");
    if (t.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be positive");
    if (!(t.learning_rate > 0.0 && t.learning_rate <= 1.0)) throw ConfigError("learning_rate must lie in (0, 1]");
    if (!(t.subsample > 0.0 && t.subsample <= 1.0)) throw ConfigError("subsample must lie in (0, 1]");
    if (t.early_stopping_rounds < 0) throw ConfigError("early_stopping_rounds must be non-negative");
    if (t.early_stopping_rounds > 0 && !(t.validation_fraction > 0.0 && t.validation_fraction < 1.0)) {
        throw ConfigError("validation_fraction must lie in (0, 1)");
    }
}

Eigen::Index LearnerSpec::min_rows(Eigen::Index p) const {
    if (kind == LearnerKind::BoostedTrees) return 2 * static_cast<Eigen::Index>(trees.min_samples_leaf);
    return p + 1;
}

LabeledMatrix expand_interactions(const LabeledMatrix& x, const InteractionRule& rule) {
    std::vector<Eigen::Index> left, right;
    for (const auto& name : rule.left) left.push_back(x.index_of(name));
    if (rule.right.empty()) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (x.names[static_cast<std::size_t>(j)].rfind(rule.right_prefix, 0) == 0) right.push_back(j);
        }
    } else {
        for (const auto& name : rule.right) right.push_back(x.index_of(name));
    }

    LabeledMatrix out;
    const auto extra = static_cast<Eigen::Index>(left.size() * right.size());
    out.values.resize(x.rows(), x.cols() + extra);
    out.values.leftCols(x.cols()) = x.values;
    out.names = x.names;
    Eigen::Index col = x.cols();
    for (auto a : left) {
        for (auto b : right) {
            out.values.col(col++) = x.values.col(a).cwiseProduct(x.values.col(b));
            out.names.push_back(x.names[static_cast<std::size_t>(a)] + "×" + x.names[static_cast<std::size_t>(b)]);
        }
    }
    return out;
}

LinearModel fit_linear(const Matrix& x, const Vector& y, const std::vector<std::string>& names) {
    const auto n = x.rows(), p = x.cols();
    if (y.size() != n) throw DimensionError("design has " + std::to_string(n) + " rows, target has " + std::to_string(y.size()));
    if (n <= p) {
        throw LengthError("linear fit needs more rows than columns; got n = " + std::to_string(n) + ", p = " +
                          std::to_string(p));
    }
    LinearModel out;
    out.coefficients = Vector::Zero(p);
    const double y_mean = y.mean();
    if (p == 0) {
        out.intercept = y_mean;
        return out;
    }

    // Center, then scale to unit norm so the rank threshold is scale-free.
    const Eigen::RowVectorXd mean = x.colwise().mean();
    Matrix z = x.rowwise() - mean;
    Vector scale(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        scale(j) = z.col(j).norm();
        if (scale(j) > 0.0) z.col(j) /= scale(j);
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(z);
    qr.setThreshold(kRankThreshold);
    out.pivots.rank = qr.rank();
    const auto& perm = qr.colsPermutation().indices();
    std::vector<bool> dropped(static_cast<std::size_t>(p), false);
    for (Eigen::Index k = out.pivots.rank; k < p; ++k) dropped[static_cast<std::size_t>(perm(k))] = true;

    // Eigen's solve() counts nonzero pivots with its own fixed threshold, so
    // refit on the kept columns instead.
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (dropped[static_cast<std::size_t>(j)] || scale(j) == 0.0) {
            out.pivots.dropped.push_back(names.empty() ? "x" + std::to_string(j) : names[static_cast<std::size_t>(j)]);
        } else {
            kept.push_back(j);
        }
    }
    if (!kept.empty()) {
        const Matrix zk = z(Eigen::all, kept);
        const Vector beta = zk.colPivHouseholderQr().solve((y.array() - y_mean).matrix());
        for (std::size_t k = 0; k < kept.size(); ++k) {
            out.coefficients(kept[k]) = beta(static_cast<Eigen::Index>(k)) / scale(kept[k]);
        }
    }
    out.intercept = y_mean - mean.dot(out.coefficients);
    return out;
}

double Tree::predict(const Matrix& x, Eigen::Index row) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
        const auto& nd = nodes[static_cast<std::size_t>(k)];
        k = x(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(k)].value;
}

int Tree::n_leaves() const {
    int count = 0;
    for (const auto& nd : nodes) count += nd.feature < 0;
    return count;
}

FittedLearner FittedLearner::from_linear(std::vector<std::string> features, LinearModel model) {
    FittedLearner out;
    out.kind_ = LearnerKind::Linear;
    out.design_ = features;
    out.features_ = std::move(features);
    out.linear_ = std::move(model);
    return out;
}

FittedLearner FittedLearner::from_ensemble(std::vector<std::string> features, TreeEnsemble ensemble) {
    FittedLearner out;
    out.kind_ = LearnerKind::BoostedTrees;
    out.design_ = features;
    out.features_ = std::move(features);
    out.ensemble_ = std::move(ensemble);
    return out;
}

Vector FittedLearner::predict(const LabeledMatrix& x) const {
    return predict(x, static_cast<int>(ensemble_.trees.size()));
}

Vector FittedLearner::predict(const LabeledMatrix& x, int stages) const {
    if (auto problem = check_names(features_, x); !problem.empty()) throw DimensionError(problem);
    const auto n = x.rows();
    Vector out(n);
    if (kind_ == LearnerKind::BoostedTrees) {
        if (stages < 0 || stages > static_cast<int>(ensemble_.trees.size())) {
            throw ConfigError("requested " + std::to_string(stages) + " stages of a " +
                              std::to_string(ensemble_.trees.size()) + "-stage ensemble");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double f = ensemble_.init;
            for (int s = 0; s < stages; ++s) {
                f += ensemble_.learning_rate * ensemble_.trees[static_cast<std::size_t>(s)].predict(x.values, i);
            }
            out(i) = f;
        }
        return out;
    }
    const Matrix design = kind_ == LearnerKind::LinearInteractions ? expand_interactions(x, rule_).values : x.values;
    const Vector& c = linear_.coefficients;
    for (Eigen::Index i = 0; i < n; ++i) {
        double f = linear_.intercept;
        for (Eigen::Index j = 0; j < design.cols(); ++j) f += design(i, j) * c(j);
        out(i) = f;
    }
    return out;
}

LabeledMatrix unlabeled(const Matrix& x) {
    LabeledMatrix out;
    out.values = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) out.names.push_back("x" + std::to_string(j));
    return out;
}

FittedLearner fit(const LearnerSpec& spec, const LabeledMatrix& x, const Vector& y) {
    spec.validate();
    if (y.size() != x.rows()) {
        throw DimensionError("design has " + std::to_string(x.rows()) + " rows, target has " + std::to_string(y.size()));
    }
    if (!y.allFinite() || !x.values.allFinite()) throw DomainError("learner inputs must be finite");
    FittedLearner out;
    out.kind_ = spec.kind;
    out.features_ = x.names;
    out.rule_ = spec.interactions;
    switch (spec.kind) {
        case LearnerKind::Linear:
            out.design_ = x.names;
            out.linear_ = fit_linear(x.values, y, x.names);
            break;
        case LearnerKind::LinearInteractions: {
            const auto design = expand_interactions(x, spec.interactions);
            out.design_ = design.names;
            out.linear_ = fit_linear(design.values, y, design.names);
            break;
        }
        case LearnerKind::BoostedTrees:
            if (x.rows() < spec.min_rows(x.cols())) {
                throw LengthError("boosted trees need at least 2 * min_samples_leaf = " +
                                  std::to_string(spec.min_rows(x.cols())) + " rows; got " + std::to_string(x.rows()));
            }
            out.design_ = x.names;
            out.ensemble_ = fit_boosted_trees(x.values, y, spec.trees);
            break;
    }
    return out;
}

FittedLearner fit(const LearnerSpec& spec, const Matrix& x, const Vector& y) {
    return fit(spec, unlabeled(x), y);
}

double r2_score(const Vector& y, const Vector& y_hat) {
    if (y.size() != y_hat.size()) {
        throw DimensionError("r2_score: " + std::to_string(y.size()) + " targets vs " +
                             std::to_string(y_hat.size()) + " predictions");
    }
    if (y.size() < 2) throw LengthError("r2_score needs at least 2 observations");
    const double mean = y.mean();
    const double ss_tot = (y.array() - mean).square().sum();
    if (ss_tot == 0.0) throw DegenerateInputError("r2_score is undefined for a constant target");
    return 1.0 - (y - y_hat).squaredNorm() / ss_tot;
}

void write_coefficients_csv(std::ostream& out, const FittedLearner& model) {
    if (model.kind() == LearnerKind::BoostedTrees) throw ConfigError("boosted trees have no coefficient table");
    out << "term,coef\n";
    out << "intercept," << csv::format(model.linear().intercept) << '\n';
    const auto& names = model.design_names();
    for (std::size_t j = 0; j < names.size(); ++j) {
        out << names[j] << ',' << csv::format(model.linear().coefficients(static_cast<Eigen::Index>(j))) << '\n';
    }
}

}  // namespace demand::learn
