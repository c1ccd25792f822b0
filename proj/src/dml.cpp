#include "demand/dml.hpp"

#include "demand/errors.hpp"
#include "demand/parallel.hpp"
#include "demand/random.hpp"
#include "demand/stats.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace demand::dml {

namespace {

constexpr std::uint64_t kFoldStream = 0xf0;
constexpr double kRankThreshold = 1e-10;

std::vector<Eigen::Index> canonical_order(const StateTable& rows) {
    std::vector<Eigen::Index> order(rows.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
        if (rows.product_ids[ua] != rows.product_ids[ub]) return rows.product_ids[ua] < rows.product_ids[ub];
        return rows.periods[ua] < rows.periods[ub];
    });
    for (std::size_t i = 1; i < order.size(); ++i) {
        const auto a = static_cast<std::size_t>(order[i - 1]), b = static_cast<std::size_t>(order[i]);
        if (rows.product_ids[a] == rows.product_ids[b] && rows.periods[a] == rows.periods[b]) {
            throw StructureError("duplicate state row for product " + rows.product_ids[a] + ", period " +
                                 std::to_string(rows.periods[a]));
        }
    }
    return order;
}

learn::LearnerSpec with_seed(learn::LearnerSpec spec, std::uint64_t stream) {
    spec.trees.seed = derive_seed(spec.trees.seed, stream);
    return spec;
}

/// Column-normalized QR; returns names of columns beyond the numerical rank.
std::vector<std::string> dependent_columns(const Matrix& x, const std::vector<std::string>& names) {
    Matrix z = x;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double norm = z.col(j).norm();
        if (norm > 0.0) z.col(j) /= norm;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(z);
    qr.setThreshold(kRankThreshold);
    std::vector<std::string> out;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < z.cols(); ++k) out.push_back(names[static_cast<std::size_t>(perm(k))]);
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t count_clusters(const std::vector<std::string>& ids) {
    return std::set<std::string>(ids.begin(), ids.end()).size();
}

}  // namespace

int FoldPlan::fold_of(const std::string& product) const {
    const auto it = assignment.find(product);
    if (it == assignment.end()) throw StructureError("fold plan does not cover product " + product);
    return it->second;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(L, 0)), 0);
    for (const auto& [id, f] : assignment) ++sizes[static_cast<std::size_t>(f)];
    return sizes;
}

FoldPlan make_folds(const std::vector<std::string>& products, int L, std::uint64_t seed, bool allow_single_fold) {
    if (L < 1 || (L == 1 && !allow_single_fold)) {
        throw ConfigError("fold count must be at least 2 (1 only in full-sample mode); got " + std::to_string(L));
    }
    std::vector<std::string> ids = products;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw StructureError("duplicate product id in fold input");
    if (static_cast<std::size_t>(L) > ids.size()) {
        throw FoldSizeError("cannot split " + std::to_string(ids.size()) + " products into " + std::to_string(L) +
                            " folds");
    }
    Engine rng = make_engine(seed, kFoldStream);
    std::shuffle(ids.begin(), ids.end(), rng);
    FoldPlan plan;
    plan.L = L;
    for (std::size_t i = 0; i < ids.size(); ++i) plan.assignment.emplace(ids[i], static_cast<int>(i % static_cast<std::size_t>(L)));
    return plan;
}

void attach_modifiers(ResidualPanel& res, const LabeledMatrix& state, const ModifierOptions& options) {
    std::vector<Eigen::Index> source;
    std::vector<std::string> names{"const"};
    std::vector<bool> standardize{false};
    source.push_back(-1);
    for (const char* lag : {"q_lag", "p_lag"}) {
        const auto j = state.find(lag);
        if (j < 0) continue;
        source.push_back(j);
        names.emplace_back(lag);
        standardize.push_back(options.standardize_lags);
    }
    for (Eigen::Index j = 0; j < state.cols(); ++j) {
        const auto& name = state.names[static_cast<std::size_t>(j)];
        if (options.similarity_prefix.empty() || name.rfind(options.similarity_prefix, 0) != 0) continue;
        source.push_back(j);
        names.push_back(name);
        standardize.push_back(options.scale_similarities);
    }

    const auto n = state.rows();
    const auto k = static_cast<Eigen::Index>(names.size());
    res.modifiers.names = names;
    res.modifiers.values.resize(n, k);
    res.modifier_center = Vector::Zero(k);
    res.modifier_scale = Vector::Ones(k);
    res.constant_modifiers.clear();
    res.modifiers.values.col(0).setOnes();
    for (Eigen::Index c = 1; c < k; ++c) {
        const Vector col = state.values.col(source[static_cast<std::size_t>(c)]);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().mean();
        res.modifier_center(c) = mean;
        if (!(var > 1e-24 * (mean * mean + 1.0))) {
            res.modifiers.values.col(c).setZero();
            res.constant_modifiers.push_back(names[static_cast<std::size_t>(c)]);
            continue;
        }
        const double scale = standardize[static_cast<std::size_t>(c)] ? std::sqrt(var) : 1.0;
        res.modifier_scale(c) = scale;
        res.modifiers.values.col(c) = (col.array() - mean) / scale;
    }
}

ResidualPanel partial_out(const StateTable& input, const FoldPlan& plan, const PartialOutOptions& options) {
    options.q_spec.validate();
    options.p_spec.validate();
    const StateTable rows = input.select_rows(canonical_order(input));
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n == 0) throw LengthError("no state rows to partial out");

    ResidualPanel res;
    res.product_ids = rows.product_ids;
    res.periods = rows.periods;
    res.q = rows.q;
    res.p = rows.p;
    res.q_hat.resize(n);
    res.p_hat.resize(n);
    res.fold.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) res.fold[i] = plan.fold_of(rows.product_ids[i]);

    const bool full = options.mode == NuisanceMode::FullSample;
    const int L = full ? 1 : plan.L;
    if (!full && L < 2) throw ConfigError("cross-fitting needs at least 2 folds");
    std::vector<std::vector<Eigen::Index>> train(static_cast<std::size_t>(L)), test(static_cast<std::size_t>(L));
    for (Eigen::Index i = 0; i < n; ++i) {
        const int f = full ? 0 : res.fold[static_cast<std::size_t>(i)];
        for (int l = 0; l < L; ++l) {
            if (full || l != f) train[static_cast<std::size_t>(l)].push_back(i);
        }
        test[static_cast<std::size_t>(f)].push_back(i);
    }
    const auto p_cols = rows.state.cols();
    for (int l = 0; l < L; ++l) {
        const auto need = std::max(options.q_spec.min_rows(p_cols), options.p_spec.min_rows(p_cols));
        const auto have = static_cast<Eigen::Index>(train[static_cast<std::size_t>(l)].size());
        if (have < need || test[static_cast<std::size_t>(l)].empty()) {
            throw FoldSizeError("fold " + std::to_string(l) + " leaves " + std::to_string(have) +
                                " training rows and " + std::to_string(test[static_cast<std::size_t>(l)].size()) +
                                " held-out rows; the learners need at least " + std::to_string(need) +
                                " training rows");
        }
    }

    // Task 2l fits E[q|S] for fold l, task 2l + 1 fits E[p|S]. Each writes a
    // disjoint slice, so the result does not depend on scheduling.
    parallel_for(static_cast<std::size_t>(2 * L), options.jobs, [&](std::size_t task) {
        const auto l = task / 2;
        const bool is_q = task % 2 == 0;
        const auto& tr = train[l];
        const auto& te = test[l];
        const auto spec = with_seed(is_q ? options.q_spec : options.p_spec, task);
        Vector y(static_cast<Eigen::Index>(tr.size()));
        for (std::size_t r = 0; r < tr.size(); ++r) y(static_cast<Eigen::Index>(r)) = is_q ? rows.q(tr[r]) : rows.p(tr[r]);
        const auto model = learn::fit(spec, rows.state.select_rows(tr), y);
        const Vector pred = model.predict(rows.state.select_rows(te));
        Vector& out = is_q ? res.q_hat : res.p_hat;
        for (std::size_t r = 0; r < te.size(); ++r) out(te[r]) = pred(static_cast<Eigen::Index>(r));
    });

    res.q_perp = res.q - res.q_hat;
    res.p_perp = res.p - res.p_hat;
    attach_modifiers(res, rows.state, options.modifiers);
    return res;
}

Eigen::Index EffectEstimate::index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("no coefficient named '" + name + "'");
    return static_cast<Eigen::Index>(it - names.begin());
}

double EffectEstimate::se(Eigen::Index i) const { return std::sqrt(std::max(covariance(i, i), 0.0)); }

double EffectEstimate::t(Eigen::Index i) const {
    const double s = se(i);
    if (s == 0.0) return coef(i) == 0.0 ? 0.0 : std::copysign(INFINITY, coef(i));
    return coef(i) / s;
}

double EffectEstimate::p_value(Eigen::Index i) const {
    const double tv = t(i);
    if (std::isinf(tv)) return 0.0;
    if (t_critical) return stats::student_t_two_sided_p(tv, static_cast<double>(n_clusters) - 1.0);
    return stats::normal_two_sided_p(tv);
}

double EffectEstimate::critical(double lvl) const {
    if (!(lvl > 0.0 && lvl < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
    const double upper = 0.5 + lvl / 2.0;
    if (t_critical) return stats::student_t_quantile(upper, static_cast<double>(n_clusters) - 1.0);
    return stats::normal_quantile(upper);
}

double EffectEstimate::ci_lo(Eigen::Index i) const { return coef(i) - critical(level) * se(i); }
double EffectEstimate::ci_hi(Eigen::Index i) const { return coef(i) + critical(level) * se(i); }

Matrix clustered_covariance(const Matrix& design, const Vector& residuals, const std::vector<std::string>& clusters) {
    const auto n = design.rows(), k = design.cols();
    if (residuals.size() != n || static_cast<Eigen::Index>(clusters.size()) != n) {
        throw DimensionError("design, residuals and cluster ids must have the same number of rows");
    }
    if (n <= k) throw LengthError("clustered covariance needs more rows than coefficients");

    std::map<std::string, std::size_t> index;
    for (const auto& c : clusters) index.emplace(c, 0);
    std::size_t g = 0;
    for (auto& [id, slot] : index) slot = g++;
    const auto G = index.size();
    if (G < 2) throw DegenerateInputError("clustered covariance needs at least 2 clusters");

    const Matrix xtx = design.transpose() * design;
    Eigen::ColPivHouseholderQR<Matrix> qr(xtx);
    if (!qr.isInvertible()) throw RankError("X'X is singular; cannot form the sandwich covariance");
    const Matrix bread = qr.inverse();

    Matrix scores = Matrix::Zero(static_cast<Eigen::Index>(G), k);
    for (Eigen::Index i = 0; i < n; ++i) {
        scores.row(static_cast<Eigen::Index>(index.at(clusters[static_cast<std::size_t>(i)]))) += design.row(i) * residuals(i);
    }
    const Matrix meat = scores.transpose() * scores;
    const double dG = static_cast<double>(G), dn = static_cast<double>(n), dk = static_cast<double>(k);
    const double factor = dG / (dG - 1.0) * (dn - 1.0) / (dn - dk);
    Matrix v = factor * bread * meat * bread;
    return (v + v.transpose()) / 2.0;
}

EffectEstimate estimate_homogeneous(const ResidualPanel& res, const InferenceOptions& options) {
    const double sxx = res.p_perp.squaredNorm();
    if (!(sxx > 0.0)) throw DegenerateTreatmentError("price residuals are identically zero; the price effect is not identified");
    EffectEstimate est;
    est.names = {"price"};
    est.coef = Vector::Constant(1, res.p_perp.dot(res.q_perp) / sxx);
    const Vector e = res.q_perp - est.coef(0) * res.p_perp;
    est.covariance = clustered_covariance(res.p_perp, e, res.product_ids);
    est.n_obs = res.size();
    est.n_clusters = count_clusters(res.product_ids);
    est.level = options.level;
    est.t_critical = options.t_critical;
    est.critical(est.level);  // validates the level
    return est;
}

EffectEstimate estimate_heterogeneous(const ResidualPanel& res, const InferenceOptions& options) {
    const auto& mods = res.modifiers;
    if (mods.cols() == 0 || mods.names.front() != "const") throw ConfigError("residual panel has no modifier block");
    if (!(res.p_perp.squaredNorm() > 0.0)) {
        throw DegenerateTreatmentError("price residuals are identically zero; the price effect is not identified");
    }
    std::vector<Eigen::Index> keep;
    std::vector<std::string> dropped;
    for (Eigen::Index j = 0; j < mods.cols(); ++j) {
        const auto& name = mods.names[static_cast<std::size_t>(j)];
        if (j > 0 && std::find(res.constant_modifiers.begin(), res.constant_modifiers.end(), name) !=
                         res.constant_modifiers.end()) {
            dropped.push_back(name);
            continue;
        }
        keep.push_back(j);
    }

    if (keep.size() == 1) {
        auto est = estimate_homogeneous(res, options);
        est.names = {"const"};
        est.dropped = dropped;
        return est;
    }

    const auto n = static_cast<Eigen::Index>(res.size());
    const auto k = static_cast<Eigen::Index>(keep.size());
    Matrix x(n, k);
    std::vector<std::string> names;
    for (Eigen::Index c = 0; c < k; ++c) {
        x.col(c) = res.p_perp.cwiseProduct(mods.values.col(keep[static_cast<std::size_t>(c)]));
        names.push_back(mods.names[static_cast<std::size_t>(keep[static_cast<std::size_t>(c)])]);
    }
    if (auto culprits = dependent_columns(x, names); !culprits.empty()) {
        std::string list;
        for (const auto& c : culprits) list += (list.empty() ? "" : ", ") + c;
        throw RankError("effect modifiers are collinear; dependent columns: " + list);
    }

    EffectEstimate est;
    est.names = names;
    est.coef = x.colPivHouseholderQr().solve(res.q_perp);
    const Vector e = res.q_perp - x * est.coef;
    est.covariance = clustered_covariance(x, e, res.product_ids);
    est.n_obs = res.size();
    est.n_clusters = count_clusters(res.product_ids);
    est.level = options.level;
    est.t_critical = options.t_critical;
    est.dropped = dropped;
    est.critical(est.level);
    return est;
}

WaldTest wald_joint_test(const EffectEstimate& est, const std::vector<std::string>& subset) {
    if (subset.empty()) throw ConfigError("Wald test needs at least one coefficient");
    const auto k = static_cast<Eigen::Index>(subset.size());
    std::vector<Eigen::Index> idx;
    for (const auto& name : subset) idx.push_back(est.index_of(name));
    Vector theta(k);
    Matrix v(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        theta(a) = est.coef(idx[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < k; ++b) v(a, b) = est.covariance(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
    Eigen::LDLT<Matrix> ldlt(v);
    const double max_diag = v.diagonal().cwiseAbs().maxCoeff();
    const double min_pivot = ldlt.vectorD().minCoeff();
    if (ldlt.info() != Eigen::Success || !(max_diag > 0.0) || !(min_pivot > 1e-12 * max_diag)) {
        throw RankError("covariance block of the tested coefficients is singular");
    }
    WaldTest out;
    out.statistic = std::max(0.0, theta.dot(ldlt.solve(theta)));
    out.df = static_cast<int>(k);
    out.p_value = stats::chi_square_upper(out.statistic, static_cast<double>(k));
    return out;
}

std::vector<std::string> similarity_terms(const EffectEstimate& est, const std::string& prefix) {
    std::vector<std::string> out;
    for (const auto& n : est.names) {
        if (n.rfind(prefix, 0) == 0) out.push_back(n);
    }
    return out;
}

std::vector<std::string> modifier_terms(const EffectEstimate& est) {
    std::vector<std::string> out;
    for (const auto& n : est.names) {
        if (n != "const") out.push_back(n);
    }
    return out;
}

SortedEffects sorted_effects(const EffectEstimate& est, const LabeledMatrix& modifiers, double level) {
    const auto k = static_cast<Eigen::Index>(est.names.size());
    std::vector<Eigen::Index> cols;
    for (const auto& name : est.names) {
        const auto j = modifiers.find(name);
        if (j < 0) throw DimensionError("modifier matrix lacks column '" + name + "'");
        cols.push_back(j);
    }
    const double z = est.critical(level);
    const auto n = modifiers.rows();
    std::vector<double> alpha(static_cast<std::size_t>(n)), se(static_cast<std::size_t>(n));
    Vector xi(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < k; ++c) xi(c) = modifiers.values(i, cols[static_cast<std::size_t>(c)]);
        alpha[static_cast<std::size_t>(i)] = xi.dot(est.coef);
        se[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, xi.dot(est.covariance * xi)));
    }
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return alpha[a] < alpha[b]; });

    SortedEffects out;
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto i = order[r];
        out.index.push_back(static_cast<double>(r + 1) / static_cast<double>(n));
        out.alpha.push_back(alpha[i]);
        out.lo.push_back(alpha[i] - z * se[i]);
        out.hi.push_back(alpha[i] + z * se[i]);
        out.row.push_back(i);
    }
    return out;
}

FwlCheck rank_fwl_check(const StateTable& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto p = rows.state.cols();
    Matrix joint(n, p + 2);
    joint.col(0).setOnes();
    joint.col(1) = rows.p;
    joint.rightCols(p) = rows.state.values;
    std::vector<std::string> names{"intercept", "p"};
    names.insert(names.end(), rows.state.names.begin(), rows.state.names.end());
    if (auto culprits = dependent_columns(joint, names); !culprits.empty()) {
        throw RankError("joint design (1, p, state) is rank deficient; dependent columns include " + culprits.front());
    }

    PartialOutOptions options;
    options.q_spec.kind = learn::LearnerKind::Linear;
    options.p_spec.kind = learn::LearnerKind::Linear;
    options.mode = NuisanceMode::FullSample;
    options.modifiers.similarity_prefix.clear();
    std::vector<std::string> ids = rows.product_ids;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const auto res = partial_out(rows, make_folds(ids, 1, 0, true), options);

    FwlCheck out;
    out.dml = res.p_perp.dot(res.q_perp) / res.p_perp.squaredNorm();
    out.ols = joint.colPivHouseholderQr().solve(rows.q)(1);
    return out;
}

}  // namespace demand::dml
