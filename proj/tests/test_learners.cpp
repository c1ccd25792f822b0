#include "demand/errors.hpp"
#include "demand/learners.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

using namespace demand;
using namespace demand::learn;

namespace {

LearnerSpec linear_spec() {
    LearnerSpec s;
    s.kind = LearnerKind::Linear;
    return s;
}

LearnerSpec trees_spec(int n_trees, double lr, int depth, int min_leaf = 5, double subsample = 1.0) {
    LearnerSpec s;
    s.kind = LearnerKind::BoostedTrees;
    s.trees.n_trees = n_trees;
    s.trees.learning_rate = lr;
    s.trees.max_depth = depth;
    s.trees.min_samples_leaf = min_leaf;
    s.trees.subsample = subsample;
    s.trees.seed = 3;
    return s;
}

double mse(const Vector& a, const Vector& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

}  // namespace

TEST_CASE("linear fit interpolates an exactly linear target") {
    const Matrix x = testsupport::random_normal(50, 3, 1);
    const Vector y = (1.5 + (x * Vector{{2.0, -1.0, 0.25}}).array()).matrix();
    const auto model = fit(linear_spec(), x, y);
    CHECK(model.linear().intercept == doctest::Approx(1.5).epsilon(1e-10));
    CHECK(model.linear().coefficients(0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(model.linear().coefficients(1) == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(model.linear().coefficients(2) == doctest::Approx(0.25).epsilon(1e-10));
    CHECK((model.predict(unlabeled(x)) - y).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(model.linear().pivots.dropped.empty());
    CHECK(model.linear().pivots.rank == 3);
}

TEST_CASE("linear fit matches the normal-equations oracle on noisy data") {
    const Matrix x = testsupport::random_normal(200, 4, 2);
    const Vector noise = testsupport::random_normal(200, 1, 3).col(0);
    const Vector y = x * Vector{{0.3, -0.7, 1.1, 0.0}} + noise;
    const auto model = fit(linear_spec(), x, y);
    const Vector oracle = testsupport::ols_normal_equations(x, y);
    CHECK(std::abs(model.linear().intercept - oracle(0)) < 1e-10);
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(std::abs(model.linear().coefficients(j) - oracle(j + 1)) < 1e-10);
}

TEST_CASE("linear residuals are orthogonal to every design column") {
    Matrix x = testsupport::random_normal(300, 6, 4);
    const Vector y = x.col(0).array().square().matrix() + testsupport::random_normal(300, 1, 5).col(0);
    const auto model = fit(linear_spec(), x, y);
    const Vector r = y - model.predict(unlabeled(x));
    CHECK(std::abs(r.sum()) < 1e-8);
    CHECK((x.transpose() * r).cwiseAbs().maxCoeff() < 1e-6 * 300);
}

TEST_CASE("constant targets") {
    const Matrix x = testsupport::random_normal(60, 2, 6);
    const Vector y = Vector::Constant(60, 4.25);
    const auto lin = fit(linear_spec(), x, y);
    CHECK(lin.linear().intercept == doctest::Approx(4.25));
    CHECK(lin.linear().coefficients.cwiseAbs().maxCoeff() < 1e-12);
    const auto trees = fit(trees_spec(10, 0.1, 2), x, y);
    CHECK(trees.ensemble().init == 4.25);
    const Vector after_zero = trees.predict(unlabeled(x), 0);
    CHECK((after_zero.array() == 4.25).all());
    CHECK((trees.predict(unlabeled(x)).array() - 4.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("rank-deficient designs drop dependent columns and report them") {
    Matrix x = testsupport::random_normal(40, 3, 7);
    Matrix wide(40, 4);
    wide << x, x.col(0) * 2.0 - x.col(2);
    LabeledMatrix lm{wide, {"a", "b", "c", "a2c"}};
    const Vector y = x.col(1) + 0.5 * x.col(0);
    const auto model = fit(linear_spec(), lm, y);
    CHECK(model.linear().pivots.rank == 3);
    REQUIRE(model.linear().pivots.dropped.size() == 1);
    CHECK((model.predict(lm) - y).cwiseAbs().maxCoeff() < 1e-8);

    Matrix constant_col = x;
    constant_col.col(1).setConstant(2.0);
    const auto m2 = fit(linear_spec(), constant_col, y);
    CHECK(m2.linear().pivots.dropped.size() == 1);
    CHECK(m2.linear().coefficients(1) == 0.0);
}

TEST_CASE("linear needs more rows than columns") {
    const Matrix x = testsupport::random_normal(3, 3, 8);
    CHECK_THROWS_AS(fit(linear_spec(), x, Vector::Ones(3)), LengthError);
    CHECK_THROWS_AS(fit(linear_spec(), x, Vector::Ones(4)), DimensionError);
}

TEST_CASE("boosted trees fit a step function") {
    Matrix x(400, 1);
    Vector y(400);
    for (Eigen::Index i = 0; i < 400; ++i) {
        x(i, 0) = -1.0 + 2.0 * (static_cast<double>(i) + 0.5) / 400.0;
        y(i) = x(i, 0) > 0.0 ? 1.0 : 0.0;
    }
    const auto model = fit(trees_spec(200, 0.1, 1, 20, 1.0), x, y);
    CHECK(mse(model.predict(unlabeled(x)), y) < 0.01);
    // The first stump splits exactly at the step.
    const auto& root = model.ensemble().trees.front().nodes.front();
    CHECK(root.feature == 0);
    CHECK(root.threshold >= x(199, 0));
    CHECK(root.threshold < x(200, 0));
}

TEST_CASE("boosted-trees training loss never increases") {
    const Matrix x = testsupport::random_normal(300, 4, 9);
    Vector y = (x.col(0).array().sin() + x.col(1).array() * x.col(2).array()).matrix();
    const auto model = fit(trees_spec(80, 0.1, 3, 10, 1.0), x, y);
    const auto& loss = model.ensemble().train_loss;
    REQUIRE(loss.size() == 81);
    for (std::size_t s = 1; s < loss.size(); ++s) CHECK(loss[s] <= loss[s - 1] + 1e-12);
    CHECK(loss.front() == doctest::Approx(mse(Vector::Constant(300, y.mean()), y)));
}

TEST_CASE("leaf values are mean residuals and leaves respect min_samples_leaf") {
    const Matrix x = testsupport::random_normal(120, 2, 10);
    const Vector y = testsupport::random_normal(120, 1, 11).col(0);
    const auto model = fit(trees_spec(1, 1.0, 2, 15, 1.0), x, y);
    const auto& tree = model.ensemble().trees.front();
    // Group rows by leaf and recompute the leaf mean independently.
    std::map<int, std::pair<double, int>> by_leaf;
    for (Eigen::Index i = 0; i < 120; ++i) {
        int node = 0;
        while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
            const auto& n = tree.nodes[static_cast<std::size_t>(node)];
            node = x(i, n.feature) <= n.threshold ? n.left : n.right;
        }
        auto& slot = by_leaf[node];
        slot.first += y(i) - model.ensemble().init;
        slot.second += 1;
    }
    for (const auto& [node, acc] : by_leaf) {
        CHECK(acc.second >= 15);
        CHECK(tree.nodes[static_cast<std::size_t>(node)].value == doctest::Approx(acc.first / acc.second).epsilon(1e-12));
    }
    CHECK(tree.n_leaves() == static_cast<int>(by_leaf.size()));
    CHECK(tree.n_leaves() <= 4);
}

TEST_CASE("hand-built two-leaf ensemble") {
    Tree stump;
    stump.nodes.push_back({0, 1.5, 1, 2, 0.0});
    stump.nodes.push_back({-1, 0.0, -1, -1, -2.0});
    stump.nodes.push_back({-1, 0.0, -1, -1, 4.0});
    TreeEnsemble e;
    e.init = 10.0;
    e.learning_rate = 0.5;
    e.trees = {stump, stump};
    const auto model = FittedLearner::from_ensemble({"x"}, e);
    LabeledMatrix x{Matrix{{1.0}, {1.5}, {2.0}}, {"x"}};
    const Vector p = model.predict(x);
    CHECK(p(0) == 10.0 - 2.0);  // 10 + 0.5 * (-2) * 2
    CHECK(p(1) == 8.0);         // ties go left
    CHECK(p(2) == 14.0);
    CHECK(model.predict(x, 1)(2) == 12.0);
    CHECK(model.predict(x, 0)(0) == 10.0);
    CHECK_THROWS_AS(model.predict(x, 3), ConfigError);
}

TEST_CASE("predict checks the columns and is pure") {
    const Matrix x = testsupport::random_normal(100, 3, 12);
    const Vector y = x.col(0) + testsupport::random_normal(100, 1, 13).col(0);
    const auto model = fit(trees_spec(20, 0.1, 2), x, y);
    const Vector a = model.predict(unlabeled(x));
    const Vector b = model.predict(unlabeled(x));
    CHECK(a == b);
    CHECK_THROWS_AS(model.predict(unlabeled(x.leftCols(2))), DimensionError);
    LabeledMatrix renamed{x, {"x0", "zz", "x2"}};
    CHECK_THROWS_AS(model.predict(renamed), DimensionError);
}

TEST_CASE("fitting is deterministic in the seed and subsampling matters") {
    const Matrix x = testsupport::random_normal(200, 3, 14);
    const Vector y = x.col(0).array().abs().matrix() + x.col(1);
    const auto a = fit(trees_spec(30, 0.1, 3, 10, 0.7), x, y);
    const auto b = fit(trees_spec(30, 0.1, 3, 10, 0.7), x, y);
    CHECK(a.predict(unlabeled(x)) == b.predict(unlabeled(x)));
    auto other = trees_spec(30, 0.1, 3, 10, 0.7);
    other.trees.seed = 4;
    CHECK(fit(other, x, y).predict(unlabeled(x)) != a.predict(unlabeled(x)));
}

TEST_CASE("trees need enough rows and valid parameters") {
    const Matrix x = testsupport::random_normal(9, 1, 15);
    CHECK_THROWS_AS(fit(trees_spec(5, 0.1, 2, 5), x, Vector::Ones(9)), LengthError);
    auto bad = trees_spec(5, 0.0, 2);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = trees_spec(5, 1.5, 2);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = trees_spec(0, 0.1, 2);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = trees_spec(5, 0.1, 2, 5, 0.0);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_NOTHROW(trees_spec(5, 1.0, 2).validate());
    Matrix with_nan = testsupport::random_normal(50, 1, 16);
    with_nan(3, 0) = std::nan("");
    CHECK_THROWS_AS(fit(trees_spec(5, 0.1, 2), with_nan, Vector::Ones(50)), DomainError);
}

TEST_CASE("early stopping keeps the best validation round") {
    const Matrix x = testsupport::random_normal(400, 2, 17);
    const Vector y = x.col(0) + 2.0 * testsupport::random_normal(400, 1, 18).col(0);
    auto spec = trees_spec(400, 0.3, 3, 5, 1.0);
    spec.trees.early_stopping_rounds = 10;
    const auto model = fit(spec, x, y);
    CHECK(model.ensemble().trees.size() < 400);
    CHECK(!model.ensemble().validation_loss.empty());
}

TEST_CASE("interaction expansion") {
    LabeledMatrix x{Matrix{{1.0, 2.0, 0.5, 0.0, 3.0}, {-1.0, 4.0, 0.25, 0.0, -2.0}},
                    {"q_lag", "p_lag", "cs_1", "cs_2", "x1"}};
    const auto out = expand_interactions(x, InteractionRule{});
    REQUIRE(out.cols() == 5 + 4);
    CHECK(out.names[5] == "q_lag×cs_1");
    CHECK(out.names[8] == "p_lag×cs_2");
    const auto pc = out.index_of("p_lag×cs_1");
    CHECK(out.values(0, pc) == 1.0);
    CHECK(out.values(1, pc) == 1.0);
    CHECK(out.values.col(out.index_of("q_lag×cs_2")).isZero(0.0));

    InteractionRule named;
    named.right = {"x1"};
    const auto one = expand_interactions(x, named);
    CHECK(one.cols() == 7);
    CHECK(one.values(1, one.index_of("q_lag×x1")) == 2.0);

    named.right = {"missing"};
    CHECK_THROWS_AS(expand_interactions(x, named), ConfigError);
}

TEST_CASE("five similarities give ten interactions and expansion commutes with row order") {
    const Matrix v = testsupport::random_normal(30, 7, 19);
    LabeledMatrix x{v, {"q_lag", "p_lag", "cs_1", "cs_2", "cs_3", "cs_4", "cs_5"}};
    const auto out = expand_interactions(x, InteractionRule{});
    CHECK(out.cols() == 17);
    std::vector<Eigen::Index> perm(30);
    for (Eigen::Index i = 0; i < 30; ++i) perm[static_cast<std::size_t>(i)] = (i * 7) % 30;
    const auto a = expand_interactions(x.select_rows(perm), InteractionRule{});
    CHECK(a.values == out.select_rows(perm).values);
}

TEST_CASE("interaction learner fits a lag-by-similarity product exactly") {
    const Matrix v = testsupport::random_normal(100, 3, 20);
    LabeledMatrix x{v, {"q_lag", "p_lag", "cs_1"}};
    const Vector y = 0.5 * v.col(0) + 1.5 * v.col(1).cwiseProduct(v.col(2));
    LearnerSpec spec;
    spec.kind = LearnerKind::LinearInteractions;
    const auto model = fit(spec, x, y);
    CHECK(model.design_names().size() == 5);
    CHECK((model.predict(x) - y).cwiseAbs().maxCoeff() < 1e-8);
    std::ostringstream csv;
    write_coefficients_csv(csv, model);
    CHECK(csv.str().rfind("term,coef\nintercept,", 0) == 0);
    CHECK(csv.str().find("p_lag×cs_1,1.5") != std::string::npos);
}

TEST_CASE("r2_score") {
    const Vector y{{1.0, 2.0, 3.0, 4.0}};
    CHECK(r2_score(y, y) == 1.0);
    CHECK(r2_score(y, Vector::Constant(4, 2.5)) == 0.0);
    CHECK(r2_score(y, Vector{{4.0, 3.0, 2.0, 1.0}}) == doctest::Approx(1.0 - 20.0 / 5.0));
    CHECK(r2_score(y, Vector{{1.5, 2.0, 3.0, 4.0}}) == doctest::Approx(1.0 - 0.25 / 5.0));
    CHECK_THROWS_AS(r2_score(Vector::Ones(4), y), DegenerateInputError);
    CHECK_THROWS_AS(r2_score(y, Vector::Ones(3)), DimensionError);
    CHECK_THROWS_AS(r2_score(Vector::Ones(1), Vector::Ones(1)), LengthError);
}

TEST_CASE("learner kind names round-trip") {
    for (auto k : {LearnerKind::Linear, LearnerKind::LinearInteractions, LearnerKind::BoostedTrees}) {
        CHECK(parse_learner_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_learner_kind("forest"), ConfigError);
}
