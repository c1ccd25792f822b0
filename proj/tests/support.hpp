#pragma once

// Independent oracles for the tests. Nothing here calls into the library's
// estimators.

#include "demand/labeled_matrix.hpp"
#include "demand/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

namespace testsupport {

using demand::Matrix;
using demand::Vector;

/// Adjusted Rand index from the contingency table.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> nij;
    std::map<int, double> ai, bj;
    for (std::size_t i = 0; i < a.size(); ++i) {
        nij[{a[i], b[i]}] += 1;
        ai[a[i]] += 1;
        bj[b[i]] += 1;
    }
    auto c2 = [](double x) { return x * (x - 1) / 2; };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (auto& [k, v] : nij) sum_ij += c2(v);
    for (auto& [k, v] : ai) sum_a += c2(v);
    for (auto& [k, v] : bj) sum_b += c2(v);
    const double expected = sum_a * sum_b / c2(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sum_a + sum_b);
    return (sum_ij - expected) / (max_index - expected);
}

/// Fraction of points whose label agrees after the best one-to-one relabeling
/// of `b` onto `a` (exhaustive over permutations; fine for K <= 8).
inline double matched_agreement(const std::vector<int>& a, const std::vector<int>& b, int K) {
    std::vector<std::vector<int>> count(K, std::vector<int>(K, 0));
    for (std::size_t i = 0; i < a.size(); ++i) ++count[a[i]][b[i]];
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    int best = 0;
    do {
        int hit = 0;
        for (int k = 0; k < K; ++k) hit += count[k][perm[k]];
        best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(a.size());
}

/// OLS via the normal equations with an intercept prepended; returns
/// (intercept, slopes...).
inline Vector ols_normal_equations(const Matrix& x, const Vector& y) {
    Matrix d(x.rows(), x.cols() + 1);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    const Matrix xtx = d.transpose() * d;
    const Vector xty = d.transpose() * y;
    return xtx.llt().solve(xty);
}

/// OLS without intercept via the normal equations.
inline Vector ols_no_intercept(const Matrix& x, const Vector& y) {
    return (x.transpose() * x).ldlt().solve(x.transpose() * y);
}

inline Matrix random_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    auto rng = demand::make_engine(seed, 0x7e57);
    std::normal_distribution<double> n;
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
    }
    return m;
}

inline double correlation(const Vector& a, const Vector& b) {
    const Vector ac = a.array() - a.mean();
    const Vector bc = b.array() - b.mean();
    return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

}  // namespace testsupport
