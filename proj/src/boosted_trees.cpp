#include "demand/errors.hpp"
#include "demand/learners.hpp"
#include "demand/random.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

namespace demand::learn {

namespace {

constexpr std::uint64_t kSubsampleStream = 0x7b;
constexpr std::uint64_t kValidationStream = 0x7c;

/// Per feature, (row, value) pairs in ascending value order, computed once per fit.
struct SortedColumn {
    std::vector<std::int32_t> row;
    std::vector<double> value;
};

std::vector<SortedColumn> presort(const Matrix& x) {
    std::vector<SortedColumn> out(static_cast<std::size_t>(x.cols()));
    std::vector<Eigen::Index> o(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        std::iota(o.begin(), o.end(), Eigen::Index{0});
        std::stable_sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a, j) < x(b, j); });
        auto& col = out[static_cast<std::size_t>(j)];
        for (auto i : o) {
            col.row.push_back(static_cast<std::int32_t>(i));
            col.value.push_back(x(i, j));
        }
    }
    return out;
}

/// Per-stage copy of the presorted columns restricted to in-bag rows. Each
/// open node owns the same [begin, end) segment in every column; splitting a
/// node stably partitions that segment, so every scan is contiguous.
struct Workspace {
    std::vector<std::vector<std::int32_t>> row;
    std::vector<std::vector<double>> value;
    std::vector<std::vector<double>> grad;
    std::vector<std::int32_t> tmp_row;
    std::vector<double> tmp_value, tmp_grad, inv;
    std::vector<char> go_left;
};

struct Segment {
    int node = 0;
    std::size_t begin = 0, end = 0;
    double sum = 0.0, sum_sq = 0.0;
};

Tree grow(const std::vector<SortedColumn>& order, const Vector& residual, const std::vector<char>& in_bag,
          const TreeParams& params, Workspace& ws) {
    const auto p = order.size();
    const auto min_leaf = static_cast<std::size_t>(params.min_samples_leaf);
    const double* r = residual.data();
    for (std::size_t j = 0; j < p; ++j) {
        auto& rows = ws.row[j];
        auto& vals = ws.value[j];
        auto& grad = ws.grad[j];
        const auto& col = order[j];
        rows.resize(col.row.size());
        vals.resize(col.row.size());
        grad.resize(col.row.size());
        // Branch-free compaction: always write, advance only for in-bag rows.
        std::size_t k = 0;
        for (std::size_t s = 0; s < col.row.size(); ++s) {
            const auto i = col.row[s];
            rows[k] = i;
            vals[k] = col.value[s];
            grad[k] = r[i];
            k += static_cast<std::size_t>(in_bag[static_cast<std::size_t>(i)]);
        }
        rows.resize(k);
        vals.resize(k);
        grad.resize(k);
    }

    Tree tree;
    tree.nodes.emplace_back();
    Segment root;
    root.end = ws.row[0].size();
    for (double g : ws.grad[0]) {
        root.sum += g;
        root.sum_sq += g * g;
    }
    std::vector<Segment> frontier{root};
    const double* inv = ws.inv.data();

    for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
        std::vector<Segment> next;
        for (const auto& seg : frontier) {
            const std::size_t count = seg.end - seg.begin;
            if (count < 2 * min_leaf) continue;

            // Exact greedy search; ties keep the lower feature and the lower threshold.
            double best_score = seg.sum * seg.sum * inv[count];
            int best_feature = -1;
            std::size_t best_left = 0;
            double best_threshold = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                const double* v = ws.value[j].data() + seg.begin;
                const double* g = ws.grad[j].data() + seg.begin;
                double ls = 0.0;
                for (std::size_t s = 0; s + 1 < min_leaf; ++s) ls += g[s];
                for (std::size_t s = min_leaf - 1; s + min_leaf < count; ++s) {
                    ls += g[s];
                    const std::size_t lc = s + 1;
                    const double rs = seg.sum - ls;
                    const double score = ls * ls * inv[lc] + rs * rs * inv[count - lc];
                    if (score > best_score && v[s + 1] > v[s]) {
                        best_score = score;
                        best_feature = static_cast<int>(j);
                        best_left = lc;
                        double thr = v[s] + (v[s + 1] - v[s]) / 2.0;
                        if (!(thr < v[s + 1])) thr = v[s];
                        best_threshold = thr;
                    }
                }
            }
            const double gain = best_score - seg.sum * seg.sum * inv[count];
            // Ignore gains indistinguishable from rounding noise in the node's sum of squares.
            if (best_feature < 0 || !(gain > 1e-12 * (seg.sum_sq + 1e-300))) continue;

            const auto f = static_cast<std::size_t>(best_feature);
            const std::size_t mid = seg.begin + best_left;
            for (std::size_t s = seg.begin; s < seg.end; ++s) ws.go_left[static_cast<std::size_t>(ws.row[f][s])] = s < mid;
            for (std::size_t j = 0; j < p; ++j) {
                if (j == f) continue;
                auto& rows = ws.row[j];
                auto& vals = ws.value[j];
                auto& grad = ws.grad[j];
                std::size_t left = seg.begin, right = 0;
                for (std::size_t s = seg.begin; s < seg.end; ++s) {
                    const auto i = rows[s];
                    const double v = vals[s], g = grad[s];
                    const std::size_t to_left = static_cast<std::size_t>(ws.go_left[static_cast<std::size_t>(i)]);
                    rows[left] = i;
                    vals[left] = v;
                    grad[left] = g;
                    ws.tmp_row[right] = i;
                    ws.tmp_value[right] = v;
                    ws.tmp_grad[right] = g;
                    left += to_left;
                    right += 1 - to_left;
                }
                std::copy_n(ws.tmp_row.begin(), right, rows.begin() + static_cast<std::ptrdiff_t>(left));
                std::copy_n(ws.tmp_value.begin(), right, vals.begin() + static_cast<std::ptrdiff_t>(left));
                std::copy_n(ws.tmp_grad.begin(), right, grad.begin() + static_cast<std::ptrdiff_t>(left));
            }

            Segment lhs{static_cast<int>(tree.nodes.size()), seg.begin, mid, 0.0, 0.0};
            Segment rhs{lhs.node + 1, mid, seg.end, 0.0, 0.0};
            for (std::size_t s = seg.begin; s < seg.end; ++s) {
                const double g = ws.grad[f][s];
                auto& side = s < mid ? lhs : rhs;
                side.sum += g;
                side.sum_sq += g * g;
            }
            auto& node = tree.nodes[static_cast<std::size_t>(seg.node)];
            node.feature = best_feature;
            node.threshold = best_threshold;
            node.left = lhs.node;
            node.right = rhs.node;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            next.push_back(lhs);
            next.push_back(rhs);
        }
        frontier = std::move(next);
    }
    return tree;
}

int leaf_of(const Tree& tree, const Matrix& x, Eigen::Index row) {
    int k = 0;
    while (tree.nodes[static_cast<std::size_t>(k)].feature >= 0) {
        const auto& nd = tree.nodes[static_cast<std::size_t>(k)];
        k = x(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return k;
}

Matrix take_rows(const Matrix& x, const std::vector<Eigen::Index>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
    return out;
}

}  // namespace

TreeEnsemble fit_boosted_trees(const Matrix& x_all, const Vector& y_all, const TreeParams& params) {
    // Optional validation hold-out for early stopping.
    std::vector<Eigen::Index> train_rows(static_cast<std::size_t>(x_all.rows()));
    std::iota(train_rows.begin(), train_rows.end(), Eigen::Index{0});
    std::vector<Eigen::Index> valid_rows;
    const bool stopping = params.early_stopping_rounds > 0;
    if (stopping) {
        Engine rng = make_engine(params.seed, kValidationStream);
        std::shuffle(train_rows.begin(), train_rows.end(), rng);
        const auto n_valid = std::max<std::size_t>(
            1, static_cast<std::size_t>(params.validation_fraction * static_cast<double>(train_rows.size())));
        valid_rows.assign(train_rows.end() - static_cast<std::ptrdiff_t>(n_valid), train_rows.end());
        train_rows.resize(train_rows.size() - n_valid);
        std::sort(train_rows.begin(), train_rows.end());
        std::sort(valid_rows.begin(), valid_rows.end());
    }
    const Matrix x = stopping ? take_rows(x_all, train_rows) : x_all;
    const Vector y = stopping ? take_rows(y_all, train_rows).col(0) : y_all;
    const Matrix x_valid = take_rows(x_all, valid_rows);
    const Vector y_valid = take_rows(y_all, valid_rows).col(0);

    const auto n = x.rows();
    if (n < 2 * static_cast<Eigen::Index>(params.min_samples_leaf)) {
        throw LengthError("boosted trees need at least " + std::to_string(2 * params.min_samples_leaf) +
                          " training rows; got " + std::to_string(n));
    }

    TreeEnsemble model;
    model.init = y.mean();
    model.learning_rate = params.learning_rate;
    Vector f = Vector::Constant(n, model.init);
    Vector residual = y - f;
    model.train_loss.push_back(residual.squaredNorm() / static_cast<double>(n));
    Vector f_valid = Vector::Constant(y_valid.size(), model.init);
    if (stopping) model.validation_loss.push_back((y_valid - f_valid).squaredNorm() / static_cast<double>(y_valid.size()));

    const auto order = presort(x);
    Engine rng = make_engine(params.seed, kSubsampleStream);
    const auto n_bag = std::clamp<Eigen::Index>(std::llround(params.subsample * static_cast<double>(n)),
                                                2 * params.min_samples_leaf, n);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::vector<char> in_bag(static_cast<std::size_t>(n), 1);
    Workspace ws;
    const auto p = static_cast<std::size_t>(x.cols());
    ws.row.resize(p);
    ws.value.resize(p);
    ws.grad.resize(p);
    ws.tmp_row.resize(static_cast<std::size_t>(n));
    ws.tmp_value.resize(static_cast<std::size_t>(n));
    ws.tmp_grad.resize(static_cast<std::size_t>(n));
    ws.go_left.resize(static_cast<std::size_t>(n));
    ws.inv.assign(static_cast<std::size_t>(n) + 1, 0.0);
    for (std::size_t c = 1; c < ws.inv.size(); ++c) ws.inv[c] = 1.0 / static_cast<double>(c);
    std::size_t best_stage = 0;

    for (int stage = 0; stage < params.n_trees; ++stage) {
        if (n_bag < n) {
            std::iota(perm.begin(), perm.end(), Eigen::Index{0});
            std::shuffle(perm.begin(), perm.end(), rng);
            std::fill(in_bag.begin(), in_bag.end(), 0);
            for (Eigen::Index r = 0; r < n_bag; ++r) in_bag[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])] = 1;
        }
        Tree tree = grow(order, residual, in_bag, params, ws);

        // Leaf value = mean residual over every training row in the leaf, so
        // each stage can only lower the training loss.
        std::vector<double> sum(tree.nodes.size(), 0.0);
        std::vector<Eigen::Index> count(tree.nodes.size(), 0);
        std::vector<int> leaf(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            const int k = leaf_of(tree, x, i);
            leaf[static_cast<std::size_t>(i)] = k;
            sum[static_cast<std::size_t>(k)] += residual(i);
            ++count[static_cast<std::size_t>(k)];
        }
        for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
            if (tree.nodes[k].feature < 0 && count[k] > 0) tree.nodes[k].value = sum[k] / static_cast<double>(count[k]);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            f(i) += model.learning_rate * tree.nodes[static_cast<std::size_t>(leaf[static_cast<std::size_t>(i)])].value;
        }
        residual = y - f;
        model.train_loss.push_back(residual.squaredNorm() / static_cast<double>(n));

        if (stopping) {
            for (Eigen::Index i = 0; i < x_valid.rows(); ++i) f_valid(i) += model.learning_rate * tree.predict(x_valid, i);
            model.validation_loss.push_back((y_valid - f_valid).squaredNorm() / static_cast<double>(y_valid.size()));
        }
        model.trees.push_back(std::move(tree));

        if (stopping) {
            const std::size_t s = model.trees.size();
            if (model.validation_loss[s] < model.validation_loss[best_stage]) best_stage = s;
            if (s - best_stage >= static_cast<std::size_t>(params.early_stopping_rounds)) break;
        }
    }
    if (stopping) {
        model.trees.resize(best_stage);
        model.train_loss.resize(best_stage + 1);
        model.validation_loss.resize(best_stage + 1);
    }
    return model;
}

}  // namespace demand::learn
