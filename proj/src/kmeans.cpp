#include "demand/compression.hpp"
#include "demand/errors.hpp"
#include "demand/random.hpp"

#include <limits>

namespace demand::compression {

namespace {

double squared_distance(const Matrix& x, Eigen::Index i, const Matrix& c, Eigen::Index k) {
    return (x.row(i) - c.row(k)).squaredNorm();
}

Matrix kmeanspp(const Matrix& x, Eigen::Index K, Engine& rng) {
    const auto n = x.rows();
    Matrix centers(K, x.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    centers.row(0) = x.row(pick(rng));
    Vector mindist(n);
    for (Eigen::Index i = 0; i < n; ++i) mindist(i) = squared_distance(x, i, centers, 0);

    for (Eigen::Index k = 1; k < K; ++k) {
        const double total = mindist.sum();
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double acc = 0.0;
            chosen = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += mindist(i);
                if (acc >= target && mindist(i) > 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);  // only duplicates remain
        }
        centers.row(k) = x.row(chosen);
        for (Eigen::Index i = 0; i < n; ++i) {
            mindist(i) = std::min(mindist(i), squared_distance(x, i, centers, k));
        }
    }
    return centers;
}

/// Nearest-centroid assignment (ties to the lower index); returns inertia.
double assign(const Matrix& x, const Matrix& centers, std::vector<int>& labels, Vector& dist) {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Eigen::Index k = 0; k < centers.rows(); ++k) {
            const double d = squared_distance(x, i, centers, k);
            if (d < best) {
                best = d;
                arg = static_cast<int>(k);
            }
        }
        labels[static_cast<std::size_t>(i)] = arg;
        dist(i) = best;
        inertia += best;
    }
    return inertia;
}

KMeansResult lloyd(const Matrix& x, Matrix centers, const KMeansOptions& opt) {
    const auto n = x.rows(), K = centers.rows();
    KMeansResult out;
    out.labels.assign(static_cast<std::size_t>(n), 0);
    Vector dist(n);
    double previous = std::numeric_limits<double>::infinity();
    bool converged = false;

    for (int it = 0; it < opt.max_iterations; ++it) {
        const double inertia = assign(x, centers, out.labels, dist);
        out.history.push_back(inertia);
        out.iterations = it + 1;
        out.inertia = inertia;
        if (previous - inertia < opt.tolerance) {
            converged = true;
            break;
        }
        previous = inertia;

        Matrix sums = Matrix::Zero(K, x.cols());
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(K), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto k = out.labels[static_cast<std::size_t>(i)];
            sums.row(k) += x.row(i);
            ++counts[static_cast<std::size_t>(k)];
        }
        for (Eigen::Index k = 0; k < K; ++k) {
            if (counts[static_cast<std::size_t>(k)] > 0) {
                centers.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
                continue;
            }
            // Empty cluster: move it onto the point farthest from its centroid.
            Eigen::Index far = 0;
            dist.maxCoeff(&far);
            centers.row(k) = x.row(far);
            dist(far) = 0.0;
            ++out.reseeded;
        }
    }
    if (!converged) {
        out.inertia = assign(x, centers, out.labels, dist);
        out.history.push_back(out.inertia);
    }
    out.centroids = std::move(centers);
    return out;
}

}  // namespace

KMeansResult kmeans(const Matrix& x, Eigen::Index K, std::uint64_t seed, const KMeansOptions& options) {
    if (K < 1 || K > x.rows()) {
        throw DimensionError("k-means needs 1 <= K <= n; got K = " + std::to_string(K) + ", n = " +
                             std::to_string(x.rows()));
    }
    if (options.restarts < 1 || options.max_iterations < 1) {
        throw ConfigError("k-means restarts and max_iterations must be positive");
    }
    KMeansResult best;
    for (int r = 0; r < options.restarts; ++r) {
        Engine rng = make_engine(seed, static_cast<std::uint64_t>(r));
        auto result = lloyd(x, kmeanspp(x, K, rng), options);
        result.best_restart = r;
        if (r == 0 || result.inertia < best.inertia) best = std::move(result);
    }
    return best;
}

}  // namespace demand::compression
