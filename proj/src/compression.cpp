#include "demand/compression.hpp"

#include "demand/errors.hpp"
#include "demand/random.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace demand::compression {

namespace {

constexpr std::uint64_t kProjectionStream = 0x9a;
constexpr std::uint64_t kKMeansStream = 0x4b;
constexpr double kDegenerateNorm = 1e-10;
constexpr double kTieTolerance = 1e-10;

/// out.row(i) = x.row(i) * M, computed one contiguous row at a time so the
/// result for a row does not depend on how many other rows are present.
Matrix multiply_rows(const Matrix& x, const Matrix& M) {
    Matrix out(x.rows(), M.cols());
    const Matrix Mt = M.transpose();
    Vector row(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        row = x.row(i).transpose();
        out.row(i) = (Mt * row).transpose();
    }
    return out;
}

}  // namespace

Matrix projection_matrix(Eigen::Index d, Eigen::Index m, std::uint64_t seed) {
    if (d < 1 || m < 1) throw DimensionError("projection dimensions must be positive");
    Engine rng = make_engine(seed, kProjectionStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix G(d, m);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) G(i, j) = normal(rng);
    }
    return G;
}

Matrix jl_project(const Matrix& embeddings, Eigen::Index target_dim, std::uint64_t seed) {
    return jl_project(embeddings, projection_matrix(embeddings.cols(), target_dim, seed));
}

Matrix jl_project(const Matrix& embeddings, const Matrix& projection) {
    if (embeddings.cols() != projection.rows()) {
        throw DimensionError("embedding dimension " + std::to_string(embeddings.cols()) +
                             " does not match projection input dimension " + std::to_string(projection.rows()));
    }
    return multiply_rows(embeddings, projection);
}

Matrix center_normalize(const Matrix& projected, const Vector& mean) {
    if (projected.cols() != mean.size()) {
        throw DimensionError("row dimension " + std::to_string(projected.cols()) +
                             " does not match stored mean dimension " + std::to_string(mean.size()));
    }
    Matrix out(projected.rows(), projected.cols());
    const double mean_norm = mean.norm();
    for (Eigen::Index i = 0; i < projected.rows(); ++i) {
        const Vector centered = projected.row(i).transpose() - mean;
        const double norm = centered.norm();
        const double scale = std::max(mean_norm, projected.row(i).norm());
        if (!(norm > kDegenerateNorm * scale) || norm == 0.0) {
            throw DegenerateInputError("row " + std::to_string(i) +
                                       " coincides with the mean; cannot normalize a zero vector");
        }
        out.row(i) = (centered / norm).transpose();
    }
    return out;
}

Normalized center_normalize(const Matrix& projected) {
    if (projected.rows() < 1) throw DimensionError("no rows to normalize");
    Normalized out;
    out.mean = projected.colwise().mean().transpose();
    out.rows = center_normalize(projected, out.mean);
    return out;
}

PcaResult pca_features(const Matrix& x, Eigen::Index K) {
    const auto n = x.rows(), m = x.cols();
    if (K < 1 || K > std::min(n - 1, m)) {
        throw DimensionError("PCA needs 1 <= K <= min(n - 1, m); got K = " + std::to_string(K) +
                             ", n = " + std::to_string(n) + ", m = " + std::to_string(m));
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - mean;
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) throw RankError("covariance eigendecomposition failed");
    const Vector& values = solver.eigenvalues();  // ascending
    const Matrix& vectors = solver.eigenvectors();

    PcaResult out;
    out.axes.resize(m, K);
    out.eigenvalues.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const auto src = m - 1 - k;
        Vector axis = vectors.col(src);
        Eigen::Index arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis(arg) < 0) axis = -axis;
        out.axes.col(k) = axis;
        out.eigenvalues(k) = values(src);
    }
    // Report any tie that makes one of the kept axes ambiguous.
    for (Eigen::Index k = 0; k < K && m - 2 - k >= 0; ++k) {
        const double gap = values(m - 1 - k) - values(m - 2 - k);
        if (std::abs(gap) < kTieTolerance) {
            out.warnings.push_back("eigenvalues " + std::to_string(k + 1) + " and " + std::to_string(k + 2) +
                                   " are tied within 1e-10; principal axis " + std::to_string(k + 1) +
                                   " is not unique");
        }
    }
    out.features = multiply_rows(x, out.axes);
    return out;
}

Matrix cosine_similarities(const Matrix& x, const Matrix& centroids) {
    if (x.cols() != centroids.cols()) throw DimensionError("centroid dimension mismatch");
    Matrix out(x.rows(), centroids.rows());
    Vector c_norm(centroids.rows());
    for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
        c_norm(k) = centroids.row(k).norm();
        if (c_norm(k) == 0.0) throw DegenerateInputError("centroid " + std::to_string(k) + " is the zero vector");
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double x_norm = x.row(i).norm();
        if (x_norm == 0.0) throw DegenerateInputError("row " + std::to_string(i) + " is the zero vector");
        for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
            out(i, k) = centroids.row(k).dot(x.row(i)) / (c_norm(k) * x_norm);
        }
    }
    return out;
}

SimilarityResult centroid_similarities(const Matrix& x, Eigen::Index K, std::uint64_t seed,
                                       const KMeansOptions& options) {
    SimilarityResult out;
    out.clustering = kmeans(x, K, seed, options);
    out.features = cosine_similarities(x, out.clustering.centroids);
    return out;
}

FitResult fit(const Matrix& embeddings, const CompressionOptions& options) {
    FitResult out;
    auto& model = out.model;
    model.K = options.K;
    model.seed = options.seed;
    model.projection = projection_matrix(embeddings.cols(), options.target_dim, options.seed);

    const Matrix projected = jl_project(embeddings, model.projection);
    auto normalized = center_normalize(projected);
    model.mean = normalized.mean;

    auto pca = pca_features(normalized.rows, options.K);
    model.pca_axes = pca.axes;
    model.eigenvalues = pca.eigenvalues;
    model.warnings = pca.warnings;

    auto sims = centroid_similarities(normalized.rows, options.K, derive_seed(options.seed, kKMeansStream),
                                      options.kmeans);
    model.centroids = sims.clustering.centroids;
    if (sims.clustering.reseeded > 0) {
        model.warnings.push_back("k-means reseeded " + std::to_string(sims.clustering.reseeded) +
                                 " empty cluster(s) to the farthest point");
    }

    out.features.embedding = std::move(normalized.rows);
    out.features.pca = std::move(pca.features);
    out.features.similarity = std::move(sims.features);
    return out;
}

Features transform(const CompressionModel& model, const Matrix& embeddings) {
    if (model.projection.size() == 0) throw ConfigError("compression model is not fitted");
    Features out;
    out.embedding = center_normalize(jl_project(embeddings, model.projection), model.mean);
    out.pca = multiply_rows(out.embedding, model.pca_axes);
    out.similarity = cosine_similarities(out.embedding, model.centroids);
    return out;
}

}  // namespace demand::compression
