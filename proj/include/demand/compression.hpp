#pragma once

#include "demand/labeled_matrix.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace demand::compression {

/// d x m matrix of i.i.d. N(0, 1) entries drawn from `seed`.
Matrix projection_matrix(Eigen::Index d, Eigen::Index m, std::uint64_t seed);

/// Row i of the result is E_i^T G. No 1/sqrt(m) scaling: the later
/// normalization onto the unit sphere makes the scale irrelevant.
Matrix jl_project(const Matrix& embeddings, Eigen::Index target_dim, std::uint64_t seed);
Matrix jl_project(const Matrix& embeddings, const Matrix& projection);

struct Normalized {
    Matrix rows;  // unit-norm rows
    Vector mean;  // column mean of the input
};

/// Centers by the column mean and scales every row to unit length.
Normalized center_normalize(const Matrix& projected);
/// Same transform with a stored mean (out-of-sample rows).
Matrix center_normalize(const Matrix& projected, const Vector& mean);

struct PcaResult {
    Matrix axes;           // m x K, column k is gamma_k
    Vector eigenvalues;    // top K, descending
    Matrix features;       // n x K, X^pc = X gamma
    std::vector<std::string> warnings;
};

/// Top-K eigenvectors of the sample covariance, descending eigenvalue. Each
/// axis is signed so that its largest-magnitude coordinate is positive.
PcaResult pca_features(const Matrix& x, Eigen::Index K);

struct KMeansOptions {
    int restarts = 10;
    int max_iterations = 300;
    double tolerance = 1e-10;  // stop when the inertia improvement is below this
};

struct KMeansResult {
    Matrix centroids;               // K x m
    std::vector<int> labels;        // n
    double inertia = 0.0;
    int iterations = 0;
    int best_restart = 0;
    int reseeded = 0;               // empty clusters moved to the farthest point
    std::vector<double> history;    // inertia after each Lloyd step, best restart
};

/// Lloyd's algorithm with k-means++ seeding; best inertia over restarts.
KMeansResult kmeans(const Matrix& x, Eigen::Index K, std::uint64_t seed, const KMeansOptions& options = {});

/// CS_ik = c_k^T x_i / (|c_k| |x_i|).
Matrix cosine_similarities(const Matrix& x, const Matrix& centroids);

struct SimilarityResult {
    KMeansResult clustering;
    Matrix features;  // n x K
};

SimilarityResult centroid_similarities(const Matrix& x, Eigen::Index K, std::uint64_t seed,
                                       const KMeansOptions& options = {});

/// Everything needed to featurize new embeddings without refitting.
struct CompressionModel {
    Matrix projection;      // d x m
    Vector mean;            // m
    Matrix pca_axes;        // m x K
    Vector eigenvalues;     // K
    Matrix centroids;       // K x m
    Eigen::Index K = 5;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    Eigen::Index input_dim() const { return projection.rows(); }
    Eigen::Index target_dim() const { return projection.cols(); }
};

struct Features {
    Matrix embedding;   // X^e
    Matrix pca;         // X^pc
    Matrix similarity;  // X^sim
};

struct CompressionOptions {
    Eigen::Index target_dim = 256;
    Eigen::Index K = 5;
    std::uint64_t seed = 0;
    KMeansOptions kmeans;
};

struct FitResult {
    CompressionModel model;
    Features features;
};

FitResult fit(const Matrix& embeddings, const CompressionOptions& options);
Features transform(const CompressionModel& model, const Matrix& embeddings);

/// Text model format: a `key,value` manifest followed by CSV blocks.
void save_model(std::ostream& out, const CompressionModel& model);
CompressionModel load_model(std::istream& in);

}  // namespace demand::compression
