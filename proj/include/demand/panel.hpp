#pragma once

#include "demand/labeled_matrix.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace demand {

/// One product in one period.
///
/// `q` is the quantity signal log(1 / time-averaged sales rank) and `p` the
/// price signal log(time-averaged price). `tabular` holds time-varying
/// controls X^o_it; the three embedding-derived blocks are time-invariant per
/// product and are filled in by the compression stage (or the simulator).
struct PanelObservation {
    std::string product_id;
    int period = 0;
    double q = 0.0;
    double p = 0.0;
    std::vector<double> tabular;
    std::vector<double> embedding;   // X^e, normalized embedding
    std::vector<double> pca;         // X^pc
    std::vector<double> similarity;  // X^sim, centroid cosine similarities
};

/// S_it = (Q_{i,t-1}, P_{i,t-1}, X_it); defined for t >= 1.
struct StateVector {
    double q_lag = 0.0;
    double p_lag = 0.0;
    std::vector<double> controls;
};

/// Balanced product x period panel, sorted by (product_id, period).
class PanelDataset {
public:
    PanelDataset() = default;

    /// Sorts and validates. Throws StructureError on duplicate keys, gaps,
    /// unbalanced products or ragged feature blocks; DomainError on
    /// non-finite signals.
    PanelDataset(std::vector<PanelObservation> observations,
                 std::vector<std::string> tabular_names);

    const std::vector<PanelObservation>& observations() const { return obs_; }
    const std::vector<std::string>& tabular_names() const { return tabular_names_; }
    std::size_t size() const { return obs_.size(); }
    std::size_t n_products() const { return n_products_; }
    /// Number of periods per product (T + 1).
    std::size_t n_periods() const { return n_periods_; }
    int first_period() const { return first_period_; }

    std::vector<std::string> product_ids() const;

    /// Keeps only the listed products (in panel order).
    PanelDataset subset(const std::vector<std::string>& products) const;

    std::size_t embedding_dim() const { return obs_.empty() ? 0 : obs_.front().embedding.size(); }
    std::size_t pca_dim() const { return obs_.empty() ? 0 : obs_.front().pca.size(); }
    std::size_t similarity_dim() const { return obs_.empty() ? 0 : obs_.front().similarity.size(); }

    /// Replaces the embedding-derived blocks. Each map row is keyed by
    /// product; every product in the panel must be present.
    struct ProductFeatures {
        std::vector<std::string> product_ids;
        Matrix embedding;
        Matrix pca;
        Matrix similarity;
    };
    PanelDataset with_product_features(const ProductFeatures& features) const;

private:
    std::vector<PanelObservation> obs_;
    std::vector<std::string> tabular_names_;
    std::size_t n_products_ = 0;
    std::size_t n_periods_ = 0;
    int first_period_ = 0;
};

/// Raw tick series for one product.
struct RawSeries {
    std::string product_id;
    std::vector<double> rank;
    std::vector<double> price;
};

/// Aggregates raw ticks into period signals.
///
/// Period t averages ticks [t*stride, t*stride + period_length). A stride of
/// zero means stride = period_length (non-overlapping periods).
PanelDataset build_signals(const std::vector<RawSeries>& raw, std::size_t period_length,
                           std::size_t n_periods, std::size_t stride = 0);

struct DifferenceRow {
    std::string product_id;
    int period = 0;
    double dq = 0.0;
    double dp = 0.0;
};

/// First differences for every period after the first.
std::vector<DifferenceRow> difference_signals(const PanelDataset& panel);

/// Which embedding-derived block enters the state next to the lags.
enum class EmbeddingControls { None, Embeddings, Similarities, Pca };

struct ControlSet {
    EmbeddingControls embedding = EmbeddingControls::Similarities;
    bool tabular = true;
};

/// Rows for t >= 1: outcome q_it, treatment p_it and the state
/// S_it = (q_lag, p_lag, X_it). State columns are named
/// `q_lag`, `p_lag`, then `emb_j` / `cs_k` / `pc_k`, then tabular names.
struct StateTable {
    std::vector<std::string> product_ids;
    std::vector<int> periods;
    Vector q;
    Vector p;
    LabeledMatrix state;

    std::size_t size() const { return product_ids.size(); }
    StateTable without(std::string_view column) const;
    StateTable select_rows(const std::vector<Eigen::Index>& rows) const;
};

StateTable build_state(const PanelDataset& panel, const ControlSet& controls);

/// Product-level split (I1, I2). Each product's full series lands wholly in
/// one subset; |I1| = round(fraction * N), clamped to [1, N-1].
std::pair<PanelDataset, PanelDataset> split_by_product(const PanelDataset& panel, double fraction,
                                                       std::uint64_t seed);

/// Converts a rank-based price effect into a demand elasticity under a
/// Pareto sales distribution with shape theta.
double rank_to_demand_elasticity(double delta, double theta);

// CSV interchange. Panel header: product_id,period,q,p,<controls...>, where
// controls named emb_*, pc_*, cs_* fill the embedding blocks and any other
// column is a tabular control. Raw ticks: product_id,tick,rank,price.
void write_panel_csv(std::ostream& out, const PanelDataset& panel);
PanelDataset read_panel_csv(std::istream& in);
std::vector<RawSeries> read_raw_ticks_csv(std::istream& in);

/// Raw product embeddings, one row per product.
struct ProductEmbeddings {
    std::vector<std::string> product_ids;
    Matrix vectors;
};

// Embedding CSV: product_id,e_0,...,e_{d-1}.
void write_embeddings_csv(std::ostream& out, const ProductEmbeddings& embeddings);
ProductEmbeddings read_embeddings_csv(std::istream& in);

}  // namespace demand
