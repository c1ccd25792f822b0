#include "demand/panel.hpp"

#include "demand/errors.hpp"
#include "demand/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace demand {

namespace {

std::string key_of(const PanelObservation& o) {
    return "(" + o.product_id + ", " + std::to_string(o.period) + ")";
}

}  // namespace

PanelDataset::PanelDataset(std::vector<PanelObservation> observations,
                           std::vector<std::string> tabular_names)
    : obs_(std::move(observations)), tabular_names_(std::move(tabular_names)) {
    std::stable_sort(obs_.begin(), obs_.end(), [](const auto& a, const auto& b) {
        if (a.product_id != b.product_id) return a.product_id < b.product_id;
        return a.period < b.period;
    });
    if (obs_.empty()) return;

    const auto& first = obs_.front();
    for (const auto& o : obs_) {
        if (!std::isfinite(o.q) || !std::isfinite(o.p)) {
            throw DomainError("non-finite q or p at " + key_of(o));
        }
        if (o.tabular.size() != tabular_names_.size() || o.embedding.size() != first.embedding.size() ||
            o.pca.size() != first.pca.size() || o.similarity.size() != first.similarity.size()) {
            throw StructureError("feature dimensions differ at " + key_of(o));
        }
    }

    first_period_ = first.period;
    std::size_t run = 0;
    for (std::size_t i = 0; i < obs_.size(); ++i) {
        const bool new_product = i == 0 || obs_[i].product_id != obs_[i - 1].product_id;
        if (new_product) {
            if (i > 0) {
                if (n_periods_ == 0) n_periods_ = run;
                if (run != n_periods_) {
                    throw StructureError("unbalanced panel: product " + obs_[i - 1].product_id +
                                         " has " + std::to_string(run) + " periods, expected " +
                                         std::to_string(n_periods_));
                }
            }
            ++n_products_;
            run = 0;
            if (obs_[i].period != first_period_) {
                throw StructureError("unbalanced panel: product " + obs_[i].product_id +
                                     " starts at period " + std::to_string(obs_[i].period));
            }
        } else {
            if (obs_[i].period == obs_[i - 1].period) {
                throw StructureError("duplicate observation " + key_of(obs_[i]));
            }
            if (obs_[i].period != obs_[i - 1].period + 1) {
                throw StructureError("gap in periods before " + key_of(obs_[i]));
            }
        }
        ++run;
    }
    if (n_periods_ == 0) n_periods_ = run;
    if (run != n_periods_) {
        throw StructureError("unbalanced panel: product " + obs_.back().product_id + " has " +
                             std::to_string(run) + " periods, expected " + std::to_string(n_periods_));
    }
}

std::vector<std::string> PanelDataset::product_ids() const {
    std::vector<std::string> ids;
    ids.reserve(n_products_);
    for (std::size_t i = 0; i < obs_.size(); i += n_periods_) ids.push_back(obs_[i].product_id);
    return ids;
}

PanelDataset PanelDataset::subset(const std::vector<std::string>& products) const {
    std::vector<std::string> keep(products);
    std::sort(keep.begin(), keep.end());
    std::vector<PanelObservation> out;
    for (const auto& o : obs_) {
        if (std::binary_search(keep.begin(), keep.end(), o.product_id)) out.push_back(o);
    }
    return PanelDataset(std::move(out), tabular_names_);
}

PanelDataset PanelDataset::with_product_features(const ProductFeatures& f) const {
    std::map<std::string, Eigen::Index> row_of;
    for (std::size_t i = 0; i < f.product_ids.size(); ++i) {
        row_of[f.product_ids[i]] = static_cast<Eigen::Index>(i);
    }
    auto copy_row = [](const Matrix& m, Eigen::Index r) {
        std::vector<double> v(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(j)] = m(r, j);
        return v;
    };
    std::vector<PanelObservation> out = obs_;
    for (auto& o : out) {
        auto it = row_of.find(o.product_id);
        if (it == row_of.end()) {
            throw StructureError("no embedding features for product " + o.product_id);
        }
        o.embedding = copy_row(f.embedding, it->second);
        o.pca = copy_row(f.pca, it->second);
        o.similarity = copy_row(f.similarity, it->second);
    }
    return PanelDataset(std::move(out), tabular_names_);
}

PanelDataset build_signals(const std::vector<RawSeries>& raw, std::size_t period_length,
                           std::size_t n_periods, std::size_t stride) {
    if (period_length == 0 || n_periods == 0) {
        throw DomainError("period_length and n_periods must be positive");
    }
    if (stride == 0) stride = period_length;
    const std::size_t needed = (n_periods - 1) * stride + period_length;

    std::vector<PanelObservation> obs;
    obs.reserve(raw.size() * n_periods);
    for (const auto& series : raw) {
        if (series.rank.size() != series.price.size()) {
            throw LengthError("product " + series.product_id + ": rank and price tick counts differ");
        }
        if (series.rank.size() < needed) {
            throw LengthError("product " + series.product_id + ": " + std::to_string(series.rank.size()) +
                              " ticks, need " + std::to_string(needed));
        }
        for (std::size_t k = 0; k < series.rank.size(); ++k) {
            if (!(series.rank[k] > 0.0)) {
                throw DomainError("product " + series.product_id + " tick " + std::to_string(k) +
                                  ": rank must be strictly positive");
            }
            if (!(series.price[k] > 0.0)) {
                throw DomainError("product " + series.product_id + " tick " + std::to_string(k) +
                                  ": price must be strictly positive");
            }
        }
        for (std::size_t t = 0; t < n_periods; ++t) {
            const auto begin = t * stride;
            double rank_sum = 0.0, price_sum = 0.0;
            for (std::size_t k = begin; k < begin + period_length; ++k) {
                rank_sum += series.rank[k];
                price_sum += series.price[k];
            }
            const double n = static_cast<double>(period_length);
            PanelObservation o;
            o.product_id = series.product_id;
            o.period = static_cast<int>(t);
            o.q = std::log(1.0 / (rank_sum / n));
            o.p = std::log(price_sum / n);
            obs.push_back(std::move(o));
        }
    }
    return PanelDataset(std::move(obs), {});
}

std::vector<DifferenceRow> difference_signals(const PanelDataset& panel) {
    if (panel.n_periods() < 2) {
        throw StructureError("differencing needs at least two periods per product");
    }
    const auto& obs = panel.observations();
    std::vector<DifferenceRow> out;
    out.reserve(obs.size() - panel.n_products());
    for (std::size_t i = 1; i < obs.size(); ++i) {
        if (obs[i].product_id != obs[i - 1].product_id) continue;
        out.push_back({obs[i].product_id, obs[i].period, obs[i].q - obs[i - 1].q, obs[i].p - obs[i - 1].p});
    }
    return out;
}

StateTable StateTable::without(std::string_view column) const {
    StateTable out = *this;
    out.state = state.without(column);
    return out;
}

StateTable StateTable::select_rows(const std::vector<Eigen::Index>& rows) const {
    StateTable out;
    out.q.resize(static_cast<Eigen::Index>(rows.size()));
    out.p.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<std::size_t>(rows[i]);
        out.product_ids.push_back(product_ids[r]);
        out.periods.push_back(periods[r]);
        out.q(static_cast<Eigen::Index>(i)) = q(rows[i]);
        out.p(static_cast<Eigen::Index>(i)) = p(rows[i]);
    }
    out.state = state.select_rows(rows);
    return out;
}

StateTable build_state(const PanelDataset& panel, const ControlSet& controls) {
    if (panel.n_periods() < 2) {
        throw StructureError("state rows need at least two periods per product");
    }
    std::vector<std::string> names{"q_lag", "p_lag"};
    std::size_t block = 0;
    const char* prefix = "";
    switch (controls.embedding) {
        case EmbeddingControls::None: break;
        case EmbeddingControls::Embeddings: block = panel.embedding_dim(); prefix = "emb_"; break;
        case EmbeddingControls::Similarities: block = panel.similarity_dim(); prefix = "cs_"; break;
        case EmbeddingControls::Pca: block = panel.pca_dim(); prefix = "pc_"; break;
    }
    if (controls.embedding != EmbeddingControls::None && block == 0) {
        throw ConfigError(std::string("control set requests '") + prefix +
                          "*' features but the panel has none");
    }
    for (std::size_t k = 0; k < block; ++k) {
        names.push_back(prefix + std::to_string(controls.embedding == EmbeddingControls::Embeddings ? k : k + 1));
    }
    if (controls.tabular) {
        for (const auto& n : panel.tabular_names()) names.push_back(n);
    }

    const auto& obs = panel.observations();
    const auto n_rows = static_cast<Eigen::Index>(panel.n_products() * (panel.n_periods() - 1));
    StateTable out;
    out.q.resize(n_rows);
    out.p.resize(n_rows);
    out.state.names = names;
    out.state.values.resize(n_rows, static_cast<Eigen::Index>(names.size()));
    out.product_ids.reserve(static_cast<std::size_t>(n_rows));
    out.periods.reserve(static_cast<std::size_t>(n_rows));

    Eigen::Index r = 0;
    for (std::size_t i = 1; i < obs.size(); ++i) {
        const auto& cur = obs[i];
        const auto& lag = obs[i - 1];
        if (cur.product_id != lag.product_id) continue;
        out.product_ids.push_back(cur.product_id);
        out.periods.push_back(cur.period);
        out.q(r) = cur.q;
        out.p(r) = cur.p;
        auto row = out.state.values.row(r);
        Eigen::Index c = 0;
        row(c++) = lag.q;
        row(c++) = lag.p;
        const std::vector<double>* features = nullptr;
        switch (controls.embedding) {
            case EmbeddingControls::None: break;
            case EmbeddingControls::Embeddings: features = &cur.embedding; break;
            case EmbeddingControls::Similarities: features = &cur.similarity; break;
            case EmbeddingControls::Pca: features = &cur.pca; break;
        }
        if (features) {
            for (double v : *features) row(c++) = v;
        }
        if (controls.tabular) {
            for (double v : cur.tabular) row(c++) = v;
        }
        ++r;
    }
    return out;
}

std::pair<PanelDataset, PanelDataset> split_by_product(const PanelDataset& panel, double fraction,
                                                       std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw DomainError("split fraction must lie in (0, 1)");
    }
    auto ids = panel.product_ids();
    if (ids.size() < 2) throw DomainError("splitting needs at least two products");

    auto rng = make_engine(seed, 0x5b1u);
    std::shuffle(ids.begin(), ids.end(), rng);
    auto n_first = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    n_first = std::clamp<std::size_t>(n_first, 1, ids.size() - 1);

    std::vector<std::string> first(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_first));
    std::vector<std::string> second(ids.begin() + static_cast<std::ptrdiff_t>(n_first), ids.end());
    return {panel.subset(first), panel.subset(second)};
}

double rank_to_demand_elasticity(double delta, double theta) {
    if (!(theta > 0.0)) throw DomainError("Pareto shape theta must be positive");
    return delta / theta;
}

}  // namespace demand
