#include "demand/report.hpp"

#include "demand/csv.hpp"
#include "demand/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace demand::report {

namespace {

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", v);
    return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string render(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& body) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : body) width[c] = std::max(width[c], row[c].size());
    }
    std::size_t total = 0;
    for (auto w : width) total += w + 2;
    const std::string rule(total - 2, '=');
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out << "  ";
            out << (c == 0 ? pad_right(cells[c], width[c]) : pad_left(cells[c], width[c]));
        }
        out << '\n';
    };
    out << rule << '\n';
    line(header);
    out << std::string(total - 2, '-') << '\n';
    for (const auto& row : body) line(row);
    out << rule << '\n';
    return out.str();
}

}  // namespace

std::string fixed3(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    std::string s = buf;
    if (s == "-0.000") s = "0.000";
    return s;
}

std::string coefficient_label(const std::string& name) {
    if (name == "const") return "Centercept";
    if (name == "q_lag") return "Lagged Quantity";
    if (name == "p_lag") return "Lagged Price";
    if (name.rfind("cs_", 0) == 0) {
        const auto k = csv::parse_int(name.substr(3), "similarity index");
        return "Cluster Similarity " + std::to_string(k - 1);
    }
    return name;
}

EffectRow effect_row(const dml::EffectEstimate& est, Eigen::Index i, const std::string& label) {
    EffectRow row;
    row.label = label;
    row.coef = est.coef(i);
    row.se = est.se(i);
    row.t = est.t(i);
    row.p_value = est.p_value(i);
    row.lo = est.ci_lo(i);
    row.hi = est.ci_hi(i);
    return row;
}

EffectTable effect_table(const dml::EffectEstimate& est, const std::string& title) {
    EffectTable table;
    table.title = title;
    table.row_header = "Modifier";
    table.level = est.level;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(est.names.size()); ++i) {
        table.rows.push_back(effect_row(est, i, coefficient_label(est.names[static_cast<std::size_t>(i)])));
    }
    return table;
}

std::pair<std::string, std::string> ci_headers(double level) {
    const double tail = 50.0 * (1.0 - level);
    return {"[" + percent(tail), percent(100.0 - tail) + "]"};
}

std::string format_table(const EffectTable& table) {
    const auto [lo, hi] = ci_headers(table.level);
    std::vector<std::string> header{table.row_header, "coef", "std err", "t", "P-val.", lo, hi};
    const bool elasticity = std::any_of(table.rows.begin(), table.rows.end(),
                                        [](const EffectRow& r) { return r.elasticity.has_value(); });
    if (elasticity) {
        header.insert(header.end(), {"elasticity", "el " + lo, "el " + hi});
    }
    std::vector<std::vector<std::string>> body;
    for (const auto& r : table.rows) {
        std::vector<std::string> cells{r.label, fixed3(r.coef), fixed3(r.se), fixed3(r.t), fixed3(r.p_value),
                                       fixed3(r.lo), fixed3(r.hi)};
        if (elasticity) {
            cells.push_back(r.elasticity ? fixed3(*r.elasticity) : "");
            cells.push_back(r.elasticity_lo ? fixed3(*r.elasticity_lo) : "");
            cells.push_back(r.elasticity_hi ? fixed3(*r.elasticity_hi) : "");
        }
        body.push_back(std::move(cells));
    }
    std::string out;
    if (!table.title.empty()) out += table.title + "\n";
    return out + render(header, body);
}

EffectTable report_elasticity(EffectTable table, double theta) {
    for (auto& r : table.rows) {
        r.elasticity = rank_to_demand_elasticity(r.coef, theta);
        r.elasticity_lo = rank_to_demand_elasticity(r.lo, theta);
        r.elasticity_hi = rank_to_demand_elasticity(r.hi, theta);
    }
    return table;
}

dml::SortedEffects report_elasticity(dml::SortedEffects curve, double theta) {
    for (std::size_t i = 0; i < curve.alpha.size(); ++i) {
        curve.alpha[i] = rank_to_demand_elasticity(curve.alpha[i], theta);
        curve.lo[i] = rank_to_demand_elasticity(curve.lo[i], theta);
        curve.hi[i] = rank_to_demand_elasticity(curve.hi[i], theta);
    }
    return curve;
}

std::string format_wald_table(const std::vector<WaldRow>& rows) {
    std::vector<std::vector<std::string>> body;
    for (const auto& r : rows) {
        body.push_back({r.model, fixed3(r.all_modifiers.p_value), fixed3(r.similarities_only.p_value)});
    }
    return render({"Model", "All Modifiers", "Similarities Only"}, body);
}

nlohmann::json to_json(const dml::EffectEstimate& est) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(est.names.size()); ++i) {
        rows.push_back({{"name", est.names[static_cast<std::size_t>(i)]},
                        {"coef", est.coef(i)},
                        {"std_err", est.se(i)},
                        {"t", est.t(i)},
                        {"p_value", est.p_value(i)},
                        {"ci_lo", est.ci_lo(i)},
                        {"ci_hi", est.ci_hi(i)}});
    }
    nlohmann::json cov = nlohmann::json::array();
    for (Eigen::Index i = 0; i < est.covariance.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < est.covariance.cols(); ++j) row.push_back(est.covariance(i, j));
        cov.push_back(row);
    }
    return {{"coefficients", rows},
            {"covariance", cov},
            {"n_obs", est.n_obs},
            {"n_clusters", est.n_clusters},
            {"level", est.level},
            {"critical", est.t_critical ? "t" : "normal"},
            {"dropped", est.dropped}};
}

nlohmann::json to_json(const dml::WaldTest& test) {
    return {{"statistic", test.statistic}, {"df", test.df}, {"p_value", test.p_value}};
}

dml::EffectEstimate estimate_from_json(const nlohmann::json& j) {
    try {
        dml::EffectEstimate est;
        const auto& rows = j.at("coefficients");
        const auto k = static_cast<Eigen::Index>(rows.size());
        est.coef.resize(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            const auto& r = rows.at(static_cast<std::size_t>(i));
            est.names.push_back(r.at("name").get<std::string>());
            est.coef(i) = r.at("coef").get<double>();
        }
        const auto& cov = j.at("covariance");
        if (static_cast<Eigen::Index>(cov.size()) != k) throw StructureError("covariance has the wrong number of rows");
        est.covariance.resize(k, k);
        for (Eigen::Index i = 0; i < k; ++i) {
            const auto& row = cov.at(static_cast<std::size_t>(i));
            if (static_cast<Eigen::Index>(row.size()) != k) throw StructureError("covariance row has the wrong length");
            for (Eigen::Index c = 0; c < k; ++c) est.covariance(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
        est.n_obs = j.at("n_obs").get<std::size_t>();
        est.n_clusters = j.at("n_clusters").get<std::size_t>();
        est.level = j.at("level").get<double>();
        est.t_critical = j.at("critical").get<std::string>() == "t";
        est.dropped = j.at("dropped").get<std::vector<std::string>>();
        return est;
    } catch (const nlohmann::json::exception& e) {
        throw StructureError(std::string("malformed estimate JSON: ") + e.what());
    }
}

void write_sorted_effects_csv(std::ostream& out, const dml::SortedEffects& curve) {
    out << "index,alpha,lo,hi\n";
    for (std::size_t i = 0; i < curve.alpha.size(); ++i) {
        out << csv::format(curve.index[i]) << ',' << csv::format(curve.alpha[i]) << ',' << csv::format(curve.lo[i])
            << ',' << csv::format(curve.hi[i]) << '\n';
    }
}

std::string hash_header(const std::string& config_hash) { return "# config_hash: " + config_hash + "\n"; }

}  // namespace demand::report
