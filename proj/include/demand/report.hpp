#pragma once

#include "demand/dml.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace demand::report {

struct EffectRow {
    std::string label;
    double coef = 0.0;
    double se = 0.0;
    double t = 0.0;
    double p_value = 1.0;
    double lo = 0.0;
    double hi = 0.0;
    // Demand-elasticity columns, filled by report_elasticity.
    std::optional<double> elasticity, elasticity_lo, elasticity_hi;
};

struct EffectTable {
    std::string title;
    std::string row_header = "Specification";
    double level = 0.90;
    std::vector<EffectRow> rows;
};

/// Display label for a coefficient name: const -> Centercept,
/// q_lag -> Lagged Quantity, cs_k -> Cluster Similarity k-1, ...
std::string coefficient_label(const std::string& name);

/// One row per coefficient, labelled with coefficient_label.
EffectTable effect_table(const dml::EffectEstimate& est, const std::string& title);
/// One row for a single-coefficient estimate, labelled with `label`.
EffectRow effect_row(const dml::EffectEstimate& est, Eigen::Index i, const std::string& label);

/// CI column headers for a level, e.g. "[5.0%" and "95.0%]" at 0.90.
std::pair<std::string, std::string> ci_headers(double level);

/// Fixed-width text with columns coef, std err, t, P-val., [lo%, hi%],
/// three decimals, plus elasticity columns when present.
std::string format_table(const EffectTable& table);

/// Divides coef and CI endpoints by theta (> 0) into the elasticity columns.
EffectTable report_elasticity(EffectTable table, double theta);

/// Converts the sorted curve the same way.
dml::SortedEffects report_elasticity(dml::SortedEffects curve, double theta);

struct WaldRow {
    std::string model;
    dml::WaldTest all_modifiers;
    dml::WaldTest similarities_only;
};

/// p-value table with columns "All Modifiers" and "Similarities Only".
std::string format_wald_table(const std::vector<WaldRow>& rows);

nlohmann::json to_json(const dml::EffectEstimate& est);
nlohmann::json to_json(const dml::WaldTest& test);
/// Inverse of to_json(EffectEstimate); throws StructureError on malformed input.
dml::EffectEstimate estimate_from_json(const nlohmann::json& j);

/// CSV `index,alpha,lo,hi`.
void write_sorted_effects_csv(std::ostream& out, const dml::SortedEffects& curve);

/// `# config_hash: <hex>` comment line that heads every emitted table.
std::string hash_header(const std::string& config_hash);

/// Fixed three-decimal formatting; negative zero prints as 0.000.
std::string fixed3(double v);

}  // namespace demand::report
