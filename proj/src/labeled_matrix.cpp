#include "demand/labeled_matrix.hpp"

#include "demand/errors.hpp"

namespace demand {

Eigen::Index LabeledMatrix::find(std::string_view name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == name) return static_cast<Eigen::Index>(j);
    }
    return -1;
}

Eigen::Index LabeledMatrix::index_of(std::string_view name) const {
    auto j = find(name);
    if (j < 0) throw ConfigError("unknown column '" + std::string(name) + "'");
    return j;
}

LabeledMatrix LabeledMatrix::without(std::string_view name) const {
    const auto drop = index_of(name);
    LabeledMatrix out;
    out.values.resize(values.rows(), values.cols() - 1);
    for (Eigen::Index j = 0, k = 0; j < values.cols(); ++j) {
        if (j == drop) continue;
        out.values.col(k++) = values.col(j);
        out.names.push_back(names[static_cast<std::size_t>(j)]);
    }
    return out;
}

LabeledMatrix LabeledMatrix::select_rows(const std::vector<Eigen::Index>& rows) const {
    LabeledMatrix out;
    out.names = names;
    out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.values.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
    }
    return out;
}

}  // namespace demand
