#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <vector>

namespace demand {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense matrix with one label per column.
struct LabeledMatrix {
    Matrix values;
    std::vector<std::string> names;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }

    /// Column index for `name`, or -1.
    Eigen::Index find(std::string_view name) const;
    /// Column index for `name`; throws ConfigError when absent.
    Eigen::Index index_of(std::string_view name) const;

    LabeledMatrix without(std::string_view name) const;
    LabeledMatrix select_rows(const std::vector<Eigen::Index>& rows) const;
};

}  // namespace demand
