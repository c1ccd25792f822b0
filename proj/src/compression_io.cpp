#include "demand/compression.hpp"
#include "demand/csv.hpp"
#include "demand/errors.hpp"

#include <istream>
#include <ostream>

namespace demand::compression {

namespace {

constexpr const char* kFormat = "demand-compression-v1";

void write_block(std::ostream& out, const std::string& name, const Matrix& m) {
    out << "[" << name << "," << m.rows() << "," << m.cols() << "]\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << csv::format(m(i, j));
        }
        out << '\n';
    }
}

Matrix read_block(std::istream& in, const std::string& expected) {
    std::string line;
    if (!csv::next_record(in, line) || line.size() < 2 || line.front() != '[' || line.back() != ']') {
        throw StructureError("compression model: expected block [" + expected + ",rows,cols]");
    }
    const auto head = csv::split(std::string_view(line).substr(1, line.size() - 2));
    if (head.size() != 3 || head[0] != expected) {
        throw StructureError("compression model: expected block '" + expected + "', found '" + line + "'");
    }
    const auto rows = csv::parse_int(head[1], expected);
    const auto cols = csv::parse_int(head[2], expected);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (!csv::next_record(in, line)) throw StructureError("compression model: block '" + expected + "' truncated");
        const auto f = csv::split(line);
        if (static_cast<Eigen::Index>(f.size()) != cols) {
            throw StructureError("compression model: block '" + expected + "' row " + std::to_string(i) +
                                 " has " + std::to_string(f.size()) + " values");
        }
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = csv::parse_double(f[static_cast<std::size_t>(j)], expected);
    }
    return m;
}

}  // namespace

void save_model(std::ostream& out, const CompressionModel& model) {
    out << "# compression model: manifest lines, then [name,rows,cols] CSV blocks\n";
    out << "format," << kFormat << '\n';
    out << "input_dim," << model.input_dim() << '\n';
    out << "target_dim," << model.target_dim() << '\n';
    out << "k," << model.K << '\n';
    out << "seed," << model.seed << '\n';
    out << "warnings," << model.warnings.size() << '\n';
    for (const auto& w : model.warnings) {
        std::string clean = w;
        for (auto& ch : clean) {
            if (ch == ',' || ch == '\n') ch = ';';
        }
        out << "warning," << clean << '\n';
    }
    write_block(out, "projection", model.projection);
    write_block(out, "mean", model.mean.transpose());
    write_block(out, "pca_axes", model.pca_axes);
    write_block(out, "eigenvalues", model.eigenvalues.transpose());
    write_block(out, "centroids", model.centroids);
}

CompressionModel load_model(std::istream& in) {
    std::string line;
    CompressionModel model;
    auto field = [&](const char* key) {
        if (!csv::next_record(in, line)) throw StructureError("compression model: missing manifest key " + std::string(key));
        const auto pos = line.find(',');
        if (pos == std::string::npos || line.substr(0, pos) != key) {
            throw StructureError("compression model: expected manifest key '" + std::string(key) + "'");
        }
        return line.substr(pos + 1);
    };
    if (field("format") != kFormat) throw StructureError("compression model: unsupported format");
    const auto d = csv::parse_int(field("input_dim"), "input_dim");
    const auto m = csv::parse_int(field("target_dim"), "target_dim");
    model.K = csv::parse_int(field("k"), "k");
    model.seed = static_cast<std::uint64_t>(std::stoull(field("seed")));
    const auto n_warn = csv::parse_int(field("warnings"), "warnings");
    for (long long i = 0; i < n_warn; ++i) model.warnings.push_back(field("warning"));

    model.projection = read_block(in, "projection");
    model.mean = read_block(in, "mean").row(0).transpose();
    model.pca_axes = read_block(in, "pca_axes");
    model.eigenvalues = read_block(in, "eigenvalues").row(0).transpose();
    model.centroids = read_block(in, "centroids");
    if (model.projection.rows() != d || model.projection.cols() != m || model.mean.size() != m ||
        model.pca_axes.rows() != m || model.pca_axes.cols() != model.K || model.centroids.rows() != model.K ||
        model.centroids.cols() != m) {
        throw StructureError("compression model: block shapes disagree with the manifest");
    }
    return model;
}

}  // namespace demand::compression
