#include "demand/csv.hpp"
#include "demand/errors.hpp"
#include "demand/panel.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>

namespace demand {

namespace {

enum class Block { Tabular, Embedding, Pca, Similarity };

Block block_of(const std::string& name) {
    if (name.rfind("emb_", 0) == 0) return Block::Embedding;
    if (name.rfind("pc_", 0) == 0) return Block::Pca;
    if (name.rfind("cs_", 0) == 0) return Block::Similarity;
    return Block::Tabular;
}

}  // namespace

void write_panel_csv(std::ostream& out, const PanelDataset& panel) {
    out << "product_id,period,q,p";
    for (std::size_t j = 0; j < panel.embedding_dim(); ++j) out << ",emb_" << j;
    for (std::size_t j = 0; j < panel.pca_dim(); ++j) out << ",pc_" << j + 1;
    for (std::size_t j = 0; j < panel.similarity_dim(); ++j) out << ",cs_" << j + 1;
    for (const auto& n : panel.tabular_names()) out << ',' << n;
    out << '\n';
    for (const auto& o : panel.observations()) {
        out << o.product_id << ',' << o.period << ',' << csv::format(o.q) << ',' << csv::format(o.p);
        for (double v : o.embedding) out << ',' << csv::format(v);
        for (double v : o.pca) out << ',' << csv::format(v);
        for (double v : o.similarity) out << ',' << csv::format(v);
        for (double v : o.tabular) out << ',' << csv::format(v);
        out << '\n';
    }
}

PanelDataset read_panel_csv(std::istream& in) {
    std::string line;
    if (!csv::next_record(in, line)) throw StructureError("panel CSV is empty");
    const auto header = csv::split(line);
    if (header.size() < 4 || header[0] != "product_id" || header[1] != "period" || header[2] != "q" ||
        header[3] != "p") {
        throw StructureError("panel CSV header must start with product_id,period,q,p");
    }
    std::vector<Block> blocks;
    std::vector<std::string> tabular_names;
    for (std::size_t j = 4; j < header.size(); ++j) {
        blocks.push_back(block_of(header[j]));
        if (blocks.back() == Block::Tabular) tabular_names.push_back(header[j]);
    }

    std::vector<PanelObservation> obs;
    std::size_t line_no = 1;
    while (csv::next_record(in, line)) {
        ++line_no;
        const auto fields = csv::split(line);
        const std::string ctx = "panel CSV line " + std::to_string(line_no);
        if (fields.size() != header.size()) {
            throw StructureError(ctx + ": expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
        }
        PanelObservation o;
        o.product_id = fields[0];
        o.period = static_cast<int>(csv::parse_int(fields[1], ctx));
        o.q = csv::parse_double(fields[2], ctx);
        o.p = csv::parse_double(fields[3], ctx);
        for (std::size_t j = 4; j < fields.size(); ++j) {
            const double v = csv::parse_double(fields[j], ctx);
            switch (blocks[j - 4]) {
                case Block::Tabular: o.tabular.push_back(v); break;
                case Block::Embedding: o.embedding.push_back(v); break;
                case Block::Pca: o.pca.push_back(v); break;
                case Block::Similarity: o.similarity.push_back(v); break;
            }
        }
        obs.push_back(std::move(o));
    }
    return PanelDataset(std::move(obs), std::move(tabular_names));
}

std::vector<RawSeries> read_raw_ticks_csv(std::istream& in) {
    std::string line;
    if (!csv::next_record(in, line)) throw StructureError("tick CSV is empty");
    const auto header = csv::split(line);
    if (header != std::vector<std::string>{"product_id", "tick", "rank", "price"}) {
        throw StructureError("tick CSV header must be product_id,tick,rank,price");
    }
    std::map<std::string, std::map<long long, std::pair<double, double>>> by_product;
    std::size_t line_no = 1;
    while (csv::next_record(in, line)) {
        ++line_no;
        const auto f = csv::split(line);
        const std::string ctx = "tick CSV line " + std::to_string(line_no);
        if (f.size() != 4) throw StructureError(ctx + ": expected 4 fields");
        const auto tick = csv::parse_int(f[1], ctx);
        auto [it, inserted] = by_product[f[0]].emplace(
            tick, std::make_pair(csv::parse_double(f[2], ctx), csv::parse_double(f[3], ctx)));
        if (!inserted) throw StructureError(ctx + ": duplicate tick for product " + f[0]);
    }
    std::vector<RawSeries> out;
    for (auto& [id, ticks] : by_product) {
        RawSeries s;
        s.product_id = id;
        long long expect = ticks.begin()->first;
        for (auto& [tick, rp] : ticks) {
            if (tick != expect++) throw StructureError("missing tick before " + std::to_string(tick) + " for product " + id);
            s.rank.push_back(rp.first);
            s.price.push_back(rp.second);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_embeddings_csv(std::ostream& out, const ProductEmbeddings& embeddings) {
    if (static_cast<Eigen::Index>(embeddings.product_ids.size()) != embeddings.vectors.rows()) {
        throw LengthError("embeddings: product id count does not match the matrix rows");
    }
    out << "product_id";
    for (Eigen::Index j = 0; j < embeddings.vectors.cols(); ++j) out << ",e_" << j;
    out << '\n';
    for (Eigen::Index i = 0; i < embeddings.vectors.rows(); ++i) {
        out << embeddings.product_ids[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < embeddings.vectors.cols(); ++j) out << ',' << csv::format(embeddings.vectors(i, j));
        out << '\n';
    }
}

ProductEmbeddings read_embeddings_csv(std::istream& in) {
    std::string line;
    if (!csv::next_record(in, line)) throw StructureError("embedding CSV is empty");
    const auto header = csv::split(line);
    if (header.size() < 2 || header[0] != "product_id") {
        throw StructureError("embedding CSV header must be product_id,e_0,...");
    }
    const std::size_t d = header.size() - 1;
    std::vector<std::string> ids;
    std::vector<double> values;
    std::map<std::string, std::size_t> seen;
    std::size_t line_no = 1;
    while (csv::next_record(in, line)) {
        ++line_no;
        const auto f = csv::split(line);
        const std::string ctx = "embedding CSV line " + std::to_string(line_no);
        if (f.size() != header.size()) throw StructureError(ctx + ": expected " + std::to_string(header.size()) + " fields");
        if (!seen.emplace(f[0], line_no).second) throw StructureError(ctx + ": duplicate product " + f[0]);
        ids.push_back(f[0]);
        for (std::size_t j = 1; j < f.size(); ++j) {
            const double v = csv::parse_double(f[j], ctx);
            if (!std::isfinite(v)) throw DomainError(ctx + ": non-finite embedding value");
            values.push_back(v);
        }
    }
    if (ids.empty()) throw StructureError("embedding CSV has no rows");
    ProductEmbeddings out;
    out.product_ids = std::move(ids);
    out.vectors.resize(static_cast<Eigen::Index>(out.product_ids.size()), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < out.vectors.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.vectors.cols(); ++j) {
            out.vectors(i, j) = values[static_cast<std::size_t>(i) * d + static_cast<std::size_t>(j)];
        }
    }
    return out;
}

}  // namespace demand
