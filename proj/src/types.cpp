#include "morekit/types.hpp"

#include <algorithm>
#include <unordered_set>

namespace morekit {

void ExpressionMatrix::validate() const {
    if (row_offsets.size() != n_cells + 1) {
        throw std::runtime_error("expression matrix: row offset table has wrong length");
    }
    if (row_offsets.front() != 0 || row_offsets.back() != values.size()) {
        throw std::runtime_error("expression matrix: row offsets do not span the stored entries");
    }
    if (col_indices.size() != values.size()) {
        throw std::runtime_error("expression matrix: column index / value length mismatch");
    }
    for (std::size_t i = 0; i < n_cells; ++i) {
        if (row_offsets[i] > row_offsets[i + 1]) {
            throw std::runtime_error("expression matrix: decreasing row offsets");
        }
        for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p) {
            if (col_indices[p] >= n_genes) {
                throw std::runtime_error("expression matrix: column index out of range");
            }
            if (p > row_offsets[i] && col_indices[p] <= col_indices[p - 1]) {
                throw std::runtime_error("expression matrix: column indices not strictly increasing");
            }
        }
    }
    if (gene_names.size() != n_genes || barcodes.size() != n_cells) {
        throw std::runtime_error("expression matrix: name list length mismatch");
    }
    std::unordered_set<std::string> seen;
    for (const auto& g : gene_names) {
        if (!seen.insert(g).second) throw std::runtime_error("duplicate gene name: " + g);
    }
    seen.clear();
    for (const auto& b : barcodes) {
        if (!seen.insert(b).second) throw std::runtime_error("duplicate barcode: " + b);
    }
}

double ExpressionMatrix::row_total(std::size_t cell) const {
    double s = 0.0;
    for (std::size_t p = row_offsets[cell]; p < row_offsets[cell + 1]; ++p) s += values[p];
    return s;
}

double ExpressionMatrix::grand_total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

ExpressionMatrix select_rows(const ExpressionMatrix& x, const std::vector<std::size_t>& keep) {
    ExpressionMatrix out;
    out.n_cells = keep.size();
    out.n_genes = x.n_genes;
    out.gene_names = x.gene_names;
    out.row_offsets.reserve(keep.size() + 1);
    out.row_offsets.push_back(0);
    out.barcodes.reserve(keep.size());
    for (std::size_t i : keep) {
        out.barcodes.push_back(x.barcodes[i]);
        for (std::size_t p = x.row_offsets[i]; p < x.row_offsets[i + 1]; ++p) {
            out.col_indices.push_back(x.col_indices[p]);
            out.values.push_back(x.values[p]);
        }
        out.row_offsets.push_back(out.values.size());
    }
    return out;
}

ExpressionMatrix select_cols(const ExpressionMatrix& x, const std::vector<std::uint32_t>& genes) {
    std::vector<std::int64_t> remap(x.n_genes, -1);
    for (std::size_t j = 0; j < genes.size(); ++j) remap[genes[j]] = static_cast<std::int64_t>(j);
    ExpressionMatrix out;
    out.n_cells = x.n_cells;
    out.n_genes = genes.size();
    out.barcodes = x.barcodes;
    out.gene_names.reserve(genes.size());
    for (auto g : genes) out.gene_names.push_back(x.gene_names[g]);
    out.row_offsets.push_back(0);
    for (std::size_t i = 0; i < x.n_cells; ++i) {
        for (std::size_t p = x.row_offsets[i]; p < x.row_offsets[i + 1]; ++p) {
            const std::int64_t j = remap[x.col_indices[p]];
            if (j >= 0) {
                out.col_indices.push_back(static_cast<std::uint32_t>(j));
                out.values.push_back(x.values[p]);
            }
        }
        out.row_offsets.push_back(out.values.size());
    }
    return out;
}

Eigen::MatrixXd to_dense(const ExpressionMatrix& x, const std::vector<std::uint32_t>& genes) {
    if (genes.empty()) {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.n_cells),
                                                  static_cast<Eigen::Index>(x.n_genes));
        for (std::size_t i = 0; i < x.n_cells; ++i) {
            for (std::size_t p = x.row_offsets[i]; p < x.row_offsets[i + 1]; ++p) {
                d(static_cast<Eigen::Index>(i), x.col_indices[p]) = x.values[p];
            }
        }
        return d;
    }
    std::vector<std::int64_t> remap(x.n_genes, -1);
    for (std::size_t j = 0; j < genes.size(); ++j) remap[genes[j]] = static_cast<std::int64_t>(j);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.n_cells),
                                              static_cast<Eigen::Index>(genes.size()));
    for (std::size_t i = 0; i < x.n_cells; ++i) {
        for (std::size_t p = x.row_offsets[i]; p < x.row_offsets[i + 1]; ++p) {
            const std::int64_t j = remap[x.col_indices[p]];
            if (j >= 0) d(static_cast<Eigen::Index>(i), j) = x.values[p];
        }
    }
    return d;
}

void CellTable::resize_metrics(std::size_t n) {
    n_genes_by_counts.assign(n, 0);
    total_counts.assign(n, 0.0);
    pct_counts_mt.assign(n, 0.0);
    pct_counts_ribo.assign(n, 0.0);
    doublet_score.assign(n, 0.0);
    is_doublet.assign(n, 0);
}

CellTable CellTable::select(const std::vector<std::size_t>& keep) const {
    CellTable out;
    out.batch_names = batch_names;
    out.label_names = label_names;
    auto pick = [&keep](const auto& src, auto& dst) {
        if (src.empty()) return;
        dst.reserve(keep.size());
        for (std::size_t i : keep) dst.push_back(src[i]);
    };
    pick(barcodes, out.barcodes);
    pick(batches, out.batches);
    pick(labels, out.labels);
    pick(n_genes_by_counts, out.n_genes_by_counts);
    pick(total_counts, out.total_counts);
    pick(pct_counts_mt, out.pct_counts_mt);
    pick(pct_counts_ribo, out.pct_counts_ribo);
    pick(doublet_score, out.doublet_score);
    pick(is_doublet, out.is_doublet);
    return out;
}

}  // namespace morekit
