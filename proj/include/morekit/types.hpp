#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace morekit {

/// Thrown on NaN/Inf aborts and other numerical failures. The CLI maps this
/// to exit code 2; ordinary usage/IO errors map to exit code 1.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sparse cells x genes count matrix in CSR layout. Values may be integer
/// counts or nonnegative reals (e.g. after normalization).
struct ExpressionMatrix {
    std::size_t n_cells = 0;
    std::size_t n_genes = 0;
    std::vector<std::size_t> row_offsets;    // length n_cells + 1, non-decreasing
    std::vector<std::uint32_t> col_indices;  // strictly increasing within each row
    std::vector<double> values;
    std::vector<std::string> gene_names;     // length n_genes, unique
    std::vector<std::string> barcodes;       // length n_cells, unique

    std::size_t nnz() const { return values.size(); }

    /// Throws std::runtime_error if any CSR structural invariant is violated.
    void validate() const;

    double row_total(std::size_t cell) const;
    double grand_total() const;
};

/// Keep a subset of rows, preserving order. `keep` must be strictly increasing.
ExpressionMatrix select_rows(const ExpressionMatrix& x, const std::vector<std::size_t>& keep);

/// Keep a subset of columns, preserving order. `genes` must be strictly increasing.
ExpressionMatrix select_cols(const ExpressionMatrix& x, const std::vector<std::uint32_t>& genes);

/// Densify. If `genes` is non-empty only those columns are materialized,
/// in the given (strictly increasing) order.
Eigen::MatrixXd to_dense(const ExpressionMatrix& x, const std::vector<std::uint32_t>& genes = {});

/// Per-cell metadata aligned to ExpressionMatrix row order. `labels` is empty
/// when the metadata had no label column.
struct CellTable {
    std::vector<std::string> barcodes;
    std::vector<int> batches;             // dense in [0, n_batches)
    std::vector<int> labels;              // dense in [0, n_labels); empty if absent
    std::vector<std::string> batch_names; // index -> original string
    std::vector<std::string> label_names;

    std::vector<std::int64_t> n_genes_by_counts;
    std::vector<double> total_counts;
    std::vector<double> pct_counts_mt;
    std::vector<double> pct_counts_ribo;
    std::vector<double> doublet_score;
    std::vector<char> is_doublet;

    std::size_t size() const { return barcodes.size(); }
    bool has_labels() const { return !labels.empty(); }
    int n_batches() const { return static_cast<int>(batch_names.size()); }
    int n_labels() const { return static_cast<int>(label_names.size()); }

    /// Allocates the QC/doublet columns (zero-filled) for `n` cells.
    void resize_metrics(std::size_t n);

    CellTable select(const std::vector<std::size_t>& keep) const;
};

/// Dense cells x d embedding matrix with a provenance tag
/// ("pca" | "backbone:m" | "fused" | "refined" | "corrected").
struct Embeddings {
    Eigen::MatrixXd values;  // rows = cells
    std::string provenance;
};

}  // namespace morekit
