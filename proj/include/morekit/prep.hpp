#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "morekit/types.hpp"

namespace morekit::prep {

/// Fill n_genes_by_counts, total_counts, pct_counts_mt and pct_counts_ribo.
/// Mitochondrial genes match the case-sensitive name prefix "MT-", ribosomal
/// genes "RPS" or "RPL". Cells with zero total get 0 percentages.
void compute_qc(const ExpressionMatrix& x, CellTable& cells);

/// Keep cells with n_genes_by_counts >= min_genes and pct_counts_mt <=
/// max_pct_mt, preserving row order. Throws if nothing survives.
std::pair<ExpressionMatrix, CellTable> filter_cells(const ExpressionMatrix& x,
                                                    const CellTable& cells,
                                                    std::int64_t min_genes,
                                                    double max_pct_mt);

/// Scale every cell to `target_sum` total counts, then log(1 + v).
/// Zero-total cells stay all-zero. Sparsity structure is preserved.
ExpressionMatrix normalize_log1p(const ExpressionMatrix& x, double target_sum = 1.0e4);

struct HvgReport {
    std::vector<double> mean;        // per gene, of normalized expression
    std::vector<double> dispersion;  // variance / mean (0 when mean == 0)
    std::vector<int> bin;            // equal-occupancy bin by mean
    std::vector<double> z;           // dispersion z-scored within bin
    std::vector<char> selected;

    std::vector<std::uint32_t> selected_genes() const;  // ascending gene index

    /// The n strongest selected genes by z-score (ties toward the lower gene
    /// index), returned in ascending gene-index order. Used to pick the
    /// model's token set out of the HVG pool.
    std::vector<std::uint32_t> top_genes(std::size_t n) const;
};

/// Mean-binned normalized dispersion (Seurat flavour): genes are binned by
/// mean into n_bins equal-occupancy bins and dispersions z-scored within
/// each bin; the n_top genes with the largest z win (ties toward the lower
/// gene index). Bins with zero dispersion spread give z = 0.
HvgReport select_hvg(const ExpressionMatrix& xnorm, std::size_t n_top = 2000, int n_bins = 20);

struct PcaModel {
    Eigen::MatrixXd components;                // genes_used x k, unit columns
    Eigen::VectorXd explained_variance_ratio;  // non-increasing, in [0,1]
    Eigen::VectorXd means;                     // feature means used for centering
};

/// Exact PCA via eigendecomposition of the feature covariance. Sign
/// convention: each component's largest-magnitude entry is positive. The
/// seed is accepted for interface stability but unused (the solver is
/// deterministic). Throws when k > min(n_cells, n_features).
std::pair<PcaModel, Embeddings> pca(const Eigen::MatrixXd& dense_rows, int k, std::uint64_t seed = 0);

Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& dense_rows);
Eigen::MatrixXd pca_reconstruct(const PcaModel& model, const Eigen::MatrixXd& scores);

/// Genes ranked by share of grand-total counts, descending (ties toward the
/// lower gene index). Returns at most n entries of (gene name, percent).
std::vector<std::pair<std::string, double>> top_expressed(const ExpressionMatrix& x, std::size_t n);

void write_hvg_report(const HvgReport& report, const std::vector<std::string>& gene_names,
                      const std::string& path, const std::vector<std::string>& comments = {});

}  // namespace morekit::prep
