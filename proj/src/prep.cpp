#include "morekit/prep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace morekit::prep {

namespace {

bool starts_with(const std::string& s, const char* prefix) {
    return s.rfind(prefix, 0) == 0;
}

}  // namespace

void compute_qc(const ExpressionMatrix& x, CellTable& cells) {
    if (cells.size() != x.n_cells) throw std::invalid_argument("compute_qc: cell table size mismatch");
    std::vector<char> is_mt(x.n_genes, 0), is_ribo(x.n_genes, 0);
    for (std::size_t g = 0; g < x.n_genes; ++g) {
        if (starts_with(x.gene_names[g], "MT-")) is_mt[g] = 1;
        if (starts_with(x.gene_names[g], "RPS") || starts_with(x.gene_names[g], "RPL")) is_ribo[g] = 1;
    }
    cells.resize_metrics(x.n_cells);
    for (std::size_t i = 0; i < x.n_cells; ++i) {
        double total = 0.0, mt = 0.0, ribo = 0.0;
        std::int64_t n_genes = 0;
        for (std::size_t p = x.row_offsets[i]; p < x.row_offsets[i + 1]; ++p) {
            const double v = x.values[p];
            if (v != 0.0) ++n_genes;
            total += v;
            if (is_mt[x.col_indices[p]]) mt += v;
            if (is_ribo[x.col_indices[p]]) ribo += v;
        }
        cells.n_genes_by_counts[i] = n_genes;
        cells.total_counts[i] = total;
        cells.pct_counts_mt[i] = total > 0.0 ? 100.0 * mt / total : 0.0;
        cells.pct_counts_ribo[i] = total > 0.0 ? 100.0 * ribo / total : 0.0;
    }
}

std::pair<ExpressionMatrix, CellTable> filter_cells(const ExpressionMatrix& x,
                                                    const CellTable& cells,
                                                    std::int64_t min_genes,
                                                    double max_pct_mt) {
    if (min_genes < 0 || max_pct_mt < 0.0) throw std::invalid_argument("filter_cells: negative threshold");
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < x.n_cells; ++i) {
        if (cells.n_genes_by_counts[i] >= min_genes && cells.pct_counts_mt[i] <= max_pct_mt) {
            keep.push_back(i);
        }
    }
    if (keep.empty()) {
        throw std::runtime_error("filter_cells: every cell was removed (min_genes=" +
                                 std::to_string(min_genes) + ", max_pct_mt=" + std::to_string(max_pct_mt) + ")");
    }
    return {select_rows(x, keep), cells.select(keep)};
}

ExpressionMatrix normalize_log1p(const ExpressionMatrix& x, double target_sum) {
    if (!(target_sum > 0.0)) throw std::invalid_argument("normalize_log1p: target_sum must be > 0");
    ExpressionMatrix out = x;
    for (std::size_t i = 0; i < x.n_cells; ++i) {
        const double total = x.row_total(i);
        if (total <= 0.0) continue;
        const double scale = target_sum / total;
        for (std::size_t p = x.row_offsets[i]; p < x.row_offsets[i + 1]; ++p) {
            out.values[p] = std::log1p(x.values[p] * scale);
        }
    }
    return out;
}

HvgReport select_hvg(const ExpressionMatrix& xnorm, std::size_t n_top, int n_bins) {
    if (n_top < 1) throw std::invalid_argument("select_hvg: n_top must be >= 1");
    if (n_bins < 1) throw std::invalid_argument("select_hvg: n_bins must be >= 1");
    const std::size_t n = xnorm.n_cells;
    const std::size_t g = xnorm.n_genes;
    if (n < 1) throw std::invalid_argument("select_hvg: empty matrix");

    HvgReport rep;
    rep.mean.assign(g, 0.0);
    rep.dispersion.assign(g, 0.0);
    rep.bin.assign(g, 0);
    rep.z.assign(g, 0.0);
    rep.selected.assign(g, 0);

    // per-gene mean and sample variance over all cells (zeros included)
    std::vector<double> sum(g, 0.0), sumsq(g, 0.0);
    for (std::size_t p = 0; p < xnorm.values.size(); ++p) {
        const double v = xnorm.values[p];
        sum[xnorm.col_indices[p]] += v;
        sumsq[xnorm.col_indices[p]] += v * v;
    }
    const double dn = static_cast<double>(n);
    for (std::size_t j = 0; j < g; ++j) {
        const double mean = sum[j] / dn;
        rep.mean[j] = mean;
        double var = 0.0;
        if (n > 1) {
            var = (sumsq[j] - dn * mean * mean) / (dn - 1.0);
            if (var < 0.0) var = 0.0;
        }
        rep.dispersion[j] = mean > 0.0 ? var / mean : 0.0;
    }

    // equal-occupancy bins by mean, deterministic order
    std::vector<std::uint32_t> order(g);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&rep](std::uint32_t a, std::uint32_t b) {
        return rep.mean[a] != rep.mean[b] ? rep.mean[a] < rep.mean[b] : a < b;
    });
    const std::size_t bins = static_cast<std::size_t>(n_bins);
    for (std::size_t rank = 0; rank < g; ++rank) {
        rep.bin[order[rank]] = static_cast<int>(rank * bins / g);
    }

    std::vector<double> bsum(bins, 0.0), bsumsq(bins, 0.0);
    std::vector<std::size_t> bcount(bins, 0);
    for (std::size_t j = 0; j < g; ++j) {
        const auto b = static_cast<std::size_t>(rep.bin[j]);
        bsum[b] += rep.dispersion[j];
        bsumsq[b] += rep.dispersion[j] * rep.dispersion[j];
        bcount[b] += 1;
    }
    for (std::size_t j = 0; j < g; ++j) {
        const auto b = static_cast<std::size_t>(rep.bin[j]);
        if (bcount[b] < 2) continue;
        const double cb = static_cast<double>(bcount[b]);
        const double bmean = bsum[b] / cb;
        double bvar = (bsumsq[b] - cb * bmean * bmean) / (cb - 1.0);
        if (bvar <= 0.0) continue;
        rep.z[j] = (rep.dispersion[j] - bmean) / std::sqrt(bvar);
    }

    std::vector<std::uint32_t> by_z(g);
    std::iota(by_z.begin(), by_z.end(), 0u);
    std::sort(by_z.begin(), by_z.end(), [&rep](std::uint32_t a, std::uint32_t b) {
        return rep.z[a] != rep.z[b] ? rep.z[a] > rep.z[b] : a < b;
    });
    const std::size_t take = std::min(n_top, g);
    for (std::size_t i = 0; i < take; ++i) rep.selected[by_z[i]] = 1;
    return rep;
}

std::vector<std::uint32_t> HvgReport::selected_genes() const {
    std::vector<std::uint32_t> out;
    for (std::size_t j = 0; j < selected.size(); ++j) {
        if (selected[j]) out.push_back(static_cast<std::uint32_t>(j));
    }
    return out;
}

std::vector<std::uint32_t> HvgReport::top_genes(std::size_t n) const {
    std::vector<std::uint32_t> chosen = selected_genes();
    std::sort(chosen.begin(), chosen.end(), [this](std::uint32_t a, std::uint32_t b) {
        return z[a] != z[b] ? z[a] > z[b] : a < b;
    });
    if (chosen.size() > n) chosen.resize(n);
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

std::pair<PcaModel, Embeddings> pca(const Eigen::MatrixXd& dense_rows, int k, std::uint64_t /*seed*/) {
    const Eigen::Index n = dense_rows.rows();
    const Eigen::Index g = dense_rows.cols();
    if (k < 1 || k > std::min(n, g)) {
        throw std::invalid_argument("pca: k must satisfy 1 <= k <= min(n_cells, n_features)");
    }

    PcaModel model;
    model.means = dense_rows.colwise().mean();
    Eigen::MatrixXd centered = dense_rows.rowwise() - model.means.transpose();
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    const double total_variance = cov.trace();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw numerical_error("pca: eigendecomposition failed");

    model.components.resize(g, k);
    model.explained_variance_ratio.resize(k);
    for (int c = 0; c < k; ++c) {
        const Eigen::Index src = g - 1 - c;  // solver returns ascending eigenvalues
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index argmax = 0;
        v.cwiseAbs().maxCoeff(&argmax);
        if (v(argmax) < 0.0) v = -v;
        model.components.col(c) = v;
        const double ev = std::max(solver.eigenvalues()(src), 0.0);
        model.explained_variance_ratio(c) = total_variance > 0.0 ? ev / total_variance : 0.0;
    }

    Embeddings emb;
    emb.provenance = "pca";
    emb.values = centered * model.components;
    return {std::move(model), std::move(emb)};
}

Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& dense_rows) {
    return (dense_rows.rowwise() - model.means.transpose()) * model.components;
}

Eigen::MatrixXd pca_reconstruct(const PcaModel& model, const Eigen::MatrixXd& scores) {
    return (scores * model.components.transpose()).rowwise() + model.means.transpose();
}

std::vector<std::pair<std::string, double>> top_expressed(const ExpressionMatrix& x, std::size_t n) {
    if (n < 1) throw std::invalid_argument("top_expressed: n must be >= 1");
    std::vector<double> per_gene(x.n_genes, 0.0);
    for (std::size_t p = 0; p < x.values.size(); ++p) per_gene[x.col_indices[p]] += x.values[p];
    const double total = std::accumulate(per_gene.begin(), per_gene.end(), 0.0);
    std::vector<std::uint32_t> order(x.n_genes);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&per_gene](std::uint32_t a, std::uint32_t b) {
        return per_gene[a] != per_gene[b] ? per_gene[a] > per_gene[b] : a < b;
    });
    std::vector<std::pair<std::string, double>> out;
    const std::size_t take = std::min(n, x.n_genes);
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto gidx = order[i];
        out.emplace_back(x.gene_names[gidx], total > 0.0 ? 100.0 * per_gene[gidx] / total : 0.0);
    }
    return out;
}

void write_hvg_report(const HvgReport& report, const std::vector<std::string>& gene_names,
                      const std::string& path, const std::vector<std::string>& comments) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "gene\tmean\tdispersion\tbin\tz\tselected\n";
    char tmp[160];
    for (std::size_t j = 0; j < gene_names.size(); ++j) {
        std::snprintf(tmp, sizeof(tmp), "%s\t%.9g\t%.9g\t%d\t%.9g\t%d\n", gene_names[j].c_str(),
                      report.mean[j], report.dispersion[j], report.bin[j], report.z[j],
                      report.selected[j] ? 1 : 0);
        out << tmp;
    }
}

}  // namespace morekit::prep
