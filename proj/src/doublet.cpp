#include "morekit/doublet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "morekit/knn.hpp"
#include "morekit/prep.hpp"
#include "morekit/rng.hpp"

namespace morekit::doublet {

int DoubletConfig::k_adj() const {
    return static_cast<int>(std::lround(static_cast<double>(k) * (1.0 + ratio)));
}

void DoubletConfig::validate() const {
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("doublet: rho must be in (0,1)");
    if (!(ratio > 0.0)) throw std::invalid_argument("doublet: ratio must be > 0");
    if (k < 1) throw std::invalid_argument("doublet: k must be >= 1");
    if (k_adj() < 1) throw std::invalid_argument("doublet: k_adj must be >= 1");
    if (pca_dims < 1) throw std::invalid_argument("doublet: pca_dims must be >= 1");
}

double neighbour_fraction(int n_sim_neigh, int k_adj) {
    return (static_cast<double>(n_sim_neigh) + 1.0) / (static_cast<double>(k_adj) + 2.0);
}

double doublet_likelihood(double q, double rho, double r) {
    const double denom = 1.0 - rho - q * (1.0 - rho - rho / r);
    if (denom <= 0.0) {
        throw numerical_error("doublet likelihood: degenerate denominator for rho=" +
                              std::to_string(rho) + " r=" + std::to_string(r) + " q=" + std::to_string(q));
    }
    return (q * rho / r) / denom;
}

double doublet_likelihood_dq(double q, double rho, double r) {
    const double denom = 1.0 - rho - q * (1.0 - rho - rho / r);
    return (rho / r) * (1.0 - rho) / (denom * denom);
}

ExpressionMatrix simulate_doublets(const ExpressionMatrix& counts, const DoubletConfig& cfg,
                                   double target_sum) {
    cfg.validate();
    if (counts.n_cells < 2) throw std::invalid_argument("simulate_doublets: need at least 2 cells");
    const std::size_t n_sim =
        static_cast<std::size_t>(std::lround(cfg.ratio * static_cast<double>(counts.n_cells)));

    Rng rng(cfg.seed);
    ExpressionMatrix sim;
    sim.n_cells = n_sim;
    sim.n_genes = counts.n_genes;
    sim.gene_names = counts.gene_names;
    sim.row_offsets.push_back(0);
    std::vector<double> dense(counts.n_genes, 0.0);
    for (std::size_t s = 0; s < n_sim; ++s) {
        const std::size_t a = rng.uniform_index(counts.n_cells);
        std::size_t b = rng.uniform_index(counts.n_cells - 1);
        if (b >= a) ++b;  // two distinct parents
        double total = 0.0;
        for (std::size_t p = counts.row_offsets[a]; p < counts.row_offsets[a + 1]; ++p) {
            dense[counts.col_indices[p]] += counts.values[p];
            total += counts.values[p];
        }
        for (std::size_t p = counts.row_offsets[b]; p < counts.row_offsets[b + 1]; ++p) {
            dense[counts.col_indices[p]] += counts.values[p];
            total += counts.values[p];
        }
        const double scale = total > 0.0 ? target_sum / total : 0.0;
        for (std::size_t g = 0; g < counts.n_genes; ++g) {
            if (dense[g] != 0.0) {
                sim.col_indices.push_back(static_cast<std::uint32_t>(g));
                sim.values.push_back(std::log1p(dense[g] * scale));
                dense[g] = 0.0;
            }
        }
        sim.row_offsets.push_back(sim.values.size());
        sim.barcodes.push_back("SIM" + std::to_string(s));
    }
    return sim;
}

DoubletScores doublet_scores(const Eigen::MatrixXd& observed_emb,
                             const Eigen::MatrixXd& simulated_emb,
                             const DoubletConfig& cfg, int threads) {
    cfg.validate();
    if (observed_emb.cols() != simulated_emb.cols()) {
        throw std::invalid_argument("doublet_scores: embedding dimension mismatch");
    }
    const Eigen::Index n_obs = observed_emb.rows();
    const Eigen::Index n_sim = simulated_emb.rows();
    Eigen::MatrixXd joint(n_obs + n_sim, observed_emb.cols());
    joint.topRows(n_obs) = observed_emb;
    joint.bottomRows(n_sim) = simulated_emb;

    const int k_adj = std::min<int>(cfg.k_adj(), static_cast<int>(n_obs + n_sim) - 1);
    const auto neighbours = knn_within(joint, k_adj, threads);

    DoubletScores scores;
    scores.q.resize(static_cast<std::size_t>(n_obs));
    scores.likelihood.resize(static_cast<std::size_t>(n_obs));
    scores.simulated_likelihood.resize(static_cast<std::size_t>(n_sim));
    for (Eigen::Index i = 0; i < n_obs + n_sim; ++i) {
        int sim_neigh = 0;
        for (int j : neighbours[static_cast<std::size_t>(i)]) {
            if (j >= n_obs) ++sim_neigh;
        }
        const double q = neighbour_fraction(sim_neigh, k_adj);
        const double l = doublet_likelihood(q, cfg.rho, cfg.ratio);
        if (i < n_obs) {
            scores.q[static_cast<std::size_t>(i)] = q;
            scores.likelihood[static_cast<std::size_t>(i)] = l;
        } else {
            scores.simulated_likelihood[static_cast<std::size_t>(i - n_obs)] = l;
        }
    }
    scores.z.assign(scores.q.size(), 0.0);
    scores.is_doublet.assign(scores.q.size(), 0);
    scores.k_adj_used = k_adj;
    scores.rho_used = cfg.rho;
    scores.ratio_used = cfg.ratio;
    return scores;
}

void call_doublets(DoubletScores& scores, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw std::invalid_argument("call_doublets: threshold must be in (0,1)");
    }
    scores.threshold = threshold;
    scores.z.resize(scores.q.size());
    scores.is_doublet.resize(scores.q.size());
    for (std::size_t i = 0; i < scores.q.size(); ++i) {
        const double q = scores.q[i];
        const double l = scores.likelihood[i];
        const double se_q = std::sqrt(std::max(q * (1.0 - q), 0.0) /
                                      (static_cast<double>(scores.k_adj_used) + 2.0));
        const double se = doublet_likelihood_dq(q, scores.rho_used, scores.ratio_used) * se_q;
        if (se > 0.0) {
            scores.z[i] = (l - threshold) / se;
        } else if (l == threshold) {
            scores.z[i] = 0.0;
        } else {
            scores.z[i] = l > threshold ? std::numeric_limits<double>::infinity()
                                        : -std::numeric_limits<double>::infinity();
        }
        scores.is_doublet[i] = l > threshold ? 1 : 0;
    }
}

double auto_threshold(const std::vector<double>& simulated_likelihood) {
    if (simulated_likelihood.size() < 20) {
        throw std::invalid_argument("auto_threshold: need at least 20 simulated scores");
    }
    constexpr int kBins = 50;
    std::vector<double> hist(kBins, 0.0);
    for (double v : simulated_likelihood) {
        int b = static_cast<int>(std::floor(v * kBins));
        b = std::clamp(b, 0, kBins - 1);
        hist[static_cast<std::size_t>(b)] += 1.0;
    }
    // light smoothing so sampling noise does not fabricate modes
    std::vector<double> smooth(kBins, 0.0);
    for (int b = 0; b < kBins; ++b) {
        double sum = 0.0;
        int count = 0;
        for (int w = -2; w <= 2; ++w) {
            const int j = b + w;
            if (j >= 0 && j < kBins) {
                sum += hist[static_cast<std::size_t>(j)];
                ++count;
            }
        }
        smooth[static_cast<std::size_t>(b)] = sum / count;
    }
    // local maxima; a plateau of equal heights counts as one mode
    std::vector<int> modes;
    for (int b = 0; b < kBins; ++b) {
        const double h = smooth[static_cast<std::size_t>(b)];
        if (h <= 0.0) continue;
        int left = b - 1;
        while (left >= 0 && smooth[static_cast<std::size_t>(left)] == h) --left;
        int right = b + 1;
        while (right < kBins && smooth[static_cast<std::size_t>(right)] == h) ++right;
        const bool rises_left = left < 0 || smooth[static_cast<std::size_t>(left)] < h;
        const bool falls_right = right >= kBins || smooth[static_cast<std::size_t>(right)] < h;
        if (rises_left && falls_right) {
            modes.push_back(b);
            b = right - 1;  // skip the plateau
        }
    }
    if (modes.size() < 2) return 0.25;  // unimodal fallback
    std::sort(modes.begin(), modes.end(), [&smooth](int a, int b) {
        return smooth[static_cast<std::size_t>(a)] != smooth[static_cast<std::size_t>(b)]
                   ? smooth[static_cast<std::size_t>(a)] > smooth[static_cast<std::size_t>(b)]
                   : a < b;
    });
    int lo = modes[0], hi = modes[1];
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo < 2) return 0.25;
    // minimum-density bin between the two modes; ties resolve to the middle
    // of the tied stretch so wide flat valleys split centrally
    double min_h = std::numeric_limits<double>::infinity();
    for (int b = lo + 1; b < hi; ++b) min_h = std::min(min_h, smooth[static_cast<std::size_t>(b)]);
    std::vector<int> minimal;
    for (int b = lo + 1; b < hi; ++b) {
        if (smooth[static_cast<std::size_t>(b)] == min_h) minimal.push_back(b);
    }
    const int valley = minimal[minimal.size() / 2];
    return (static_cast<double>(valley) + 0.5) / kBins;
}

DoubletScores score_doublets(const ExpressionMatrix& counts,
                             const std::vector<std::uint32_t>& genes,
                             const DoubletConfig& cfg,
                             double target_sum,
                             double threshold,
                             int threads) {
    cfg.validate();
    const ExpressionMatrix sub = genes.empty() ? counts : select_cols(counts, genes);
    const ExpressionMatrix observed_norm = prep::normalize_log1p(sub, target_sum);
    const ExpressionMatrix sim = simulate_doublets(sub, cfg, target_sum);

    Eigen::MatrixXd obs_dense = to_dense(observed_norm);
    Eigen::MatrixXd sim_dense = to_dense(sim);
    Eigen::MatrixXd stacked(obs_dense.rows() + sim_dense.rows(), obs_dense.cols());
    stacked.topRows(obs_dense.rows()) = obs_dense;
    stacked.bottomRows(sim_dense.rows()) = sim_dense;

    const int dims = std::min<int>(cfg.pca_dims, static_cast<int>(std::min(stacked.rows(), stacked.cols())));
    auto [model, emb] = prep::pca(stacked, dims, cfg.seed);
    const Eigen::MatrixXd obs_emb = emb.values.topRows(obs_dense.rows());
    const Eigen::MatrixXd sim_emb = emb.values.bottomRows(sim_dense.rows());

    DoubletScores scores = doublet_scores(obs_emb, sim_emb, cfg, threads);
    const double thr = threshold > 0.0 ? threshold : auto_threshold(scores.simulated_likelihood);
    call_doublets(scores, thr);
    return scores;
}

}  // namespace morekit::doublet
