#pragma once

#include <cstdint>
#include <vector>

#include "morekit/types.hpp"

namespace morekit::doublet {

struct DoubletConfig {
    double rho = 0.06;   // expected doublet rate, in (0,1)
    double ratio = 2.0;  // simulated-to-observed ratio r, > 0
    int k = 20;          // base neighbour count, >= 1
    int pca_dims = 30;
    std::uint64_t seed = 0;

    /// k scaled by the enlarged (observed + simulated) population.
    int k_adj() const;
    void validate() const;
};

/// q = (n_sim_neigh + 1) / (k_adj + 2), the Laplace-smoothed simulated
/// fraction of a cell's neighbourhood.
double neighbour_fraction(int n_sim_neigh, int k_adj);

/// L_d = (q rho / r) / (1 - rho - q (1 - rho - rho / r)); maps q=0 -> 0 and
/// q=1 -> 1 and is strictly increasing on [0,1] for valid (rho, r).
double doublet_likelihood(double q, double rho, double r);

/// Analytic dL_d/dq, used for the delta-method standard error.
double doublet_likelihood_dq(double q, double rho, double r);

/// Synthetic doublets: round(ratio * n_cells) rows, each the sum of two
/// distinct uniformly sampled observed cells' counts, renormalized to
/// target_sum and log1p-transformed. Input must be raw counts.
ExpressionMatrix simulate_doublets(const ExpressionMatrix& counts, const DoubletConfig& cfg,
                                   double target_sum = 1.0e4);

struct DoubletScores {
    std::vector<double> q;            // per observed cell
    std::vector<double> likelihood;   // L_d per observed cell
    std::vector<double> z;            // filled by call_doublets
    std::vector<char> is_doublet;     // filled by call_doublets
    double threshold = 0.0;
    std::vector<double> simulated_likelihood;  // L_d of the synthetic cells

    // scoring context, needed for the z standard error
    int k_adj_used = 0;
    double rho_used = 0.0;
    double ratio_used = 0.0;
};

/// Joint kNN over observed + simulated embeddings (self excluded) with
/// k_adj neighbours, then q and L_d per cell.
DoubletScores doublet_scores(const Eigen::MatrixXd& observed_emb,
                             const Eigen::MatrixXd& simulated_emb,
                             const DoubletConfig& cfg, int threads = 1);

/// Z = (L_d - threshold) / SE(L_d) with SE from the binomial variance of q
/// through the analytic derivative; SE == 0 with L_d != threshold yields a
/// +/-infinity sentinel. Flags cells with L_d > threshold.
void call_doublets(DoubletScores& scores, double threshold);

/// Valley-seeking threshold on the simulated L_d histogram (50 bins on
/// [0,1]): the midpoint of the minimum-density bin between the two
/// highest-density modes, or 0.25 when the histogram is unimodal.
/// Requires at least 20 scores.
double auto_threshold(const std::vector<double>& simulated_likelihood);

/// Full pipeline on raw counts restricted to `genes`: normalize, simulate,
/// joint PCA, score, threshold (auto when threshold <= 0), call.
DoubletScores score_doublets(const ExpressionMatrix& counts,
                             const std::vector<std::uint32_t>& genes,
                             const DoubletConfig& cfg,
                             double target_sum = 1.0e4,
                             double threshold = 0.0,
                             int threads = 1);

}  // namespace morekit::doublet
