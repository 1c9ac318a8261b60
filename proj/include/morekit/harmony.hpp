#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "morekit/types.hpp"

namespace morekit::harmony {

struct HarmonyConfig {
    int clusters = 20;       // K
    double sigma = 0.1;      // soft-assignment temperature
    double lambda_div = 1.0; // diversity penalty weight
    int rounds = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

/// State of the soft k-means with batch-diversity penalty. `z` is mutated
/// in place by correction rounds.
struct HarmonyState {
    Eigen::MatrixXd z;         // cells x p
    std::vector<int> batches;
    int n_batches = 0;
    Eigen::MatrixXd r;         // cells x K soft assignments, rows sum to 1
    Eigen::MatrixXd centroids; // K x p
    double sigma = 0.1;
    double lambda_div = 1.0;
    int round = 0;
};

/// k-means++ centroid seeding plus a first penalty-free soft assignment.
HarmonyState harmony_init(const Eigen::MatrixXd& embeddings, const std::vector<int>& batches,
                          const HarmonyConfig& cfg);

/// Update centroids from the current R, then reassign:
/// R_ik proportional to exp(-||z_i - c_k||^2 / sigma) * (E_kb / O_kb)^lambda
/// with b the cell's batch, computed in log space and row-normalized.
/// O/E come from the previous R (penalty-free when R is empty).
void soft_assign(HarmonyState& state);

struct HarmonyObjective {
    double clustering = 0.0;  // sum R d^2 + sigma * sum R log R
    double diversity = 0.0;   // sum O log(O/E), nonnegative
    double total = 0.0;
};

HarmonyObjective objective(const HarmonyState& state);

/// z_i <- z_i - sum_k R_ik (mu_{k,batch(i)} - mu_k). Batches with no soft
/// mass in a cluster contribute no shift there.
void correct(HarmonyState& state);

/// Alternate soft_assign and correct for cfg.rounds rounds.
Embeddings run_harmony(const Eigen::MatrixXd& embeddings, const std::vector<int>& batches,
                       const HarmonyConfig& cfg);

}  // namespace morekit::harmony
