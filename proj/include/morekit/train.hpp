#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "morekit/model.hpp"

namespace morekit::train {

struct LossWeights {
    double lambda_ce = 1.0;
    double lambda_supcon = 0.5;
    double lambda_align = 0.5;
    double lambda_var = 0.1;  // intra-class variance term
    double lambda_mse = 0.5;  // masked reconstruction term
    double tau = 0.1;         // supcon temperature
    double mask_rate = 0.15;

    void validate() const;
};

struct TrainConfig {
    int epochs = 30;
    int minibatch = 128;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// -log softmax(logits)[label], stabilized by max subtraction.
double loss_ce(const Eigen::VectorXd& logits, int label);

/// Supervised contrastive loss over a batch; embeddings are L2-normalized
/// internally. Anchors without a same-label partner are skipped; throws if
/// no anchor has one.
double loss_supcon(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, double tau);

/// Mean over modalities and cells of ||z_m - z_f||^2 / d.
double loss_align(const std::vector<Eigen::MatrixXd>& z_m, const Eigen::MatrixXd& z_f);

/// Mean over present classes of the mean squared distance to the class
/// centroid; singleton classes contribute 0.
double loss_intra(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels);

/// (1/|M|) sum over the mask of squared prediction error; 0 on an empty mask.
double loss_masked_mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets_full,
                       const std::vector<int>& mask_set);

struct LossTerms {
    double ce = 0.0;
    double supcon = 0.0;
    double align = 0.0;
    double intra = 0.0;
    double mse = 0.0;
};

double total_loss(const LossTerms& terms, const LossWeights& weights);

/// One modality-major slice of the training set.
struct TrainData {
    std::vector<Eigen::MatrixXd> z_raw;  // per modality, n x d backbone outputs
    Eigen::MatrixXd targets;             // n x G reconstruction targets
    std::vector<int> labels;             // empty when unlabeled
    std::vector<int> batches;

    std::size_t size() const { return batches.size(); }
};

struct BatchTrace {
    std::vector<model::ForwardTrace> cells;
};

BatchTrace batch_forward(const model::MoreParams& params, const TrainData& data,
                         const std::vector<std::size_t>& idx, const std::vector<int>& mask_set);

/// Loss terms for one minibatch. Terms whose weight is zero are skipped;
/// the supcon term is 0 when the minibatch has no positive pair.
LossTerms batch_loss(const BatchTrace& trace, const TrainData& data,
                     const std::vector<std::size_t>& idx, const std::vector<int>& mask_set,
                     const LossWeights& weights);

/// Analytic gradients for every trainable tensor, in a store matching the
/// MoreParams layout. The backbone receives no gradient by construction.
/// Throws numerical_error naming the tensor on a non-finite gradient.
model::MoreParams backward(const model::MoreParams& params, const BatchTrace& trace,
                           const TrainData& data, const std::vector<std::size_t>& idx,
                           const std::vector<int>& mask_set, const LossWeights& weights);

/// Forward + loss only; this is the path finite-difference checks perturb.
double evaluate_loss(const model::MoreParams& params, const TrainData& data,
                     const std::vector<std::size_t>& idx, const std::vector<int>& mask_set,
                     const LossWeights& weights);

struct EpochLoss {
    double ce = 0.0, supcon = 0.0, align = 0.0, intra = 0.0, mse = 0.0, total = 0.0;
};

/// Adam training loop with a seeded shuffle and per-minibatch mask
/// resampling. Deterministic given (params, data, config, weights).
std::vector<EpochLoss> fit(model::MoreParams& params, const TrainData& data,
                           const TrainConfig& config, const LossWeights& weights);

void write_loss_history(const std::vector<EpochLoss>& history, const std::string& path,
                        const std::vector<std::string>& comments = {});

}  // namespace morekit::train
