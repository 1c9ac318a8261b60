#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace morekit::model {

/// y = w2 * tanh(w1 * x + b1) + b2, the shape shared by adapters and the
/// refinement network.
struct TwoLayerMap {
    Eigen::MatrixXd w1;  // d x d
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // d x d
    Eigen::VectorXd b2;
};

/// The trainable head. The frozen backbone is excluded by construction:
/// its weights live in backbone::BackboneWeights and never appear here.
struct MoreParams {
    int d = 0;
    int n_modalities = 0;
    int n_batches = 0;
    int n_classes = 0;
    int n_genes_out = 0;  // decoder targets (the model's token set)
    int refine_depth = 2;

    std::vector<TwoLayerMap> adapters;            // one per modality
    std::vector<Eigen::VectorXd> fusion_weights;  // omega_m, length d each
    Eigen::MatrixXd batch_embeddings;             // n_batches x d (rows)
    TwoLayerMap refiner;
    Eigen::MatrixXd classifier_w;  // n_classes x d
    Eigen::VectorXd classifier_b;
    Eigen::MatrixXd decoder_w;  // n_genes_out x d
    Eigen::VectorXd decoder_b;
};

/// Seeded initialization. Fusion weights start at all-ones and batch
/// embeddings at zero; the refiner's second layer starts at zero so
/// refinement begins as the identity map.
MoreParams init_more_params(int n_modalities, int d, int n_batches, int n_classes,
                            int n_genes_out, int refine_depth, std::uint64_t seed);

/// A gradient (or optimizer-moment) store shares the parameter layout.
MoreParams zeros_like(const MoreParams& p);

/// Named views over every trainable tensor, in a fixed order. The names
/// double as parameter-file section names.
struct TensorRef {
    std::string name;
    double* data;
    std::size_t size;
};
std::vector<TensorRef> tensor_refs(MoreParams& p);

std::size_t trainable_parameter_count(const MoreParams& p);

Eigen::VectorXd adapt(const MoreParams& p, int modality, const Eigen::VectorXd& z_raw);

/// z_f = sum_m omega_m (elementwise) z_m over the present modalities.
Eigen::VectorXd fuse(const MoreParams& p, const std::vector<Eigen::VectorXd>& z_m);

/// Everything the backward pass needs from one cell's forward pass.
struct ForwardTrace {
    std::vector<Eigen::VectorXd> adapter_hidden;  // tanh activations
    std::vector<Eigen::VectorXd> z_m;             // post-adapter, per modality
    Eigen::VectorXd z_f;
    std::vector<Eigen::VectorXd> z_tilde;        // refinement iterates, z_tilde[0] == z_f
    std::vector<Eigen::VectorXd> refine_hidden;  // tanh activations per step
    Eigen::VectorXd logits;
    Eigen::VectorXd masked_pred;  // aligned to the mask set
};

/// T residual steps of z <- z + Refine(z - b_batch); the same batch
/// embedding is reused at every step. T = 0 returns z_f unchanged.
Eigen::VectorXd refine(const MoreParams& p, const Eigen::VectorXd& z_f, int batch_index,
                       ForwardTrace* trace = nullptr);

Eigen::VectorXd classify(const MoreParams& p, const Eigen::VectorXd& z_tilde);

/// Linear reconstruction of the masked gene positions from z_tilde;
/// an empty mask set yields an empty prediction.
Eigen::VectorXd decode_masked(const MoreParams& p, const Eigen::VectorXd& z_tilde,
                              const std::vector<int>& mask_set);

/// Full head forward for one cell given its per-modality backbone outputs.
ForwardTrace forward(const MoreParams& p, const std::vector<Eigen::VectorXd>& z_raw,
                     int batch_index, const std::vector<int>& mask_set);

// Build-time check of the PEFT claim at default dimensions (d_model 64,
// 10 layers, 128 tokens, one modality, two batches, three classes):
// trainable / (backbone + trainable) < 5%.
namespace detail {
constexpr std::size_t kDefaultD = 64;
constexpr std::size_t kDefaultTokens = 128;
constexpr std::size_t kDefaultLayers = 10;
constexpr std::size_t kDefaultFf = 4 * kDefaultD;

constexpr std::size_t default_backbone_params() {
    constexpr std::size_t per_layer = 4 * (kDefaultD * kDefaultD + kDefaultD) + 4 * kDefaultD +
                                      (kDefaultD * kDefaultFf + kDefaultFf) +
                                      (kDefaultFf * kDefaultD + kDefaultD);
    return kDefaultTokens * kDefaultD + kDefaultD + kDefaultLayers * per_layer;
}

constexpr std::size_t default_trainable_params(std::size_t m = 1, std::size_t b = 2, std::size_t c = 3) {
    constexpr std::size_t two_layer = 2 * (kDefaultD * kDefaultD + kDefaultD);
    return m * (two_layer + kDefaultD)            // adapters + fusion weights
           + b * kDefaultD                        // batch embeddings
           + two_layer                            // refiner
           + (c * kDefaultD + c)                  // classifier
           + (kDefaultTokens * kDefaultD + kDefaultTokens);  // decoder
}

static_assert(20 * default_trainable_params() <
                  default_backbone_params() + default_trainable_params(),
              "trainable parameter share must stay below 5% at default dims");
}  // namespace detail

}  // namespace morekit::model
