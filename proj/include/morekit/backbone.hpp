#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace morekit::backbone {

/// Architecture of one frozen per-modality encoder. Tokens are the model's
/// gene set: token t = gene_embedding[t] + value_t * value_projection, where
/// value_t is that gene's normalized expression. The output dimension d
/// equals d_model.
struct BackboneSpec {
    int modality = 0;
    int n_tokens = 128;  // genes used (top HVGs)
    int d_model = 64;
    int layers = 10;
    int heads = 4;
    std::uint64_t seed = 0;

    int d_ff() const { return 4 * d_model; }
    void validate() const;
};

struct LayerWeights {
    Eigen::VectorXd ln1_scale, ln1_offset;
    Eigen::MatrixXd wq, wk, wv, wo;  // d_model x d_model, applied as Y * W
    Eigen::VectorXd bq, bk, bv, bo;
    Eigen::VectorXd ln2_scale, ln2_offset;
    Eigen::MatrixXd ff1;  // d_model x d_ff
    Eigen::VectorXd ff1_b;
    Eigen::MatrixXd ff2;  // d_ff x d_model
    Eigen::VectorXd ff2_b;
};

struct BackboneWeights {
    BackboneSpec spec;
    Eigen::MatrixXd gene_embedding;    // n_tokens x d_model
    Eigen::VectorXd value_projection;  // d_model
    std::vector<LayerWeights> layers;
    std::uint64_t content_hash = 0;   // recorded at creation; frozen contract
};

/// Deterministic seeded initialization: matrices N(0, 1/fan_in), biases
/// zero, layer norms at identity; the embedding table and value projection
/// use unit variance. The content hash is recorded before returning.
BackboneWeights init_frozen_backbone(const BackboneSpec& spec);

/// FNV-1a over all tensor bytes in a fixed traversal order.
std::uint64_t backbone_hash(const BackboneWeights& w);

/// Encode one cell's expression vector (length n_tokens) through the frozen
/// pre-norm transformer stack; output is the mean over tokens, length
/// d_model. Throws numerical_error on non-finite input.
Eigen::VectorXd encode(const BackboneWeights& w, const Eigen::VectorXd& x);

/// Row-wise encode; equals per-row encode exactly (cells are independent).
Eigen::MatrixXd encode_rows(const BackboneWeights& w, const Eigen::MatrixXd& x, int threads = 1);

std::size_t parameter_count(const BackboneSpec& spec);

}  // namespace morekit::backbone
