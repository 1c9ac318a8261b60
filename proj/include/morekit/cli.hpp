#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "morekit/doublet.hpp"
#include "morekit/train.hpp"

namespace morekit::cli {

/// Resolved run configuration for `embed` (TOML sections [data], [prep],
/// [model], [train], [losses], [doublet]; unknown sections or keys are hard
/// errors). Defaults match the documented pipeline defaults.
struct EmbedConfig {
    // [data]
    std::string matrix, genes, barcodes, metadata;
    bool transpose = false;  // true: file is cells x genes (default assumes genes x cells)

    // [prep]
    std::int64_t min_genes = 200;
    double max_pct_mt = 20.0;
    double target_sum = 1.0e4;
    std::int64_t hvg_top = 2000;
    std::int64_t hvg_bins = 20;

    // [model]
    std::int64_t tokens = 128;
    std::int64_t d_model = 64;
    std::int64_t layers = 10;
    std::int64_t heads = 4;
    std::int64_t refine_depth = 2;
    std::int64_t backbone_seed = 1;

    // [train]
    std::int64_t epochs = 30;
    std::int64_t minibatch = 128;
    double learning_rate = 1e-3;
    std::int64_t seed = 1;

    // [losses]
    train::LossWeights weights;

    // [doublet]
    bool doublet_enabled = false;
    double doublet_rho = 0.06;
    double doublet_ratio = 2.0;
    std::int64_t doublet_k = 20;
    std::int64_t doublet_pca_dims = 30;
    double doublet_threshold = 0.0;  // <= 0 selects the automatic threshold

    /// Canonical key=value serialization (sorted, excludes out-dir and
    /// thread count) used for the config hash.
    std::string canonical() const;
    std::string hash_hex() const;
};

EmbedConfig load_embed_config(const std::string& path);

struct EmbedOutputs {
    std::string embeddings_tsv;
    std::string params_bin;
    std::string loss_csv;
    std::string metrics_json;
};

/// Full pipeline: read -> qc -> filter -> normalize -> hvg -> optional
/// doublet removal -> frozen backbone encode -> train -> refine-all ->
/// metrics + plots. Deterministic given (config, seed).
EmbedOutputs run_embed(const EmbedConfig& config, const std::string& out_dir, int threads);

/// argv-style entry point used by main() and by the acceptance suite.
/// Returns the process exit code: 0 ok, 1 usage/IO error, 2 numerical abort.
int run(const std::vector<std::string>& args);

}  // namespace morekit::cli
