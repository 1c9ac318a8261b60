#pragma once

#include <vector>

#include <Eigen/Dense>

namespace morekit::metrics {

/// Adjusted Rand index via pair counting with expected-index correction.
/// Returns 1.0 for identical partitions including the degenerate cases
/// where the correction denominator vanishes.
double ari(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

/// Mean silhouette over cells with Euclidean distances; singleton clusters
/// score 0, as does the all-coincident 0/0 case. Requires >= 2 clusters.
double silhouette(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels);

/// Normalized kNN batch-mixing entropy: per cell, the entropy of batch
/// proportions among its k nearest neighbours divided by ln(B), averaged
/// over cells. One batch returns 1.0 by convention. k is clamped to n - 1.
double batch_entropy(const Eigen::MatrixXd& embeddings, const std::vector<int>& batches, int k,
                     int threads = 1);

/// kNN classification accuracy of test cells against the train set
/// (majority of the k nearest train cells, ties toward the lower label).
double label_transfer_accuracy(const Eigen::MatrixXd& train_emb, const std::vector<int>& train_labels,
                               const Eigen::MatrixXd& test_emb, const std::vector<int>& test_labels,
                               int k, int threads = 1);

/// Per-class recall after mapping each cluster to its majority true label.
/// Classes absent from the truth are omitted. Used as the rare-population
/// detection readout alongside ARI.
std::vector<double> cluster_class_recall(const std::vector<int>& clusters, const std::vector<int>& labels);

}  // namespace morekit::metrics
