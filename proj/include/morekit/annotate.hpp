#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "morekit/model.hpp"
#include "morekit/types.hpp"

namespace morekit::annotate {

struct AnnotateConfig {
    double conf_threshold = 0.7;
    int knn = 15;
    int max_rounds = 5;
    int clusters = 0;  // 0 -> 2 * n_classes
    std::uint64_t seed = 0;
};

/// argmax of softmax(classify(z)) per cell, ties toward the lower class
/// index; confidence is the winning softmax probability.
std::pair<std::vector<int>, std::vector<double>> predict(const model::MoreParams& params,
                                                         const Eigen::MatrixXd& embeddings);

/// Every cell in a cluster receives the cluster's most frequent predicted
/// label (ties toward the lower label index).
std::vector<int> majority_vote(const std::vector<int>& labels, const std::vector<int>& clusters);

struct PropagateResult {
    std::vector<int> labels;
    std::vector<int> stabilized_round;  // last round the cell's label changed; 0 = never
};

/// Label propagation for uncertain cells. Cells at or above the confidence
/// threshold are fixed; below it, a cell is relabeled each round by the
/// majority label of its k nearest resolved neighbours (synchronously,
/// against the previous round), joining the resolved set once relabeled.
/// Cells with no resolved neighbour keep their current label. Stops when a
/// round changes nothing or after max_rounds.
PropagateResult propagate_refine(const std::vector<int>& labels, const std::vector<double>& confidences,
                                 const Eigen::MatrixXd& embeddings, int k, double conf_threshold,
                                 int max_rounds);

struct AnnotationResult {
    std::vector<int> predicted;
    std::vector<double> confidence;
    std::vector<int> voted;
    std::vector<int> final_label;
    std::vector<int> stabilized_round;
    std::vector<int> cluster;
};

/// predict -> k-means majority vote -> propagate_refine.
AnnotationResult annotate(const model::MoreParams& params, const Eigen::MatrixXd& embeddings,
                          const AnnotateConfig& cfg);

void write_annotation(const AnnotationResult& result, const std::vector<std::string>& barcodes,
                      const std::string& path, const std::vector<std::string>& comments = {});

/// Mean expression of each marker gene per final label; genes missing from
/// the matrix are skipped. Rows: marker gene; columns: label index.
struct MarkerReport {
    std::vector<std::string> genes;
    Eigen::MatrixXd mean_expression;  // genes x labels
};

MarkerReport marker_report(const ExpressionMatrix& x, const std::vector<std::string>& markers,
                           const std::vector<int>& final_labels, int n_labels);

void write_marker_report(const MarkerReport& report, const std::string& path,
                         const std::vector<std::string>& comments = {});

}  // namespace morekit::annotate
