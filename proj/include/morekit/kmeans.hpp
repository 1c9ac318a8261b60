#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace morekit {

struct KmeansResult {
    std::vector<int> assignment;  // per row of the input
    Eigen::MatrixXd centroids;    // K x d
    int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding from the given seed. Fully
/// deterministic: assignment ties break toward the lower centroid index and
/// empty clusters keep their previous centroid. K is clamped to the number
/// of points.
KmeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iters = 100);

}  // namespace morekit
