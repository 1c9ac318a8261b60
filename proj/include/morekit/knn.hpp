#pragma once

#include <vector>

#include <Eigen/Dense>

namespace morekit {

/// Exact brute-force k-nearest-neighbour search with Euclidean distance.
/// Ties break deterministically toward the lower point index. When
/// `same_set` is true, queries are assumed to be rows of `points` (by index)
/// and each query's own row is excluded.
///
/// Returns a queries.rows() x k index matrix, neighbours sorted by
/// (distance, index). k must satisfy k <= points.rows() - (same_set ? 1 : 0).
std::vector<std::vector<int>> knn_search(const Eigen::MatrixXd& points,
                                         const Eigen::MatrixXd& queries,
                                         int k,
                                         bool same_set,
                                         int threads = 1);

/// Convenience: neighbours of every row within one set (self excluded).
inline std::vector<std::vector<int>> knn_within(const Eigen::MatrixXd& points, int k, int threads = 1) {
    return knn_search(points, points, k, /*same_set=*/true, threads);
}

}  // namespace morekit
