#include "morekit/kmeans.hpp"

#include <limits>
#include <stdexcept>

#include "morekit/rng.hpp"

namespace morekit {

KmeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iters) {
    const Eigen::Index n = points.rows();
    if (n == 0) throw std::invalid_argument("kmeans: empty input");
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (k > n) k = static_cast<int>(n);

    Rng rng(seed);
    Eigen::MatrixXd centroids(k, points.cols());

    // k-means++ seeding
    centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n))));
    Eigen::VectorXd d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc >= target) {
                    pick = i;
                    break;
                }
                pick = i;
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
        }
        centroids.row(c) = points.row(pick);
        d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    KmeansResult result;
    result.assignment.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (int c = 0; c < k; ++c) {
                const double d = (points.row(i) - centroids.row(c)).squaredNorm();
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            if (result.assignment[static_cast<std::size_t>(i)] != best_c) {
                result.assignment[static_cast<std::size_t>(i)] = best_c;
                changed = true;
            }
        }
        result.iterations = iter + 1;
        if (!changed) break;
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = result.assignment[static_cast<std::size_t>(i)];
            sums.row(c) += points.row(i);
            counts[static_cast<std::size_t>(c)] += 1;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            }
        }
    }
    result.centroids = std::move(centroids);
    return result;
}

}  // namespace morekit
