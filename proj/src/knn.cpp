#include "morekit/knn.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>

namespace morekit {

namespace {

// One block of query rows against all points via the expansion
// ||q - p||^2 = ||q||^2 - 2 q.p + ||p||^2 (monotone in the true distance,
// identical tie behaviour because the comparator also uses the index).
void knn_block(const Eigen::MatrixXd& points,
               const Eigen::VectorXd& point_norms,
               const Eigen::MatrixXd& queries,
               int k, bool same_set,
               Eigen::Index begin, Eigen::Index end,
               std::vector<std::vector<int>>& out) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd cross = queries.middleRows(begin, end - begin) * points.transpose();
    std::vector<std::pair<double, int>> cand;
    for (Eigen::Index q = begin; q < end; ++q) {
        cand.clear();
        cand.reserve(static_cast<std::size_t>(n));
        for (Eigen::Index j = 0; j < n; ++j) {
            if (same_set && j == q) continue;
            const double d2 = point_norms(j) - 2.0 * cross(q - begin, j);
            cand.emplace_back(d2, static_cast<int>(j));
        }
        const auto kth = cand.begin() + k;
        std::nth_element(cand.begin(), kth - 1, cand.end());
        std::sort(cand.begin(), kth);
        auto& row = out[static_cast<std::size_t>(q)];
        row.resize(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) row[static_cast<std::size_t>(i)] = cand[static_cast<std::size_t>(i)].second;
    }
}

}  // namespace

std::vector<std::vector<int>> knn_search(const Eigen::MatrixXd& points,
                                         const Eigen::MatrixXd& queries,
                                         int k,
                                         bool same_set,
                                         int threads) {
    const Eigen::Index n = points.rows();
    const Eigen::Index nq = queries.rows();
    if (k < 1) throw std::invalid_argument("knn_search: k must be >= 1");
    if (points.cols() != queries.cols()) throw std::invalid_argument("knn_search: dimension mismatch");
    const Eigen::Index avail = same_set ? n - 1 : n;
    if (k > avail) {
        throw std::invalid_argument("knn_search: k = " + std::to_string(k) + " exceeds available points " +
                                    std::to_string(avail));
    }

    Eigen::VectorXd point_norms = points.rowwise().squaredNorm();
    std::vector<std::vector<int>> out(static_cast<std::size_t>(nq));

    constexpr Eigen::Index kBlock = 256;
    if (threads <= 1 || nq <= kBlock) {
        for (Eigen::Index begin = 0; begin < nq; begin += kBlock) {
            knn_block(points, point_norms, queries, k, same_set, begin, std::min(begin + kBlock, nq), out);
        }
        return out;
    }

    // blocks write disjoint output rows, so workers need no shared state
    std::vector<Eigen::Index> starts;
    for (Eigen::Index begin = 0; begin < nq; begin += kBlock) starts.push_back(begin);
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    const int nworkers = std::min<int>(threads, static_cast<int>(starts.size()));
    for (int w = 0; w < nworkers; ++w) {
        pool.emplace_back([&]() {
            while (true) {
                const std::size_t i = cursor.fetch_add(1);
                if (i >= starts.size()) return;
                const Eigen::Index begin = starts[i];
                knn_block(points, point_norms, queries, k, same_set, begin, std::min(begin + kBlock, nq), out);
            }
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace morekit
