#include "morekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "morekit/knn.hpp"

namespace morekit::metrics {

namespace {

int max_label(const std::vector<int>& labels) {
    int m = -1;
    for (int l : labels) {
        if (l < 0) throw std::invalid_argument("negative label index");
        m = std::max(m, l);
    }
    return m;
}

}  // namespace

double ari(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
    if (labels_a.size() != labels_b.size()) throw std::invalid_argument("ari: length mismatch");
    const std::size_t n = labels_a.size();
    if (n < 2) throw std::invalid_argument("ari: need at least 2 items");

    std::map<std::pair<int, int>, double> contingency;
    std::map<int, double> row_sums, col_sums;
    for (std::size_t i = 0; i < n; ++i) {
        contingency[{labels_a[i], labels_b[i]}] += 1.0;
        row_sums[labels_a[i]] += 1.0;
        col_sums[labels_b[i]] += 1.0;
    }
    auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, count] : contingency) sum_ij += choose2(count);
    for (const auto& [key, count] : row_sums) sum_a += choose2(count);
    for (const auto& [key, count] : col_sums) sum_b += choose2(count);
    const double total_pairs = choose2(static_cast<double>(n));
    const double expected = sum_a * sum_b / total_pairs;
    const double maximum = 0.5 * (sum_a + sum_b);
    const double denom = maximum - expected;
    if (denom == 0.0) return 1.0;  // both partitions trivial and identical in pair structure
    return (sum_ij - expected) / denom;
}

double silhouette(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels) {
    const Eigen::Index n = embeddings.rows();
    if (static_cast<std::size_t>(n) != labels.size()) throw std::invalid_argument("silhouette: length mismatch");
    const int k = max_label(labels) + 1;
    std::vector<std::size_t> cluster_size(static_cast<std::size_t>(k), 0);
    for (int l : labels) cluster_size[static_cast<std::size_t>(l)] += 1;
    int populated = 0;
    for (auto c : cluster_size) populated += c > 0 ? 1 : 0;
    if (populated < 2) throw std::invalid_argument("silhouette: need at least 2 populated clusters");

    // streaming mean distance per (cell, cluster); O(n*k) memory
    Eigen::MatrixXd mean_dist = Eigen::MatrixXd::Zero(n, k);
    constexpr Eigen::Index kBlock = 512;
    Eigen::VectorXd norms = embeddings.rowwise().squaredNorm();
    for (Eigen::Index b = 0; b < n; b += kBlock) {
        const Eigen::Index e = std::min(b + kBlock, n);
        Eigen::MatrixXd cross = embeddings.middleRows(b, e - b) * embeddings.transpose();
        for (Eigen::Index i = b; i < e; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                const double d2 = std::max(norms(i) + norms(j) - 2.0 * cross(i - b, j), 0.0);
                mean_dist(i, labels[static_cast<std::size_t>(j)]) += std::sqrt(d2);
            }
        }
    }

    double score = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int own = labels[static_cast<std::size_t>(i)];
        const std::size_t own_size = cluster_size[static_cast<std::size_t>(own)];
        if (own_size <= 1) continue;  // singleton scores 0
        const double a = mean_dist(i, own) / static_cast<double>(own_size - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == own || cluster_size[static_cast<std::size_t>(c)] == 0) continue;
            b = std::min(b, mean_dist(i, c) / static_cast<double>(cluster_size[static_cast<std::size_t>(c)]));
        }
        const double m = std::max(a, b);
        score += m > 0.0 ? (b - a) / m : 0.0;
    }
    return score / static_cast<double>(n);
}

double batch_entropy(const Eigen::MatrixXd& embeddings, const std::vector<int>& batches, int k,
                     int threads) {
    const Eigen::Index n = embeddings.rows();
    if (static_cast<std::size_t>(n) != batches.size()) throw std::invalid_argument("batch_entropy: length mismatch");
    if (k < 1) throw std::invalid_argument("batch_entropy: k must be >= 1");
    const int nb = max_label(batches) + 1;
    if (nb <= 1) return 1.0;
    k = std::min<int>(k, static_cast<int>(n) - 1);
    if (k < 1) return 1.0;

    const auto neighbours = knn_within(embeddings, k, threads);
    const double log_b = std::log(static_cast<double>(nb));
    double total = 0.0;
    std::vector<double> counts(static_cast<std::size_t>(nb));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::fill(counts.begin(), counts.end(), 0.0);
        for (int j : neighbours[static_cast<std::size_t>(i)]) counts[static_cast<std::size_t>(batches[static_cast<std::size_t>(j)])] += 1.0;
        double h = 0.0;
        for (double c : counts) {
            if (c > 0.0) {
                const double p = c / static_cast<double>(k);
                h -= p * std::log(p);
            }
        }
        total += h / log_b;
    }
    return total / static_cast<double>(n);
}

double label_transfer_accuracy(const Eigen::MatrixXd& train_emb, const std::vector<int>& train_labels,
                               const Eigen::MatrixXd& test_emb, const std::vector<int>& test_labels,
                               int k, int threads) {
    if (static_cast<std::size_t>(train_emb.rows()) != train_labels.size() ||
        static_cast<std::size_t>(test_emb.rows()) != test_labels.size()) {
        throw std::invalid_argument("label_transfer_accuracy: length mismatch");
    }
    if (k < 1 || k > train_emb.rows()) {
        throw std::invalid_argument("label_transfer_accuracy: k out of range");
    }
    const auto neighbours = knn_search(train_emb, test_emb, k, /*same_set=*/false, threads);
    const int nc = max_label(train_labels) + 1;
    std::size_t correct = 0;
    std::vector<int> votes(static_cast<std::size_t>(nc));
    for (std::size_t i = 0; i < neighbours.size(); ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        for (int j : neighbours[i]) votes[static_cast<std::size_t>(train_labels[static_cast<std::size_t>(j)])] += 1;
        int best = 0;
        for (int c = 1; c < nc; ++c) {
            if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
        }
        if (best == test_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(neighbours.size(), 1));
}

std::vector<double> cluster_class_recall(const std::vector<int>& clusters, const std::vector<int>& labels) {
    if (clusters.size() != labels.size()) throw std::invalid_argument("cluster_class_recall: length mismatch");
    const int nk = max_label(clusters) + 1;
    const int nc = max_label(labels) + 1;
    std::vector<std::vector<int>> table(static_cast<std::size_t>(nk), std::vector<int>(static_cast<std::size_t>(nc), 0));
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        table[static_cast<std::size_t>(clusters[i])][static_cast<std::size_t>(labels[i])] += 1;
    }
    std::vector<int> cluster_label(static_cast<std::size_t>(nk), 0);
    for (int c = 0; c < nk; ++c) {
        int best = 0;
        for (int l = 1; l < nc; ++l) {
            if (table[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)] >
                table[static_cast<std::size_t>(c)][static_cast<std::size_t>(best)]) {
                best = l;
            }
        }
        cluster_label[static_cast<std::size_t>(c)] = best;
    }
    std::vector<double> hit(static_cast<std::size_t>(nc), 0.0), count(static_cast<std::size_t>(nc), 0.0);
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        count[static_cast<std::size_t>(labels[i])] += 1.0;
        if (cluster_label[static_cast<std::size_t>(clusters[i])] == labels[i]) hit[static_cast<std::size_t>(labels[i])] += 1.0;
    }
    std::vector<double> recall;
    for (int l = 0; l < nc; ++l) {
        if (count[static_cast<std::size_t>(l)] > 0.0) {
            recall.push_back(hit[static_cast<std::size_t>(l)] / count[static_cast<std::size_t>(l)]);
        }
    }
    return recall;
}

}  // namespace morekit::metrics
