#include "doctest.h"

#include <cmath>

#include "morekit/kmeans.hpp"
#include "morekit/knn.hpp"
#include "morekit/metrics.hpp"
#include "morekit/rng.hpp"
#include "testutil.hpp"

using namespace morekit;

namespace {

// brute-force pair-counting ARI, the independent oracle
double ari_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    double both = 0, only_a = 0, only_b = 0, neither = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool sa = a[i] == a[j];
            const bool sb = b[i] == b[j];
            if (sa && sb) both += 1;
            else if (sa) only_a += 1;
            else if (sb) only_b += 1;
            else neither += 1;
        }
    }
    const double total = both + only_a + only_b + neither;
    const double sum_a = both + only_a, sum_b = both + only_b;
    const double expected = sum_a * sum_b / total;
    const double maximum = 0.5 * (sum_a + sum_b);
    if (maximum - expected == 0.0) return 1.0;
    return (both - expected) / (maximum - expected);
}

}  // namespace

TEST_CASE("knn_search: deterministic ordering and self exclusion") {
    Eigen::MatrixXd pts(4, 1);
    pts << 0.0, 1.0, 2.0, 10.0;
    const auto nn = knn_within(pts, 2);
    CHECK(nn[0] == std::vector<int>{1, 2});
    CHECK(nn[1] == std::vector<int>{0, 2});  // equidistant: lower index first
    CHECK(nn[3] == std::vector<int>{2, 1});
    CHECK_THROWS_AS(knn_within(pts, 4), std::invalid_argument);
}

TEST_CASE("knn_search: threaded result equals sequential (property)") {
    Rng rng(17);
    Eigen::MatrixXd pts(700, 5);
    for (int i = 0; i < 700; ++i) {
        for (int j = 0; j < 5; ++j) pts(i, j) = rng.normal();
    }
    const auto seq = knn_within(pts, 7, 1);
    const auto par = knn_within(pts, 7, 4);
    CHECK(seq == par);
}

TEST_CASE("kmeans: deterministic and recovers separated blobs") {
    Rng rng(9);
    Eigen::MatrixXd pts(90, 3);
    std::vector<int> truth(90);
    for (int i = 0; i < 90; ++i) {
        const int c = i / 30;
        truth[static_cast<std::size_t>(i)] = c;
        for (int j = 0; j < 3; ++j) pts(i, j) = 10.0 * c + 0.3 * rng.normal();
    }
    const auto r1 = kmeans(pts, 3, 42);
    const auto r2 = kmeans(pts, 3, 42);
    CHECK(r1.assignment == r2.assignment);
    CHECK(metrics::ari(r1.assignment, truth) == doctest::Approx(1.0));
}

TEST_CASE("ari: identity, relabel invariance, symmetry") {
    std::vector<int> a = {0, 0, 1, 1, 2, 2};
    CHECK(metrics::ari(a, a) == doctest::Approx(1.0));

    std::vector<int> renamed = {2, 2, 0, 0, 1, 1};
    CHECK(metrics::ari(a, renamed) == doctest::Approx(1.0));

    std::vector<int> b = {0, 1, 1, 0, 2, 1};
    CHECK(metrics::ari(a, b) == doctest::Approx(metrics::ari(b, a)).epsilon(1e-12));
    CHECK(metrics::ari(a, b) == doctest::Approx(ari_oracle(a, b)).epsilon(1e-12));
}

TEST_CASE("ari: independent labelings score near zero, matching the oracle") {
    Rng rng(23);
    std::vector<int> a(200), b(200);
    for (std::size_t i = 0; i < 200; ++i) {
        a[i] = static_cast<int>(rng.uniform_index(4));
        b[i] = static_cast<int>(rng.uniform_index(4));
    }
    const double ari = metrics::ari(a, b);
    CHECK(std::abs(ari) < 0.1);
    CHECK(ari == doctest::Approx(ari_oracle(a, b)).epsilon(1e-12));
}

TEST_CASE("silhouette: tight separated clusters, coincident points, one-cluster error") {
    Rng rng(31);
    Eigen::MatrixXd pts(40, 2);
    std::vector<int> labels(40);
    for (int i = 0; i < 40; ++i) {
        const int c = i / 20;
        labels[static_cast<std::size_t>(i)] = c;
        pts(i, 0) = 100.0 * c + 0.01 * rng.normal();
        pts(i, 1) = 0.01 * rng.normal();
    }
    // within-spread 0.01, separation 100: closed-form bound puts s > 0.99
    CHECK(metrics::silhouette(pts, labels) > 0.99);

    Eigen::MatrixXd same = Eigen::MatrixXd::Zero(6, 2);
    std::vector<int> two = {0, 0, 0, 1, 1, 1};
    CHECK(metrics::silhouette(same, two) == doctest::Approx(0.0));

    std::vector<int> one(6, 0);
    CHECK_THROWS_AS(metrics::silhouette(same, one), std::invalid_argument);
}

TEST_CASE("silhouette: invariant under translation and rotation (property)") {
    Rng rng(37);
    Eigen::MatrixXd pts(30, 3);
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) {
        labels[static_cast<std::size_t>(i)] = i % 3;
        for (int j = 0; j < 3; ++j) pts(i, j) = rng.normal() + 2.0 * (i % 3);
    }
    const double base = metrics::silhouette(pts, labels);

    Eigen::MatrixXd shifted = pts.rowwise() + Eigen::RowVector3d(5.0, -3.0, 11.0);
    CHECK(metrics::silhouette(shifted, labels) == doctest::Approx(base).epsilon(1e-9));

    Eigen::MatrixXd gauss(3, 3);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) gauss(i, j) = rng.normal();
    }
    const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
    CHECK(metrics::silhouette(pts * rotation, labels) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("batch_entropy: conventions and constructions") {
    SUBCASE("single batch returns 1") {
        Eigen::MatrixXd pts = Eigen::MatrixXd::Random(10, 2);
        CHECK(metrics::batch_entropy(pts, std::vector<int>(10, 0), 3) == 1.0);
    }
    SUBCASE("perfectly interleaved line is close to 1") {
        const int n = 200;
        Eigen::MatrixXd pts(n, 1);
        std::vector<int> batches(n);
        for (int i = 0; i < n; ++i) {
            pts(i, 0) = static_cast<double>(i);
            batches[static_cast<std::size_t>(i)] = i % 2;
        }
        const double h = metrics::batch_entropy(pts, batches, 10);
        CHECK(h > 0.95);
    }
    SUBCASE("disjoint far blobs give entropy near 0") {
        const int n = 100;
        Eigen::MatrixXd pts(n, 1);
        std::vector<int> batches(n);
        Rng rng(3);
        for (int i = 0; i < n; ++i) {
            batches[static_cast<std::size_t>(i)] = i < 50 ? 0 : 1;
            pts(i, 0) = (i < 50 ? 0.0 : 1000.0) + rng.normal();
        }
        CHECK(metrics::batch_entropy(pts, batches, 10) < 0.01);
    }
    SUBCASE("invariant under batch index permutation") {
        Rng rng(41);
        Eigen::MatrixXd pts(60, 2);
        std::vector<int> batches(60), swapped(60);
        for (int i = 0; i < 60; ++i) {
            batches[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(3));
            swapped[static_cast<std::size_t>(i)] = (batches[static_cast<std::size_t>(i)] + 1) % 3;
            for (int j = 0; j < 2; ++j) pts(i, j) = rng.normal();
        }
        CHECK(metrics::batch_entropy(pts, batches, 8) ==
              doctest::Approx(metrics::batch_entropy(pts, swapped, 8)).epsilon(1e-12));
    }
}

TEST_CASE("label_transfer_accuracy: duplicate test set, random labels, k errors") {
    Rng rng(53);
    Eigen::MatrixXd train(50, 2);
    std::vector<int> labels(50);
    for (int i = 0; i < 50; ++i) {
        labels[static_cast<std::size_t>(i)] = i % 4;
        for (int j = 0; j < 2; ++j) train(i, j) = rng.normal() * 3.0;
    }
    // test set duplicates the train set; with k = 1 the nearest train cell is
    // the duplicate itself
    CHECK(metrics::label_transfer_accuracy(train, labels, train, labels, 1) == doctest::Approx(1.0));

    SUBCASE("random labels converge to 1/C") {
        const int n = 1200;
        Eigen::MatrixXd tr(n, 2), te(n, 2);
        std::vector<int> trl(n), tel(n);
        for (int i = 0; i < n; ++i) {
            trl[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(4));
            tel[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(4));
            for (int j = 0; j < 2; ++j) {
                tr(i, j) = rng.normal();
                te(i, j) = rng.normal();
            }
        }
        const double acc = metrics::label_transfer_accuracy(tr, trl, te, tel, 5);
        CHECK(std::abs(acc - 0.25) < 0.08);
    }
    SUBCASE("k larger than the train set errors") {
        CHECK_THROWS_AS(metrics::label_transfer_accuracy(train, labels, train, labels, 51),
                        std::invalid_argument);
    }
}
