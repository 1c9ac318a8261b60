#include "doctest.h"

#include <cmath>

#include "morekit/annotate.hpp"
#include "morekit/rng.hpp"

using namespace morekit;

namespace {

model::MoreParams classifier_only(int d, int n_classes, std::uint64_t seed) {
    auto p = model::init_more_params(1, d, 1, n_classes, 1, 0, seed);
    return p;
}

}  // namespace

TEST_CASE("predict: zero classifier, dominant logit, shift invariance") {
    auto p = classifier_only(4, 3, 1);

    SUBCASE("zero classifier gives confidence 1/C and label 0 by tie-break") {
        p.classifier_w.setZero();
        p.classifier_b.setZero();
        Eigen::MatrixXd emb = Eigen::MatrixXd::Random(5, 4);
        auto [labels, conf] = annotate::predict(p, emb);
        for (int l : labels) CHECK(l == 0);
        for (double c : conf) CHECK(c == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("a dominant logit wins with confidence above 1/C") {
        p.classifier_w.setZero();
        p.classifier_b << -1.0, 4.0, -1.0;
        Eigen::MatrixXd emb = Eigen::MatrixXd::Random(3, 4);
        auto [labels, conf] = annotate::predict(p, emb);
        for (int l : labels) CHECK(l == 1);
        for (double c : conf) CHECK(c > 1.0 / 3.0);
    }
    SUBCASE("adding a constant to every logit changes nothing") {
        Rng rng(2);
        Eigen::MatrixXd emb(6, 4);
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 4; ++j) emb(i, j) = rng.normal();
        }
        auto [labels, conf] = annotate::predict(p, emb);
        auto shifted = p;
        shifted.classifier_b.array() += 9.0;
        auto [labels2, conf2] = annotate::predict(shifted, emb);
        CHECK(labels == labels2);
        for (std::size_t i = 0; i < conf.size(); ++i) {
            CHECK(conf[i] == doctest::Approx(conf2[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("majority_vote: majority, tie to lower index, singleton") {
    const std::vector<int> labels = {0, 0, 1, 0, 1, 2};
    const std::vector<int> clusters = {0, 0, 0, 1, 1, 2};
    const auto voted = annotate::majority_vote(labels, clusters);
    CHECK(voted[0] == 0);  // cluster 0 = {0,0,1} -> 0
    CHECK(voted[1] == 0);
    CHECK(voted[2] == 0);
    CHECK(voted[3] == 0);  // cluster 1 = {0,1} tie -> lower label 0
    CHECK(voted[4] == 0);
    CHECK(voted[5] == 2);  // singleton keeps its own label

    SUBCASE("output is constant within each cluster (property)") {
        Rng rng(3);
        std::vector<int> l2(50), c2(50);
        for (int i = 0; i < 50; ++i) {
            l2[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(4));
            c2[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(6));
        }
        const auto v2 = annotate::majority_vote(l2, c2);
        for (int i = 0; i < 50; ++i) {
            for (int j = 0; j < 50; ++j) {
                if (c2[static_cast<std::size_t>(i)] == c2[static_cast<std::size_t>(j)]) {
                    CHECK(v2[static_cast<std::size_t>(i)] == v2[static_cast<std::size_t>(j)]);
                }
            }
        }
    }
}

TEST_CASE("propagate_refine: confident identity, neighbour adoption, no-confident fallback") {
    Eigen::MatrixXd emb(6, 1);
    emb << 0.0, 0.1, 0.2, 0.3, 0.4, 5.0;

    SUBCASE("all confident cells stay untouched") {
        const std::vector<int> labels = {0, 1, 0, 1, 0, 1};
        const std::vector<double> conf(6, 0.99);
        const auto out = annotate::propagate_refine(labels, conf, emb, 3, 0.7, 5);
        CHECK(out.labels == labels);
        for (int r : out.stabilized_round) CHECK(r == 0);
    }
    SUBCASE("one uncertain cell surrounded by confident A-neighbours becomes A") {
        const std::vector<int> labels = {0, 0, 1, 0, 0, 0};
        std::vector<double> conf(6, 0.99);
        conf[2] = 0.1;  // uncertain, neighbours all labeled 0
        const auto out = annotate::propagate_refine(labels, conf, emb, 3, 0.7, 5);
        CHECK(out.labels[2] == 0);
        CHECK(out.stabilized_round[2] == 1);
        // confident cells never move
        for (int i : {0, 1, 3, 4, 5}) CHECK(out.labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(i)]);
    }
    SUBCASE("no confident cells at all leaves labels unchanged") {
        const std::vector<int> labels = {0, 1, 0, 1, 0, 1};
        const std::vector<double> conf(6, 0.1);
        const auto out = annotate::propagate_refine(labels, conf, emb, 3, 0.7, 5);
        CHECK(out.labels == labels);
    }
    SUBCASE("propagation reaches across rounds through newly resolved cells") {
        // chain: cell 0 confident, the rest uncertain; each cell only sees
        // its immediate neighbours
        Eigen::MatrixXd line(4, 1);
        line << 0.0, 1.0, 2.0, 3.0;
        const std::vector<int> labels = {1, 0, 0, 0};
        const std::vector<double> conf = {0.9, 0.0, 0.0, 0.0};
        const auto out = annotate::propagate_refine(labels, conf, line, 1, 0.7, 5);
        CHECK(out.labels == std::vector<int>{1, 1, 1, 1});
        CHECK(out.stabilized_round[1] == 1);
        CHECK(out.stabilized_round[2] == 2);
        CHECK(out.stabilized_round[3] == 3);
    }
    SUBCASE("terminates within max_rounds") {
        Rng rng(5);
        Eigen::MatrixXd cloud(40, 2);
        std::vector<int> labels(40);
        std::vector<double> conf(40);
        for (int i = 0; i < 40; ++i) {
            labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(3));
            conf[static_cast<std::size_t>(i)] = rng.uniform();
            for (int j = 0; j < 2; ++j) cloud(i, j) = rng.normal();
        }
        const auto out = annotate::propagate_refine(labels, conf, cloud, 5, 0.7, 4);
        for (int r : out.stabilized_round) CHECK(r <= 4);
    }
}

TEST_CASE("annotate: end-to-end on separable blobs") {
    Rng rng(8);
    const int n = 120, d = 4;
    Eigen::MatrixXd emb(n, d);
    std::vector<int> truth(n);
    for (int i = 0; i < n; ++i) {
        const int c = i % 3;
        truth[static_cast<std::size_t>(i)] = c;
        for (int j = 0; j < d; ++j) emb(i, j) = 6.0 * c + rng.normal() * 0.5;
    }
    // classifier trained by construction: rows pick out the blob mean direction
    auto p = model::init_more_params(1, d, 1, 3, 1, 0, 9);
    for (int c = 0; c < 3; ++c) {
        Eigen::VectorXd mu = Eigen::VectorXd::Constant(d, 6.0 * c);
        p.classifier_w.row(c) = mu.transpose();
        p.classifier_b(c) = -0.5 * mu.squaredNorm();
    }
    annotate::AnnotateConfig cfg;
    cfg.seed = 3;
    const auto result = annotate::annotate(p, emb, cfg);
    std::size_t correct = 0;
    for (int i = 0; i < n; ++i) {
        if (result.final_label[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(i)]) ++correct;
    }
    CHECK(static_cast<double>(correct) / n > 0.95);
    CHECK(result.cluster.size() == static_cast<std::size_t>(n));
}

TEST_CASE("marker_report: per-label means, unknown markers skipped") {
    ExpressionMatrix x;
    x.n_cells = 4;
    x.n_genes = 3;
    x.gene_names = {"CD3", "CD19", "NKG7"};
    x.barcodes = {"a", "b", "c", "d"};
    x.row_offsets = {0, 1, 2, 3, 4};
    x.col_indices = {0, 0, 1, 1};
    x.values = {4.0, 2.0, 6.0, 2.0};
    const std::vector<int> labels = {0, 0, 1, 1};
    const auto report = annotate::marker_report(x, {"CD3", "CD19", "MISSING"}, labels, 2);
    REQUIRE(report.genes == std::vector<std::string>{"CD3", "CD19"});
    CHECK(report.mean_expression(0, 0) == doctest::Approx(3.0));  // CD3 in label 0
    CHECK(report.mean_expression(0, 1) == doctest::Approx(0.0));
    CHECK(report.mean_expression(1, 1) == doctest::Approx(4.0));  // CD19 in label 1
}
