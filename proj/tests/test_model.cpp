#include "doctest.h"

#include <cmath>

#include "morekit/model.hpp"
#include "morekit/rng.hpp"
#include "morekit/types.hpp"

using namespace morekit;

namespace {

Eigen::VectorXd random_vec(int d, Rng& rng) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("init_more_params: documented initial values") {
    const auto p = model::init_more_params(2, 8, 3, 4, 10, 2, 1);
    for (const auto& w : p.fusion_weights) CHECK(w == Eigen::VectorXd::Ones(8));
    CHECK(p.batch_embeddings == Eigen::MatrixXd::Zero(3, 8));
    CHECK(p.refiner.w2 == Eigen::MatrixXd::Zero(8, 8));
    CHECK(model::trainable_parameter_count(p) ==
          2 * (2 * (8 * 8 + 8)) + 2 * 8 + 3 * 8 + 2 * (8 * 8 + 8) + (4 * 8 + 4) + (10 * 8 + 10));
}

TEST_CASE("adapt: zero weights, constant path, bounded output") {
    auto p = model::init_more_params(1, 4, 1, 2, 4, 1, 2);
    Rng rng(1);
    const Eigen::VectorXd x = random_vec(4, rng);

    SUBCASE("zero weights and biases give zero") {
        p.adapters[0].w1.setZero();
        p.adapters[0].w2.setZero();
        CHECK(model::adapt(p, 0, x) == Eigen::VectorXd::Zero(4));
    }
    SUBCASE("w1=0, w2=I, b2=c gives the constant c") {
        p.adapters[0].w1.setZero();
        p.adapters[0].b1.setZero();
        p.adapters[0].w2 = Eigen::MatrixXd::Identity(4, 4);
        p.adapters[0].b2 = Eigen::VectorXd::Constant(4, 3.25);
        CHECK((model::adapt(p, 0, x) - Eigen::VectorXd::Constant(4, 3.25)).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("finite input gives finite output") {
        CHECK(model::adapt(p, 0, 1e6 * x).allFinite());
    }
}

TEST_CASE("fuse: identity for single modality, zero weights, elementwise sum") {
    auto p = model::init_more_params(2, 2, 1, 2, 2, 1, 3);
    Eigen::VectorXd z1(2), z2(2);
    z1 << 1, 2;
    z2 << 3, 4;

    CHECK(model::fuse(p, {z1}) == z1);  // omega starts at ones

    Eigen::VectorXd expect(2);
    expect << 4, 6;
    CHECK(model::fuse(p, {z1, z2}) == expect);

    p.fusion_weights[0].setZero();
    p.fusion_weights[1].setZero();
    CHECK(model::fuse(p, {z1, z2}) == Eigen::VectorXd::Zero(2));

    CHECK_THROWS_AS(model::fuse(p, {}), std::invalid_argument);
}

TEST_CASE("fuse is linear in each z_m (property)") {
    Rng rng(5);
    auto p = model::init_more_params(2, 6, 1, 2, 2, 1, 4);
    for (auto& w : p.fusion_weights) w = random_vec(6, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::VectorXd a = random_vec(6, rng), b = random_vec(6, rng);
        const double alpha = rng.normal();
        const Eigen::VectorXd scaled = model::fuse(p, {alpha * a, alpha * b});
        const Eigen::VectorXd base = model::fuse(p, {a, b});
        CHECK((scaled - alpha * base).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("refine: residual identities") {
    auto p = model::init_more_params(1, 5, 2, 2, 3, 0, 6);
    Rng rng(7);
    const Eigen::VectorXd z = random_vec(5, rng);

    SUBCASE("T = 0 returns the input unchanged") {
        CHECK(model::refine(p, z, 0) == z);
    }
    SUBCASE("zero refiner is the exact identity for any T") {
        p.refiner.w1.setZero();
        p.refiner.w2.setZero();
        for (int t : {0, 1, 2, 5}) {
            p.refine_depth = t;
            CHECK(model::refine(p, z, 1) == z);
        }
    }
    SUBCASE("T = 1 with a refinement that reproduces z doubles the output") {
        // a tanh MLP cannot be the global identity, but Refine(.) == z at
        // this input (w2 = 0, b2 = z) forces the residual step to 2z
        p.refine_depth = 1;
        p.refiner.w1.setZero();
        p.refiner.b1.setZero();
        p.refiner.w2.setZero();
        p.refiner.b2 = z;
        CHECK((model::refine(p, z, 0) - 2.0 * z).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("T = 2 equals applying the T = 1 step twice") {
        p.refiner.w1 = Eigen::MatrixXd::Random(5, 5) * 0.3;
        p.refiner.w2 = Eigen::MatrixXd::Random(5, 5) * 0.3;
        p.refiner.b1 = random_vec(5, rng) * 0.1;
        p.refiner.b2 = random_vec(5, rng) * 0.1;
        p.refine_depth = 1;
        const Eigen::VectorXd once = model::refine(p, z, 1);
        const Eigen::VectorXd twice = model::refine(p, once, 1);
        p.refine_depth = 2;
        CHECK((model::refine(p, z, 1) - twice).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("batch index out of range") {
        CHECK_THROWS_AS(model::refine(p, z, 2), std::invalid_argument);
        CHECK_THROWS_AS(model::refine(p, z, -1), std::invalid_argument);
    }
}

TEST_CASE("classify and decode_masked edge behaviour") {
    auto p = model::init_more_params(1, 4, 1, 3, 6, 1, 8);
    Rng rng(9);
    const Eigen::VectorXd z = random_vec(4, rng);

    SUBCASE("zero classifier gives zero logits") {
        p.classifier_w.setZero();
        p.classifier_b.setZero();
        CHECK(model::classify(p, z) == Eigen::VectorXd::Zero(3));
    }
    SUBCASE("identical classifier rows give identical logits") {
        for (int c = 1; c < 3; ++c) p.classifier_w.row(c) = p.classifier_w.row(0);
        p.classifier_b.setZero();
        const Eigen::VectorXd logits = model::classify(p, z);
        CHECK(logits(0) == doctest::Approx(logits(1)).epsilon(1e-15));
        CHECK(logits(0) == doctest::Approx(logits(2)).epsilon(1e-15));
    }
    SUBCASE("decoder mask handling") {
        CHECK(model::decode_masked(p, z, {}).size() == 0);
        CHECK(model::decode_masked(p, z, {0, 1, 2, 3, 4, 5}).size() == 6);
        p.decoder_w.setZero();
        p.decoder_b.setZero();
        CHECK(model::decode_masked(p, z, {1, 4}) == Eigen::VectorXd::Zero(2));
        CHECK_THROWS_AS(model::decode_masked(p, z, {6}), std::invalid_argument);
    }
}

TEST_CASE("forward: trace invariants and determinism") {
    const auto p = model::init_more_params(2, 6, 2, 3, 8, 3, 11);
    Rng rng(12);
    const std::vector<Eigen::VectorXd> z_raw = {random_vec(6, rng), random_vec(6, rng)};
    const std::vector<int> mask = {1, 5};

    const auto t1 = model::forward(p, z_raw, 1, mask);
    CHECK(t1.z_tilde.size() == 4);
    CHECK(t1.z_tilde[0] == t1.z_f);
    CHECK(t1.logits.size() == 3);
    CHECK(t1.masked_pred.size() == 2);
    for (const auto& z : t1.z_tilde) CHECK(z.allFinite());

    const auto t2 = model::forward(p, z_raw, 1, mask);
    CHECK(t1.z_tilde.back() == t2.z_tilde.back());
    CHECK(t1.logits == t2.logits);
}
