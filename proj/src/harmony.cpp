#include "morekit/harmony.hpp"

#include <cmath>
#include <stdexcept>

#include "morekit/kmeans.hpp"

namespace morekit::harmony {

namespace {

constexpr double kEps = 1e-12;

// soft counts O_kb and independence expectation E_kb from the current R
void batch_cluster_counts(const HarmonyState& state, Eigen::MatrixXd& o, Eigen::MatrixXd& e) {
    const Eigen::Index n = state.r.rows();
    const Eigen::Index k = state.r.cols();
    const int nb = state.n_batches;
    o = Eigen::MatrixXd::Zero(k, nb);
    for (Eigen::Index i = 0; i < n; ++i) {
        o.col(state.batches[static_cast<std::size_t>(i)]) += state.r.row(i).transpose();
    }
    Eigen::VectorXd cluster_mass = o.rowwise().sum();        // sum_i R_ik
    Eigen::VectorXd batch_frac = Eigen::VectorXd::Zero(nb);  // n_b / N
    for (int b : state.batches) batch_frac(b) += 1.0;
    batch_frac /= static_cast<double>(n);
    e = cluster_mass * batch_frac.transpose();
}

}  // namespace

void HarmonyConfig::validate() const {
    if (clusters < 1) throw std::invalid_argument("harmony: clusters must be >= 1");
    if (!(sigma > 0.0)) throw std::invalid_argument("harmony: sigma must be > 0");
    if (lambda_div < 0.0) throw std::invalid_argument("harmony: lambda_div must be >= 0");
    if (rounds < 1) throw std::invalid_argument("harmony: rounds must be >= 1");
}

HarmonyState harmony_init(const Eigen::MatrixXd& embeddings, const std::vector<int>& batches,
                          const HarmonyConfig& cfg) {
    cfg.validate();
    if (static_cast<std::size_t>(embeddings.rows()) != batches.size()) {
        throw std::invalid_argument("harmony: batch vector length mismatch");
    }
    HarmonyState state;
    state.z = embeddings;
    state.batches = batches;
    state.sigma = cfg.sigma;
    state.lambda_div = cfg.lambda_div;
    int nb = 0;
    for (int b : batches) {
        if (b < 0) throw std::invalid_argument("harmony: negative batch index");
        nb = std::max(nb, b + 1);
    }
    state.n_batches = nb;
    const int k = std::min<int>(cfg.clusters, static_cast<int>(embeddings.rows()));
    state.centroids = kmeans(embeddings, k, cfg.seed, /*max_iters=*/0).centroids;
    soft_assign(state);  // penalty-free first assignment (R is empty)
    return state;
}

void soft_assign(HarmonyState& state) {
    if (!(state.sigma > 0.0)) throw std::invalid_argument("soft_assign: sigma must be > 0");
    const Eigen::Index n = state.z.rows();
    const Eigen::Index k = state.centroids.rows();

    const bool have_r = state.r.size() > 0;
    Eigen::MatrixXd log_penalty;  // k x n_batches
    if (have_r) {
        // centroids from the current soft assignments
        Eigen::VectorXd mass = state.r.colwise().sum();
        for (Eigen::Index c = 0; c < k; ++c) {
            if (mass(c) > kEps) {
                state.centroids.row(c) = (state.r.col(c).transpose() * state.z) / mass(c);
            }
        }
        if (state.lambda_div > 0.0 && state.n_batches > 1) {
            Eigen::MatrixXd o, e;
            batch_cluster_counts(state, o, e);
            log_penalty = state.lambda_div *
                          ((e.array() + kEps).log() - (o.array() + kEps).log()).matrix();
        }
    }

    state.r.resize(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd logw(k);
        for (Eigen::Index c = 0; c < k; ++c) {
            logw(c) = -(state.z.row(i) - state.centroids.row(c)).squaredNorm() / state.sigma;
            if (log_penalty.size() > 0) logw(c) += log_penalty(c, state.batches[static_cast<std::size_t>(i)]);
        }
        const double mx = logw.maxCoeff();
        Eigen::ArrayXd w = (logw.array() - mx).exp();
        state.r.row(i) = (w / w.sum()).transpose();
    }
}

HarmonyObjective objective(const HarmonyState& state) {
    const Eigen::Index n = state.r.rows();
    const Eigen::Index k = state.r.cols();
    HarmonyObjective obj;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < k; ++c) {
            const double r = state.r(i, c);
            obj.clustering += r * (state.z.row(i) - state.centroids.row(c)).squaredNorm();
            if (r > 0.0) obj.clustering += state.sigma * r * std::log(r);
        }
    }
    if (state.n_batches > 1) {
        Eigen::MatrixXd o, e;
        batch_cluster_counts(state, o, e);
        for (Eigen::Index c = 0; c < k; ++c) {
            for (int b = 0; b < state.n_batches; ++b) {
                if (o(c, b) > 0.0) obj.diversity += o(c, b) * std::log(o(c, b) / std::max(e(c, b), kEps));
            }
        }
        obj.diversity = std::max(obj.diversity, 0.0);
    }
    obj.total = obj.clustering + state.lambda_div * obj.diversity;
    return obj;
}

void correct(HarmonyState& state) {
    const Eigen::Index n = state.z.rows();
    const Eigen::Index k = state.r.cols();
    const int nb = state.n_batches;

    // soft means per cluster and per (cluster, batch)
    Eigen::MatrixXd cluster_mean = Eigen::MatrixXd::Zero(k, state.z.cols());
    Eigen::VectorXd cluster_mass = Eigen::VectorXd::Zero(k);
    std::vector<Eigen::MatrixXd> batch_mean(static_cast<std::size_t>(nb),
                                            Eigen::MatrixXd::Zero(k, state.z.cols()));
    Eigen::MatrixXd batch_mass = Eigen::MatrixXd::Zero(k, nb);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int b = state.batches[static_cast<std::size_t>(i)];
        for (Eigen::Index c = 0; c < k; ++c) {
            const double r = state.r(i, c);
            cluster_mean.row(c) += r * state.z.row(i);
            cluster_mass(c) += r;
            batch_mean[static_cast<std::size_t>(b)].row(c) += r * state.z.row(i);
            batch_mass(c, b) += r;
        }
    }
    for (Eigen::Index c = 0; c < k; ++c) {
        if (cluster_mass(c) > kEps) cluster_mean.row(c) /= cluster_mass(c);
        for (int b = 0; b < nb; ++b) {
            if (batch_mass(c, b) > kEps) {
                batch_mean[static_cast<std::size_t>(b)].row(c) /= batch_mass(c, b);
            } else {
                batch_mean[static_cast<std::size_t>(b)].row(c) = cluster_mean.row(c);  // no shift
            }
        }
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        const int b = state.batches[static_cast<std::size_t>(i)];
        Eigen::RowVectorXd shift = Eigen::RowVectorXd::Zero(state.z.cols());
        for (Eigen::Index c = 0; c < k; ++c) {
            shift += state.r(i, c) * (batch_mean[static_cast<std::size_t>(b)].row(c) - cluster_mean.row(c));
        }
        state.z.row(i) -= shift;
    }
}

Embeddings run_harmony(const Eigen::MatrixXd& embeddings, const std::vector<int>& batches,
                       const HarmonyConfig& cfg) {
    HarmonyState state = harmony_init(embeddings, batches, cfg);
    for (int round = 0; round < cfg.rounds; ++round) {
        if (round > 0) soft_assign(state);
        correct(state);
        state.round = round + 1;
    }
    Embeddings out;
    out.provenance = "corrected";
    out.values = std::move(state.z);
    return out;
}

}  // namespace morekit::harmony
