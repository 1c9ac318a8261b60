#include "morekit/backbone.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

#include "morekit/rng.hpp"
#include "morekit/types.hpp"

namespace morekit::backbone {

namespace {

constexpr double kLnEps = 1e-5;

void fill_matrix(Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    }
}

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& scale,
                           const Eigen::VectorXd& offset) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        out.row(i) = ((x.row(i).array() - mean) * inv) * scale.transpose().array() +
                     offset.transpose().array();
    }
    return out;
}

double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v * 0.70710678118654752440)); }

}  // namespace

void BackboneSpec::validate() const {
    if (n_tokens < 1 || d_model < 1 || layers < 1 || heads < 1) {
        throw std::invalid_argument("backbone: dimensions must be positive");
    }
    if (d_model % heads != 0) {
        throw std::invalid_argument("backbone: d_model " + std::to_string(d_model) +
                                    " not divisible by heads " + std::to_string(heads));
    }
}

BackboneWeights init_frozen_backbone(const BackboneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    BackboneWeights w;
    w.spec = spec;
    const auto d = static_cast<Eigen::Index>(spec.d_model);
    const auto g = static_cast<Eigen::Index>(spec.n_tokens);
    const auto f = static_cast<Eigen::Index>(spec.d_ff());
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(spec.d_model));
    const double inv_sqrt_f = 1.0 / std::sqrt(static_cast<double>(spec.d_ff()));

    fill_matrix(w.gene_embedding, g, d, 1.0, rng);
    w.value_projection.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) w.value_projection(j) = rng.normal();

    w.layers.resize(static_cast<std::size_t>(spec.layers));
    for (auto& layer : w.layers) {
        layer.ln1_scale = Eigen::VectorXd::Ones(d);
        layer.ln1_offset = Eigen::VectorXd::Zero(d);
        fill_matrix(layer.wq, d, d, inv_sqrt_d, rng);
        fill_matrix(layer.wk, d, d, inv_sqrt_d, rng);
        fill_matrix(layer.wv, d, d, inv_sqrt_d, rng);
        fill_matrix(layer.wo, d, d, inv_sqrt_d, rng);
        layer.bq = Eigen::VectorXd::Zero(d);
        layer.bk = Eigen::VectorXd::Zero(d);
        layer.bv = Eigen::VectorXd::Zero(d);
        layer.bo = Eigen::VectorXd::Zero(d);
        layer.ln2_scale = Eigen::VectorXd::Ones(d);
        layer.ln2_offset = Eigen::VectorXd::Zero(d);
        fill_matrix(layer.ff1, d, f, inv_sqrt_d, rng);
        layer.ff1_b = Eigen::VectorXd::Zero(f);
        fill_matrix(layer.ff2, f, d, inv_sqrt_f, rng);
        layer.ff2_b = Eigen::VectorXd::Zero(d);
    }
    w.content_hash = backbone_hash(w);
    return w;
}

std::uint64_t backbone_hash(const BackboneWeights& w) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const double* data, std::size_t n) {
        h = fnv1a64(data, n * sizeof(double), h);
    };
    mix(w.gene_embedding.data(), static_cast<std::size_t>(w.gene_embedding.size()));
    mix(w.value_projection.data(), static_cast<std::size_t>(w.value_projection.size()));
    for (const auto& layer : w.layers) {
        mix(layer.ln1_scale.data(), static_cast<std::size_t>(layer.ln1_scale.size()));
        mix(layer.ln1_offset.data(), static_cast<std::size_t>(layer.ln1_offset.size()));
        mix(layer.wq.data(), static_cast<std::size_t>(layer.wq.size()));
        mix(layer.bq.data(), static_cast<std::size_t>(layer.bq.size()));
        mix(layer.wk.data(), static_cast<std::size_t>(layer.wk.size()));
        mix(layer.bk.data(), static_cast<std::size_t>(layer.bk.size()));
        mix(layer.wv.data(), static_cast<std::size_t>(layer.wv.size()));
        mix(layer.bv.data(), static_cast<std::size_t>(layer.bv.size()));
        mix(layer.wo.data(), static_cast<std::size_t>(layer.wo.size()));
        mix(layer.bo.data(), static_cast<std::size_t>(layer.bo.size()));
        mix(layer.ln2_scale.data(), static_cast<std::size_t>(layer.ln2_scale.size()));
        mix(layer.ln2_offset.data(), static_cast<std::size_t>(layer.ln2_offset.size()));
        mix(layer.ff1.data(), static_cast<std::size_t>(layer.ff1.size()));
        mix(layer.ff1_b.data(), static_cast<std::size_t>(layer.ff1_b.size()));
        mix(layer.ff2.data(), static_cast<std::size_t>(layer.ff2.size()));
        mix(layer.ff2_b.data(), static_cast<std::size_t>(layer.ff2_b.size()));
    }
    return h;
}

Eigen::VectorXd encode(const BackboneWeights& w, const Eigen::VectorXd& x) {
    const auto& spec = w.spec;
    if (x.size() != spec.n_tokens) {
        throw std::invalid_argument("encode: expected " + std::to_string(spec.n_tokens) +
                                    " values, got " + std::to_string(x.size()));
    }
    if (!x.allFinite()) throw numerical_error("encode: non-finite input");

    const int n_heads = spec.heads;
    const Eigen::Index d_head = spec.d_model / n_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(d_head));

    // tokens: identity embedding plus the scalar expression on a shared direction
    Eigen::MatrixXd t = w.gene_embedding + x * w.value_projection.transpose();

    for (const auto& layer : w.layers) {
        const Eigen::MatrixXd y = layer_norm(t, layer.ln1_scale, layer.ln1_offset);
        Eigen::MatrixXd q = (y * layer.wq).rowwise() + layer.bq.transpose();
        Eigen::MatrixXd k = (y * layer.wk).rowwise() + layer.bk.transpose();
        Eigen::MatrixXd v = (y * layer.wv).rowwise() + layer.bv.transpose();
        Eigen::MatrixXd mixed(t.rows(), t.cols());
        for (int h = 0; h < n_heads; ++h) {
            const Eigen::Index off = static_cast<Eigen::Index>(h) * d_head;
            Eigen::MatrixXd scores =
                (q.middleCols(off, d_head) * k.middleCols(off, d_head).transpose()) * inv_sqrt_dh;
            for (Eigen::Index i = 0; i < scores.rows(); ++i) {
                const double m = scores.row(i).maxCoeff();
                Eigen::ArrayXd e = (scores.row(i).array() - m).exp();
                scores.row(i) = e / e.sum();
            }
            mixed.middleCols(off, d_head) = scores * v.middleCols(off, d_head);
        }
        t += (mixed * layer.wo).rowwise() + layer.bo.transpose();

        const Eigen::MatrixXd y2 = layer_norm(t, layer.ln2_scale, layer.ln2_offset);
        Eigen::MatrixXd hidden = (y2 * layer.ff1).rowwise() + layer.ff1_b.transpose();
        hidden = hidden.unaryExpr([](double u) { return gelu(u); });
        t += (hidden * layer.ff2).rowwise() + layer.ff2_b.transpose();
    }
    return t.colwise().mean();
}

Eigen::MatrixXd encode_rows(const BackboneWeights& w, const Eigen::MatrixXd& x, int threads) {
    Eigen::MatrixXd out(x.rows(), w.spec.d_model);
    auto work = [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index i = begin; i < end; ++i) {
            out.row(i) = encode(w, x.row(i).transpose()).transpose();
        }
    };
    if (threads <= 1 || x.rows() < 2) {
        work(0, x.rows());
        return out;
    }
    const int nw = std::min<int>(threads, static_cast<int>(x.rows()));
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (x.rows() + nw - 1) / nw;
    for (int t = 0; t < nw; ++t) {
        const Eigen::Index begin = t * chunk;
        const Eigen::Index end = std::min<Eigen::Index>(begin + chunk, x.rows());
        if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
    return out;
}

std::size_t parameter_count(const BackboneSpec& spec) {
    const std::size_t d = static_cast<std::size_t>(spec.d_model);
    const std::size_t g = static_cast<std::size_t>(spec.n_tokens);
    const std::size_t f = static_cast<std::size_t>(spec.d_ff());
    const std::size_t per_layer = 4 * (d * d + d)  // attention projections
                                  + 4 * d          // two layer norms
                                  + (d * f + f) + (f * d + d);
    return g * d + d + static_cast<std::size_t>(spec.layers) * per_layer;
}

}  // namespace morekit::backbone
