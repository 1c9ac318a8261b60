#include "morekit/model.hpp"

#include <stdexcept>

#include "morekit/rng.hpp"
#include "morekit/types.hpp"

namespace morekit::model {

namespace {

void fill_normal(Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    }
}

}  // namespace

MoreParams init_more_params(int n_modalities, int d, int n_batches, int n_classes,
                            int n_genes_out, int refine_depth, std::uint64_t seed) {
    if (n_modalities < 1 || d < 1 || n_batches < 1 || n_genes_out < 0 || refine_depth < 0) {
        throw std::invalid_argument("init_more_params: bad dimensions");
    }
    if (n_classes < 1) n_classes = 1;
    Rng rng(seed);
    MoreParams p;
    p.d = d;
    p.n_modalities = n_modalities;
    p.n_batches = n_batches;
    p.n_classes = n_classes;
    p.n_genes_out = n_genes_out;
    p.refine_depth = refine_depth;

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    p.adapters.resize(static_cast<std::size_t>(n_modalities));
    p.fusion_weights.resize(static_cast<std::size_t>(n_modalities));
    for (auto& a : p.adapters) {
        fill_normal(a.w1, d, d, scale, rng);
        a.b1 = Eigen::VectorXd::Zero(d);
        fill_normal(a.w2, d, d, scale, rng);
        a.b2 = Eigen::VectorXd::Zero(d);
    }
    for (auto& w : p.fusion_weights) w = Eigen::VectorXd::Ones(d);
    p.batch_embeddings = Eigen::MatrixXd::Zero(n_batches, d);
    fill_normal(p.refiner.w1, d, d, scale, rng);
    p.refiner.b1 = Eigen::VectorXd::Zero(d);
    p.refiner.w2 = Eigen::MatrixXd::Zero(d, d);  // refinement starts as identity
    p.refiner.b2 = Eigen::VectorXd::Zero(d);
    fill_normal(p.classifier_w, n_classes, d, scale, rng);
    p.classifier_b = Eigen::VectorXd::Zero(n_classes);
    fill_normal(p.decoder_w, n_genes_out, d, scale, rng);
    p.decoder_b = Eigen::VectorXd::Zero(n_genes_out);
    return p;
}

MoreParams zeros_like(const MoreParams& p) {
    MoreParams z = p;
    for (auto& a : z.adapters) {
        a.w1.setZero();
        a.b1.setZero();
        a.w2.setZero();
        a.b2.setZero();
    }
    for (auto& w : z.fusion_weights) w.setZero();
    z.batch_embeddings.setZero();
    z.refiner.w1.setZero();
    z.refiner.b1.setZero();
    z.refiner.w2.setZero();
    z.refiner.b2.setZero();
    z.classifier_w.setZero();
    z.classifier_b.setZero();
    z.decoder_w.setZero();
    z.decoder_b.setZero();
    return z;
}

std::vector<TensorRef> tensor_refs(MoreParams& p) {
    std::vector<TensorRef> refs;
    auto push = [&refs](const std::string& name, Eigen::MatrixXd& m) {
        refs.push_back({name, m.data(), static_cast<std::size_t>(m.size())});
    };
    auto push_v = [&refs](const std::string& name, Eigen::VectorXd& v) {
        refs.push_back({name, v.data(), static_cast<std::size_t>(v.size())});
    };
    for (int m = 0; m < p.n_modalities; ++m) {
        const std::string base = "adapter.m" + std::to_string(m) + ".";
        auto& a = p.adapters[static_cast<std::size_t>(m)];
        push(base + "w1", a.w1);
        push_v(base + "b1", a.b1);
        push(base + "w2", a.w2);
        push_v(base + "b2", a.b2);
    }
    for (int m = 0; m < p.n_modalities; ++m) {
        push_v("fusion.omega.m" + std::to_string(m), p.fusion_weights[static_cast<std::size_t>(m)]);
    }
    push("batch_emb", p.batch_embeddings);
    push("refiner.w1", p.refiner.w1);
    push_v("refiner.b1", p.refiner.b1);
    push("refiner.w2", p.refiner.w2);
    push_v("refiner.b2", p.refiner.b2);
    push("classifier.w", p.classifier_w);
    push_v("classifier.b", p.classifier_b);
    push("decoder.w", p.decoder_w);
    push_v("decoder.b", p.decoder_b);
    return refs;
}

std::size_t trainable_parameter_count(const MoreParams& p) {
    std::size_t total = 0;
    for (const auto& ref : tensor_refs(const_cast<MoreParams&>(p))) total += ref.size;
    return total;
}

Eigen::VectorXd adapt(const MoreParams& p, int modality, const Eigen::VectorXd& z_raw) {
    const auto& a = p.adapters.at(static_cast<std::size_t>(modality));
    return a.w2 * (a.w1 * z_raw + a.b1).array().tanh().matrix() + a.b2;
}

Eigen::VectorXd fuse(const MoreParams& p, const std::vector<Eigen::VectorXd>& z_m) {
    if (z_m.empty()) throw std::invalid_argument("fuse: no modality present");
    if (z_m.size() > p.fusion_weights.size()) throw std::invalid_argument("fuse: too many modalities");
    Eigen::VectorXd z_f = Eigen::VectorXd::Zero(p.d);
    for (std::size_t m = 0; m < z_m.size(); ++m) {
        z_f.array() += p.fusion_weights[m].array() * z_m[m].array();
    }
    return z_f;
}

Eigen::VectorXd refine(const MoreParams& p, const Eigen::VectorXd& z_f, int batch_index,
                       ForwardTrace* trace) {
    if (batch_index < 0 || batch_index >= p.n_batches) {
        throw std::invalid_argument("refine: batch index " + std::to_string(batch_index) +
                                    " out of range [0, " + std::to_string(p.n_batches) + ")");
    }
    Eigen::VectorXd z = z_f;
    if (trace) {
        trace->z_tilde.clear();
        trace->refine_hidden.clear();
        trace->z_tilde.push_back(z);
    }
    const Eigen::VectorXd b = p.batch_embeddings.row(batch_index).transpose();
    for (int t = 0; t < p.refine_depth; ++t) {
        const Eigen::VectorXd hidden = (p.refiner.w1 * (z - b) + p.refiner.b1).array().tanh();
        z += p.refiner.w2 * hidden + p.refiner.b2;
        if (trace) {
            trace->refine_hidden.push_back(hidden);
            trace->z_tilde.push_back(z);
        }
    }
    return z;
}

Eigen::VectorXd classify(const MoreParams& p, const Eigen::VectorXd& z_tilde) {
    return p.classifier_w * z_tilde + p.classifier_b;
}

Eigen::VectorXd decode_masked(const MoreParams& p, const Eigen::VectorXd& z_tilde,
                              const std::vector<int>& mask_set) {
    Eigen::VectorXd pred(static_cast<Eigen::Index>(mask_set.size()));
    for (std::size_t i = 0; i < mask_set.size(); ++i) {
        const int t = mask_set[i];
        if (t < 0 || t >= p.n_genes_out) throw std::invalid_argument("decode_masked: mask index out of range");
        pred(static_cast<Eigen::Index>(i)) = p.decoder_w.row(t).dot(z_tilde) + p.decoder_b(t);
    }
    return pred;
}

ForwardTrace forward(const MoreParams& p, const std::vector<Eigen::VectorXd>& z_raw,
                     int batch_index, const std::vector<int>& mask_set) {
    if (z_raw.empty() || z_raw.size() > p.adapters.size()) {
        throw std::invalid_argument("forward: modality count mismatch");
    }
    ForwardTrace trace;
    trace.adapter_hidden.resize(z_raw.size());
    trace.z_m.resize(z_raw.size());
    for (std::size_t m = 0; m < z_raw.size(); ++m) {
        const auto& a = p.adapters[m];
        trace.adapter_hidden[m] = (a.w1 * z_raw[m] + a.b1).array().tanh();
        trace.z_m[m] = a.w2 * trace.adapter_hidden[m] + a.b2;
    }
    trace.z_f = fuse(p, trace.z_m);
    refine(p, trace.z_f, batch_index, &trace);
    trace.logits = classify(p, trace.z_tilde.back());
    trace.masked_pred = decode_masked(p, trace.z_tilde.back(), mask_set);
    if (!trace.z_tilde.back().allFinite() || !trace.logits.allFinite()) {
        throw numerical_error("forward: non-finite activation");
    }
    return trace;
}

}  // namespace morekit::model
