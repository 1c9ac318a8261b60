#include "morekit/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "morekit/rng.hpp"
#include "morekit/types.hpp"

namespace morekit::train {

namespace {

constexpr double kNormFloor = 1e-12;

bool has_positive_pair(const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
    if (labels.empty()) return false;
    std::set<int> seen;
    for (std::size_t i : idx) {
        if (!seen.insert(labels[i]).second) return true;
    }
    return false;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), static_cast<std::size_t>(0));
    return idx;
}

}  // namespace

void LossWeights::validate() const {
    if (lambda_ce < 0 || lambda_supcon < 0 || lambda_align < 0 || lambda_var < 0 || lambda_mse < 0) {
        throw std::invalid_argument("loss weights must be nonnegative");
    }
    if (!(tau > 0)) throw std::invalid_argument("supcon temperature must be positive");
    if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw std::invalid_argument("mask rate must be in [0,1)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (minibatch < 2) throw std::invalid_argument("minibatch must be >= 2");
    if (learning_rate < 0) throw std::invalid_argument("learning rate must be nonnegative");
}

double loss_ce(const Eigen::VectorXd& logits, int label) {
    if (label < 0 || label >= logits.size()) throw std::invalid_argument("loss_ce: label out of range");
    const double m = logits.maxCoeff();
    const double lse = std::log((logits.array() - m).exp().sum()) + m;
    return lse - logits(label);
}

double loss_supcon(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, double tau) {
    const Eigen::Index n = embeddings.rows();
    if (static_cast<std::size_t>(n) != labels.size()) throw std::invalid_argument("loss_supcon: length mismatch");
    if (n < 2) throw std::invalid_argument("loss_supcon: need at least 2 samples");
    Eigen::MatrixXd zh(n, embeddings.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = embeddings.row(i).norm();
        if (r < kNormFloor) throw numerical_error("loss_supcon: zero-norm embedding");
        zh.row(i) = embeddings.row(i) / r;
    }
    const Eigen::MatrixXd s = (zh * zh.transpose()) / tau;

    double total = 0.0;
    int anchors = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        int n_pos = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i && labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) ++n_pos;
        }
        if (n_pos == 0) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) mx = std::max(mx, s(i, j));
        }
        double denom = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) denom += std::exp(s(i, j) - mx);
        }
        const double lse = std::log(denom) + mx;
        double anchor_loss = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i && labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
                anchor_loss -= s(i, j) - lse;
            }
        }
        total += anchor_loss / n_pos;
        ++anchors;
    }
    if (anchors == 0) throw std::runtime_error("loss_supcon: degenerate batch, no anchor has a positive");
    return total / anchors;
}

double loss_align(const std::vector<Eigen::MatrixXd>& z_m, const Eigen::MatrixXd& z_f) {
    if (z_m.empty()) throw std::invalid_argument("loss_align: no modality present");
    const double d = static_cast<double>(z_f.cols());
    const double n = static_cast<double>(z_f.rows());
    double total = 0.0;
    for (const auto& z : z_m) total += (z - z_f).squaredNorm();
    return total / (static_cast<double>(z_m.size()) * n * d);
}

double loss_intra(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels) {
    const Eigen::Index n = embeddings.rows();
    if (static_cast<std::size_t>(n) != labels.size()) throw std::invalid_argument("loss_intra: length mismatch");
    if (n == 0) throw std::invalid_argument("loss_intra: empty batch");
    std::map<int, std::pair<Eigen::VectorXd, int>> stats;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto it = stats.find(labels[static_cast<std::size_t>(i)]);
        if (it == stats.end()) {
            stats.emplace(labels[static_cast<std::size_t>(i)],
                          std::make_pair(Eigen::VectorXd(embeddings.row(i).transpose()), 1));
        } else {
            it->second.first += embeddings.row(i).transpose();
            it->second.second += 1;
        }
    }
    double total = 0.0;
    for (auto& [label, acc] : stats) {
        acc.first /= static_cast<double>(acc.second);
    }
    std::map<int, double> per_class;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& [mean, count] = stats.at(labels[static_cast<std::size_t>(i)]);
        per_class[labels[static_cast<std::size_t>(i)]] +=
            (embeddings.row(i).transpose() - mean).squaredNorm() / static_cast<double>(count);
    }
    for (const auto& [label, v] : per_class) total += v;
    return total / static_cast<double>(stats.size());
}

double loss_masked_mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets_full,
                       const std::vector<int>& mask_set) {
    if (mask_set.empty()) return 0.0;
    if (predictions.size() != static_cast<Eigen::Index>(mask_set.size())) {
        throw std::invalid_argument("loss_masked_mse: predictions not aligned to mask set");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < mask_set.size(); ++i) {
        const double diff = predictions(static_cast<Eigen::Index>(i)) - targets_full(mask_set[i]);
        total += diff * diff;
    }
    return total / static_cast<double>(mask_set.size());
}

double total_loss(const LossTerms& terms, const LossWeights& weights) {
    return weights.lambda_ce * terms.ce + weights.lambda_supcon * terms.supcon +
           weights.lambda_align * terms.align + weights.lambda_var * terms.intra +
           weights.lambda_mse * terms.mse;
}

BatchTrace batch_forward(const model::MoreParams& params, const TrainData& data,
                         const std::vector<std::size_t>& idx, const std::vector<int>& mask_set) {
    BatchTrace trace;
    trace.cells.reserve(idx.size());
    std::vector<Eigen::VectorXd> z_raw(data.z_raw.size());
    for (std::size_t i : idx) {
        for (std::size_t m = 0; m < data.z_raw.size(); ++m) {
            z_raw[m] = data.z_raw[m].row(static_cast<Eigen::Index>(i)).transpose();
        }
        trace.cells.push_back(model::forward(params, z_raw, data.batches[i], mask_set));
    }
    return trace;
}

LossTerms batch_loss(const BatchTrace& trace, const TrainData& data,
                     const std::vector<std::size_t>& idx, const std::vector<int>& mask_set,
                     const LossWeights& weights) {
    const std::size_t n = idx.size();
    if (n == 0 || trace.cells.size() != n) throw std::invalid_argument("batch_loss: bad batch");
    const std::size_t n_mod = trace.cells[0].z_m.size();
    const int d = static_cast<int>(trace.cells[0].z_f.size());

    LossTerms terms;
    std::vector<int> batch_labels;
    if (!data.labels.empty()) {
        batch_labels.reserve(n);
        for (std::size_t i : idx) batch_labels.push_back(data.labels[i]);
    }

    Eigen::MatrixXd refined(n, d);
    for (std::size_t c = 0; c < n; ++c) refined.row(static_cast<Eigen::Index>(c)) = trace.cells[c].z_tilde.back().transpose();

    if (weights.lambda_ce > 0) {
        if (batch_labels.empty()) throw std::invalid_argument("batch_loss: ce term requires labels");
        for (std::size_t c = 0; c < n; ++c) terms.ce += loss_ce(trace.cells[c].logits, batch_labels[c]);
        terms.ce /= static_cast<double>(n);
    }
    if (weights.lambda_supcon > 0 && n >= 2 && has_positive_pair(data.labels, idx)) {
        terms.supcon = loss_supcon(refined, batch_labels, weights.tau);
    }
    if (weights.lambda_align > 0) {
        std::vector<Eigen::MatrixXd> z_m(n_mod, Eigen::MatrixXd(n, d));
        Eigen::MatrixXd z_f(n, d);
        for (std::size_t c = 0; c < n; ++c) {
            for (std::size_t m = 0; m < n_mod; ++m) z_m[m].row(static_cast<Eigen::Index>(c)) = trace.cells[c].z_m[m].transpose();
            z_f.row(static_cast<Eigen::Index>(c)) = trace.cells[c].z_f.transpose();
        }
        terms.align = loss_align(z_m, z_f);
    }
    if (weights.lambda_var > 0) {
        if (batch_labels.empty()) throw std::invalid_argument("batch_loss: intra term requires labels");
        terms.intra = loss_intra(refined, batch_labels);
    }
    if (weights.lambda_mse > 0 && !mask_set.empty()) {
        for (std::size_t c = 0; c < n; ++c) {
            terms.mse += loss_masked_mse(trace.cells[c].masked_pred,
                                         data.targets.row(static_cast<Eigen::Index>(idx[c])).transpose(), mask_set);
        }
        terms.mse /= static_cast<double>(n);
    }
    return terms;
}

model::MoreParams backward(const model::MoreParams& params, const BatchTrace& trace,
                           const TrainData& data, const std::vector<std::size_t>& idx,
                           const std::vector<int>& mask_set, const LossWeights& weights) {
    const std::size_t n = idx.size();
    const std::size_t n_mod = trace.cells[0].z_m.size();
    const int d = params.d;
    const double dn = static_cast<double>(n);

    model::MoreParams grads = model::zeros_like(params);

    std::vector<int> batch_labels;
    if (!data.labels.empty()) {
        batch_labels.reserve(n);
        for (std::size_t i : idx) batch_labels.push_back(data.labels[i]);
    }

    Eigen::MatrixXd refined(n, d);
    for (std::size_t c = 0; c < n; ++c) refined.row(static_cast<Eigen::Index>(c)) = trace.cells[c].z_tilde.back().transpose();

    // gradient w.r.t. each refined embedding, accumulated over loss terms
    Eigen::MatrixXd d_refined = Eigen::MatrixXd::Zero(n, d);

    // supcon: batch-coupled term on normalized embeddings
    const bool supcon_active =
        weights.lambda_supcon > 0 && n >= 2 && !batch_labels.empty() && has_positive_pair(data.labels, idx);
    if (supcon_active) {
        Eigen::MatrixXd zh(n, d);
        Eigen::VectorXd norms(n);
        for (std::size_t c = 0; c < n; ++c) {
            const double r = refined.row(static_cast<Eigen::Index>(c)).norm();
            if (r < kNormFloor) throw numerical_error("backward: zero-norm embedding in supcon");
            norms(static_cast<Eigen::Index>(c)) = r;
            zh.row(static_cast<Eigen::Index>(c)) = refined.row(static_cast<Eigen::Index>(c)) / r;
        }
        const Eigen::MatrixXd s = (zh * zh.transpose()) / weights.tau;
        std::vector<int> n_pos(n, 0);
        int anchors = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i && batch_labels[j] == batch_labels[i]) ++n_pos[i];
            }
            if (n_pos[i] > 0) ++anchors;
        }
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);  // dL/ds
        for (std::size_t i = 0; i < n; ++i) {
            if (n_pos[i] == 0) continue;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) mx = std::max(mx, s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) denom += std::exp(s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - mx);
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double soft =
                    std::exp(s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - mx) / denom;
                double val = soft;
                if (batch_labels[j] == batch_labels[i]) val -= 1.0 / static_cast<double>(n_pos[i]);
                g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    val / static_cast<double>(anchors);
            }
        }
        // dL/dzh_k = (1/tau) sum_j (g_kj + g_jk) zh_j, then through normalization
        const Eigen::MatrixXd gsym = g + g.transpose();
        const Eigen::MatrixXd d_zh = (gsym * zh) / weights.tau;
        for (std::size_t c = 0; c < n; ++c) {
            const Eigen::Index i = static_cast<Eigen::Index>(c);
            const Eigen::VectorXd zi = zh.row(i).transpose();
            const Eigen::VectorXd gi = d_zh.row(i).transpose();
            d_refined.row(i) += weights.lambda_supcon * ((gi - zi * zi.dot(gi)) / norms(i)).transpose();
        }
    }

    // cross entropy + classifier head
    if (weights.lambda_ce > 0) {
        for (std::size_t c = 0; c < n; ++c) {
            const Eigen::Index i = static_cast<Eigen::Index>(c);
            const Eigen::VectorXd& logits = trace.cells[c].logits;
            const double mx = logits.maxCoeff();
            Eigen::VectorXd p = (logits.array() - mx).exp();
            p /= p.sum();
            p(batch_labels[c]) -= 1.0;
            p *= weights.lambda_ce / dn;
            grads.classifier_w += p * refined.row(i);
            grads.classifier_b += p;
            d_refined.row(i) += (params.classifier_w.transpose() * p).transpose();
        }
    }

    // masked reconstruction + decoder head
    if (weights.lambda_mse > 0 && !mask_set.empty()) {
        const double scale = weights.lambda_mse * 2.0 / (dn * static_cast<double>(mask_set.size()));
        for (std::size_t c = 0; c < n; ++c) {
            const Eigen::Index i = static_cast<Eigen::Index>(c);
            const auto& pred = trace.cells[c].masked_pred;
            for (std::size_t t = 0; t < mask_set.size(); ++t) {
                const int gene = mask_set[t];
                const double dp =
                    scale * (pred(static_cast<Eigen::Index>(t)) - data.targets(static_cast<Eigen::Index>(idx[c]), gene));
                grads.decoder_w.row(gene) += dp * refined.row(i);
                grads.decoder_b(gene) += dp;
                d_refined.row(i) += dp * params.decoder_w.row(gene);
            }
        }
    }

    // intra-class variance
    if (weights.lambda_var > 0 && !batch_labels.empty()) {
        std::map<int, std::pair<Eigen::VectorXd, int>> stats;
        for (std::size_t c = 0; c < n; ++c) {
            auto it = stats.find(batch_labels[c]);
            if (it == stats.end()) {
                stats.emplace(batch_labels[c],
                              std::make_pair(Eigen::VectorXd(refined.row(static_cast<Eigen::Index>(c)).transpose()), 1));
            } else {
                it->second.first += refined.row(static_cast<Eigen::Index>(c)).transpose();
                it->second.second += 1;
            }
        }
        for (auto& [label, acc] : stats) acc.first /= static_cast<double>(acc.second);
        const double c_present = static_cast<double>(stats.size());
        for (std::size_t c = 0; c < n; ++c) {
            const auto& [mean, count] = stats.at(batch_labels[c]);
            d_refined.row(static_cast<Eigen::Index>(c)) +=
                (weights.lambda_var * 2.0 / (c_present * static_cast<double>(count))) *
                (refined.row(static_cast<Eigen::Index>(c)) - mean.transpose());
        }
    }

    // per-cell backward through refine, fusion and adapters
    const double align_scale =
        weights.lambda_align > 0 ? weights.lambda_align * 2.0 / (static_cast<double>(n_mod) * dn * static_cast<double>(d))
                                 : 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        const auto& cell = trace.cells[c];
        const int batch = data.batches[idx[c]];
        Eigen::VectorXd g = d_refined.row(static_cast<Eigen::Index>(c)).transpose();

        for (int t = params.refine_depth - 1; t >= 0; --t) {
            const Eigen::VectorXd& hidden = cell.refine_hidden[static_cast<std::size_t>(t)];
            const Eigen::VectorXd u =
                cell.z_tilde[static_cast<std::size_t>(t)] - params.batch_embeddings.row(batch).transpose();
            grads.refiner.w2 += g * hidden.transpose();
            grads.refiner.b2 += g;
            const Eigen::VectorXd dpre =
                (params.refiner.w2.transpose() * g).cwiseProduct((1.0 - hidden.array().square()).matrix());
            grads.refiner.w1 += dpre * u.transpose();
            grads.refiner.b1 += dpre;
            const Eigen::VectorXd du = params.refiner.w1.transpose() * dpre;
            grads.batch_embeddings.row(batch) -= du.transpose();
            g += du;
        }

        // fusion; align also contributes directly to z_f and z_m
        Eigen::VectorXd d_zf = g;
        if (align_scale > 0) {
            for (std::size_t m = 0; m < n_mod; ++m) d_zf += align_scale * (cell.z_f - cell.z_m[m]);
        }
        for (std::size_t m = 0; m < n_mod; ++m) {
            grads.fusion_weights[m].array() += d_zf.array() * cell.z_m[m].array();
            Eigen::VectorXd d_zm = (d_zf.array() * params.fusion_weights[m].array()).matrix();
            if (align_scale > 0) d_zm += align_scale * (cell.z_m[m] - cell.z_f);

            const auto& a = params.adapters[m];
            const Eigen::VectorXd& hidden = cell.adapter_hidden[m];
            const Eigen::VectorXd x = data.z_raw[m].row(static_cast<Eigen::Index>(idx[c])).transpose();
            grads.adapters[m].w2 += d_zm * hidden.transpose();
            grads.adapters[m].b2 += d_zm;
            const Eigen::VectorXd dpre =
                (a.w2.transpose() * d_zm).cwiseProduct((1.0 - hidden.array().square()).matrix());
            grads.adapters[m].w1 += dpre * x.transpose();
            grads.adapters[m].b1 += dpre;
        }
    }

    for (const auto& ref : model::tensor_refs(grads)) {
        for (std::size_t i = 0; i < ref.size; ++i) {
            if (!std::isfinite(ref.data[i])) {
                throw numerical_error("backward: non-finite gradient in tensor " + ref.name);
            }
        }
    }
    return grads;
}

double evaluate_loss(const model::MoreParams& params, const TrainData& data,
                     const std::vector<std::size_t>& idx, const std::vector<int>& mask_set,
                     const LossWeights& weights) {
    const BatchTrace trace = batch_forward(params, data, idx, mask_set);
    return total_loss(batch_loss(trace, data, idx, mask_set, weights), weights);
}

std::vector<EpochLoss> fit(model::MoreParams& params, const TrainData& data,
                           const TrainConfig& config, const LossWeights& weights) {
    config.validate();
    weights.validate();
    const std::size_t n = data.size();
    if (n < 2) throw std::invalid_argument("fit: need at least 2 cells");
    const bool needs_labels = weights.lambda_ce > 0 || weights.lambda_supcon > 0 || weights.lambda_var > 0;
    if (needs_labels && data.labels.empty()) {
        throw std::invalid_argument("fit: ce/supcon/intra weights are positive but the data has no labels");
    }

    model::MoreParams m1 = model::zeros_like(params);
    model::MoreParams m2 = model::zeros_like(params);
    auto p_refs = model::tensor_refs(params);
    auto m1_refs = model::tensor_refs(m1);
    auto m2_refs = model::tensor_refs(m2);

    Rng rng(config.seed);
    std::vector<std::size_t> order = all_indices(n);
    std::vector<EpochLoss> history;
    history.reserve(static_cast<std::size_t>(config.epochs));
    long step = 0;

    const int g_out = params.n_genes_out;
    const auto mask_count =
        static_cast<std::size_t>(std::floor(weights.mask_rate * static_cast<double>(g_out)));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        EpochLoss epoch_loss;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.minibatch)) {
            const std::size_t end = std::min(begin + static_cast<std::size_t>(config.minibatch), n);
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<int> mask_set;
            if (weights.lambda_mse > 0 && mask_count > 0) {
                auto sampled = rng.sample_without_replacement(static_cast<std::size_t>(g_out), mask_count);
                mask_set.assign(sampled.begin(), sampled.end());
                std::sort(mask_set.begin(), mask_set.end());
            }

            const BatchTrace trace = batch_forward(params, data, idx, mask_set);
            const LossTerms terms = batch_loss(trace, data, idx, mask_set, weights);
            const double total = total_loss(terms, weights);
            if (!std::isfinite(total)) {
                throw numerical_error("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                      " minibatch " + std::to_string(batch_index));
            }
            const model::MoreParams grads = backward(params, trace, data, idx, mask_set, weights);

            ++step;
            auto g_refs = model::tensor_refs(const_cast<model::MoreParams&>(grads));
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t t = 0; t < p_refs.size(); ++t) {
                double* p = p_refs[t].data;
                double* m = m1_refs[t].data;
                double* v = m2_refs[t].data;
                const double* g = g_refs[t].data;
                for (std::size_t i = 0; i < p_refs[t].size; ++i) {
                    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                    p[i] -= config.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.adam_eps);
                }
            }

            const double w = static_cast<double>(idx.size());
            epoch_loss.ce += terms.ce * w;
            epoch_loss.supcon += terms.supcon * w;
            epoch_loss.align += terms.align * w;
            epoch_loss.intra += terms.intra * w;
            epoch_loss.mse += terms.mse * w;
            epoch_loss.total += total * w;
            ++batch_index;
        }
        const double dn = static_cast<double>(n);
        epoch_loss.ce /= dn;
        epoch_loss.supcon /= dn;
        epoch_loss.align /= dn;
        epoch_loss.intra /= dn;
        epoch_loss.mse /= dn;
        epoch_loss.total /= dn;
        history.push_back(epoch_loss);
    }
    return history;
}

void write_loss_history(const std::vector<EpochLoss>& history, const std::string& path,
                        const std::vector<std::string>& comments) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "epoch,ce,supcon,align,intra,mse,total\n";
    char tmp[256];
    for (std::size_t e = 0; e < history.size(); ++e) {
        const auto& h = history[e];
        std::snprintf(tmp, sizeof(tmp), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", e, h.ce, h.supcon,
                      h.align, h.intra, h.mse, h.total);
        out << tmp;
    }
}

}  // namespace morekit::train
