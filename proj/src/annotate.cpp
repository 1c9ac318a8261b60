#include "morekit/annotate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "morekit/kmeans.hpp"
#include "morekit/knn.hpp"

namespace morekit::annotate {

std::pair<std::vector<int>, std::vector<double>> predict(const model::MoreParams& params,
                                                         const Eigen::MatrixXd& embeddings) {
    const Eigen::Index n = embeddings.rows();
    if (embeddings.cols() != params.d) throw std::invalid_argument("predict: embedding dimension mismatch");
    std::vector<int> labels(static_cast<std::size_t>(n));
    std::vector<double> conf(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd logits = model::classify(params, embeddings.row(i).transpose());
        const double mx = logits.maxCoeff();
        Eigen::ArrayXd p = (logits.array() - mx).exp();
        p /= p.sum();
        int best = 0;
        for (Eigen::Index c = 1; c < p.size(); ++c) {
            if (p(c) > p(best)) best = static_cast<int>(c);  // ties keep the lower index
        }
        labels[static_cast<std::size_t>(i)] = best;
        conf[static_cast<std::size_t>(i)] = p(best);
    }
    return {std::move(labels), std::move(conf)};
}

std::vector<int> majority_vote(const std::vector<int>& labels, const std::vector<int>& clusters) {
    if (labels.size() != clusters.size()) throw std::invalid_argument("majority_vote: length mismatch");
    int n_clusters = 0, n_labels = 0;
    for (int c : clusters) n_clusters = std::max(n_clusters, c + 1);
    for (int l : labels) n_labels = std::max(n_labels, l + 1);
    std::vector<std::vector<int>> counts(static_cast<std::size_t>(n_clusters),
                                         std::vector<int>(static_cast<std::size_t>(n_labels), 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        counts[static_cast<std::size_t>(clusters[i])][static_cast<std::size_t>(labels[i])] += 1;
    }
    std::vector<int> winner(static_cast<std::size_t>(n_clusters), 0);
    for (int c = 0; c < n_clusters; ++c) {
        int best = 0;
        for (int l = 1; l < n_labels; ++l) {
            if (counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)] >
                counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(best)]) {
                best = l;
            }
        }
        winner[static_cast<std::size_t>(c)] = best;
    }
    std::vector<int> voted(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) voted[i] = winner[static_cast<std::size_t>(clusters[i])];
    return voted;
}

PropagateResult propagate_refine(const std::vector<int>& labels, const std::vector<double>& confidences,
                                 const Eigen::MatrixXd& embeddings, int k, double conf_threshold,
                                 int max_rounds) {
    const std::size_t n = labels.size();
    if (confidences.size() != n || static_cast<std::size_t>(embeddings.rows()) != n) {
        throw std::invalid_argument("propagate_refine: length mismatch");
    }
    if (k < 1) throw std::invalid_argument("propagate_refine: k must be >= 1");

    PropagateResult result;
    result.labels = labels;
    result.stabilized_round.assign(n, 0);

    std::vector<char> resolved(n, 0);
    bool any_uncertain = false;
    for (std::size_t i = 0; i < n; ++i) {
        resolved[i] = confidences[i] >= conf_threshold ? 1 : 0;
        any_uncertain = any_uncertain || !resolved[i];
    }
    if (!any_uncertain || n < 2) return result;

    const int k_eff = std::min<int>(k, static_cast<int>(n) - 1);
    const auto neighbours = knn_within(embeddings, k_eff);

    int n_labels = 0;
    for (int l : labels) n_labels = std::max(n_labels, l + 1);

    for (int round = 1; round <= max_rounds; ++round) {
        bool changed = false;
        std::vector<char> next_resolved = resolved;
        std::vector<int> next_labels = result.labels;
        for (std::size_t i = 0; i < n; ++i) {
            if (resolved[i]) continue;
            // majority over the k nearest currently-resolved neighbours
            std::vector<int> votes(static_cast<std::size_t>(n_labels), 0);
            int found = 0;
            for (int j : neighbours[i]) {
                if (resolved[static_cast<std::size_t>(j)]) {
                    votes[static_cast<std::size_t>(result.labels[static_cast<std::size_t>(j)])] += 1;
                    ++found;
                }
            }
            if (found == 0) continue;  // no resolved neighbour yet; keep label
            int best = 0;
            for (int l = 1; l < n_labels; ++l) {
                if (votes[static_cast<std::size_t>(l)] > votes[static_cast<std::size_t>(best)]) best = l;
            }
            next_resolved[i] = 1;
            if (best != result.labels[i]) {
                next_labels[i] = best;
                result.stabilized_round[i] = round;
                changed = true;
            }
        }
        const bool newly_resolved = next_resolved != resolved;
        resolved.swap(next_resolved);
        result.labels.swap(next_labels);
        if (!changed && !newly_resolved) break;
    }
    return result;
}

AnnotationResult annotate(const model::MoreParams& params, const Eigen::MatrixXd& embeddings,
                          const AnnotateConfig& cfg) {
    AnnotationResult result;
    auto [predicted, confidence] = predict(params, embeddings);
    result.predicted = predicted;
    result.confidence = confidence;

    const int k_clusters = cfg.clusters > 0 ? cfg.clusters : 2 * params.n_classes;
    result.cluster = kmeans(embeddings, k_clusters, cfg.seed).assignment;
    result.voted = majority_vote(predicted, result.cluster);

    auto refined = propagate_refine(result.voted, confidence, embeddings, cfg.knn,
                                    cfg.conf_threshold, cfg.max_rounds);
    result.final_label = std::move(refined.labels);
    result.stabilized_round = std::move(refined.stabilized_round);
    return result;
}

void write_annotation(const AnnotationResult& result, const std::vector<std::string>& barcodes,
                      const std::string& path, const std::vector<std::string>& comments) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "barcode\tpredicted\tconfidence\tvoted\tfinal\tstabilized_round\n";
    char tmp[192];
    for (std::size_t i = 0; i < barcodes.size(); ++i) {
        std::snprintf(tmp, sizeof(tmp), "%s\t%d\t%.9g\t%d\t%d\t%d\n", barcodes[i].c_str(),
                      result.predicted[i], result.confidence[i], result.voted[i],
                      result.final_label[i], result.stabilized_round[i]);
        out << tmp;
    }
}

MarkerReport marker_report(const ExpressionMatrix& x, const std::vector<std::string>& markers,
                           const std::vector<int>& final_labels, int n_labels) {
    if (final_labels.size() != x.n_cells) throw std::invalid_argument("marker_report: label length mismatch");
    std::unordered_map<std::string, std::uint32_t> gene_index;
    for (std::size_t g = 0; g < x.n_genes; ++g) gene_index[x.gene_names[g]] = static_cast<std::uint32_t>(g);

    MarkerReport report;
    std::vector<std::uint32_t> cols;
    for (const auto& m : markers) {
        const auto it = gene_index.find(m);
        if (it == gene_index.end()) continue;  // unknown markers skipped
        report.genes.push_back(m);
        cols.push_back(it->second);
    }
    std::vector<double> label_count(static_cast<std::size_t>(n_labels), 0.0);
    for (int l : final_labels) label_count[static_cast<std::size_t>(l)] += 1.0;

    report.mean_expression =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cols.size()), static_cast<Eigen::Index>(n_labels));
    std::vector<std::int64_t> col_of(x.n_genes, -1);
    for (std::size_t c = 0; c < cols.size(); ++c) col_of[cols[c]] = static_cast<std::int64_t>(c);
    for (std::size_t i = 0; i < x.n_cells; ++i) {
        const int l = final_labels[i];
        for (std::size_t p = x.row_offsets[i]; p < x.row_offsets[i + 1]; ++p) {
            const std::int64_t c = col_of[x.col_indices[p]];
            if (c >= 0) report.mean_expression(c, l) += x.values[p];
        }
    }
    for (int l = 0; l < n_labels; ++l) {
        if (label_count[static_cast<std::size_t>(l)] > 0.0) {
            report.mean_expression.col(l) /= label_count[static_cast<std::size_t>(l)];
        }
    }
    return report;
}

void write_marker_report(const MarkerReport& report, const std::string& path,
                         const std::vector<std::string>& comments) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "gene";
    for (Eigen::Index l = 0; l < report.mean_expression.cols(); ++l) out << "\tlabel_" << l;
    out << "\n";
    char tmp[40];
    for (std::size_t g = 0; g < report.genes.size(); ++g) {
        out << report.genes[g];
        for (Eigen::Index l = 0; l < report.mean_expression.cols(); ++l) {
            std::snprintf(tmp, sizeof(tmp), "\t%.9g", report.mean_expression(static_cast<Eigen::Index>(g), l));
            out << tmp;
        }
        out << "\n";
    }
}

}  // namespace morekit::annotate
