#include "morekit/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "morekit/annotate.hpp"
#include "morekit/backbone.hpp"
#include "morekit/harmony.hpp"
#include "morekit/io.hpp"
#include "morekit/kmeans.hpp"
#include "morekit/metrics.hpp"
#include "morekit/prep.hpp"
#include "morekit/rng.hpp"
#include "morekit/svg.hpp"
#include "morekit/toml.hpp"

namespace morekit::cli {

namespace fs = std::filesystem;

namespace {

/// Exclusive lock on an output directory; released on destruction.
class OutDirLock {
public:
    explicit OutDirLock(const std::string& out_dir) {
        fs::create_directories(out_dir);
        path_ = fs::path(out_dir) / ".morekit.lock";
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) {
            throw std::runtime_error("output directory " + out_dir +
                                     " is locked by another run (remove " + path_.string() +
                                     " if stale)");
        }
        std::fclose(f);
    }
    ~OutDirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutDirLock(const OutDirLock&) = delete;
    OutDirLock& operator=(const OutDirLock&) = delete;

private:
    fs::path path_;
};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("MORE_KIT_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

void check_known_keys(const toml::Table& table, const std::string& path) {
    static const std::map<std::string, std::set<std::string>> schema = {
        {"data", {"matrix", "genes", "barcodes", "metadata", "transpose"}},
        {"prep", {"min_genes", "max_pct_mt", "target_sum", "hvg_top", "hvg_bins"}},
        {"model", {"tokens", "d_model", "layers", "heads", "refine_depth", "backbone_seed"}},
        {"train", {"epochs", "minibatch", "learning_rate", "seed"}},
        {"losses",
         {"lambda_ce", "lambda_supcon", "lambda_align", "lambda_var", "lambda_mse", "tau", "mask_rate"}},
        {"doublet", {"enabled", "rho", "ratio", "k", "pca_dims", "threshold"}},
    };
    for (const auto& [section, keys] : table.sections) {
        const auto it = schema.find(section);
        if (it == schema.end()) {
            throw std::runtime_error(path + ": unknown config section [" + section + "]");
        }
        for (const auto& [key, value] : keys) {
            if (!it->second.count(key)) {
                throw std::runtime_error(path + ": unknown config key [" + section + "] " + key);
            }
        }
    }
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

EmbedConfig load_embed_config(const std::string& path) {
    const toml::Table t = toml::parse_file(path);
    check_known_keys(t, path);
    EmbedConfig c;
    c.matrix = t.get_string("data", "matrix", "");
    c.genes = t.get_string("data", "genes", "");
    c.barcodes = t.get_string("data", "barcodes", "");
    c.metadata = t.get_string("data", "metadata", "");
    c.transpose = t.get_bool("data", "transpose", c.transpose);
    if (c.matrix.empty() || c.genes.empty() || c.barcodes.empty() || c.metadata.empty()) {
        throw std::runtime_error(path + ": [data] must set matrix, genes, barcodes and metadata");
    }
    // paths are relative to the config file
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&base](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative()) p = (base / p).string();
    };
    resolve(c.matrix);
    resolve(c.genes);
    resolve(c.barcodes);
    resolve(c.metadata);

    c.min_genes = t.get_int("prep", "min_genes", c.min_genes);
    c.max_pct_mt = t.get_double("prep", "max_pct_mt", c.max_pct_mt);
    c.target_sum = t.get_double("prep", "target_sum", c.target_sum);
    c.hvg_top = t.get_int("prep", "hvg_top", c.hvg_top);
    c.hvg_bins = t.get_int("prep", "hvg_bins", c.hvg_bins);

    c.tokens = t.get_int("model", "tokens", c.tokens);
    c.d_model = t.get_int("model", "d_model", c.d_model);
    c.layers = t.get_int("model", "layers", c.layers);
    c.heads = t.get_int("model", "heads", c.heads);
    c.refine_depth = t.get_int("model", "refine_depth", c.refine_depth);
    c.backbone_seed = t.get_int("model", "backbone_seed", c.backbone_seed);

    c.epochs = t.get_int("train", "epochs", c.epochs);
    c.minibatch = t.get_int("train", "minibatch", c.minibatch);
    c.learning_rate = t.get_double("train", "learning_rate", c.learning_rate);
    c.seed = t.get_int("train", "seed", c.seed);

    c.weights.lambda_ce = t.get_double("losses", "lambda_ce", c.weights.lambda_ce);
    c.weights.lambda_supcon = t.get_double("losses", "lambda_supcon", c.weights.lambda_supcon);
    c.weights.lambda_align = t.get_double("losses", "lambda_align", c.weights.lambda_align);
    c.weights.lambda_var = t.get_double("losses", "lambda_var", c.weights.lambda_var);
    c.weights.lambda_mse = t.get_double("losses", "lambda_mse", c.weights.lambda_mse);
    c.weights.tau = t.get_double("losses", "tau", c.weights.tau);
    c.weights.mask_rate = t.get_double("losses", "mask_rate", c.weights.mask_rate);
    c.weights.validate();

    c.doublet_enabled = t.get_bool("doublet", "enabled", c.doublet_enabled);
    c.doublet_rho = t.get_double("doublet", "rho", c.doublet_rho);
    c.doublet_ratio = t.get_double("doublet", "ratio", c.doublet_ratio);
    c.doublet_k = t.get_int("doublet", "k", c.doublet_k);
    c.doublet_pca_dims = t.get_int("doublet", "pca_dims", c.doublet_pca_dims);
    c.doublet_threshold = t.get_double("doublet", "threshold", c.doublet_threshold);
    return c;
}

std::string EmbedConfig::canonical() const {
    std::ostringstream out;
    out << "data.matrix=" << fs::path(matrix).filename().string() << "\n"
        << "data.genes=" << fs::path(genes).filename().string() << "\n"
        << "data.barcodes=" << fs::path(barcodes).filename().string() << "\n"
        << "data.metadata=" << fs::path(metadata).filename().string() << "\n"
        << "data.transpose=" << (transpose ? 1 : 0) << "\n"
        << "prep.min_genes=" << min_genes << "\n"
        << "prep.max_pct_mt=" << format_double(max_pct_mt) << "\n"
        << "prep.target_sum=" << format_double(target_sum) << "\n"
        << "prep.hvg_top=" << hvg_top << "\n"
        << "prep.hvg_bins=" << hvg_bins << "\n"
        << "model.tokens=" << tokens << "\n"
        << "model.d_model=" << d_model << "\n"
        << "model.layers=" << layers << "\n"
        << "model.heads=" << heads << "\n"
        << "model.refine_depth=" << refine_depth << "\n"
        << "model.backbone_seed=" << backbone_seed << "\n"
        << "train.epochs=" << epochs << "\n"
        << "train.minibatch=" << minibatch << "\n"
        << "train.learning_rate=" << format_double(learning_rate) << "\n"
        << "train.seed=" << seed << "\n"
        << "losses.lambda_ce=" << format_double(weights.lambda_ce) << "\n"
        << "losses.lambda_supcon=" << format_double(weights.lambda_supcon) << "\n"
        << "losses.lambda_align=" << format_double(weights.lambda_align) << "\n"
        << "losses.lambda_var=" << format_double(weights.lambda_var) << "\n"
        << "losses.lambda_mse=" << format_double(weights.lambda_mse) << "\n"
        << "losses.tau=" << format_double(weights.tau) << "\n"
        << "losses.mask_rate=" << format_double(weights.mask_rate) << "\n"
        << "doublet.enabled=" << (doublet_enabled ? 1 : 0) << "\n"
        << "doublet.rho=" << format_double(doublet_rho) << "\n"
        << "doublet.ratio=" << format_double(doublet_ratio) << "\n"
        << "doublet.k=" << doublet_k << "\n"
        << "doublet.pca_dims=" << doublet_pca_dims << "\n"
        << "doublet.threshold=" << format_double(doublet_threshold) << "\n";
    return out.str();
}

std::string EmbedConfig::hash_hex() const {
    const std::string c = canonical();
    return hex64(fnv1a64(c.data(), c.size()));
}

namespace {

nlohmann::ordered_json compute_metrics_json(const Eigen::MatrixXd& emb, const CellTable& cells,
                                            const std::string& config_hash, std::int64_t seed,
                                            int threads) {
    nlohmann::ordered_json j;
    if (cells.has_labels() && cells.n_labels() >= 2) {
        const auto clusters = kmeans(emb, cells.n_labels(), 0).assignment;
        j["ari"] = metrics::ari(clusters, cells.labels);
        j["silhouette"] = metrics::silhouette(emb, cells.labels);
        nlohmann::ordered_json recall;
        const auto per_class = metrics::cluster_class_recall(clusters, cells.labels);
        for (std::size_t l = 0; l < per_class.size(); ++l) {
            const std::string name = l < cells.label_names.size() ? cells.label_names[l] : std::to_string(l);
            recall[name] = per_class[l];
        }
        j["class_recall"] = recall;
    } else {
        j["ari"] = nullptr;
        j["silhouette"] = nullptr;
        j["class_recall"] = nlohmann::ordered_json::object();
    }
    j["batch_entropy"] = metrics::batch_entropy(emb, cells.batches, 15, threads);
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    return j;
}

void write_json(const nlohmann::ordered_json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

void write_scatter_pair(const Eigen::MatrixXd& emb, const CellTable& cells,
                        const std::string& out_dir, const std::vector<std::string>& comments) {
    const int k = std::min<int>(2, static_cast<int>(std::min(emb.rows(), emb.cols())));
    Eigen::MatrixXd flat;
    if (k == 2) {
        auto [model, scores] = prep::pca(emb, 2);
        flat = scores.values;
    } else {
        flat = Eigen::MatrixXd::Zero(emb.rows(), 2);
        flat.col(0) = emb.col(0);
    }
    svg::write_scatter((fs::path(out_dir) / "scatter_batch.svg").string(), flat, cells.batches,
                       cells.batch_names, "embedding (PCA-2), colored by batch", comments);
    if (cells.has_labels()) {
        svg::write_scatter((fs::path(out_dir) / "scatter_label.svg").string(), flat, cells.labels,
                           cells.label_names, "embedding (PCA-2), colored by label", comments);
    }
}

void append_params(io::ParamStore& store, const backbone::BackboneWeights& bw) {
    const std::string base = "backbone.m" + std::to_string(bw.spec.modality) + ".";
    auto add_m = [&store](const std::string& name, const Eigen::MatrixXd& m) {
        store.add(name, m.data(), static_cast<std::size_t>(m.size()));
    };
    auto add_v = [&store](const std::string& name, const Eigen::VectorXd& v) {
        store.add(name, v.data(), static_cast<std::size_t>(v.size()));
    };
    add_m(base + "gene_embedding", bw.gene_embedding);
    add_v(base + "value_projection", bw.value_projection);
    for (std::size_t l = 0; l < bw.layers.size(); ++l) {
        const std::string lb = base + "layer" + std::to_string(l) + ".";
        const auto& lw = bw.layers[l];
        add_v(lb + "ln1_scale", lw.ln1_scale);
        add_v(lb + "ln1_offset", lw.ln1_offset);
        add_m(lb + "wq", lw.wq);
        add_v(lb + "bq", lw.bq);
        add_m(lb + "wk", lw.wk);
        add_v(lb + "bk", lw.bk);
        add_m(lb + "wv", lw.wv);
        add_v(lb + "bv", lw.bv);
        add_m(lb + "wo", lw.wo);
        add_v(lb + "bo", lw.bo);
        add_v(lb + "ln2_scale", lw.ln2_scale);
        add_v(lb + "ln2_offset", lw.ln2_offset);
        add_m(lb + "ff1", lw.ff1);
        add_v(lb + "ff1_b", lw.ff1_b);
        add_m(lb + "ff2", lw.ff2);
        add_v(lb + "ff2_b", lw.ff2_b);
    }
}

}  // namespace

EmbedOutputs run_embed(const EmbedConfig& config, const std::string& out_dir, int threads) {
    OutDirLock lock(out_dir);
    const std::string hash = config.hash_hex();
    const std::vector<std::string> comments = {"config_hash=" + hash +
                                               " seed=" + std::to_string(config.seed)};

    // read + QC + filter
    const auto layout = config.transpose ? io::MtxLayout::cells_by_genes : io::MtxLayout::genes_by_cells;
    ExpressionMatrix x = io::read_mtx(config.matrix, config.genes, config.barcodes, layout);
    CellTable cells = io::read_cell_metadata(config.metadata, x);
    prep::compute_qc(x, cells);
    auto [xf, cf] = prep::filter_cells(x, cells, config.min_genes, config.max_pct_mt);

    // normalize + HVG
    const ExpressionMatrix norm = prep::normalize_log1p(xf, config.target_sum);
    const auto hvg = prep::select_hvg(norm, static_cast<std::size_t>(config.hvg_top),
                                      static_cast<int>(config.hvg_bins));
    prep::write_hvg_report(hvg, xf.gene_names, (fs::path(out_dir) / "hvg.tsv").string(), comments);
    std::vector<std::uint32_t> model_genes = hvg.top_genes(static_cast<std::size_t>(config.tokens));
    if (model_genes.empty()) throw std::runtime_error("embed: no genes survived HVG selection");

    // optional doublet removal
    if (config.doublet_enabled) {
        doublet::DoubletConfig dcfg;
        dcfg.rho = config.doublet_rho;
        dcfg.ratio = config.doublet_ratio;
        dcfg.k = static_cast<int>(config.doublet_k);
        dcfg.pca_dims = static_cast<int>(config.doublet_pca_dims);
        dcfg.seed = static_cast<std::uint64_t>(config.seed);
        const auto scores = doublet::score_doublets(xf, model_genes, dcfg, config.target_sum,
                                                    config.doublet_threshold, threads);
        for (std::size_t i = 0; i < cf.size(); ++i) {
            cf.doublet_score[i] = scores.likelihood[i];
            cf.is_doublet[i] = scores.is_doublet[i];
        }
        {
            std::ofstream out((fs::path(out_dir) / "doublets.tsv").string(), std::ios::binary);
            if (!out) throw std::runtime_error("cannot write doublets.tsv");
            for (const auto& c : comments) out << "# " << c << "\n";
            out << "# threshold=" << scores.threshold << "\n";
            out << "barcode\tq\tdoublet_score\tz\tis_doublet\n";
            char tmp[192];
            for (std::size_t i = 0; i < cf.size(); ++i) {
                std::snprintf(tmp, sizeof(tmp), "%s\t%.9g\t%.9g\t%.9g\t%d\n", cf.barcodes[i].c_str(),
                              scores.q[i], scores.likelihood[i], scores.z[i],
                              scores.is_doublet[i] ? 1 : 0);
                out << tmp;
            }
        }
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < cf.size(); ++i) {
            if (!cf.is_doublet[i]) keep.push_back(i);
        }
        if (keep.empty()) throw std::runtime_error("embed: every cell was called a doublet");
        xf = select_rows(xf, keep);
        cf = cf.select(keep);
    }

    io::write_cell_table(cf, (fs::path(out_dir) / "qc.tsv").string(), comments);

    // frozen backbone encode
    const ExpressionMatrix norm_kept = prep::normalize_log1p(xf, config.target_sum);
    const Eigen::MatrixXd inputs = to_dense(norm_kept, model_genes);
    backbone::BackboneSpec spec;
    spec.modality = 0;
    spec.n_tokens = static_cast<int>(model_genes.size());
    spec.d_model = static_cast<int>(config.d_model);
    spec.layers = static_cast<int>(config.layers);
    spec.heads = static_cast<int>(config.heads);
    spec.seed = static_cast<std::uint64_t>(config.backbone_seed);
    const auto bw = backbone::init_frozen_backbone(spec);
    const std::uint64_t hash_before = backbone::backbone_hash(bw);
    Eigen::MatrixXd z_raw = backbone::encode_rows(bw, inputs, threads);

    // train the head
    train::TrainData data;
    data.z_raw.push_back(std::move(z_raw));
    data.targets = inputs;
    data.labels = cf.labels;
    data.batches = cf.batches;

    model::MoreParams params = model::init_more_params(
        /*n_modalities=*/1, spec.d_model, std::max(cf.n_batches(), 1), std::max(cf.n_labels(), 1),
        spec.n_tokens, static_cast<int>(config.refine_depth), static_cast<std::uint64_t>(config.seed));

    train::TrainConfig tcfg;
    tcfg.epochs = static_cast<int>(config.epochs);
    tcfg.minibatch = static_cast<int>(config.minibatch);
    tcfg.learning_rate = config.learning_rate;
    tcfg.seed = static_cast<std::uint64_t>(config.seed);
    const auto history = train::fit(params, data, tcfg, config.weights);
    if (backbone::backbone_hash(bw) != hash_before) {
        throw numerical_error("embed: frozen backbone hash changed during training");
    }

    EmbedOutputs outputs;
    outputs.loss_csv = (fs::path(out_dir) / "loss_history.csv").string();
    train::write_loss_history(history, outputs.loss_csv, comments);

    // refine every cell with the trained head
    Embeddings refined;
    refined.provenance = "refined";
    refined.values.resize(inputs.rows(), spec.d_model);
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        const auto trace = model::forward(params, {data.z_raw[0].row(i).transpose()},
                                          cf.batches[static_cast<std::size_t>(i)], {});
        refined.values.row(i) = trace.z_tilde.back().transpose();
    }

    outputs.embeddings_tsv = (fs::path(out_dir) / "embeddings.tsv").string();
    io::write_embeddings(refined, cf, outputs.embeddings_tsv, comments);

    io::ParamStore store;
    std::vector<double> meta = {1.0,
                                static_cast<double>(spec.n_tokens),
                                static_cast<double>(spec.d_model),
                                static_cast<double>(spec.layers),
                                static_cast<double>(spec.heads),
                                static_cast<double>(params.n_batches),
                                static_cast<double>(params.n_classes),
                                static_cast<double>(params.refine_depth)};
    store.add("meta", meta.data(), meta.size());
    for (const auto& ref : model::tensor_refs(params)) store.add(ref.name, ref.data, ref.size);
    append_params(store, bw);
    outputs.params_bin = (fs::path(out_dir) / "params.bin").string();
    io::write_params(store, outputs.params_bin);

    outputs.metrics_json = (fs::path(out_dir) / "metrics.json").string();
    write_json(compute_metrics_json(refined.values, cf, hash, config.seed, threads), outputs.metrics_json);
    write_scatter_pair(refined.values, cf, out_dir, comments);
    return outputs;
}

namespace {

model::MoreParams params_from_store(const io::ParamStore& store) {
    const auto& meta = store.get("meta");
    if (meta.size() < 8) throw std::runtime_error("params file: bad meta section");
    const int n_mod = static_cast<int>(meta[0]);
    const int tokens = static_cast<int>(meta[1]);
    const int d_model = static_cast<int>(meta[2]);
    const int n_batches = static_cast<int>(meta[5]);
    const int n_classes = static_cast<int>(meta[6]);
    const int refine_depth = static_cast<int>(meta[7]);
    model::MoreParams p = model::init_more_params(n_mod, d_model, n_batches, n_classes, tokens,
                                                  refine_depth, /*seed=*/0);
    for (auto& ref : model::tensor_refs(p)) {
        const auto& values = store.get(ref.name);
        if (values.size() != ref.size) {
            throw std::runtime_error("params file: section " + ref.name + " has wrong size");
        }
        std::copy(values.begin(), values.end(), ref.data);
    }
    return p;
}

int cmd_qc(const std::string& matrix, const std::string& genes, const std::string& barcodes,
           const std::string& metadata, const std::string& out_dir, bool transpose,
           const std::vector<std::string>& comments) {
    OutDirLock lock(out_dir);
    const auto layout = transpose ? io::MtxLayout::cells_by_genes : io::MtxLayout::genes_by_cells;
    ExpressionMatrix x = io::read_mtx(matrix, genes, barcodes, layout);
    CellTable cells = metadata.empty() ? CellTable{} : io::read_cell_metadata(metadata, x);
    if (metadata.empty()) {
        cells.barcodes = x.barcodes;
        cells.batches.assign(x.n_cells, 0);
        cells.batch_names = {"all"};
        cells.resize_metrics(x.n_cells);
    }
    prep::compute_qc(x, cells);
    io::write_cell_table(cells, (fs::path(out_dir) / "qc.tsv").string(), comments);

    std::vector<double> n_genes(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) n_genes[i] = static_cast<double>(cells.n_genes_by_counts[i]);
    svg::write_box_summary((fs::path(out_dir) / "qc_summary.svg").string(),
                           {"n_genes_by_counts", "total_counts", "pct_counts_mt", "pct_counts_ribo"},
                           {n_genes, cells.total_counts, cells.pct_counts_mt, cells.pct_counts_ribo},
                           "per-cell QC metrics", comments);

    const auto top = prep::top_expressed(x, 20);
    std::ofstream out((fs::path(out_dir) / "top_expressed.tsv").string(), std::ios::binary);
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "gene\tpct_total_counts\n";
    char tmp[128];
    for (const auto& [gene, pct] : top) {
        std::snprintf(tmp, sizeof(tmp), "%s\t%.9g\n", gene.c_str(), pct);
        out << tmp;
    }
    return 0;
}

int cmd_doublets(const std::string& matrix, const std::string& genes, const std::string& barcodes,
                 const std::string& out_dir, bool transpose, doublet::DoubletConfig dcfg,
                 double threshold, std::int64_t features, double target_sum, int threads,
                 const std::vector<std::string>& comments) {
    OutDirLock lock(out_dir);
    const auto layout = transpose ? io::MtxLayout::cells_by_genes : io::MtxLayout::genes_by_cells;
    const ExpressionMatrix x = io::read_mtx(matrix, genes, barcodes, layout);
    const ExpressionMatrix norm = prep::normalize_log1p(x, target_sum);
    const auto hvg = prep::select_hvg(norm, static_cast<std::size_t>(std::max<std::int64_t>(features, 1)), 20);
    const auto scores = doublet::score_doublets(x, hvg.selected_genes(), dcfg, target_sum, threshold, threads);

    std::ofstream out((fs::path(out_dir) / "doublets.tsv").string(), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write doublets.tsv");
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "# threshold=" << scores.threshold << "\n";
    out << "barcode\tq\tdoublet_score\tz\tis_doublet\n";
    char tmp[192];
    for (std::size_t i = 0; i < scores.q.size(); ++i) {
        std::snprintf(tmp, sizeof(tmp), "%s\t%.9g\t%.9g\t%.9g\t%d\n", x.barcodes[i].c_str(), scores.q[i],
                      scores.likelihood[i], scores.z[i], scores.is_doublet[i] ? 1 : 0);
        out << tmp;
    }
    return 0;
}

int cmd_baseline(const std::string& embeddings_path, const std::string& out_dir,
                 harmony::HarmonyConfig hcfg, int threads, const std::string& args_hash) {
    OutDirLock lock(out_dir);
    const auto table = io::read_embeddings(embeddings_path);
    const Embeddings corrected = harmony::run_harmony(table.emb.values, table.cells.batches, hcfg);
    io::write_embeddings(corrected, table.cells, (fs::path(out_dir) / "corrected_embeddings.tsv").string(),
                         {"config_hash=" + args_hash + " seed=" + std::to_string(hcfg.seed)});
    write_json(compute_metrics_json(corrected.values, table.cells, args_hash, static_cast<std::int64_t>(hcfg.seed), threads),
               (fs::path(out_dir) / "metrics.json").string());
    return 0;
}

int cmd_annotate(const std::string& params_path, const std::string& embeddings_path,
                 const std::string& out_dir, annotate::AnnotateConfig acfg,
                 const std::string& markers_path, const std::string& matrix,
                 const std::string& genes, const std::string& barcodes, bool transpose,
                 const std::vector<std::string>& comments) {
    OutDirLock lock(out_dir);
    const auto store = io::read_params(params_path);
    const auto params = params_from_store(store);
    const auto table = io::read_embeddings(embeddings_path);
    const auto result = annotate::annotate(params, table.emb.values, acfg);
    annotate::write_annotation(result, table.cells.barcodes,
                               (fs::path(out_dir) / "annotations.tsv").string(), comments);

    if (!markers_path.empty()) {
        if (matrix.empty() || genes.empty() || barcodes.empty()) {
            throw std::runtime_error("annotate: --markers needs --matrix/--genes/--barcodes");
        }
        std::ifstream in(markers_path);
        if (!in) throw std::runtime_error("cannot open " + markers_path);
        std::vector<std::string> markers;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
            if (!line.empty()) markers.push_back(line);
        }
        const auto layout = transpose ? io::MtxLayout::cells_by_genes : io::MtxLayout::genes_by_cells;
        const ExpressionMatrix x = io::read_mtx(matrix, genes, barcodes, layout);
        int n_labels = params.n_classes;
        for (int l : result.final_label) n_labels = std::max(n_labels, l + 1);
        const auto report = annotate::marker_report(x, markers, result.final_label, n_labels);
        annotate::write_marker_report(report, (fs::path(out_dir) / "marker_report.tsv").string(), comments);
    }
    return 0;
}

int cmd_metrics(const std::string& embeddings_path, const std::string& reference_path,
                const std::string& out_dir, int knn, int threads) {
    OutDirLock lock(out_dir);
    const auto table = io::read_embeddings(embeddings_path);
    nlohmann::ordered_json j =
        compute_metrics_json(table.emb.values, table.cells, "metrics", 0, threads);
    j.erase("config_hash");
    j.erase("seed");
    if (!reference_path.empty()) {
        const auto ref = io::read_embeddings(reference_path);
        if (!ref.cells.has_labels() || !table.cells.has_labels()) {
            throw std::runtime_error("metrics: label transfer needs labeled embeddings on both sides");
        }
        j["label_transfer_accuracy"] = metrics::label_transfer_accuracy(
            ref.emb.values, ref.cells.labels, table.emb.values, table.cells.labels, knn, threads);
    }
    write_json(j, (fs::path(out_dir) / "metrics.json").string());
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"morekit: batch-robust multi-omics representation toolkit"};
    app.require_subcommand(1);

    std::string out_dir = ".";
    std::int64_t seed = -1;
    int threads = 0;
    bool transpose = false;
    app.add_option("--out-dir", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "override every configured seed");
    app.add_option("--threads", threads, "worker threads (or MORE_KIT_THREADS)");
    app.add_flag("--transpose", transpose, "matrix file is cells x genes (default assumes genes x cells)");

    std::string matrix, genes, barcodes, metadata, config_path, embeddings_path, params_path;
    std::string markers_path, reference_path;

    auto* qc = app.add_subcommand("qc", "per-cell QC metrics, table and summary plot");
    qc->add_option("--matrix", matrix)->required();
    qc->add_option("--genes", genes)->required();
    qc->add_option("--barcodes", barcodes)->required();
    qc->add_option("--metadata", metadata);

    auto* embed = app.add_subcommand("embed", "full pipeline: prep, doublets, backbone, train, metrics");
    embed->add_option("--config", config_path, "TOML run configuration")->required();

    auto* baseline = app.add_subcommand("baseline", "Harmony-style correction of an embeddings table");
    baseline->add_option("--embeddings", embeddings_path)->required();
    harmony::HarmonyConfig hcfg;
    baseline->add_option("--clusters", hcfg.clusters)->capture_default_str();
    baseline->add_option("--sigma", hcfg.sigma)->capture_default_str();
    baseline->add_option("--lambda-div", hcfg.lambda_div)->capture_default_str();
    baseline->add_option("--rounds", hcfg.rounds)->capture_default_str();

    auto* annotate_cmd = app.add_subcommand("annotate", "predict, vote and propagate labels");
    annotate_cmd->add_option("--params", params_path)->required();
    annotate_cmd->add_option("--embeddings", embeddings_path)->required();
    annotate::AnnotateConfig acfg;
    annotate_cmd->add_option("--conf-threshold", acfg.conf_threshold)->capture_default_str();
    annotate_cmd->add_option("--knn", acfg.knn)->capture_default_str();
    annotate_cmd->add_option("--max-rounds", acfg.max_rounds)->capture_default_str();
    annotate_cmd->add_option("--clusters", acfg.clusters, "0 = twice the class count")->capture_default_str();
    annotate_cmd->add_option("--markers", markers_path, "marker gene list for the report");
    annotate_cmd->add_option("--matrix", matrix);
    annotate_cmd->add_option("--genes", genes);
    annotate_cmd->add_option("--barcodes", barcodes);

    auto* doublets = app.add_subcommand("doublets", "simulate, score and call doublets");
    doublets->add_option("--matrix", matrix)->required();
    doublets->add_option("--genes", genes)->required();
    doublets->add_option("--barcodes", barcodes)->required();
    doublet::DoubletConfig dcfg;
    double threshold = 0.0, target_sum = 1.0e4;
    std::int64_t features = 2000;
    doublets->add_option("--rho", dcfg.rho, "expected doublet rate")->capture_default_str();
    doublets->add_option("--ratio", dcfg.ratio, "simulated-to-observed ratio")->capture_default_str();
    doublets->add_option("--knn", dcfg.k)->capture_default_str();
    doublets->add_option("--pca-dims", dcfg.pca_dims)->capture_default_str();
    doublets->add_option("--threshold", threshold, "0 = automatic")->capture_default_str();
    doublets->add_option("--features", features, "HVGs used for the doublet space")->capture_default_str();
    doublets->add_option("--target-sum", target_sum)->capture_default_str();

    auto* metrics_cmd = app.add_subcommand(
        "metrics",
        "integration metrics of an embeddings table; JSON keys: ari, silhouette, class_recall, "
        "batch_entropy, and label_transfer_accuracy when --reference is given");
    metrics_cmd->add_option("--embeddings", embeddings_path)->required();
    metrics_cmd->add_option("--reference", reference_path, "labeled reference for label transfer");
    int metrics_knn = 15;
    metrics_cmd->add_option("--knn", metrics_knn)->capture_default_str();

    std::vector<std::string> argv_copy = args;
    std::vector<char*> argv;
    argv.reserve(argv_copy.size());
    for (auto& a : argv_copy) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        const int eff_threads = resolve_threads(threads);
        // flag-driven subcommands stamp outputs with a hash of their
        // arguments (output directory excluded so reruns compare equal)
        std::string joined;
        for (std::size_t i = 1; i < args.size(); ++i) {
            if (args[i] == "--out-dir") {
                ++i;
                continue;
            }
            joined += args[i];
            joined += '\x1f';
        }
        const std::string args_hash = hex64(fnv1a64(joined.data(), joined.size()));
        const std::vector<std::string> stamp = {"config_hash=" + args_hash +
                                                " seed=" + std::to_string(seed < 0 ? 0 : seed)};
        if (qc->parsed()) return cmd_qc(matrix, genes, barcodes, metadata, out_dir, transpose, stamp);
        if (embed->parsed()) {
            EmbedConfig cfg = load_embed_config(config_path);
            if (transpose) cfg.transpose = true;
            if (seed >= 0) {
                cfg.seed = seed;
                cfg.backbone_seed = seed;
            }
            run_embed(cfg, out_dir, eff_threads);
            return 0;
        }
        if (baseline->parsed()) {
            if (seed >= 0) hcfg.seed = static_cast<std::uint64_t>(seed);
            return cmd_baseline(embeddings_path, out_dir, hcfg, eff_threads, args_hash);
        }
        if (annotate_cmd->parsed()) {
            if (seed >= 0) acfg.seed = static_cast<std::uint64_t>(seed);
            return cmd_annotate(params_path, embeddings_path, out_dir, acfg, markers_path, matrix,
                                genes, barcodes, transpose, stamp);
        }
        if (doublets->parsed()) {
            if (seed >= 0) dcfg.seed = static_cast<std::uint64_t>(seed);
            return cmd_doublets(matrix, genes, barcodes, out_dir, transpose, dcfg, threshold, features,
                                target_sum, eff_threads, stamp);
        }
        if (metrics_cmd->parsed()) {
            return cmd_metrics(embeddings_path, reference_path, out_dir, metrics_knn, eff_threads);
        }
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace morekit::cli
