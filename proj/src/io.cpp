#include "morekit/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace morekit::io {

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

std::string rstrip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t')) {
        s.pop_back();
    }
    return s;
}

std::vector<std::string> read_name_file(const std::string& path) {
    auto in = open_in(path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        line = rstrip(line);
        if (!line.empty()) names.push_back(line);
    }
    return names;
}

double parse_number(const std::string& tok, const std::string& context) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw std::runtime_error("non-numeric entry '" + tok + "' in " + context);
    }
    return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

void append_sig9(std::string& buf, double v) {
    char tmp[40];
    std::snprintf(tmp, sizeof(tmp), "%.9g", v);
    buf += tmp;
}

}  // namespace

ExpressionMatrix read_mtx(const std::string& matrix_path,
                          const std::string& genes_path,
                          const std::string& barcodes_path,
                          MtxLayout layout) {
    auto in = open_in(matrix_path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty MatrixMarket file " + matrix_path);
    std::istringstream header(rstrip(line));
    std::string banner, object, format, field, symmetry;
    header >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket" || object != "matrix" || format != "coordinate" ||
        (field != "integer" && field != "real") || symmetry != "general") {
        throw std::runtime_error("unsupported MatrixMarket header in " + matrix_path +
                                 " (expected coordinate integer|real general)");
    }
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '%') break;
    }
    std::istringstream dims(rstrip(line));
    std::size_t file_rows = 0, file_cols = 0, file_nnz = 0;
    if (!(dims >> file_rows >> file_cols >> file_nnz)) {
        throw std::runtime_error("malformed dimensions line in " + matrix_path);
    }

    const bool transpose = (layout == MtxLayout::genes_by_cells);
    ExpressionMatrix x;
    x.n_cells = transpose ? file_cols : file_rows;
    x.n_genes = transpose ? file_rows : file_cols;
    x.gene_names = read_name_file(genes_path);
    x.barcodes = read_name_file(barcodes_path);
    if (x.gene_names.size() != x.n_genes) {
        throw std::runtime_error("dimension mismatch: " + genes_path + " lists " +
                                 std::to_string(x.gene_names.size()) + " genes but header implies " +
                                 std::to_string(x.n_genes));
    }
    if (x.barcodes.size() != x.n_cells) {
        throw std::runtime_error("dimension mismatch: " + barcodes_path + " lists " +
                                 std::to_string(x.barcodes.size()) + " barcodes but header implies " +
                                 std::to_string(x.n_cells));
    }

    struct Entry {
        std::size_t cell;
        std::uint32_t gene;
        double value;
    };
    std::vector<Entry> entries;
    entries.reserve(file_nnz);
    std::size_t seen = 0;
    while (std::getline(in, line)) {
        line = rstrip(line);
        if (line.empty() || line[0] == '%') continue;
        std::istringstream row(line);
        std::string si, sj, sv;
        if (!(row >> si >> sj >> sv)) {
            throw std::runtime_error("malformed entry line in " + matrix_path + ": " + line);
        }
        const double di = parse_number(si, matrix_path);
        const double dj = parse_number(sj, matrix_path);
        const double v = parse_number(sv, matrix_path);
        if (di < 1 || dj < 1 || di != std::floor(di) || dj != std::floor(dj)) {
            throw std::runtime_error("bad coordinate in " + matrix_path + ": " + line);
        }
        const std::size_t i = static_cast<std::size_t>(di) - 1;
        const std::size_t j = static_cast<std::size_t>(dj) - 1;
        if (i >= file_rows || j >= file_cols) {
            throw std::runtime_error("coordinate out of range in " + matrix_path + ": " + line);
        }
        if (v < 0) throw std::runtime_error("negative value in " + matrix_path + ": " + line);
        Entry e;
        e.cell = transpose ? j : i;
        e.gene = static_cast<std::uint32_t>(transpose ? i : j);
        e.value = v;
        entries.push_back(e);
        ++seen;
    }
    if (seen != file_nnz) {
        throw std::runtime_error("entry count mismatch in " + matrix_path + ": header says " +
                                 std::to_string(file_nnz) + ", found " + std::to_string(seen));
    }

    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.cell != b.cell ? a.cell < b.cell : a.gene < b.gene;
    });

    std::vector<std::size_t> counts(x.n_cells, 0);
    for (std::size_t p = 0; p < entries.size();) {
        std::size_t q = p + 1;
        double v = entries[p].value;
        while (q < entries.size() && entries[q].cell == entries[p].cell && entries[q].gene == entries[p].gene) {
            v += entries[q].value;  // duplicate coordinates are summed
            ++q;
        }
        x.col_indices.push_back(entries[p].gene);
        x.values.push_back(v);
        counts[entries[p].cell] += 1;
        p = q;
    }
    x.row_offsets.assign(x.n_cells + 1, 0);
    for (std::size_t i = 0; i < x.n_cells; ++i) x.row_offsets[i + 1] = x.row_offsets[i] + counts[i];
    x.validate();
    return x;
}

void write_mtx(const ExpressionMatrix& x,
               const std::string& matrix_path,
               const std::string& genes_path,
               const std::string& barcodes_path,
               MtxLayout layout) {
    bool integral = true;
    for (double v : x.values) {
        if (v != std::floor(v) || std::abs(v) > 9.0e15) {
            integral = false;
            break;
        }
    }
    auto out = open_out(matrix_path);
    out << "%%MatrixMarket matrix coordinate " << (integral ? "integer" : "real") << " general\n";
    const bool transpose = (layout == MtxLayout::genes_by_cells);
    const std::size_t rows = transpose ? x.n_genes : x.n_cells;
    const std::size_t cols = transpose ? x.n_cells : x.n_genes;
    out << rows << " " << cols << " " << x.nnz() << "\n";
    std::string buf;
    char tmp[64];
    for (std::size_t i = 0; i < x.n_cells; ++i) {
        for (std::size_t p = x.row_offsets[i]; p < x.row_offsets[i + 1]; ++p) {
            const std::size_t r = transpose ? x.col_indices[p] + 1 : i + 1;
            const std::size_t c = transpose ? i + 1 : x.col_indices[p] + 1;
            if (integral) {
                std::snprintf(tmp, sizeof(tmp), "%zu %zu %lld\n", r, c,
                              static_cast<long long>(x.values[p]));
            } else {
                std::snprintf(tmp, sizeof(tmp), "%zu %zu %.17g\n", r, c, x.values[p]);
            }
            buf += tmp;
            if (buf.size() > (1u << 20)) {
                out << buf;
                buf.clear();
            }
        }
    }
    out << buf;

    auto genes = open_out(genes_path);
    for (const auto& g : x.gene_names) genes << g << "\n";
    auto barcodes = open_out(barcodes_path);
    for (const auto& b : x.barcodes) barcodes << b << "\n";
}

CellTable read_cell_metadata(const std::string& path, const ExpressionMatrix& matrix) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty metadata file " + path);
    const auto header = split_tabs(rstrip(line));
    std::int64_t col_barcode = -1, col_batch = -1, col_label = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "barcode") col_barcode = static_cast<std::int64_t>(c);
        else if (header[c] == "batch") col_batch = static_cast<std::int64_t>(c);
        else if (header[c] == "label") col_label = static_cast<std::int64_t>(c);
    }
    if (col_barcode < 0) throw std::runtime_error(path + ": missing required column 'barcode'");
    if (col_batch < 0) throw std::runtime_error(path + ": missing required column 'batch'");

    std::unordered_map<std::string, std::size_t> row_of;
    row_of.reserve(matrix.n_cells);
    for (std::size_t i = 0; i < matrix.n_cells; ++i) row_of[matrix.barcodes[i]] = i;

    CellTable table;
    table.barcodes = matrix.barcodes;
    table.batches.assign(matrix.n_cells, -1);
    if (col_label >= 0) table.labels.assign(matrix.n_cells, -1);
    table.resize_metrics(matrix.n_cells);

    std::unordered_map<std::string, int> batch_index, label_index;
    std::size_t assigned = 0;
    while (std::getline(in, line)) {
        line = rstrip(line);
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() < header.size()) {
            throw std::runtime_error(path + ": short row: " + line);
        }
        const std::string& bc = fields[static_cast<std::size_t>(col_barcode)];
        const auto it = row_of.find(bc);
        if (it == row_of.end()) {
            throw std::runtime_error(path + ": barcode '" + bc + "' is not in the matrix");
        }
        const std::size_t row = it->second;
        if (table.batches[row] >= 0) {
            throw std::runtime_error(path + ": duplicate barcode '" + bc + "'");
        }
        const std::string& batch_name = fields[static_cast<std::size_t>(col_batch)];
        auto [bit, binserted] = batch_index.try_emplace(batch_name, static_cast<int>(batch_index.size()));
        if (binserted) table.batch_names.push_back(batch_name);
        table.batches[row] = bit->second;
        if (col_label >= 0) {
            const std::string& label_name = fields[static_cast<std::size_t>(col_label)];
            auto [lit, linserted] = label_index.try_emplace(label_name, static_cast<int>(label_index.size()));
            if (linserted) table.label_names.push_back(label_name);
            table.labels[row] = lit->second;
        }
        ++assigned;
    }
    if (assigned != matrix.n_cells) {
        for (std::size_t i = 0; i < matrix.n_cells; ++i) {
            if (table.batches[i] < 0) {
                throw std::runtime_error(path + ": missing metadata for barcode '" + matrix.barcodes[i] + "'");
            }
        }
    }
    return table;
}

void write_embeddings(const Embeddings& emb, const CellTable& cells,
                      const std::string& path,
                      const std::vector<std::string>& comments) {
    const std::size_t n = cells.size();
    if (static_cast<std::size_t>(emb.values.rows()) != n) {
        throw std::runtime_error("embedding row count " + std::to_string(emb.values.rows()) +
                                 " does not match cell count " + std::to_string(n));
    }
    auto out = open_out(path);
    for (const auto& c : comments) out << "# " << c << "\n";
    if (!emb.provenance.empty()) out << "# provenance=" << emb.provenance << "\n";
    const Eigen::Index d = emb.values.cols();
    std::string buf = "barcode\tbatch";
    if (cells.has_labels()) buf += "\tlabel";
    for (Eigen::Index j = 0; j < d; ++j) buf += "\te_" + std::to_string(j);
    buf += "\n";
    for (std::size_t i = 0; i < n; ++i) {
        buf += cells.barcodes[i];
        buf += '\t';
        buf += std::to_string(cells.batches[i]);
        if (cells.has_labels()) {
            buf += '\t';
            buf += std::to_string(cells.labels[i]);
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            buf += '\t';
            append_sig9(buf, emb.values(static_cast<Eigen::Index>(i), j));
        }
        buf += '\n';
        if (buf.size() > (1u << 20)) {
            out << buf;
            buf.clear();
        }
    }
    out << buf;
}

EmbeddingTable read_embeddings(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    std::string provenance;
    while (std::getline(in, line)) {
        line = rstrip(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string key = "# provenance=";
            if (line.rfind(key, 0) == 0) provenance = line.substr(key.size());
            continue;
        }
        break;
    }
    const auto header = split_tabs(line);
    if (header.size() < 3 || header[0] != "barcode" || header[1] != "batch") {
        throw std::runtime_error(path + ": expected embeddings header barcode\\tbatch\\t[label\\t]e_0...");
    }
    const bool has_label = header[2] == "label";
    const std::size_t first_coord = has_label ? 3 : 2;
    const std::size_t d = header.size() - first_coord;
    if (d == 0) throw std::runtime_error(path + ": no embedding columns");

    EmbeddingTable t;
    t.emb.provenance = provenance;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        line = rstrip(line);
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_tabs(line);
        if (fields.size() != header.size()) {
            throw std::runtime_error(path + ": row width mismatch: " + line);
        }
        t.cells.barcodes.push_back(fields[0]);
        t.cells.batches.push_back(static_cast<int>(parse_number(fields[1], path)));
        if (has_label) t.cells.labels.push_back(static_cast<int>(parse_number(fields[2], path)));
        std::vector<double> coords(d);
        for (std::size_t j = 0; j < d; ++j) coords[j] = parse_number(fields[first_coord + j], path);
        rows.push_back(std::move(coords));
    }
    int max_batch = -1, max_label = -1;
    for (int b : t.cells.batches) max_batch = std::max(max_batch, b);
    for (int l : t.cells.labels) max_label = std::max(max_label, l);
    for (int b = 0; b <= max_batch; ++b) t.cells.batch_names.push_back(std::to_string(b));
    for (int l = 0; l <= max_label; ++l) t.cells.label_names.push_back(std::to_string(l));
    t.cells.resize_metrics(t.cells.barcodes.size());
    t.emb.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            t.emb.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return t;
}

void write_cell_table(const CellTable& cells, const std::string& path,
                      const std::vector<std::string>& comments) {
    auto out = open_out(path);
    for (const auto& c : comments) out << "# " << c << "\n";
    std::string buf = "barcode\tbatch";
    if (cells.has_labels()) buf += "\tlabel";
    buf += "\tn_genes_by_counts\ttotal_counts\tpct_counts_mt\tpct_counts_ribo\tdoublet_score\tis_doublet\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        buf += cells.barcodes[i];
        buf += '\t';
        buf += std::to_string(cells.batches[i]);
        if (cells.has_labels()) {
            buf += '\t';
            buf += std::to_string(cells.labels[i]);
        }
        buf += '\t';
        buf += std::to_string(cells.n_genes_by_counts[i]);
        buf += '\t';
        append_sig9(buf, cells.total_counts[i]);
        buf += '\t';
        append_sig9(buf, cells.pct_counts_mt[i]);
        buf += '\t';
        append_sig9(buf, cells.pct_counts_ribo[i]);
        buf += '\t';
        append_sig9(buf, cells.doublet_score[i]);
        buf += '\t';
        buf += cells.is_doublet[i] ? '1' : '0';
        buf += '\n';
        if (buf.size() > (1u << 20)) {
            out << buf;
            buf.clear();
        }
    }
    out << buf;
}

void ParamStore::add(const std::string& name, const double* data, std::size_t n) {
    sections.emplace_back(name, std::vector<double>(data, data + n));
}

const std::vector<double>& ParamStore::get(const std::string& name) const {
    for (const auto& [key, values] : sections) {
        if (key == name) return values;
    }
    throw std::runtime_error("parameter section not found: " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [key, values] : sections) {
        if (key == name) return true;
    }
    return false;
}

namespace {

void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("truncated parameter file " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_params(const ParamStore& store, const std::string& path) {
    static_assert(sizeof(double) == 8);
    auto out = open_out(path);
    out.write("MOREPK1\n", 8);
    put_u64(out, store.sections.size());
    for (const auto& [name, values] : store.sections) {
        put_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(out, values.size());
        for (double v : values) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64(out, bits);
        }
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

ParamStore read_params(const std::string& path) {
    auto in = open_in(path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "MOREPK1\n", 8) != 0) {
        throw std::runtime_error(path + ": not a MOREPK1 parameter file");
    }
    ParamStore store;
    const std::uint64_t n_sections = get_u64(in, path);
    for (std::uint64_t s = 0; s < n_sections; ++s) {
        const std::uint64_t name_len = get_u64(in, path);
        if (name_len > (1u << 16)) throw std::runtime_error(path + ": implausible section name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) {
            throw std::runtime_error("truncated parameter file " + path);
        }
        const std::uint64_t count = get_u64(in, path);
        std::vector<double> values(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            const std::uint64_t bits = get_u64(in, path);
            std::memcpy(&values[i], &bits, 8);
        }
        store.sections.emplace_back(std::move(name), std::move(values));
    }
    return store;
}

}  // namespace morekit::io
