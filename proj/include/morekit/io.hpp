#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "morekit/types.hpp"

namespace morekit::io {

/// On-disk orientation of a MatrixMarket file. The in-memory matrix is
/// always cells x genes; genes_by_cells inputs are transposed on load.
enum class MtxLayout { genes_by_cells, cells_by_genes };

/// Read a MatrixMarket coordinate file (integer or real, general) together
/// with one-name-per-line gene and barcode files. Duplicate coordinates are
/// summed. Throws on dimension mismatches, out-of-range coordinates and
/// non-numeric entries.
ExpressionMatrix read_mtx(const std::string& matrix_path,
                          const std::string& genes_path,
                          const std::string& barcodes_path,
                          MtxLayout layout = MtxLayout::genes_by_cells);

/// Inverse of read_mtx for the same layout; integer counts round-trip exactly.
void write_mtx(const ExpressionMatrix& x,
               const std::string& matrix_path,
               const std::string& genes_path,
               const std::string& barcodes_path,
               MtxLayout layout = MtxLayout::genes_by_cells);

/// Read a TSV with header columns barcode, batch and optional label. The
/// barcodes must exactly cover the matrix barcodes; the result is aligned to
/// matrix row order. Batch/label strings map to dense indices in
/// first-appearance (file) order.
CellTable read_cell_metadata(const std::string& path, const ExpressionMatrix& matrix);

/// TSV: barcode, batch, label?, e_0..e_{d-1} with 9 significant digits.
/// `comments` are emitted first as "# ..." lines (config hash, seed, tag).
void write_embeddings(const Embeddings& emb, const CellTable& cells,
                      const std::string& path,
                      const std::vector<std::string>& comments = {});

struct EmbeddingTable {
    Embeddings emb;
    CellTable cells;  // barcode/batch/label columns only
};

EmbeddingTable read_embeddings(const std::string& path);

/// QC / doublet table as TSV.
void write_cell_table(const CellTable& cells, const std::string& path,
                      const std::vector<std::string>& comments = {});

/// Flat named-section parameter container. Section order is preserved so
/// writes are byte-stable.
struct ParamStore {
    std::vector<std::pair<std::string, std::vector<double>>> sections;

    void add(const std::string& name, const double* data, std::size_t n);
    const std::vector<double>& get(const std::string& name) const;
    bool has(const std::string& name) const;
};

/// Binary format: magic "MOREPK1\n", u64 section count, then per section a
/// u64 name length, the UTF-8 name, u64 element count and f64 values; all
/// integers and doubles little-endian.
void write_params(const ParamStore& store, const std::string& path);
ParamStore read_params(const std::string& path);

}  // namespace morekit::io
