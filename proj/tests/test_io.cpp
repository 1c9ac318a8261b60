#include "doctest.h"

#include <cmath>

#include "morekit/io.hpp"
#include "morekit/rng.hpp"
#include "testutil.hpp"

using namespace morekit;
using testutil::TempDir;

namespace {

bool matrices_equal(const ExpressionMatrix& a, const ExpressionMatrix& b) {
    return a.n_cells == b.n_cells && a.n_genes == b.n_genes && a.row_offsets == b.row_offsets &&
           a.col_indices == b.col_indices && a.values == b.values && a.gene_names == b.gene_names &&
           a.barcodes == b.barcodes;
}

}  // namespace

TEST_CASE("read_mtx: direct transcription of a 2x2 file") {
    TempDir dir("mtx_basic");
    testutil::write_text(dir.file("m.mtx"),
                         "%%MatrixMarket matrix coordinate integer general\n"
                         "2 2 2\n"
                         "1 1 3\n"
                         "2 2 5\n");
    testutil::write_text(dir.file("genes.txt"), "GA\nGB\n");
    testutil::write_text(dir.file("bc.txt"), "C1\nC2\n");
    // cells_by_genes: file rows are cells
    const auto x = io::read_mtx(dir.file("m.mtx"), dir.file("genes.txt"), dir.file("bc.txt"),
                                io::MtxLayout::cells_by_genes);
    CHECK(x.n_cells == 2);
    CHECK(x.n_genes == 2);
    REQUIRE(x.values.size() == 2);
    CHECK(x.values[0] == 3.0);
    CHECK(x.col_indices[0] == 0);
    CHECK(x.values[1] == 5.0);
    CHECK(x.col_indices[1] == 1);
}

TEST_CASE("read_mtx: duplicate coordinates are summed") {
    TempDir dir("mtx_dup");
    testutil::write_text(dir.file("m.mtx"),
                         "%%MatrixMarket matrix coordinate integer general\n"
                         "1 1 2\n"
                         "1 1 1\n"
                         "1 1 2\n");
    testutil::write_text(dir.file("genes.txt"), "GA\n");
    testutil::write_text(dir.file("bc.txt"), "C1\n");
    const auto x = io::read_mtx(dir.file("m.mtx"), dir.file("genes.txt"), dir.file("bc.txt"),
                                io::MtxLayout::cells_by_genes);
    REQUIRE(x.values.size() == 1);
    CHECK(x.values[0] == 3.0);
}

TEST_CASE("read_mtx: gene name count mismatch is an error") {
    TempDir dir("mtx_mismatch");
    testutil::write_text(dir.file("m.mtx"),
                         "%%MatrixMarket matrix coordinate integer general\n"
                         "2 2 1\n"
                         "1 1 1\n");
    testutil::write_text(dir.file("genes.txt"), "GA\nGB\nGC\n");
    testutil::write_text(dir.file("bc.txt"), "C1\nC2\n");
    CHECK_THROWS_WITH_AS(io::read_mtx(dir.file("m.mtx"), dir.file("genes.txt"), dir.file("bc.txt"),
                                      io::MtxLayout::cells_by_genes),
                         doctest::Contains("dimension mismatch"), std::runtime_error);
}

TEST_CASE("read_mtx: non-numeric entry and out-of-range coordinate") {
    TempDir dir("mtx_bad");
    testutil::write_text(dir.file("genes.txt"), "GA\n");
    testutil::write_text(dir.file("bc.txt"), "C1\n");
    testutil::write_text(dir.file("m1.mtx"),
                         "%%MatrixMarket matrix coordinate integer general\n"
                         "1 1 1\n"
                         "1 1 abc\n");
    CHECK_THROWS_AS(io::read_mtx(dir.file("m1.mtx"), dir.file("genes.txt"), dir.file("bc.txt"),
                                 io::MtxLayout::cells_by_genes),
                    std::runtime_error);
    testutil::write_text(dir.file("m2.mtx"),
                         "%%MatrixMarket matrix coordinate integer general\n"
                         "1 1 1\n"
                         "2 1 4\n");
    CHECK_THROWS_WITH_AS(io::read_mtx(dir.file("m2.mtx"), dir.file("genes.txt"), dir.file("bc.txt"),
                                      io::MtxLayout::cells_by_genes),
                         doctest::Contains("out of range"), std::runtime_error);
}

TEST_CASE("mtx round-trip is exact for integer counts, both layouts") {
    Rng rng(42);
    const auto x = testutil::random_counts(23, 17, 0.2, rng);
    TempDir dir("mtx_roundtrip");
    for (auto layout : {io::MtxLayout::genes_by_cells, io::MtxLayout::cells_by_genes}) {
        io::write_mtx(x, dir.file("m.mtx"), dir.file("genes.txt"), dir.file("bc.txt"), layout);
        const auto y = io::read_mtx(dir.file("m.mtx"), dir.file("genes.txt"), dir.file("bc.txt"), layout);
        CHECK(matrices_equal(x, y));
        y.validate();
    }
}

TEST_CASE("read_cell_metadata: first-appearance batch order and optional label") {
    Rng rng(1);
    auto x = testutil::random_counts(3, 4, 0.9, rng);
    TempDir dir("meta");
    testutil::write_text(dir.file("meta.tsv"),
                         "barcode\tbatch\n"
                         "BC0\tlab1\n"
                         "BC1\tlab2\n"
                         "BC2\tlab1\n");
    const auto cells = io::read_cell_metadata(dir.file("meta.tsv"), x);
    CHECK(cells.batches == std::vector<int>{0, 1, 0});
    CHECK(cells.batch_names == std::vector<std::string>{"lab1", "lab2"});
    CHECK_FALSE(cells.has_labels());

    SUBCASE("label column parsed when present, out-of-order rows realigned") {
        testutil::write_text(dir.file("meta2.tsv"),
                             "barcode\tbatch\tlabel\n"
                             "BC2\tb\tT\n"
                             "BC0\ta\tB\n"
                             "BC1\ta\tT\n");
        const auto c2 = io::read_cell_metadata(dir.file("meta2.tsv"), x);
        CHECK(c2.batches == std::vector<int>{1, 1, 0});  // first appearance: b=0? no: file order b,a -> b=0,a=1
        CHECK(c2.batch_names == std::vector<std::string>{"b", "a"});
        CHECK(c2.labels == std::vector<int>{1, 0, 0});
        CHECK(c2.label_names == std::vector<std::string>{"T", "B"});
    }

    SUBCASE("missing matrix barcode is an error") {
        testutil::write_text(dir.file("meta3.tsv"),
                             "barcode\tbatch\n"
                             "BC0\tlab1\n"
                             "BC1\tlab2\n");
        CHECK_THROWS_WITH_AS(io::read_cell_metadata(dir.file("meta3.tsv"), x),
                             doctest::Contains("missing metadata"), std::runtime_error);
    }

    SUBCASE("unknown barcode is an error") {
        testutil::write_text(dir.file("meta4.tsv"),
                             "barcode\tbatch\n"
                             "BC0\tlab1\n"
                             "BC1\tlab2\n"
                             "BC2\tlab1\n"
                             "BCX\tlab1\n");
        CHECK_THROWS_WITH_AS(io::read_cell_metadata(dir.file("meta4.tsv"), x),
                             doctest::Contains("not in the matrix"), std::runtime_error);
    }

    SUBCASE("missing batch column is an error") {
        testutil::write_text(dir.file("meta5.tsv"), "barcode\tgroup\nBC0\tx\nBC1\tx\nBC2\tx\n");
        CHECK_THROWS_WITH_AS(io::read_cell_metadata(dir.file("meta5.tsv"), x),
                             doctest::Contains("missing required column 'batch'"), std::runtime_error);
    }
}

TEST_CASE("write_embeddings round trip within 1e-8") {
    CellTable cells;
    cells.barcodes = {"C1", "C2"};
    cells.batches = {0, 1};
    cells.labels = {1, 0};
    cells.batch_names = {"a", "b"};
    cells.label_names = {"x", "y"};
    cells.resize_metrics(2);

    Embeddings emb;
    emb.provenance = "refined";
    emb.values.resize(2, 2);
    emb.values << 0.5, -1.0, 0.123456789, 3.14159265;

    TempDir dir("emb");
    io::write_embeddings(emb, cells, dir.file("emb.tsv"), {"config_hash=deadbeef seed=1"});
    const auto back = io::read_embeddings(dir.file("emb.tsv"));
    CHECK(back.emb.provenance == "refined");
    CHECK(back.cells.barcodes == cells.barcodes);
    CHECK(back.cells.batches == cells.batches);
    CHECK(back.cells.labels == cells.labels);
    REQUIRE(back.emb.values.rows() == 2);
    CHECK((back.emb.values - emb.values).cwiseAbs().maxCoeff() < 1e-8);

    SUBCASE("row-count mismatch is an error") {
        Embeddings bad = emb;
        bad.values.conservativeResize(1, 2);
        CHECK_THROWS_AS(io::write_embeddings(bad, cells, dir.file("bad.tsv")), std::runtime_error);
    }
}

TEST_CASE("embeddings round trip on random values") {
    Rng rng(7);
    CellTable cells;
    const int n = 40, d = 9;
    for (int i = 0; i < n; ++i) {
        cells.barcodes.push_back("B" + std::to_string(i));
        cells.batches.push_back(static_cast<int>(rng.uniform_index(3)));
    }
    cells.batch_names = {"0", "1", "2"};
    cells.resize_metrics(n);
    Embeddings emb;
    emb.provenance = "pca";
    emb.values.resize(n, d);
    // 9 significant digits guarantee 1e-8 absolute error for |v| < 10
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) emb.values(i, j) = 1.5 * rng.normal();
    }
    TempDir dir("emb_rand");
    io::write_embeddings(emb, cells, dir.file("e.tsv"));
    const auto back = io::read_embeddings(dir.file("e.tsv"));
    CHECK((back.emb.values - emb.values).cwiseAbs().maxCoeff() < 1e-8);
    CHECK_FALSE(back.cells.has_labels());
}

TEST_CASE("parameter store binary round trip") {
    io::ParamStore store;
    std::vector<double> a = {1.0, -2.5, 3.25e-12};
    std::vector<double> b = {0.0};
    store.add("backbone.m0.gene_embedding", a.data(), a.size());
    store.add("fusion.omega.m0", b.data(), b.size());
    TempDir dir("params");
    io::write_params(store, dir.file("p.bin"));
    const auto back = io::read_params(dir.file("p.bin"));
    REQUIRE(back.sections.size() == 2);
    CHECK(back.sections[0].first == "backbone.m0.gene_embedding");
    CHECK(back.get("backbone.m0.gene_embedding") == a);
    CHECK(back.get("fusion.omega.m0") == b);
    CHECK(back.has("fusion.omega.m0"));
    CHECK_FALSE(back.has("nope"));
    CHECK_THROWS_AS(back.get("nope"), std::runtime_error);

    SUBCASE("bad magic rejected") {
        testutil::write_text(dir.file("bad.bin"), "NOTMAGIC????");
        CHECK_THROWS_AS(io::read_params(dir.file("bad.bin")), std::runtime_error);
    }
}

TEST_CASE("CSR structural invariants hold after every read (property)") {
    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = testutil::random_counts(5 + rng.uniform_index(20), 3 + rng.uniform_index(30), 0.3, rng);
        TempDir dir("csr_prop");
        io::write_mtx(x, dir.file("m.mtx"), dir.file("g.txt"), dir.file("b.txt"));
        const auto y = io::read_mtx(dir.file("m.mtx"), dir.file("g.txt"), dir.file("b.txt"));
        CHECK_NOTHROW(y.validate());
        CHECK(matrices_equal(x, y));
    }
}
