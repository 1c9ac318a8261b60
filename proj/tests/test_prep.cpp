#include "doctest.h"

#include <cmath>

#include "morekit/prep.hpp"
#include "morekit/rng.hpp"
#include "testutil.hpp"

using namespace morekit;

namespace {

ExpressionMatrix from_dense(const std::vector<std::vector<double>>& rows,
                            std::vector<std::string> gene_names) {
    ExpressionMatrix x;
    x.n_cells = rows.size();
    x.n_genes = gene_names.size();
    x.gene_names = std::move(gene_names);
    x.row_offsets.push_back(0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            if (rows[i][j] != 0.0) {
                x.col_indices.push_back(static_cast<std::uint32_t>(j));
                x.values.push_back(rows[i][j]);
            }
        }
        x.row_offsets.push_back(x.values.size());
        x.barcodes.push_back("C" + std::to_string(i));
    }
    return x;
}

}  // namespace

TEST_CASE("compute_qc: mito/ribo percentages and degenerate conventions") {
    auto x = from_dense({{5, 5, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 4}},
                        {"ACTB", "MT-CO1", "RPS4", "RPL3"});
    CellTable cells;
    cells.barcodes = x.barcodes;
    cells.batches.assign(3, 0);
    cells.batch_names = {"b"};
    prep::compute_qc(x, cells);

    CHECK(cells.total_counts[0] == 10.0);
    CHECK(cells.pct_counts_mt[0] == doctest::Approx(50.0));
    CHECK(cells.n_genes_by_counts[0] == 2);

    // all-zero cell
    CHECK(cells.total_counts[1] == 0.0);
    CHECK(cells.pct_counts_mt[1] == 0.0);
    CHECK(cells.pct_counts_ribo[1] == 0.0);

    // only RPL3 expressed
    CHECK(cells.pct_counts_ribo[2] == doctest::Approx(100.0));
}

TEST_CASE("compute_qc: per-cell totals sum to the grand total (property)") {
    Rng rng(3);
    const auto x = testutil::random_counts(40, 25, 0.3, rng);
    CellTable cells;
    cells.barcodes = x.barcodes;
    cells.batches.assign(40, 0);
    prep::compute_qc(x, cells);
    double total = 0.0;
    for (double t : cells.total_counts) total += t;
    CHECK(total == doctest::Approx(x.grand_total()).epsilon(1e-12));
}

TEST_CASE("filter_cells: identity, removal and empty-result error") {
    auto x = from_dense({{5, 5}, {1, 0}}, {"ACTB", "MT-CO1"});
    CellTable cells;
    cells.barcodes = x.barcodes;
    cells.batches.assign(2, 0);
    prep::compute_qc(x, cells);

    SUBCASE("thresholds at the extremes keep everything") {
        auto [xf, cf] = prep::filter_cells(x, cells, 0, 100.0);
        CHECK(xf.n_cells == 2);
        CHECK(cf.barcodes == x.barcodes);
    }
    SUBCASE("high pct_mt cell removed") {
        // cell 0 has pct_mt 50
        auto [xf, cf] = prep::filter_cells(x, cells, 0, 20.0);
        CHECK(xf.n_cells == 1);
        CHECK(cf.barcodes[0] == "C1");
    }
    SUBCASE("removing everything is an explicit error") {
        CHECK_THROWS_WITH_AS(prep::filter_cells(x, cells, 100, 0.0), doctest::Contains("every cell"),
                             std::runtime_error);
    }
}

TEST_CASE("normalize_log1p: forced arithmetic and zero cells") {
    auto x = from_dense({{2, 2}, {0, 0}, {10, 0}}, {"A", "B"});
    const auto norm = prep::normalize_log1p(x, 4.0);
    CHECK(norm.values[0] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    CHECK(norm.values[1] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    CHECK(norm.row_offsets[2] == norm.row_offsets[1]);  // zero cell stays empty

    const auto norm10 = prep::normalize_log1p(x, 10.0);
    CHECK(norm10.values[2] == doctest::Approx(std::log(11.0)).epsilon(1e-15));
}

TEST_CASE("normalize_log1p: proportions reproduced after inversion (property)") {
    Rng rng(11);
    const auto x = testutil::random_counts(30, 20, 0.4, rng);
    const double target = 1.0e4;
    const auto norm = prep::normalize_log1p(x, target);
    for (std::size_t i = 0; i < x.n_cells; ++i) {
        const double total = x.row_total(i);
        if (total == 0.0) continue;
        for (std::size_t p = x.row_offsets[i]; p < x.row_offsets[i + 1]; ++p) {
            const double recovered = std::expm1(norm.values[p]) / target * total;
            CHECK(std::abs(recovered - x.values[p]) / x.values[p] < 1e-9);
        }
    }
}

TEST_CASE("select_hvg: identical genes give z = 0 and index tie-break") {
    // every gene has the same counts across cells
    std::vector<std::vector<double>> rows(6, std::vector<double>(10, 0.0));
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 10; ++j) rows[i][j] = static_cast<double>(1 + i % 3);
    }
    std::vector<std::string> names;
    for (int j = 0; j < 10; ++j) names.push_back("G" + std::to_string(j));
    const auto x = from_dense(rows, names);
    const auto rep = prep::select_hvg(x, 4, 3);
    for (double z : rep.z) CHECK(z == 0.0);
    const auto sel = rep.selected_genes();
    CHECK(sel == std::vector<std::uint32_t>{0, 1, 2, 3});

    SUBCASE("n_top >= n_genes selects everything") {
        const auto all = prep::select_hvg(x, 100, 3);
        CHECK(all.selected_genes().size() == 10);
    }
}

TEST_CASE("select_hvg: planted high-dispersion genes are recovered") {
    // 50 planted subpopulation-marker genes among 2000; the generator's
    // plant list is the ground truth. 10 bins keep each bin's statistics
    // background-dominated (50 planted genes spread over 200-gene bins).
    Rng rng(202);
    const std::size_t n_planted = 50;
    const auto bench = testutil::make_planted_hvg(800, 2000, n_planted, rng);

    const auto norm = prep::normalize_log1p(bench.counts);
    const auto rep = prep::select_hvg(norm, n_planted, 10);
    std::size_t hits = 0;
    for (auto g : rep.selected_genes()) {
        if (bench.planted[g]) ++hits;
    }
    const double recall = static_cast<double>(hits) / static_cast<double>(n_planted);
    CHECK(recall >= 0.95);

    SUBCASE("selection is deterministic") {
        const auto rep2 = prep::select_hvg(norm, n_planted, 10);
        CHECK(rep.selected == rep2.selected);
    }
}

TEST_CASE("pca: rank-1 data concentrates variance on the first component") {
    Rng rng(5);
    Eigen::VectorXd direction(6);
    for (int j = 0; j < 6; ++j) direction(j) = rng.normal();
    Eigen::MatrixXd data(40, 6);
    for (int i = 0; i < 40; ++i) data.row(i) = (rng.normal() * direction).transpose();
    auto [model, emb] = prep::pca(data, 3);
    CHECK(model.explained_variance_ratio(0) >= 0.999);
    CHECK(model.explained_variance_ratio(1) < 1e-6);
    CHECK(emb.provenance == "pca");
}

TEST_CASE("pca: ratios are non-increasing and in [0,1]; sign rule holds") {
    Rng rng(6);
    Eigen::MatrixXd data(50, 8);
    for (int i = 0; i < 50; ++i) {
        for (int j = 0; j < 8; ++j) data(i, j) = rng.normal() * (1.0 + j % 3);
    }
    auto [model, emb] = prep::pca(data, 8);
    double total = 0.0;
    for (int c = 0; c < 8; ++c) {
        const double r = model.explained_variance_ratio(c);
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
        if (c > 0) CHECK(r <= model.explained_variance_ratio(c - 1) + 1e-12);
        total += r;
        Eigen::Index argmax = 0;
        model.components.col(c).cwiseAbs().maxCoeff(&argmax);
        CHECK(model.components(argmax, c) > 0.0);
    }
    CHECK(total <= 1.0 + 1e-9);
}

TEST_CASE("pca: exact rank-k data reconstructs within 1e-6") {
    Rng rng(7);
    const int n = 60, g = 20, k = 4;
    Eigen::MatrixXd factors(n, k), loadings(k, g);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) factors(i, j) = rng.normal();
    }
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < g; ++j) loadings(i, j) = rng.normal();
    }
    const Eigen::MatrixXd data = factors * loadings;  // exact rank k
    auto [model, emb] = prep::pca(data, k);
    const Eigen::MatrixXd recon = prep::pca_reconstruct(model, emb.values);
    CHECK((recon - data).cwiseAbs().maxCoeff() < 1e-6);

    SUBCASE("k too large is an error") {
        CHECK_THROWS_AS(prep::pca(data, 21), std::invalid_argument);
    }
}

TEST_CASE("top_expressed: ordering, single gene, and n > n_genes") {
    // ACTB holds 30% of all counts
    auto x = from_dense({{30, 20, 25}, {0, 15, 10}}, {"ACTB", "GAPDH", "OTHER"});
    const auto top = prep::top_expressed(x, 2);
    REQUIRE(top.size() == 2);
    CHECK(top[0].first == "GAPDH");  // 35%
    CHECK(top[0].second == doctest::Approx(35.0));
    CHECK(top[1].first == "OTHER");  // 35% ties? no: OTHER also 35 -> tie by index: GAPDH (1) then OTHER (2)
    CHECK(top[1].second == doctest::Approx(35.0));

    auto single = from_dense({{7}}, {"ONLY"});
    const auto t1 = prep::top_expressed(single, 5);
    REQUIRE(t1.size() == 1);
    CHECK(t1[0].second == doctest::Approx(100.0));

    double sum = 0.0;
    for (const auto& [gene, pct] : prep::top_expressed(x, 10)) sum += pct;
    CHECK(sum <= 100.0 + 1e-9);
}

TEST_CASE("top_expressed: dominant marker share is reported exactly") {
    // construct a matrix where ACTB holds exactly 30% of total counts
    auto x = from_dense({{30, 40}, {0, 30}}, {"ACTB", "GAPDH"});
    const auto top = prep::top_expressed(x, 2);
    CHECK(top[0].first == "GAPDH");
    CHECK(top[1].first == "ACTB");
    CHECK(top[1].second == doctest::Approx(30.0));
}
