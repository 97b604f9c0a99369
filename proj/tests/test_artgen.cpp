#include <doctest.h>

#include <set>

#include "ifseg/artgen.hpp"
#include "ifseg/error.hpp"
#include "oracles.hpp"

using namespace ifseg;

TEST_CASE("nn_upscale: single source cell fills the output") {
    const auto out = nn_upscale({7}, 1, 1, 5, 3);
    CHECK(out.size() == 15);
    for (auto v : out) CHECK(v == 7);
}

TEST_CASE("nn_upscale: same size is an identity copy") {
    std::vector<std::uint32_t> grid = {0, 1, 2, 3, 4, 5};
    CHECK(nn_upscale(grid, 2, 3, 2, 3) == grid);
}

TEST_CASE("nn_upscale: 2x2 to 4x4 replicates each cell as a 2x2 block") {
    const auto out = nn_upscale({0, 1, 2, 3}, 2, 2, 4, 4);
    const std::vector<std::uint32_t> expect = {0, 0, 1, 1, 0, 0, 1, 1,
                                               2, 2, 3, 3, 2, 2, 3, 3};
    CHECK(out == expect);
}

TEST_CASE("nn_upscale: exhaustive agreement with the index-formula oracle") {
    Rng rng(123);
    for (std::uint32_t u = 1; u <= 8; ++u)
        for (std::uint32_t v = 1; v <= 8; ++v)
            for (std::uint32_t h = 1; h <= 8; ++h)
                for (std::uint32_t w = 1; w <= 8; ++w) {
                    std::vector<std::uint32_t> coarse(u * v);
                    for (auto& c : coarse) c = static_cast<std::uint32_t>(rng.next_below(100));
                    CHECK(nn_upscale(coarse, u, v, h, w) ==
                          oracles::nn_upscale_bruteforce(coarse, u, v, h, w));
                }
}

TEST_CASE("nn_upscale: rejects zero-sized inputs") {
    CHECK_THROWS_AS(nn_upscale({}, 0, 1, 4, 4), Error);
    CHECK_THROWS_AS(nn_upscale({1}, 1, 1, 0, 4), Error);
}

TEST_CASE("sample_grid: S=1 forces a constant map") {
    ArtificialGridSpec spec{1, 6, 4};
    const GridSample s = sample_grid(spec, 5, 42);
    CHECK(s.u == 1);
    CHECK(s.v == 1);
    for (auto v : s.map) CHECK(v == s.coarse[0]);
}

TEST_CASE("sample_grid: M=1 gives an all-zero map") {
    ArtificialGridSpec spec{4, 8, 8};
    const GridSample s = sample_grid(spec, 1, 3);
    for (auto v : s.map) CHECK(v == 0);
}

TEST_CASE("sample_grid: identical seeds give bit-identical samples") {
    ArtificialGridSpec spec{8, 8, 8};
    const GridSample a = sample_grid(spec, 6, 777);
    const GridSample b = sample_grid(spec, 6, 777);
    CHECK(a.u == b.u);
    CHECK(a.v == b.v);
    CHECK(a.coarse == b.coarse);
    CHECK(a.map == b.map);
    const GridSample c = sample_grid(spec, 6, 778);
    CHECK((a.u != c.u || a.v != c.v || a.coarse != c.coarse));
}

TEST_CASE("sample_grid: every map value appears in the coarse grid") {
    ArtificialGridSpec spec{5, 7, 9};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GridSample s = sample_grid(spec, 4, seed);
        std::set<std::uint32_t> coarse_vals(s.coarse.begin(), s.coarse.end());
        for (auto v : s.map) CHECK(coarse_vals.count(v) == 1);
    }
}

TEST_CASE("sample_grid: map regions are contiguous rectangles of the expected size") {
    // For each distinct coarse cell (si, sj) the set of output rows mapping to
    // it is the contiguous run of i with (i*u)/H == si; same for columns.
    ArtificialGridSpec spec{8, 8, 8};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const GridSample s = sample_grid(spec, 1000000, seed);  // huge M: cells stay unique
        for (std::uint32_t si = 0; si < s.u; ++si) {
            std::vector<std::uint32_t> rows;
            for (std::uint32_t i = 0; i < spec.height; ++i)
                if ((static_cast<std::uint64_t>(i) * s.u) / spec.height == si) rows.push_back(i);
            const std::size_t base = spec.height / s.u;
            CHECK(rows.size() >= base);
            CHECK(rows.size() <= base + (spec.height % s.u ? 1 : 0));
            for (std::size_t r = 1; r < rows.size(); ++r) CHECK(rows[r] == rows[r - 1] + 1);
        }
    }
}

TEST_CASE("sample_grid: (u, v) and category frequencies stay within 3 sigma") {
    ArtificialGridSpec spec{4, 2, 2};
    const std::uint32_t m = 5;
    const int n = 20000;
    std::vector<int> uv_counts(16, 0);
    std::vector<std::int64_t> cat_counts(m, 0);
    std::int64_t cells = 0;
    for (int i = 0; i < n; ++i) {
        const GridSample s = sample_grid(spec, m, derive_seed(5150, i));
        uv_counts[(s.u - 1) * 4 + (s.v - 1)]++;
        for (auto c : s.coarse) {
            cat_counts[c]++;
            ++cells;
        }
    }
    {
        const double p = 1.0 / 16.0;
        const double sigma = std::sqrt(n * p * (1 - p));
        for (int c : uv_counts) CHECK(std::abs(c - n * p) <= 3 * sigma);
    }
    {
        const double p = 1.0 / m;
        const double sigma = std::sqrt(static_cast<double>(cells) * p * (1 - p));
        for (auto c : cat_counts) CHECK(std::abs(static_cast<double>(c) - cells * p) <= 3 * sigma);
    }
}

TEST_CASE("hierarchical_sample: singleton mapping pins every cell") {
    CategoryHierarchy h = CategoryHierarchy::from_mapping({{7}});
    ArtificialGridSpec spec{4, 4, 4};
    const HierarchicalSample s = hierarchical_sample(spec, h, 9);
    for (auto v : s.token_rows) CHECK(v == 7);
    for (auto t : s.target_map) CHECK(t == 0);
}

TEST_CASE("hierarchical_sample: fine ids always belong to their coarse mapping") {
    CategoryHierarchy h = CategoryHierarchy::from_mapping({{10, 11}, {20}, {30, 31, 32}});
    ArtificialGridSpec spec{8, 10, 10};
    std::size_t cells = 0;
    for (std::uint64_t seed = 0; cells < 10000; ++seed) {
        const HierarchicalSample s = hierarchical_sample(spec, h, seed);
        for (std::size_t k = 0; k < s.target_map.size(); ++k) {
            const auto& options = h.fine_rows[s.target_map[k]];
            CHECK(std::count(options.begin(), options.end(), s.token_rows[k]) == 1);
        }
        cells += s.target_map.size();
    }
}

TEST_CASE("hierarchy: empty fine list is rejected at construction") {
    CHECK_THROWS_AS(CategoryHierarchy::from_mapping({{1}, {}}), Error);
    CHECK_THROWS_AS(CategoryHierarchy::from_mapping({}), Error);
}

namespace {

EmbeddingMatrix tiny_embeddings(std::size_t rows, std::size_t dim) {
    EmbeddingMatrix e;
    e.rows = MatD(rows, dim);
    e.base_count = rows;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < dim; ++j) e.rows.at(i, j) = 100.0 * i + j;
    return e;
}

}  // namespace

TEST_CASE("to_training_pair: constant map replicates one embedding row") {
    EmbeddingMatrix e = tiny_embeddings(6, 3);
    SegCategorySet cats;
    cats.names = {"a", "b"};
    cats.merged_ids = {4, 2};
    cats.subtoken_ids = {{4}, {2}};
    GridSample s;
    s.u = s.v = 1;
    s.coarse = {0};
    s.map.assign(9, 0);
    const TrainingPair pair = to_training_pair(s, e, cats);
    CHECK(pair.tokens.rows == 9);
    for (std::size_t k = 0; k < 9; ++k) {
        CHECK(pair.targets[k] == 0);
        for (std::size_t j = 0; j < 3; ++j) CHECK(pair.tokens.at(k, j) == e.rows.at(4, j));
    }
}

TEST_CASE("to_training_pair: degenerate 1x1 map") {
    EmbeddingMatrix e = tiny_embeddings(3, 2);
    SegCategorySet cats;
    cats.names = {"a"};
    cats.merged_ids = {1};
    cats.subtoken_ids = {{1}};
    GridSample s;
    s.u = s.v = 1;
    s.coarse = {0};
    s.map = {0};
    const TrainingPair pair = to_training_pair(s, e, cats);
    CHECK(pair.tokens.rows == 1);
    CHECK(pair.targets.size() == 1);
}

TEST_CASE("to_training_pair: random map matches a per-cell lookup oracle") {
    EmbeddingMatrix e = tiny_embeddings(10, 4);
    SegCategorySet cats;
    cats.names = {"a", "b", "c"};
    cats.merged_ids = {9, 0, 5};
    cats.subtoken_ids = {{9}, {0}, {5}};
    ArtificialGridSpec spec{4, 4, 4};
    const GridSample s = sample_grid(spec, 3, 31337);
    const TrainingPair pair = to_training_pair(s, e, cats);
    for (std::size_t k = 0; k < s.map.size(); ++k) {
        CHECK(pair.targets[k] == s.map[k]);  // self-supervision: y_gt = x_I
        const double* expect = e.rows.row(cats.merged_ids[s.map[k]]);
        for (std::size_t j = 0; j < 4; ++j) CHECK(pair.tokens.at(k, j) == expect[j]);
    }
}

TEST_CASE("to_training_pair: out-of-range map index is rejected") {
    EmbeddingMatrix e = tiny_embeddings(4, 2);
    SegCategorySet cats;
    cats.names = {"a"};
    cats.merged_ids = {0};
    cats.subtoken_ids = {{0}};
    GridSample s;
    s.u = s.v = 1;
    s.coarse = {0};
    s.map = {1};  // only one category registered
    CHECK_THROWS_AS(to_training_pair(s, e, cats), Error);
}
