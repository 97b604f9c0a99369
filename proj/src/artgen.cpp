#include "ifseg/artgen.hpp"

#include "ifseg/error.hpp"

namespace ifseg {

std::vector<std::uint32_t> nn_upscale(const std::vector<std::uint32_t>& coarse, std::uint32_t u,
                                      std::uint32_t v, std::uint32_t out_h, std::uint32_t out_w) {
    require_data(u >= 1 && v >= 1 && out_h >= 1 && out_w >= 1, "nn_upscale: zero-sized input");
    require_data(coarse.size() == static_cast<std::size_t>(u) * v,
                 "nn_upscale: grid size does not match u*v");
    std::vector<std::uint32_t> out(static_cast<std::size_t>(out_h) * out_w);
    for (std::uint32_t i = 0; i < out_h; ++i) {
        const std::uint32_t si = static_cast<std::uint32_t>(
            (static_cast<std::uint64_t>(i) * u) / out_h);
        for (std::uint32_t j = 0; j < out_w; ++j) {
            const std::uint32_t sj = static_cast<std::uint32_t>(
                (static_cast<std::uint64_t>(j) * v) / out_w);
            out[static_cast<std::size_t>(i) * out_w + j] = coarse[static_cast<std::size_t>(si) * v + sj];
        }
    }
    return out;
}

GridSample sample_grid(const ArtificialGridSpec& spec, std::uint32_t m, std::uint64_t seed) {
    require_data(spec.max_side >= 1 && spec.height >= 1 && spec.width >= 1,
                 "sample_grid: invalid grid spec");
    require_data(m >= 1, "sample_grid: need at least one category");
    Rng rng(seed);
    GridSample s;
    s.seed = seed;
    s.u = static_cast<std::uint32_t>(1 + rng.next_below(spec.max_side));
    s.v = static_cast<std::uint32_t>(1 + rng.next_below(spec.max_side));
    s.coarse.resize(static_cast<std::size_t>(s.u) * s.v);
    for (auto& cell : s.coarse) cell = static_cast<std::uint32_t>(rng.next_below(m));
    s.map = nn_upscale(s.coarse, s.u, s.v, spec.height, spec.width);
    return s;
}

CategoryHierarchy CategoryHierarchy::from_mapping(const std::vector<std::vector<TokenId>>& mapping) {
    require_data(!mapping.empty(), "hierarchy: empty mapping");
    for (std::size_t i = 0; i < mapping.size(); ++i)
        require_data(!mapping[i].empty(),
                     "hierarchy: coarse category " + std::to_string(i) + " has no fine categories");
    CategoryHierarchy h;
    h.fine_rows = mapping;
    return h;
}

HierarchicalSample hierarchical_sample(const ArtificialGridSpec& spec,
                                       const CategoryHierarchy& hierarchy, std::uint64_t seed) {
    require_data(hierarchy.coarse_count() >= 1, "hierarchical_sample: empty hierarchy");
    Rng rng(seed);
    HierarchicalSample s;
    s.seed = seed;
    s.u = static_cast<std::uint32_t>(1 + rng.next_below(spec.max_side));
    s.v = static_cast<std::uint32_t>(1 + rng.next_below(spec.max_side));
    const std::size_t cells = static_cast<std::size_t>(s.u) * s.v;
    std::vector<std::uint32_t> coarse(cells);
    std::vector<TokenId> fine(cells);
    for (std::size_t k = 0; k < cells; ++k) {
        const std::uint32_t c =
            static_cast<std::uint32_t>(rng.next_below(hierarchy.coarse_count()));
        const auto& options = hierarchy.fine_rows[c];
        coarse[k] = c;
        fine[k] = options[rng.next_below(options.size())];
    }
    s.target_map = nn_upscale(coarse, s.u, s.v, spec.height, spec.width);
    s.token_rows = nn_upscale(fine, s.u, s.v, spec.height, spec.width);
    return s;
}

namespace {

MatD gather_rows(const EmbeddingMatrix& emb, const std::vector<TokenId>& row_ids) {
    MatD out(row_ids.size(), emb.dim());
    for (std::size_t k = 0; k < row_ids.size(); ++k) {
        require_data(row_ids[k] < emb.total(), "to_training_pair: embedding row out of range");
        const double* src = emb.rows.row(row_ids[k]);
        std::copy(src, src + emb.dim(), out.row(k));
    }
    return out;
}

}  // namespace

TrainingPair to_training_pair(const GridSample& sample, const EmbeddingMatrix& emb,
                              const SegCategorySet& cats) {
    std::vector<TokenId> row_ids(sample.map.size());
    for (std::size_t k = 0; k < sample.map.size(); ++k) {
        require_data(sample.map[k] < cats.count(), "to_training_pair: category index out of range");
        row_ids[k] = cats.merged_ids[sample.map[k]];
    }
    return {gather_rows(emb, row_ids), sample.map};
}

TrainingPair to_training_pair(const HierarchicalSample& sample, const EmbeddingMatrix& emb) {
    return {gather_rows(emb, sample.token_rows), sample.target_map};
}

}  // namespace ifseg
