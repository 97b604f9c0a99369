#pragma once

#include <cstdint>
#include <vector>

#include "ifseg/mat.hpp"
#include "ifseg/rng.hpp"
#include "ifseg/vocab.hpp"

namespace ifseg {

// Parameters of artificial sample generation: initial grid sides are drawn
// from {1..S}, then upscaled to the backbone resolution H x W.
struct ArtificialGridSpec {
    std::uint32_t max_side = 8;  // S
    std::uint32_t height = 8;    // H
    std::uint32_t width = 8;     // W
};

// One artificial category map: the drawn u x v grid and its nearest-neighbor
// upscale. The upscaled map doubles as model input (via embedding lookup) and
// as ground truth.
struct GridSample {
    std::uint32_t u = 0;
    std::uint32_t v = 0;
    std::vector<std::uint32_t> coarse;  // u*v category indices, row-major
    std::vector<std::uint32_t> map;     // H*W category indices, row-major
    std::uint64_t seed = 0;
};

// Coarse category index -> candidate fine-word embedding rows.
struct CategoryHierarchy {
    std::vector<std::vector<TokenId>> fine_rows;  // one nonempty list per coarse category

    static CategoryHierarchy from_mapping(const std::vector<std::vector<TokenId>>& mapping);
    std::size_t coarse_count() const { return fine_rows.size(); }
};

// Hierarchical sample: targets carry the coarse category index, tokens carry
// the drawn fine word's embedding row.
struct HierarchicalSample {
    std::uint32_t u = 0;
    std::uint32_t v = 0;
    std::vector<std::uint32_t> target_map;  // H*W coarse indices
    std::vector<TokenId> token_rows;        // H*W embedding-row ids
    std::uint64_t seed = 0;
};

// out[i][j] = coarse[(i*u)/H][(j*v)/W]
std::vector<std::uint32_t> nn_upscale(const std::vector<std::uint32_t>& coarse, std::uint32_t u,
                                      std::uint32_t v, std::uint32_t out_h, std::uint32_t out_w);

// Draw order: u, v, then the u*v cells row-major, all by unbiased rejection
// sampling. Identical (spec, m, seed) triples give bit-identical samples.
GridSample sample_grid(const ArtificialGridSpec& spec, std::uint32_t m, std::uint64_t seed);

// Per cell: coarse index first, then a fine row uniform over its list.
HierarchicalSample hierarchical_sample(const ArtificialGridSpec& spec,
                                       const CategoryHierarchy& hierarchy, std::uint64_t seed);

// Training pair: row k of the token block is the embedding row of the
// category at map cell k; target k is the category index itself.
struct TrainingPair {
    MatD tokens;                         // (H*W) x D
    std::vector<std::uint32_t> targets;  // H*W
};

TrainingPair to_training_pair(const GridSample& sample, const EmbeddingMatrix& emb,
                              const SegCategorySet& cats);
TrainingPair to_training_pair(const HierarchicalSample& sample, const EmbeddingMatrix& emb);

}  // namespace ifseg
