#pragma once

#include <cstdint>
#include <vector>

#include "ifseg/backbone.hpp"
#include "ifseg/segpipe.hpp"

namespace ifseg {

struct PostprocessConfig {
    std::uint32_t k = 3;            // neighbor count, including self
    std::uint32_t iterations = 25;
};

// Per-position neighbor indices, ranked by descending cosine similarity with
// ties broken toward the lower index. Self-similarity is maximal, so each row
// contains its own index except under exact ties at the cut boundary.
struct NeighborGraph {
    std::vector<std::vector<std::uint32_t>> neighbors;  // L rows of K indices

    std::size_t positions() const { return neighbors.size(); }
    std::size_t k() const { return neighbors.empty() ? 0 : neighbors.front().size(); }
};

// K most cosine-similar feature rows per position. Rejects zero-norm rows.
NeighborGraph knn_graph(const FeatureMap& features, std::uint32_t k);

// Synchronous neighborhood averaging: every iteration replaces each row with
// the mean of its neighbors' rows from the previous iterate. The graph is
// fixed across iterations.
ProbabilityMap smooth(const ProbabilityMap& p, const NeighborGraph& g, std::uint32_t iterations);

}  // namespace ifseg
