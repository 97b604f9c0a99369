#include "ifseg/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ifseg/error.hpp"

namespace ifseg {

NeighborGraph knn_graph(const FeatureMap& features, std::uint32_t k) {
    const std::size_t n = features.rows.rows;
    require_data(n >= 1, "knn_graph: no feature rows");
    require_data(k >= 1 && k <= n, "knn_graph: K must be in [1, L]");

    std::vector<double> norm(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = features.rows.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < features.rows.cols; ++j) s += r[j] * r[j];
        require_data(s > 0.0,
                     "knn_graph: feature row " + std::to_string(i) +
                         " has zero norm (cosine similarity undefined)");
        norm[i] = std::sqrt(s);
    }

    NeighborGraph g;
    g.neighbors.assign(n, {});
    std::vector<std::pair<double, std::uint32_t>> sims(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* a = features.rows.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* b = features.rows.row(j);
            double dot = 0.0;
            for (std::size_t c = 0; c < features.rows.cols; ++c) dot += a[c] * b[c];
            sims[j] = {dot / (norm[i] * norm[j]), static_cast<std::uint32_t>(j)};
        }
        std::partial_sort(sims.begin(), sims.begin() + k, sims.end(),
                          [](const auto& x, const auto& y) {
                              if (x.first != y.first) return x.first > y.first;
                              return x.second < y.second;
                          });
        auto& row = g.neighbors[i];
        row.resize(k);
        for (std::uint32_t t = 0; t < k; ++t) row[t] = sims[t].second;
    }
    return g;
}

ProbabilityMap smooth(const ProbabilityMap& p, const NeighborGraph& g, std::uint32_t iterations) {
    require_data(g.positions() == p.probs.rows, "smooth: graph and map sizes disagree");
    ProbabilityMap cur = p;
    if (iterations == 0) return cur;
    const std::size_t m = p.probs.cols;
    MatD next(p.probs.rows, m);
    for (std::uint32_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < p.probs.rows; ++i) {
            const auto& nbrs = g.neighbors[i];
            double* dst = next.row(i);
            std::fill(dst, dst + m, 0.0);
            for (std::uint32_t j : nbrs) {
                const double* src = cur.probs.row(j);
                for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
            }
            const double inv = 1.0 / static_cast<double>(nbrs.size());
            for (std::size_t c = 0; c < m; ++c) dst[c] *= inv;
        }
        std::swap(cur.probs, next);
    }
    return cur;
}

}  // namespace ifseg
