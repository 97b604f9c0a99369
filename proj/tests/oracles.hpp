#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (scalar loops, per-element formulas) and separate from
// the library code paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ifseg/mat.hpp"
#include "ifseg/model.hpp"
#include "ifseg/vocab.hpp"

namespace oracles {

// Greedy longest-match tokenizer: scan every entry at each position, keep
// the longest prefix match.
inline std::vector<ifseg::TokenId> greedy_tokenize(const std::string& normalized,
                                                   const ifseg::Vocabulary& vocab) {
    std::vector<ifseg::TokenId> out;
    std::size_t pos = 0;
    while (pos < normalized.size()) {
        std::size_t best_len = 0;
        ifseg::TokenId best_id = 0;
        for (ifseg::TokenId id = 0; id < vocab.size(); ++id) {
            const std::string& e = vocab.entry(id);
            if (e.size() > best_len && e.size() <= normalized.size() - pos &&
                normalized.compare(pos, e.size(), e) == 0) {
                best_len = e.size();
                best_id = id;
            }
        }
        if (best_len == 0) {
            ++pos;
            continue;
        }
        out.push_back(best_id);
        pos += best_len;
    }
    return out;
}

// Nearest-neighbor index formula evaluated per cell in floating point.
inline std::vector<std::uint32_t> nn_upscale_bruteforce(const std::vector<std::uint32_t>& coarse,
                                                        std::uint32_t u, std::uint32_t v,
                                                        std::uint32_t out_h, std::uint32_t out_w) {
    std::vector<std::uint32_t> out(static_cast<std::size_t>(out_h) * out_w);
    for (std::uint32_t i = 0; i < out_h; ++i) {
        for (std::uint32_t j = 0; j < out_w; ++j) {
            const auto si = static_cast<std::uint32_t>(
                std::floor(static_cast<double>(i) * u / out_h));
            const auto sj = static_cast<std::uint32_t>(
                std::floor(static_cast<double>(j) * v / out_w));
            out[static_cast<std::size_t>(i) * out_w + j] = coarse[static_cast<std::size_t>(si) * v + sj];
        }
    }
    return out;
}

// Triple-loop matrix product in double.
template <typename T>
ifseg::Mat<double> naive_matmul(const ifseg::Mat<T>& a, const ifseg::Mat<T>& b) {
    ifseg::Mat<double> c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k)
                s += static_cast<double>(a.at(i, k)) * static_cast<double>(b.at(k, j));
            c.at(i, j) = s;
        }
    return c;
}

// Direct exponential normalization over selected columns, no max shift.
inline std::vector<double> masked_softmax_row(const std::vector<double>& logits,
                                              const std::vector<ifseg::TokenId>& cols) {
    std::vector<double> out(cols.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out[c] = std::exp(logits[cols[c]]);
        sum += out[c];
    }
    for (double& v : out) v /= sum;
    return out;
}

// Exhaustive KNN by full sort of pairwise cosine similarities of the
// pre-normalized rows.
inline std::vector<std::vector<std::uint32_t>> knn_bruteforce(const ifseg::MatD& features,
                                                              std::uint32_t k) {
    const std::size_t n = features.rows;
    ifseg::MatD unit = features;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < unit.cols; ++j) s += unit.at(i, j) * unit.at(i, j);
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t j = 0; j < unit.cols; ++j) unit.at(i, j) *= inv;
    }
    std::vector<std::vector<std::uint32_t>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::uint32_t>> sims(n);
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < unit.cols; ++c) dot += unit.at(i, c) * unit.at(j, c);
            sims[j] = {dot, static_cast<std::uint32_t>(j)};
        }
        std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::uint32_t t = 0; t < k; ++t) out[i].push_back(sims[t].second);
    }
    return out;
}

// Position-by-position reference of the spatially conditioned decoder:
// scalar loops and per-row softmax, computed layer by layer with full key and
// value context (the substituted inputs are all known up-front).
template <typename T>
ifseg::Mat<T> reference_decode_spatial(const ifseg::Mat<T>& ctx,
                                       const ifseg::ModelParams<T>& params,
                                       const ifseg::ModelConfig& cfg) {
    const std::size_t d = cfg.dim;
    const std::size_t l = cfg.l_img;

    auto layernorm = [&](const ifseg::LayerNormParams<T>& ln, const std::vector<T>& row) {
        double mean = 0.0;
        for (T v : row) mean += static_cast<double>(v);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (T v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        std::vector<T> out(d);
        for (std::size_t j = 0; j < d; ++j)
            out[j] = T((row[j] - mean) * inv) * ln.gamma[j] + ln.beta[j];
        return out;
    };
    auto matvec_row = [&](const std::vector<T>& x, const ifseg::Mat<T>& w) {
        std::vector<T> out(w.cols, T(0));
        for (std::size_t i = 0; i < w.rows; ++i)
            for (std::size_t j = 0; j < w.cols; ++j) out[j] += x[i] * w.at(i, j);
        return out;
    };
    // attention for one query row against a full set of key/value rows
    auto attend = [&](const std::vector<T>& q_row, const std::vector<std::vector<T>>& kv_rows,
                      const ifseg::AttnParams<T>& w) {
        const std::size_t dh = cfg.head_dim();
        const T scale = T(1) / T(std::sqrt(static_cast<double>(dh)));
        const std::vector<T> q = matvec_row(q_row, w.wq);
        std::vector<std::vector<T>> ks, vs;
        for (const auto& row : kv_rows) {
            ks.push_back(matvec_row(row, w.wk));
            vs.push_back(matvec_row(row, w.wv));
        }
        std::vector<T> merged(d, T(0));
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            std::vector<T> scores(kv_rows.size());
            for (std::size_t j = 0; j < kv_rows.size(); ++j) {
                T s = T(0);
                for (std::size_t c = 0; c < dh; ++c) s += q[h * dh + c] * ks[j][h * dh + c];
                scores[j] = s * scale;
            }
            T mx = scores[0];
            for (T s : scores) mx = std::max(mx, s);
            T sum = T(0);
            for (T& s : scores) {
                s = std::exp(s - mx);
                sum += s;
            }
            for (T& s : scores) s /= sum;
            for (std::size_t j = 0; j < kv_rows.size(); ++j)
                for (std::size_t c = 0; c < dh; ++c) merged[h * dh + c] += scores[j] * vs[j][h * dh + c];
        }
        return matvec_row(merged, w.wo);
    };
    auto ffn = [&](const std::vector<T>& x, const ifseg::FfnParams<T>& w) {
        std::vector<T> hidden = matvec_row(x, w.w1);
        for (T& v : hidden)
            v = T(0.5) * v * (T(1) + T(std::erf(static_cast<double>(v) * 0.7071067811865476)));
        return matvec_row(hidden, w.w2);
    };

    // substituted inputs
    std::vector<std::vector<T>> x(l, std::vector<T>(d));
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < d; ++j)
            x[i][j] = ((i == 0) ? params.bos[j] : ctx.at(i - 1, j)) + params.pos_img.at(i, j);
    std::vector<std::vector<T>> ctx_rows(ctx.rows, std::vector<T>(d));
    for (std::size_t i = 0; i < ctx.rows; ++i)
        for (std::size_t j = 0; j < d; ++j) ctx_rows[i][j] = ctx.at(i, j);

    for (const auto& layer : params.decoder) {
        std::vector<std::vector<T>> normed(l);
        for (std::size_t i = 0; i < l; ++i) normed[i] = layernorm(layer.ln_self, x[i]);
        std::vector<std::vector<T>> x1(l, std::vector<T>(d));
        for (std::size_t i = 0; i < l; ++i) {
            const std::vector<T> a = attend(normed[i], normed, layer.self_attn);
            for (std::size_t j = 0; j < d; ++j) x1[i][j] = x[i][j] + a[j];
        }
        std::vector<std::vector<T>> x2(l, std::vector<T>(d));
        for (std::size_t i = 0; i < l; ++i) {
            const std::vector<T> b = layernorm(layer.ln_cross, x1[i]);
            const std::vector<T> a = attend(b, ctx_rows, layer.cross_attn);
            for (std::size_t j = 0; j < d; ++j) x2[i][j] = x1[i][j] + a[j];
        }
        for (std::size_t i = 0; i < l; ++i) {
            const std::vector<T> c = layernorm(layer.ln_ffn, x2[i]);
            const std::vector<T> f = ffn(c, layer.ffn);
            for (std::size_t j = 0; j < d; ++j) x[i][j] = x2[i][j] + f[j];
        }
    }

    ifseg::Mat<T> h(l, d);
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < d; ++j) h.at(i, j) = x[i][j];
    return h;
}

}  // namespace oracles
