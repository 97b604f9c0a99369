#include "ifseg/model.hpp"

#include <cmath>

#include "ifseg/error.hpp"

namespace ifseg {

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + T(std::erf(static_cast<double>(x) * 0.7071067811865476)));
}

template <typename T>
T gelu_grad(T x) {
    const double xd = static_cast<double>(x);
    const double phi = std::exp(-0.5 * xd * xd) * 0.3989422804014327;  // standard normal pdf
    const double cdf = 0.5 * (1.0 + std::erf(xd * 0.7071067811865476));
    return T(cdf + xd * phi);
}

template <typename T>
void softmax_rows(Mat<T>& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        T* row = m.row(i);
        T max = row[0];
        for (std::size_t j = 1; j < m.cols; ++j) max = std::max(max, row[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < m.cols; ++j) {
            row[j] = std::exp(row[j] - max);
            sum += row[j];
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < m.cols; ++j) row[j] *= inv;
    }
}

// d_scores = (d_probs - rowdot(d_probs, probs)) * probs, in place on d_probs
template <typename T>
void softmax_backward_rows(const Mat<T>& probs, Mat<T>& d_probs) {
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const T* p = probs.row(i);
        T* d = d_probs.row(i);
        T dot = T(0);
        for (std::size_t j = 0; j < probs.cols; ++j) dot += d[j] * p[j];
        for (std::size_t j = 0; j < probs.cols; ++j) d[j] = (d[j] - dot) * p[j];
    }
}

template <typename T>
Mat<T> col_slice(const Mat<T>& m, std::size_t c0, std::size_t width) {
    Mat<T> out(m.rows, width);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const T* src = m.row(i) + c0;
        std::copy(src, src + width, out.row(i));
    }
    return out;
}

template <typename T>
void col_slice_put(Mat<T>& dst, const Mat<T>& src, std::size_t c0) {
    for (std::size_t i = 0; i < src.rows; ++i) {
        const T* s = src.row(i);
        std::copy(s, s + src.cols, dst.row(i) + c0);
    }
}

// --- layer norm ---

template <typename T>
Mat<T> layernorm_forward(const LayerNormParams<T>& ln, const Mat<T>& x, LayerNormCache<T>& cache) {
    const std::size_t d = x.cols;
    cache.inv_std.resize(x.rows);
    cache.xhat = Mat<T>(x.rows, d);
    cache.y = Mat<T>(x.rows, d);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const T* row = x.row(i);
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= T(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = row[j] - mean;
            var += c * c;
        }
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + T(kLnEps));
        cache.inv_std[i] = inv;
        T* xh = cache.xhat.row(i);
        T* y = cache.y.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            xh[j] = (row[j] - mean) * inv;
            y[j] = xh[j] * ln.gamma[j] + ln.beta[j];
        }
    }
    return cache.y;
}

template <typename T>
Mat<T> layernorm_backward(const LayerNormParams<T>& ln, const LayerNormCache<T>& cache,
                          const Mat<T>& dy, LayerNormParams<T>& dln) {
    const std::size_t d = cache.xhat.cols;
    Mat<T> dx(cache.xhat.rows, d);
    for (std::size_t i = 0; i < cache.xhat.rows; ++i) {
        const T* xh = cache.xhat.row(i);
        const T* dyr = dy.row(i);
        T* dxr = dx.row(i);
        T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T dxh = dyr[j] * ln.gamma[j];
            dln.gamma[j] += dyr[j] * xh[j];
            dln.beta[j] += dyr[j];
            dxr[j] = dxh;  // stash dxhat
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
        }
        mean_dxhat /= T(d);
        mean_dxhat_xhat /= T(d);
        const T inv = cache.inv_std[i];
        for (std::size_t j = 0; j < d; ++j)
            dxr[j] = (dxr[j] - mean_dxhat - xh[j] * mean_dxhat_xhat) * inv;
    }
    return dx;
}

// --- multi-head attention ---

template <typename T>
Mat<T> attn_forward(const AttnParams<T>& w, const Mat<T>& q_in, const Mat<T>& kv_in,
                    const ModelConfig& cfg, AttnCache<T>& cache) {
    const std::size_t dh = cfg.head_dim();
    const T scale = T(1) / T(std::sqrt(static_cast<double>(dh)));
    cache.q = matmul(q_in, w.wq);
    cache.k = matmul(kv_in, w.wk);
    cache.v = matmul(kv_in, w.wv);
    cache.weights.assign(cfg.n_heads, {});
    cache.heads = Mat<T>(q_in.rows, cfg.dim);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const Mat<T> qh = col_slice(cache.q, h * dh, dh);
        const Mat<T> kh = col_slice(cache.k, h * dh, dh);
        const Mat<T> vh = col_slice(cache.v, h * dh, dh);
        Mat<T> scores = matmul_nt(qh, kh);
        for (T& s : scores.data) s *= scale;
        softmax_rows(scores);
        cache.weights[h] = std::move(scores);
        col_slice_put(cache.heads, matmul(cache.weights[h], vh), h * dh);
    }
    return matmul(cache.heads, w.wo);
}

// Accumulates weight gradients into dw, returns (d_q_in, d_kv_in).
template <typename T>
std::pair<Mat<T>, Mat<T>> attn_backward(const AttnParams<T>& w, const AttnCache<T>& cache,
                                        const Mat<T>& q_in, const Mat<T>& kv_in,
                                        const Mat<T>& d_out, const ModelConfig& cfg,
                                        AttnParams<T>& dw) {
    const std::size_t dh = cfg.head_dim();
    const T scale = T(1) / T(std::sqrt(static_cast<double>(dh)));
    matmul_tn_accum(cache.heads, d_out, dw.wo);
    const Mat<T> d_heads = matmul_nt(d_out, w.wo);

    Mat<T> dq(cache.q.rows, cfg.dim);
    Mat<T> dk(cache.k.rows, cfg.dim);
    Mat<T> dv(cache.v.rows, cfg.dim);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const Mat<T> qh = col_slice(cache.q, h * dh, dh);
        const Mat<T> kh = col_slice(cache.k, h * dh, dh);
        const Mat<T> vh = col_slice(cache.v, h * dh, dh);
        const Mat<T> dhh = col_slice(d_heads, h * dh, dh);
        const Mat<T>& probs = cache.weights[h];

        Mat<T> d_probs = matmul_nt(dhh, vh);   // Lq x Lk
        const Mat<T> dvh = matmul_tn(probs, dhh);
        softmax_backward_rows(probs, d_probs);
        for (T& s : d_probs.data) s *= scale;
        const Mat<T> dqh = matmul(d_probs, kh);
        const Mat<T> dkh = matmul_tn(d_probs, qh);
        col_slice_put(dq, dqh, h * dh);
        col_slice_put(dk, dkh, h * dh);
        col_slice_put(dv, dvh, h * dh);
    }
    matmul_tn_accum(q_in, dq, dw.wq);
    matmul_tn_accum(kv_in, dk, dw.wk);
    matmul_tn_accum(kv_in, dv, dw.wv);
    Mat<T> d_q_in = matmul_nt(dq, w.wq);
    Mat<T> d_kv_in = matmul_nt(dk, w.wk);
    add_inplace(d_kv_in, matmul_nt(dv, w.wv));
    return {std::move(d_q_in), std::move(d_kv_in)};
}

// --- feed-forward ---

template <typename T>
Mat<T> ffn_forward(const FfnParams<T>& w, const Mat<T>& x, FfnCache<T>& cache) {
    cache.hidden_pre = matmul(x, w.w1);
    cache.hidden_act = cache.hidden_pre;
    for (T& v : cache.hidden_act.data) v = gelu(v);
    return matmul(cache.hidden_act, w.w2);
}

template <typename T>
Mat<T> ffn_backward(const FfnParams<T>& w, const FfnCache<T>& cache, const Mat<T>& x,
                    const Mat<T>& dy, FfnParams<T>& dw) {
    matmul_tn_accum(cache.hidden_act, dy, dw.w2);
    Mat<T> d_hidden = matmul_nt(dy, w.w2);
    for (std::size_t i = 0; i < d_hidden.data.size(); ++i)
        d_hidden.data[i] *= gelu_grad(cache.hidden_pre.data[i]);
    matmul_tn_accum(x, d_hidden, dw.w1);
    return matmul_nt(d_hidden, w.w1);
}

// --- encoder / decoder layers ---

template <typename T>
Mat<T> encoder_layer_forward(const EncoderLayerParams<T>& layer, const Mat<T>& x,
                             const ModelConfig& cfg, EncLayerCache<T>& cache) {
    cache.x_in = x;
    const Mat<T> a = layernorm_forward(layer.ln_attn, x, cache.ln_attn);
    Mat<T> out = attn_forward(layer.attn, a, a, cfg, cache.attn);
    add_inplace(out, x);
    cache.x_mid = out;
    const Mat<T> b = layernorm_forward(layer.ln_ffn, out, cache.ln_ffn);
    Mat<T> f = ffn_forward(layer.ffn, b, cache.ffn);
    add_inplace(f, out);
    return f;
}

template <typename T>
Mat<T> encoder_layer_backward(const EncoderLayerParams<T>& layer, const EncLayerCache<T>& cache,
                              const Mat<T>& d_out, const ModelConfig& cfg,
                              EncoderLayerParams<T>& dlayer) {
    const Mat<T> db = ffn_backward(layer.ffn, cache.ffn, cache.ln_ffn.y, d_out, dlayer.ffn);
    Mat<T> dx_mid = layernorm_backward(layer.ln_ffn, cache.ln_ffn, db, dlayer.ln_ffn);
    add_inplace(dx_mid, d_out);

    auto [d_q_in, d_kv_in] = attn_backward(layer.attn, cache.attn, cache.ln_attn.y,
                                           cache.ln_attn.y, dx_mid, cfg, dlayer.attn);
    add_inplace(d_q_in, d_kv_in);  // self-attention: same input
    Mat<T> dx = layernorm_backward(layer.ln_attn, cache.ln_attn, d_q_in, dlayer.ln_attn);
    add_inplace(dx, dx_mid);
    return dx;
}

template <typename T>
Mat<T> decoder_layer_forward(const DecoderLayerParams<T>& layer, const Mat<T>& x,
                             const Mat<T>& ctx, const ModelConfig& cfg, DecLayerCache<T>& cache) {
    cache.x_in = x;
    const Mat<T> a = layernorm_forward(layer.ln_self, x, cache.ln_self);
    Mat<T> x1 = attn_forward(layer.self_attn, a, a, cfg, cache.self_attn);
    add_inplace(x1, x);
    cache.x_after_self = x1;

    const Mat<T> b = layernorm_forward(layer.ln_cross, x1, cache.ln_cross);
    Mat<T> x2 = attn_forward(layer.cross_attn, b, ctx, cfg, cache.cross_attn);
    add_inplace(x2, x1);
    cache.x_after_cross = x2;

    const Mat<T> c = layernorm_forward(layer.ln_ffn, x2, cache.ln_ffn);
    Mat<T> out = ffn_forward(layer.ffn, c, cache.ffn);
    add_inplace(out, x2);
    return out;
}

template <typename T>
Mat<T> decoder_layer_backward(const DecoderLayerParams<T>& layer, const DecLayerCache<T>& cache,
                              const Mat<T>& ctx, const Mat<T>& d_out, const ModelConfig& cfg,
                              DecoderLayerParams<T>& dlayer, Mat<T>& d_ctx) {
    const Mat<T> dc = ffn_backward(layer.ffn, cache.ffn, cache.ln_ffn.y, d_out, dlayer.ffn);
    Mat<T> dx2 = layernorm_backward(layer.ln_ffn, cache.ln_ffn, dc, dlayer.ln_ffn);
    add_inplace(dx2, d_out);

    auto [db, d_ctx_part] = attn_backward(layer.cross_attn, cache.cross_attn, cache.ln_cross.y,
                                          ctx, dx2, cfg, dlayer.cross_attn);
    add_inplace(d_ctx, d_ctx_part);
    Mat<T> dx1 = layernorm_backward(layer.ln_cross, cache.ln_cross, db, dlayer.ln_cross);
    add_inplace(dx1, dx2);

    auto [da_q, da_kv] = attn_backward(layer.self_attn, cache.self_attn, cache.ln_self.y,
                                       cache.ln_self.y, dx1, cfg, dlayer.self_attn);
    add_inplace(da_q, da_kv);
    Mat<T> dx = layernorm_backward(layer.ln_self, cache.ln_self, da_q, dlayer.ln_self);
    add_inplace(dx, dx1);
    return dx;
}

// --- parameter allocation ---

template <typename T>
LayerNormParams<T> make_ln(std::size_t d) {
    LayerNormParams<T> ln;
    ln.gamma.assign(d, T(1));
    ln.beta.assign(d, T(0));
    return ln;
}

template <typename T>
void fill_trunc_normal(Mat<T>& m, Rng& rng) {
    for (T& v : m.data) v = T(rng.next_trunc_normal(0.02));
}

template <typename T>
AttnParams<T> make_attn(const ModelConfig& cfg, Rng& rng) {
    AttnParams<T> a;
    a.wq = Mat<T>(cfg.dim, cfg.dim);
    a.wk = Mat<T>(cfg.dim, cfg.dim);
    a.wv = Mat<T>(cfg.dim, cfg.dim);
    a.wo = Mat<T>(cfg.dim, cfg.dim);
    fill_trunc_normal(a.wq, rng);
    fill_trunc_normal(a.wk, rng);
    fill_trunc_normal(a.wv, rng);
    fill_trunc_normal(a.wo, rng);
    return a;
}

template <typename T>
FfnParams<T> make_ffn(const ModelConfig& cfg, Rng& rng) {
    FfnParams<T> f;
    f.w1 = Mat<T>(cfg.dim, cfg.ffn_dim());
    f.w2 = Mat<T>(cfg.ffn_dim(), cfg.dim);
    fill_trunc_normal(f.w1, rng);
    fill_trunc_normal(f.w2, rng);
    return f;
}

template <typename T>
ModelParams<T> zero_like_params(const ModelConfig& cfg) {
    ModelParams<T> p;
    p.encoder.resize(cfg.n_layers_enc);
    for (auto& l : p.encoder) {
        l.ln_attn.gamma.assign(cfg.dim, T(0));
        l.ln_attn.beta.assign(cfg.dim, T(0));
        l.ln_ffn = l.ln_attn;
        l.attn.wq = Mat<T>(cfg.dim, cfg.dim);
        l.attn.wk = Mat<T>(cfg.dim, cfg.dim);
        l.attn.wv = Mat<T>(cfg.dim, cfg.dim);
        l.attn.wo = Mat<T>(cfg.dim, cfg.dim);
        l.ffn.w1 = Mat<T>(cfg.dim, cfg.ffn_dim());
        l.ffn.w2 = Mat<T>(cfg.ffn_dim(), cfg.dim);
    }
    p.decoder.resize(cfg.n_layers_dec);
    for (auto& l : p.decoder) {
        l.ln_self.gamma.assign(cfg.dim, T(0));
        l.ln_self.beta.assign(cfg.dim, T(0));
        l.ln_cross = l.ln_self;
        l.ln_ffn = l.ln_self;
        l.self_attn.wq = Mat<T>(cfg.dim, cfg.dim);
        l.self_attn.wk = Mat<T>(cfg.dim, cfg.dim);
        l.self_attn.wv = Mat<T>(cfg.dim, cfg.dim);
        l.self_attn.wo = Mat<T>(cfg.dim, cfg.dim);
        l.cross_attn = l.self_attn;
        l.ffn.w1 = Mat<T>(cfg.dim, cfg.ffn_dim());
        l.ffn.w2 = Mat<T>(cfg.ffn_dim(), cfg.dim);
    }
    p.pos_img = Mat<T>(cfg.l_img, cfg.dim);
    p.pos_txt = Mat<T>(cfg.l_txt_max, cfg.dim);
    p.bos.assign(cfg.dim, T(0));
    return p;
}

}  // namespace

void ModelConfig::validate() const {
    require_data(dim >= 1 && n_layers_enc >= 1 && n_layers_dec >= 1 && n_heads >= 1 &&
                     l_img >= 1 && l_txt_max >= 1 && ffn_mult >= 1,
                 "model config: all counts must be positive");
    require_data(dim % n_heads == 0, "model config: dim must be divisible by n_heads");
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelParams<T> p;
    p.pos_img = Mat<T>(cfg.l_img, cfg.dim);
    fill_trunc_normal(p.pos_img, rng);
    p.pos_txt = Mat<T>(cfg.l_txt_max, cfg.dim);
    fill_trunc_normal(p.pos_txt, rng);
    p.bos.resize(cfg.dim);
    for (T& v : p.bos) v = T(rng.next_trunc_normal(0.02));
    p.encoder.reserve(cfg.n_layers_enc);
    for (std::size_t i = 0; i < cfg.n_layers_enc; ++i) {
        EncoderLayerParams<T> l;
        l.ln_attn = make_ln<T>(cfg.dim);
        l.attn = make_attn<T>(cfg, rng);
        l.ln_ffn = make_ln<T>(cfg.dim);
        l.ffn = make_ffn<T>(cfg, rng);
        p.encoder.push_back(std::move(l));
    }
    p.decoder.reserve(cfg.n_layers_dec);
    for (std::size_t i = 0; i < cfg.n_layers_dec; ++i) {
        DecoderLayerParams<T> l;
        l.ln_self = make_ln<T>(cfg.dim);
        l.self_attn = make_attn<T>(cfg, rng);
        l.ln_cross = make_ln<T>(cfg.dim);
        l.cross_attn = make_attn<T>(cfg, rng);
        l.ln_ffn = make_ln<T>(cfg.dim);
        l.ffn = make_ffn<T>(cfg, rng);
        p.decoder.push_back(std::move(l));
    }
    return p;
}

template <typename T>
Mat<T> build_encoder_input(const Mat<T>& image_tokens, const std::vector<TokenId>& prompt,
                           const Mat<T>& emb, const ModelParams<T>& params,
                           const ModelConfig& cfg) {
    require_data(image_tokens.rows == cfg.l_img && image_tokens.cols == cfg.dim,
                 "encoder input: image token block has wrong shape");
    require_data(prompt.size() <= cfg.l_txt_max, "encoder input: prompt exceeds capacity");
    Mat<T> e_x(cfg.l_img + prompt.size(), cfg.dim);
    for (std::size_t i = 0; i < cfg.l_img; ++i) {
        const T* tok = image_tokens.row(i);
        const T* pos = params.pos_img.row(i);
        T* dst = e_x.row(i);
        for (std::size_t j = 0; j < cfg.dim; ++j) dst[j] = tok[j] + pos[j];
    }
    for (std::size_t t = 0; t < prompt.size(); ++t) {
        require_data(prompt[t] < emb.rows, "encoder input: prompt token id out of range");
        const T* tok = emb.row(prompt[t]);
        const T* pos = params.pos_txt.row(t);
        T* dst = e_x.row(cfg.l_img + t);
        for (std::size_t j = 0; j < cfg.dim; ++j) dst[j] = tok[j] + pos[j];
    }
    return e_x;
}

template <typename T>
EncodeResult<T> encode_cached(const Mat<T>& e_x, const ModelParams<T>& params,
                              const ModelConfig& cfg) {
    require_data(e_x.cols == cfg.dim, "encode: embedding width mismatch");
    require_data(e_x.rows >= cfg.l_img && e_x.rows <= cfg.l_img + cfg.l_txt_max,
                 "encode: sequence length out of range");
    EncodeResult<T> r;
    r.layers.resize(params.encoder.size());
    Mat<T> x = e_x;
    for (std::size_t i = 0; i < params.encoder.size(); ++i)
        x = encoder_layer_forward(params.encoder[i], x, cfg, r.layers[i]);
    r.ctx = std::move(x);
    return r;
}

template <typename T>
Mat<T> encode(const Mat<T>& e_x, const ModelParams<T>& params, const ModelConfig& cfg) {
    return encode_cached(e_x, params, cfg).ctx;
}

template <typename T>
Mat<T> decoder_inputs(const Mat<T>& ctx, const ModelParams<T>& params, const ModelConfig& cfg) {
    require_data(ctx.rows >= cfg.l_img, "decode: encoder output shorter than l_img");
    require_data(ctx.cols == cfg.dim, "decode: embedding width mismatch");
    Mat<T> dec_in(cfg.l_img, cfg.dim);
    for (std::size_t i = 0; i < cfg.l_img; ++i) {
        const T* base = (i == 0) ? params.bos.data() : ctx.row(i - 1);
        const T* pos = params.pos_img.row(i);
        T* dst = dec_in.row(i);
        for (std::size_t j = 0; j < cfg.dim; ++j) dst[j] = base[j] + pos[j];
    }
    return dec_in;
}

template <typename T>
DecodeResult<T> decode_blocks_cached(const Mat<T>& dec_in, const Mat<T>& ctx,
                                     const ModelParams<T>& params, const ModelConfig& cfg) {
    DecodeResult<T> r;
    r.dec_in = dec_in;
    r.layers.resize(params.decoder.size());
    Mat<T> x = dec_in;
    for (std::size_t i = 0; i < params.decoder.size(); ++i)
        x = decoder_layer_forward(params.decoder[i], x, ctx, cfg, r.layers[i]);
    r.h = std::move(x);
    return r;
}

template <typename T>
DecodeResult<T> decode_spatial_cached(const Mat<T>& ctx, const ModelParams<T>& params,
                                      const ModelConfig& cfg) {
    return decode_blocks_cached(decoder_inputs(ctx, params, cfg), ctx, params, cfg);
}

template <typename T>
Mat<T> decode_spatial(const Mat<T>& ctx, const ModelParams<T>& params, const ModelConfig& cfg) {
    return decode_spatial_cached(ctx, params, cfg).h;
}

template <typename T>
Mat<T> output_logits(const Mat<T>& h, const Mat<T>& emb) {
    require_data(h.cols == emb.cols, "output_logits: widths disagree");
    return matmul_nt(h, emb);
}

template <typename T>
Gradients<T> make_gradients(const ModelConfig& cfg, std::size_t emb_rows, std::size_t emb_cols) {
    Gradients<T> g;
    g.model = zero_like_params<T>(cfg);
    g.emb = Mat<T>(emb_rows, emb_cols);
    return g;
}

template <typename T>
SegForward<T> seg_forward(const Mat<T>& image_tokens, const std::vector<TokenId>& prompt,
                          const Mat<T>& emb, const std::vector<TokenId>& merged_ids,
                          const std::vector<std::uint32_t>& targets,
                          const ModelParams<T>& params, const ModelConfig& cfg) {
    const std::size_t m = merged_ids.size();
    require_data(m >= 1, "seg_forward: empty category set");
    require_data(targets.size() == cfg.l_img, "seg_forward: target count != l_img");

    SegForward<T> f;
    f.e_x = build_encoder_input(image_tokens, prompt, emb, params, cfg);
    f.enc = encode_cached(f.e_x, params, cfg);
    f.dec = decode_spatial_cached(f.enc.ctx, params, cfg);

    // masked softmax: logits restricted to the merged-category columns
    Mat<T> emb_seg(m, cfg.dim);
    for (std::size_t c = 0; c < m; ++c) {
        require_data(merged_ids[c] < emb.rows, "seg_forward: merged id out of range");
        const T* src = emb.row(merged_ids[c]);
        std::copy(src, src + cfg.dim, emb_seg.row(c));
    }
    f.probs = matmul_nt(f.dec.h, emb_seg);
    softmax_rows(f.probs);

    double loss = 0.0;
    for (std::size_t i = 0; i < cfg.l_img; ++i) {
        require_data(targets[i] < m, "seg_forward: target out of range");
        const double p = std::max(static_cast<double>(f.probs.at(i, targets[i])), 1e-12);
        loss += -std::log(p);
    }
    f.loss = T(loss / static_cast<double>(cfg.l_img));
    return f;
}

template <typename T>
void seg_backward(const SegForward<T>& fwd, const std::vector<TokenId>& prompt, const Mat<T>& emb,
                  const std::vector<TokenId>& merged_ids,
                  const std::vector<std::uint32_t>& targets, const ModelParams<T>& params,
                  const ModelConfig& cfg, T loss_scale, Gradients<T>& grads) {
    const std::size_t m = merged_ids.size();
    const std::size_t l = cfg.l_img;

    Mat<T> emb_seg(m, cfg.dim);
    for (std::size_t c = 0; c < m; ++c) {
        const T* src = emb.row(merged_ids[c]);
        std::copy(src, src + cfg.dim, emb_seg.row(c));
    }

    // softmax + NLL fused: d_logits = (p - onehot) * scale / l_img
    Mat<T> d_logits = fwd.probs;
    const T scale = loss_scale / T(l);
    for (std::size_t i = 0; i < l; ++i) {
        T* row = d_logits.row(i);
        row[targets[i]] -= T(1);
        for (std::size_t c = 0; c < m; ++c) row[c] *= scale;
    }

    Mat<T> dh = matmul(d_logits, emb_seg);
    const Mat<T> d_emb_seg = matmul_tn(d_logits, fwd.dec.h);
    for (std::size_t c = 0; c < m; ++c) {
        const T* src = d_emb_seg.row(c);
        T* dst = grads.emb.row(merged_ids[c]);
        for (std::size_t j = 0; j < cfg.dim; ++j) dst[j] += src[j];
    }

    // decoder stack
    Mat<T> d_ctx(fwd.enc.ctx.rows, cfg.dim);
    Mat<T> d = std::move(dh);
    for (std::size_t i = params.decoder.size(); i-- > 0;)
        d = decoder_layer_backward(params.decoder[i], fwd.dec.layers[i], fwd.enc.ctx, d, cfg,
                                   grads.model.decoder[i], d_ctx);

    // decoder input substitution: d_i = (i == 0 ? bos : ctx_{i-1}) + pos_img_i
    for (std::size_t i = 0; i < l; ++i) {
        const T* src = d.row(i);
        T* dpos = grads.model.pos_img.row(i);
        for (std::size_t j = 0; j < cfg.dim; ++j) dpos[j] += src[j];
        if (i == 0) {
            for (std::size_t j = 0; j < cfg.dim; ++j) grads.model.bos[j] += src[j];
        } else {
            T* dc = d_ctx.row(i - 1);
            for (std::size_t j = 0; j < cfg.dim; ++j) dc[j] += src[j];
        }
    }

    // encoder stack
    Mat<T> de = std::move(d_ctx);
    for (std::size_t i = params.encoder.size(); i-- > 0;)
        de = encoder_layer_backward(params.encoder[i], fwd.enc.layers[i], de, cfg,
                                    grads.model.encoder[i]);

    // encoder inputs: image rows into pos_img (token embeddings are
    // constants); text rows into pos_txt and the prompt's embedding rows
    for (std::size_t i = 0; i < l; ++i) {
        const T* src = de.row(i);
        T* dst = grads.model.pos_img.row(i);
        for (std::size_t j = 0; j < cfg.dim; ++j) dst[j] += src[j];
    }
    for (std::size_t t = 0; t + l < de.rows; ++t) {
        const T* src = de.row(l + t);
        T* dpt = grads.model.pos_txt.row(t);
        T* demb = grads.emb.row(prompt[t]);
        for (std::size_t j = 0; j < cfg.dim; ++j) {
            dpt[j] += src[j];
            demb[j] += src[j];
        }
    }
}

template <typename T>
std::vector<TensorRef<T>> collect_tensors(ModelParams<T>& params, Mat<T>& emb) {
    std::vector<TensorRef<T>> refs;
    auto add = [&refs](const std::string& name, T* data, std::size_t size) {
        refs.push_back({name, data, size});
    };
    auto add_mat = [&add](const std::string& name, Mat<T>& m) { add(name, m.data.data(), m.size()); };
    auto add_ln = [&](const std::string& name, LayerNormParams<T>& ln) {
        add(name + ".gamma", ln.gamma.data(), ln.gamma.size());
        add(name + ".beta", ln.beta.data(), ln.beta.size());
    };
    auto add_attn = [&](const std::string& name, AttnParams<T>& a) {
        add_mat(name + ".wq", a.wq);
        add_mat(name + ".wk", a.wk);
        add_mat(name + ".wv", a.wv);
        add_mat(name + ".wo", a.wo);
    };
    auto add_ffn = [&](const std::string& name, FfnParams<T>& f) {
        add_mat(name + ".w1", f.w1);
        add_mat(name + ".w2", f.w2);
    };

    add_mat("emb", emb);
    add_mat("pos_img", params.pos_img);
    add_mat("pos_txt", params.pos_txt);
    add("bos", params.bos.data(), params.bos.size());
    for (std::size_t i = 0; i < params.encoder.size(); ++i) {
        const std::string base = "enc." + std::to_string(i);
        add_ln(base + ".ln_attn", params.encoder[i].ln_attn);
        add_attn(base + ".attn", params.encoder[i].attn);
        add_ln(base + ".ln_ffn", params.encoder[i].ln_ffn);
        add_ffn(base + ".ffn", params.encoder[i].ffn);
    }
    for (std::size_t i = 0; i < params.decoder.size(); ++i) {
        const std::string base = "dec." + std::to_string(i);
        add_ln(base + ".ln_self", params.decoder[i].ln_self);
        add_attn(base + ".self_attn", params.decoder[i].self_attn);
        add_ln(base + ".ln_cross", params.decoder[i].ln_cross);
        add_attn(base + ".cross_attn", params.decoder[i].cross_attn);
        add_ln(base + ".ln_ffn", params.decoder[i].ln_ffn);
        add_ffn(base + ".ffn", params.decoder[i].ffn);
    }
    return refs;
}

template <typename T>
AdamWState<T> make_adamw_state(const std::vector<TensorRef<T>>& tensors) {
    std::size_t total = 0;
    for (const auto& t : tensors) total += t.size;
    AdamWState<T> s;
    s.m.assign(total, T(0));
    s.v.assign(total, T(0));
    return s;
}

template <typename T>
void adamw_step(const std::vector<TensorRef<T>>& params, const std::vector<TensorRef<T>>& grads,
                const OptimizerConfig& oc, AdamWState<T>& state) {
    require_data(params.size() == grads.size(), "adamw: parameter/gradient registries disagree");
    state.t += 1;
    const T lr = T(oc.lr);
    const T b1 = T(oc.beta1);
    const T b2 = T(oc.beta2);
    const T eps = T(oc.eps);
    const T decay = T(1) - lr * T(oc.weight_decay);
    const T bc1 = T(1) - T(std::pow(oc.beta1, static_cast<double>(state.t)));
    const T bc2 = T(1) - T(std::pow(oc.beta2, static_cast<double>(state.t)));
    std::size_t offset = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_data(params[k].size == grads[k].size, "adamw: tensor sizes disagree");
        T* theta = params[k].data;
        const T* g = grads[k].data;
        T* m = state.m.data() + offset;
        T* v = state.v.data() + offset;
        for (std::size_t i = 0; i < params[k].size; ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            theta[i] = theta[i] * decay - lr * mhat / (std::sqrt(vhat) + eps);
        }
        offset += params[k].size;
    }
}

template <typename T>
T train_step(const std::vector<TrainItem<T>>& batch, ModelParams<T>& params, Mat<T>& emb,
             const std::vector<TokenId>& prompt, const std::vector<TokenId>& merged_ids,
             const OptimizerConfig& oc, AdamWState<T>& opt, const ModelConfig& cfg) {
    require_data(!batch.empty(), "train_step: empty batch");
    Gradients<T> grads = make_gradients<T>(cfg, emb.rows, emb.cols);
    const T inv_batch = T(1) / T(batch.size());
    double loss_sum = 0.0;
    for (const TrainItem<T>& item : batch) {
        SegForward<T> fwd =
            seg_forward(item.tokens, prompt, emb, merged_ids, item.targets, params, cfg);
        if (!std::isfinite(static_cast<double>(fwd.loss)))
            fail_numeric("train_step: non-finite loss");
        loss_sum += static_cast<double>(fwd.loss);
        seg_backward(fwd, prompt, emb, merged_ids, item.targets, params, cfg, inv_batch, grads);
    }
    std::vector<TensorRef<T>> prefs = collect_tensors(params, emb);
    std::vector<TensorRef<T>> grefs = collect_tensors(grads.model, grads.emb);
    if (opt.m.empty()) opt = make_adamw_state(prefs);
    adamw_step(prefs, grefs, oc, opt);
    return T(loss_sum / static_cast<double>(batch.size()));
}

// explicit instantiations for the pipeline (double) and tests (float)
#define IFSEG_INSTANTIATE_MODEL(T)                                                                \
    template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                    \
    template Mat<T> build_encoder_input<T>(const Mat<T>&, const std::vector<TokenId>&,            \
                                           const Mat<T>&, const ModelParams<T>&,                  \
                                           const ModelConfig&);                                   \
    template EncodeResult<T> encode_cached<T>(const Mat<T>&, const ModelParams<T>&,               \
                                              const ModelConfig&);                                \
    template Mat<T> encode<T>(const Mat<T>&, const ModelParams<T>&, const ModelConfig&);          \
    template Mat<T> decoder_inputs<T>(const Mat<T>&, const ModelParams<T>&, const ModelConfig&);  \
    template DecodeResult<T> decode_blocks_cached<T>(const Mat<T>&, const Mat<T>&,                \
                                                     const ModelParams<T>&, const ModelConfig&);  \
    template DecodeResult<T> decode_spatial_cached<T>(const Mat<T>&, const ModelParams<T>&,       \
                                                      const ModelConfig&);                        \
    template Mat<T> decode_spatial<T>(const Mat<T>&, const ModelParams<T>&, const ModelConfig&);  \
    template Mat<T> output_logits<T>(const Mat<T>&, const Mat<T>&);                               \
    template Gradients<T> make_gradients<T>(const ModelConfig&, std::size_t, std::size_t);        \
    template SegForward<T> seg_forward<T>(const Mat<T>&, const std::vector<TokenId>&,             \
                                          const Mat<T>&, const std::vector<TokenId>&,             \
                                          const std::vector<std::uint32_t>&,                      \
                                          const ModelParams<T>&, const ModelConfig&);             \
    template void seg_backward<T>(const SegForward<T>&, const std::vector<TokenId>&,              \
                                  const Mat<T>&, const std::vector<TokenId>&,                     \
                                  const std::vector<std::uint32_t>&, const ModelParams<T>&,       \
                                  const ModelConfig&, T, Gradients<T>&);                          \
    template std::vector<TensorRef<T>> collect_tensors<T>(ModelParams<T>&, Mat<T>&);              \
    template AdamWState<T> make_adamw_state<T>(const std::vector<TensorRef<T>>&);                 \
    template void adamw_step<T>(const std::vector<TensorRef<T>>&,                                 \
                                const std::vector<TensorRef<T>>&, const OptimizerConfig&,         \
                                AdamWState<T>&);                                                  \
    template T train_step<T>(const std::vector<TrainItem<T>>&, ModelParams<T>&, Mat<T>&,          \
                             const std::vector<TokenId>&, const std::vector<TokenId>&,            \
                             const OptimizerConfig&, AdamWState<T>&, const ModelConfig&);

IFSEG_INSTANTIATE_MODEL(float)
IFSEG_INSTANTIATE_MODEL(double)

#undef IFSEG_INSTANTIATE_MODEL

}  // namespace ifseg
