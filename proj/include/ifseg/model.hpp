#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ifseg/mat.hpp"
#include "ifseg/rng.hpp"
#include "ifseg/vocab.hpp"

namespace ifseg {

// Shape of the toy transformer encoder-decoder. The decoder emits one output
// per image-token position (l_img = H*W); l_txt_max is the prompt capacity.
struct ModelConfig {
    std::size_t dim = 64;
    std::size_t n_layers_enc = 2;
    std::size_t n_layers_dec = 2;
    std::size_t n_heads = 4;
    std::size_t l_img = 64;
    std::size_t l_txt_max = 64;
    std::size_t ffn_mult = 4;

    std::size_t head_dim() const { return dim / n_heads; }
    std::size_t ffn_dim() const { return dim * ffn_mult; }
    void validate() const;
};

template <typename T>
struct LayerNormParams {
    std::vector<T> gamma, beta;
};

template <typename T>
struct AttnParams {
    Mat<T> wq, wk, wv, wo;  // dim x dim each, no biases
};

template <typename T>
struct FfnParams {
    Mat<T> w1, w2;  // dim x ffn_dim, ffn_dim x dim
};

// Pre-norm blocks: LN -> MHA -> residual; LN -> FFN(GELU) -> residual.
template <typename T>
struct EncoderLayerParams {
    LayerNormParams<T> ln_attn, ln_ffn;
    AttnParams<T> attn;
    FfnParams<T> ffn;
};

template <typename T>
struct DecoderLayerParams {
    LayerNormParams<T> ln_self, ln_cross, ln_ffn;
    AttnParams<T> self_attn, cross_attn;
    FfnParams<T> ffn;
};

template <typename T>
struct ModelParams {
    std::vector<EncoderLayerParams<T>> encoder;
    std::vector<DecoderLayerParams<T>> decoder;
    Mat<T> pos_img;      // l_img x dim
    Mat<T> pos_txt;      // l_txt_max x dim
    std::vector<T> bos;  // dim
};

// Weights ~ Normal(0, 0.02^2) truncated at 2 sigma; layer-norm scales 1,
// offsets 0. Bit-identical for identical seeds.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

// --- forward caches (kept for backprop and for test introspection) ---

template <typename T>
struct LayerNormCache {
    std::vector<T> inv_std;  // per row
    Mat<T> xhat;             // normalized input
    Mat<T> y;                // output
};

template <typename T>
struct AttnCache {
    Mat<T> q, k, v;               // projected
    std::vector<Mat<T>> weights;  // per head, Lq x Lk softmax rows
    Mat<T> heads;                 // concatenated head outputs, pre-Wo
};

template <typename T>
struct FfnCache {
    Mat<T> hidden_pre, hidden_act;
};

template <typename T>
struct EncLayerCache {
    Mat<T> x_in, x_mid;
    LayerNormCache<T> ln_attn, ln_ffn;
    AttnCache<T> attn;
    FfnCache<T> ffn;
};

template <typename T>
struct DecLayerCache {
    Mat<T> x_in, x_after_self, x_after_cross;
    LayerNormCache<T> ln_self, ln_cross, ln_ffn;
    AttnCache<T> self_attn, cross_attn;
    FfnCache<T> ffn;
};

template <typename T>
struct EncodeResult {
    Mat<T> ctx;  // L_x x dim
    std::vector<EncLayerCache<T>> layers;
};

template <typename T>
struct DecodeResult {
    Mat<T> h;       // l_img x dim
    Mat<T> dec_in;  // the substituted decoder inputs
    std::vector<DecLayerCache<T>> layers;
};

// Encoder input assembly: image-token embeddings get the image position
// embeddings, prompt embeddings the text position embeddings.
template <typename T>
Mat<T> build_encoder_input(const Mat<T>& image_tokens, const std::vector<TokenId>& prompt,
                           const Mat<T>& emb, const ModelParams<T>& params,
                           const ModelConfig& cfg);

template <typename T>
EncodeResult<T> encode_cached(const Mat<T>& e_x, const ModelParams<T>& params,
                              const ModelConfig& cfg);

template <typename T>
Mat<T> encode(const Mat<T>& e_x, const ModelParams<T>& params, const ModelConfig& cfg);

// Decoder input substitution: position 0 carries the BOS embedding, position
// i > 0 the encoder output of position i-1; every position gets the
// encoder's image position embedding.
template <typename T>
Mat<T> decoder_inputs(const Mat<T>& ctx, const ModelParams<T>& params, const ModelConfig& cfg);

// Decoder blocks on explicit inputs: bidirectional self-attention over the
// l_img positions, cross-attention against the full encoder output.
template <typename T>
DecodeResult<T> decode_blocks_cached(const Mat<T>& dec_in, const Mat<T>& ctx,
                                     const ModelParams<T>& params, const ModelConfig& cfg);

template <typename T>
DecodeResult<T> decode_spatial_cached(const Mat<T>& ctx, const ModelParams<T>& params,
                                      const ModelConfig& cfg);

template <typename T>
Mat<T> decode_spatial(const Mat<T>& ctx, const ModelParams<T>& params, const ModelConfig& cfg);

// logits[i] = emb * h[i], i.e. h * emb^T over the whole dictionary.
template <typename T>
Mat<T> output_logits(const Mat<T>& h, const Mat<T>& emb);

// --- training ---

struct OptimizerConfig {
    double lr = 3e-4;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct Gradients {
    ModelParams<T> model;
    Mat<T> emb;
};

template <typename T>
Gradients<T> make_gradients(const ModelConfig& cfg, std::size_t emb_rows, std::size_t emb_cols);

// Full forward for one artificial sample: encode with prompt, spatially
// conditioned decode, masked softmax over the merged-category columns, and
// mean NLL over positions.
template <typename T>
struct SegForward {
    Mat<T> e_x;
    EncodeResult<T> enc;
    DecodeResult<T> dec;
    Mat<T> probs;  // l_img x M
    T loss = T(0);
};

template <typename T>
SegForward<T> seg_forward(const Mat<T>& image_tokens, const std::vector<TokenId>& prompt,
                          const Mat<T>& emb, const std::vector<TokenId>& merged_ids,
                          const std::vector<std::uint32_t>& targets,
                          const ModelParams<T>& params, const ModelConfig& cfg);

// Reverse-mode gradients of loss * loss_scale, accumulated into grads. Image
// token inputs are constants; the embedding matrix receives gradients through
// the output projection and the prompt embeddings.
template <typename T>
void seg_backward(const SegForward<T>& fwd, const std::vector<TokenId>& prompt, const Mat<T>& emb,
                  const std::vector<TokenId>& merged_ids,
                  const std::vector<std::uint32_t>& targets, const ModelParams<T>& params,
                  const ModelConfig& cfg, T loss_scale, Gradients<T>& grads);

// Named view of every trainable tensor, in the fixed registry order shared
// by the optimizer and the checkpoint format.
template <typename T>
struct TensorRef {
    std::string name;
    T* data;
    std::size_t size;
};

template <typename T>
std::vector<TensorRef<T>> collect_tensors(ModelParams<T>& params, Mat<T>& emb);

template <typename T>
struct AdamWState {
    std::uint64_t t = 0;
    std::vector<T> m, v;  // flat, registry order
};

template <typename T>
AdamWState<T> make_adamw_state(const std::vector<TensorRef<T>>& tensors);

// Decoupled weight decay update with bias correction:
// theta <- theta * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
void adamw_step(const std::vector<TensorRef<T>>& params, const std::vector<TensorRef<T>>& grads,
                const OptimizerConfig& oc, AdamWState<T>& state);

template <typename T>
struct TrainItem {
    Mat<T> tokens;                       // l_img x dim embedding rows
    std::vector<std::uint32_t> targets;  // l_img category indices
};

// One optimizer step over the batch; returns the mean loss. Gradients are
// accumulated in sample-index order, so results are deterministic.
template <typename T>
T train_step(const std::vector<TrainItem<T>>& batch, ModelParams<T>& params, Mat<T>& emb,
             const std::vector<TokenId>& prompt, const std::vector<TokenId>& merged_ids,
             const OptimizerConfig& oc, AdamWState<T>& opt, const ModelConfig& cfg);

}  // namespace ifseg
