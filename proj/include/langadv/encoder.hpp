#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "langadv/autodiff.hpp"
#include "langadv/tensor.hpp"

namespace langadv {

struct EncoderConfig {
    int vocab_size = 0;
    int hidden = 32;
    int layers = 2;
    int heads = 4;
    int ffn_width = 0;  // 0 resolves to 4*hidden
    int max_len = 64;
    std::uint64_t seed = 1;

    int resolved_ffn_width() const { return ffn_width > 0 ? ffn_width : 4 * hidden; }
    void validate() const;
};

// A batch of token-id rows with a 0/1 mask (1 = real token).
struct TokenBatch {
    IntMatrix ids;
    IntMatrix mask;

    int batch() const { return ids.rows; }
    int seq_len() const { return ids.cols; }
};

struct EncoderLayerParams {
    Parameter attn_q_w, attn_q_b;
    Parameter attn_k_w, attn_k_b;
    Parameter attn_v_w, attn_v_b;
    Parameter attn_out_w, attn_out_b;
    Parameter ln1_gain, ln1_bias;
    Parameter ffn_in_w, ffn_in_b;
    Parameter ffn_out_w, ffn_out_b;
    Parameter ln2_gain, ln2_bias;
};

// The encoder parameter set theta. Initialization: normal(0, 0.02) weights
// and embeddings, zero biases, layer-norm gain 1 / bias 0.
struct EncoderParameters {
    EncoderConfig config;
    Parameter token_embedding;     // (vocab, hidden)
    Parameter position_embedding;  // (max_len, hidden)
    std::vector<EncoderLayerParams> layer_params;

    explicit EncoderParameters(EncoderConfig cfg);

    std::vector<Parameter*> all();  // stable order, matches checkpoint order
};

// Per-layer, per-head attention matrices captured during encode.
struct AttentionTrace {
    // indexed [layer * heads + head], each (batch, seq, seq)
    std::vector<Tensor> attention;
};

// Final-layer token states (batch, seq, hidden). Masked keys receive
// -inf attention logits, so unmasked outputs never depend on padding.
Var encode(Graph& g, EncoderParameters& params, const TokenBatch& batch,
           AttentionTrace* trace = nullptr);

// Arithmetic mean over unmasked token vectors: (batch, seq, hidden) -> (batch, hidden).
Var mean_pool(Graph& g, Var token_states, const IntMatrix& mask);

// Convenience: pooled embeddings as plain values (no gradients kept).
Tensor pooled_embeddings(EncoderParameters& params, const TokenBatch& batch);

}  // namespace langadv
