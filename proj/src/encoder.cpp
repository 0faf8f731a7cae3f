#include "langadv/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace langadv {

void EncoderConfig::validate() const {
    if (vocab_size < 1 || hidden < 1 || layers < 1 || heads < 1 || max_len < 1) {
        throw std::invalid_argument("encoder config counts must be >= 1");
    }
    if (hidden % heads != 0) {
        throw std::invalid_argument("hidden (" + std::to_string(hidden) +
                                    ") must be divisible by heads (" + std::to_string(heads) + ")");
    }
}

static Tensor init_weight(Shape shape, Rng& rng) { return Tensor::randn(std::move(shape), rng, 0.02); }

EncoderParameters::EncoderParameters(EncoderConfig cfg) : config(cfg) {
    config.validate();
    const int h = config.hidden;
    const int f = config.resolved_ffn_width();
    Rng rng(config.seed);
    token_embedding = Parameter("encoder.token_embedding", init_weight({config.vocab_size, h}, rng));
    position_embedding =
        Parameter("encoder.position_embedding", init_weight({config.max_len, h}, rng));
    layer_params.reserve(static_cast<std::size_t>(config.layers));
    for (int l = 0; l < config.layers; ++l) {
        const std::string prefix = "encoder.layer" + std::to_string(l) + ".";
        EncoderLayerParams lp{
            Parameter(prefix + "attn_q_w", init_weight({h, h}, rng)),
            Parameter(prefix + "attn_q_b", Tensor::zeros({h})),
            Parameter(prefix + "attn_k_w", init_weight({h, h}, rng)),
            Parameter(prefix + "attn_k_b", Tensor::zeros({h})),
            Parameter(prefix + "attn_v_w", init_weight({h, h}, rng)),
            Parameter(prefix + "attn_v_b", Tensor::zeros({h})),
            Parameter(prefix + "attn_out_w", init_weight({h, h}, rng)),
            Parameter(prefix + "attn_out_b", Tensor::zeros({h})),
            Parameter(prefix + "ln1_gain", Tensor::ones({h})),
            Parameter(prefix + "ln1_bias", Tensor::zeros({h})),
            Parameter(prefix + "ffn_in_w", init_weight({h, f}, rng)),
            Parameter(prefix + "ffn_in_b", Tensor::zeros({f})),
            Parameter(prefix + "ffn_out_w", init_weight({f, h}, rng)),
            Parameter(prefix + "ffn_out_b", Tensor::zeros({h})),
            Parameter(prefix + "ln2_gain", Tensor::ones({h})),
            Parameter(prefix + "ln2_bias", Tensor::zeros({h})),
        };
        layer_params.push_back(std::move(lp));
    }
}

std::vector<Parameter*> EncoderParameters::all() {
    std::vector<Parameter*> result{&token_embedding, &position_embedding};
    for (EncoderLayerParams& lp : layer_params) {
        result.insert(result.end(),
                      {&lp.attn_q_w, &lp.attn_q_b, &lp.attn_k_w, &lp.attn_k_b, &lp.attn_v_w,
                       &lp.attn_v_b, &lp.attn_out_w, &lp.attn_out_b, &lp.ln1_gain, &lp.ln1_bias,
                       &lp.ffn_in_w, &lp.ffn_in_b, &lp.ffn_out_w, &lp.ffn_out_b, &lp.ln2_gain,
                       &lp.ln2_bias});
    }
    return result;
}

static void check_batch(const EncoderConfig& cfg, const TokenBatch& batch) {
    if (batch.ids.rows != batch.mask.rows || batch.ids.cols != batch.mask.cols) {
        throw std::invalid_argument("token batch ids and mask extents differ");
    }
    if (batch.seq_len() > cfg.max_len) {
        throw std::invalid_argument("sequence length " + std::to_string(batch.seq_len()) +
                                    " exceeds max_len " + std::to_string(cfg.max_len));
    }
    for (int b = 0; b < batch.batch(); ++b) {
        bool any = false;
        for (int s = 0; s < batch.seq_len(); ++s) {
            const int id = batch.ids.at(b, s);
            if (id < 0 || id >= cfg.vocab_size) {
                throw std::invalid_argument("token id " + std::to_string(id) + " outside vocab of " +
                                            std::to_string(cfg.vocab_size));
            }
            if (batch.mask.at(b, s) != 0) any = true;
        }
        if (!any) throw std::invalid_argument("batch row " + std::to_string(b) + " is fully masked");
    }
}

Var encode(Graph& g, EncoderParameters& params, const TokenBatch& batch, AttentionTrace* trace) {
    const EncoderConfig& cfg = params.config;
    check_batch(cfg, batch);
    const int bsz = batch.batch();
    const int seq = batch.seq_len();
    const int heads = cfg.heads;
    const int head_dim = cfg.hidden / heads;

    IntMatrix pos_ids(bsz, seq);
    for (int b = 0; b < bsz; ++b) {
        for (int s = 0; s < seq; ++s) pos_ids.at(b, s) = s;
    }
    Var x = g.add(g.embedding(g.param(params.token_embedding), batch.ids),
                  g.embedding(g.param(params.position_embedding), pos_ids));

    // Additive key mask: 0 for real tokens, -1e30 at masked keys, shared by
    // every head and query row.
    Tensor key_mask = Tensor::zeros({bsz, seq, seq});
    for (int b = 0; b < bsz; ++b) {
        for (int j = 0; j < seq; ++j) {
            if (batch.mask.at(b, j) != 0) continue;
            for (int i = 0; i < seq; ++i) key_mask.at3(b, i, j) = -1e30;
        }
    }
    Var key_mask_var = g.constant(std::move(key_mask));
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    for (EncoderLayerParams& lp : params.layer_params) {
        Var q = g.add(g.matmul(x, g.param(lp.attn_q_w)), g.param(lp.attn_q_b));
        Var k = g.add(g.matmul(x, g.param(lp.attn_k_w)), g.param(lp.attn_k_b));
        Var v = g.add(g.matmul(x, g.param(lp.attn_v_w)), g.param(lp.attn_v_b));

        std::vector<Var> contexts;
        contexts.reserve(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            Var qh = g.slice_last(q, h * head_dim, head_dim);
            Var kh = g.slice_last(k, h * head_dim, head_dim);
            Var vh = g.slice_last(v, h * head_dim, head_dim);
            Var scores = g.affine(g.matmul(qh, g.transpose_last2(kh)), scale, 0.0);
            Var attn = g.softmax(g.add(scores, key_mask_var));
            if (trace != nullptr) trace->attention.push_back(g.value(attn));
            contexts.push_back(g.matmul(attn, vh));
        }
        Var attn_out = g.add(g.matmul(g.concat(contexts), g.param(lp.attn_out_w)),
                             g.param(lp.attn_out_b));
        x = g.layer_norm(g.add(x, attn_out), g.param(lp.ln1_gain), g.param(lp.ln1_bias));

        Var inner = g.gelu(g.add(g.matmul(x, g.param(lp.ffn_in_w)), g.param(lp.ffn_in_b)));
        Var ffn_out = g.add(g.matmul(inner, g.param(lp.ffn_out_w)), g.param(lp.ffn_out_b));
        x = g.layer_norm(g.add(x, ffn_out), g.param(lp.ln2_gain), g.param(lp.ln2_bias));
    }
    return x;
}

Var mean_pool(Graph& g, Var token_states, const IntMatrix& mask) {
    return g.masked_mean(token_states, mask);
}

Tensor pooled_embeddings(EncoderParameters& params, const TokenBatch& batch) {
    Graph g;
    Var pooled = mean_pool(g, encode(g, params, batch), batch.mask);
    return g.value(pooled);
}

}  // namespace langadv
