#pragma once

#include <optional>

#include "egghand/nn/graph.hpp"

namespace egghand::nn {

struct LayerNormWeights {
    Var gain;
    Var bias;
};

struct AttentionWeights {
    LayerNormWeights norm;
    Var wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardWeights {
    LayerNormWeights norm;
    Var w1, b1, w2, b2;
};

/// LN(x) * gain + bias over the last axis.
Var affine_layer_norm(Graph& g, Var x, const LayerNormWeights& w);

/// x W + b.
Var linear(Graph& g, Var x, Var w, Var b);

/// Projected keys and values (Lk x D each).
struct KeyValues {
    Var k, v;
};

/// Multi-head attention over already projected keys and values; wk/bk/wv/bv are unused.
Var multi_head_attention(Graph& g, Var queries, const KeyValues& kv, const AttentionWeights& w, int heads);

/// Scaled dot-product multi-head attention. queries: Lq x D, keys_values: Lk x D.
Var multi_head_attention(Graph& g, Var queries, Var keys_values, const AttentionWeights& w,
                         int heads);

/// Pre-norm residual attention: x + MHA(LN(x), kv). Self-attention when kv is empty,
/// in which case keys and values come from LN(x).
Var attention_sublayer(Graph& g, Var x, std::optional<Var> kv, const AttentionWeights& w,
                       int heads);

/// x + MHA(LN(x)) against projected keys and values.
Var attention_sublayer(Graph& g, Var x, const KeyValues& kv, const AttentionWeights& w, int heads);

/// Pre-norm residual feed-forward: x + W2 GELU(W1 LN(x) + b1) + b2.
Var feed_forward_sublayer(Graph& g, Var x, const FeedForwardWeights& w);

/// One attention sublayer followed by one feed-forward sublayer.
Var attention_block(Graph& g, Var x, std::optional<Var> kv, const AttentionWeights& attn,
                    const FeedForwardWeights& ffn, int heads);

}  // namespace egghand::nn
