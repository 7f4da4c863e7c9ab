#include "egghand/nn/attention.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "egghand/error.hpp"

namespace egghand::nn {

Var affine_layer_norm(Graph& g, Var x, const LayerNormWeights& w) {
    return g.add(g.multiply(g.layer_norm(x), w.gain), w.bias);
}

Var linear(Graph& g, Var x, Var w, Var b) { return g.add(g.matmul(x, w), b); }

Var multi_head_attention(Graph& g, Var queries, const KeyValues& kv, const AttentionWeights& w, int heads) {
    const std::size_t width = g.value(queries).cols();
    if (heads < 1 || width % static_cast<std::size_t>(heads) != 0)
        fail(ErrorKind::Config, "attention width " + std::to_string(width) +
                                    " is not divisible by heads " + std::to_string(heads));
    const std::size_t head_width = width / static_cast<std::size_t>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_width));

    Var q = linear(g, queries, w.wq, w.bq);
    std::vector<Var> outputs;
    outputs.reserve(static_cast<std::size_t>(heads));
    for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
        const std::size_t lo = h * head_width, hi = lo + head_width;
        Var qh = heads == 1 ? q : g.slice(q, 1, lo, hi);
        Var kh = heads == 1 ? kv.k : g.slice(kv.k, 1, lo, hi);
        Var vh = heads == 1 ? kv.v : g.slice(kv.v, 1, lo, hi);
        Var scores = g.scale(g.matmul(qh, g.transpose(kh)), scale);
        outputs.push_back(g.matmul(g.softmax(scores), vh));
    }
    Var merged = heads == 1 ? outputs.front() : g.concat(outputs, 1);
    return linear(g, merged, w.wo, w.bo);
}

Var multi_head_attention(Graph& g, Var queries, Var keys_values, const AttentionWeights& w,
                         int heads) {
    const KeyValues kv{linear(g, keys_values, w.wk, w.bk), linear(g, keys_values, w.wv, w.bv)};
    return multi_head_attention(g, queries, kv, w, heads);
}

Var attention_sublayer(Graph& g, Var x, std::optional<Var> kv, const AttentionWeights& w,
                       int heads) {
    Var normed = affine_layer_norm(g, x, w.norm);
    return g.add(x, multi_head_attention(g, normed, kv.value_or(normed), w, heads));
}

Var attention_sublayer(Graph& g, Var x, const KeyValues& kv, const AttentionWeights& w, int heads) {
    return g.add(x, multi_head_attention(g, affine_layer_norm(g, x, w.norm), kv, w, heads));
}

Var feed_forward_sublayer(Graph& g, Var x, const FeedForwardWeights& w) {
    Var hidden = g.gelu(linear(g, affine_layer_norm(g, x, w.norm), w.w1, w.b1));
    return g.add(x, linear(g, hidden, w.w2, w.b2));
}

Var attention_block(Graph& g, Var x, std::optional<Var> kv, const AttentionWeights& attn,
                    const FeedForwardWeights& ffn, int heads) {
    return feed_forward_sublayer(g, attention_sublayer(g, x, kv, attn, heads), ffn);
}

}  // namespace egghand::nn
