#include "egghand/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "egghand/nn/attention.hpp"
#include "egghand/nn/prng.hpp"

namespace egghand::nn {

namespace {

struct Evaluated {
    double readout;
    std::vector<Tensor> grads;
};

double readout_of(const Tensor& out, const Tensor& weights) {
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) total += out[i] * weights[i];
    return total;
}

}  // namespace

Tensor random_tensor(Shape shape, std::uint64_t seed, double stddev) {
    Prng rng(seed);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.gaussian() * stddev;
    return t;
}

GradCheckResult check_gradients(const GraphFunction& f, std::vector<Tensor> inputs,
                                const GradCheckOptions& options) {
    Tensor weights;
    auto run = [&](bool with_grad) {
        Graph g;
        std::vector<Var> leaves;
        leaves.reserve(inputs.size());
        for (const Tensor& t : inputs) leaves.push_back(g.parameter(t, with_grad));
        Var out = f(g, leaves);
        const Tensor& value = g.value(out);
        if (weights.size() == 0) {
            if (value.size() == 1) {
                weights = Tensor(value.shape(), 1.0);
            } else {
                weights = random_tensor(value.shape(), derive_seed(options.seed, 0x5EED),
                                        1.0 / std::sqrt(static_cast<double>(value.size())));
            }
        }
        Evaluated e{readout_of(value, weights), {}};
        if (with_grad) {
            g.backward(out, weights);
            for (Var leaf : leaves) {
                const Tensor& gr = g.grad(leaf);
                e.grads.push_back(gr.size() ? gr : Tensor(g.value(leaf).shape(), 0.0));
            }
        }
        return e;
    };

    const Evaluated analytic = run(true);
    GradCheckResult result;
    Prng picker(derive_seed(options.seed, 0xE17));
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<std::size_t> entries(inputs[k].size());
        for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
        if (options.max_entries_per_input && entries.size() > options.max_entries_per_input) {
            for (std::size_t i = 0; i < options.max_entries_per_input; ++i)
                std::swap(entries[i], entries[i + picker.below(entries.size() - i)]);
            entries.resize(options.max_entries_per_input);
        }
        for (std::size_t i : entries) {
            const double original = inputs[k][i];
            inputs[k][i] = original + options.step;
            const double up = run(false).readout;
            inputs[k][i] = original - options.step;
            const double down = run(false).readout;
            inputs[k][i] = original;
            const double numeric = (up - down) / (2.0 * options.step);
            const double a = analytic.grads[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            result.max_relative_error =
                std::max(result.max_relative_error, std::abs(a - numeric) / denom);
            ++result.entries_checked;
        }
    }
    return result;
}

GradCheckResult grad_check(CheckedBlock block, std::uint64_t seed) {
    switch (block) {
        case CheckedBlock::Constant:
            return check_gradients(
                [](Graph& g, std::span<const Var>) { return g.constant(Tensor::scalar(1.0)); },
                {}, {.seed = seed});
        case CheckedBlock::Linear: {
            std::vector<Tensor> in{random_tensor({5, 4}, derive_seed(seed, 1)),
                                   random_tensor({4, 3}, derive_seed(seed, 2)),
                                   random_tensor({3}, derive_seed(seed, 3))};
            return check_gradients(
                [](Graph& g, std::span<const Var> v) { return linear(g, v[0], v[1], v[2]); },
                std::move(in), {.seed = seed});
        }
        case CheckedBlock::AttentionBlock: {
            constexpr std::size_t d = 8, lq = 4, lk = 5;
            std::vector<Tensor> in;
            std::uint64_t salt = 0;
            auto push = [&](Shape s, double sd) {
                in.push_back(random_tensor(std::move(s), derive_seed(seed, ++salt), sd));
            };
            push({lq, d}, 1.0);
            push({lk, d}, 1.0);
            for (int i = 0; i < 2; ++i) push({d}, 0.3);  // attention norm
            for (int i = 0; i < 4; ++i) {
                push({d, d}, 0.4);
                push({d}, 0.1);
            }
            for (int i = 0; i < 2; ++i) push({d}, 0.3);  // ffn norm
            push({d, 4 * d}, 0.3);
            push({4 * d}, 0.1);
            push({4 * d, d}, 0.2);
            push({d}, 0.1);
            for (std::size_t k : {2u, 12u})  // layer-norm gains near 1
                for (double& v : in[k].values()) v += 1.0;
            return check_gradients(
                [](Graph& g, std::span<const Var> v) {
                    AttentionWeights a{{v[2], v[3]}, v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]};
                    FeedForwardWeights f{{v[12], v[13]}, v[14], v[15], v[16], v[17]};
                    return attention_block(g, v[0], v[1], a, f, 2);
                },
                std::move(in), {.seed = seed});
        }
    }
    return {};
}

}  // namespace egghand::nn
