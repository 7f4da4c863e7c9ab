#include "egghand/selfcheck.hpp"

#include <algorithm>
#include <cmath>

#include "egghand/context.hpp"
#include "egghand/dataio.hpp"
#include "egghand/forecaster.hpp"
#include "egghand/nn/gradcheck.hpp"
#include "egghand/nn/prng.hpp"
#include "egghand/objectives.hpp"
#include "egghand/trainer.hpp"

namespace egghand::selfcheck {

namespace {

using nn::Graph;
using nn::Shape;
using nn::Tensor;
using nn::Var;

constexpr double kOpTolerance = 1e-4;
constexpr double kEndToEndTolerance = 1e-3;

CheckLine op_check(const std::string& name, const nn::GraphFunction& f, const std::vector<Shape>& shapes,
                   std::uint64_t seed, double tolerance = kOpTolerance) {
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < shapes.size(); ++i)
        inputs.push_back(nn::random_tensor(shapes[i], nn::derive_seed(seed, nn::fnv1a64(name) + i)));
    const auto r = nn::check_gradients(f, std::move(inputs), {.seed = seed});
    return {name, r.max_relative_error, tolerance, r.entries_checked};
}

PoseSequence random_poses(nn::Prng& rng, int frames, double invalid_rate) {
    PoseSequence p(frames);
    for (double& v : p.xyz) v = rng.gaussian(0.0, 0.1);
    for (int t = 0; t < frames; ++t)
        for (int j = 0; j < kJoints; ++j) p.set_valid(t, j, rng.uniform() >= invalid_rate);
    return p;
}

CheckLine loss_gradient_check(std::uint64_t seed) {
    nn::Prng rng(nn::derive_seed(seed, 0x1055));
    const PoseSequence gt = random_poses(rng, 4, 0.2);
    // Residuals are kept clear of the l1 kinks so central differences are valid:
    // wrist offsets have magnitude 0.05, other joints 0.005-0.03 per axis.
    PoseSequence pred = gt;
    for (int t = 0; t < pred.frames; ++t)
        for (int j = 0; j < kJoints; ++j) {
            pred.set_valid(t, j, true);
            for (std::size_t a = 0; a < 3; ++a) {
                const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                const double mag = wrist_of(j) == j ? 0.05 : rng.uniform(0.005, 0.03);
                pred.xyz[PoseSequence::offset(t, j) + a] += sign * mag;
            }
        }
    const objectives::LossWeights w;
    const auto pairs = objectives::intra_hand_pairs();
    const auto analytic = objectives::loss_gradient(pred, gt, w, pairs);
    constexpr double h = 1e-5;
    CheckLine line{"loss_gradient", 0.0, kOpTolerance, 0};
    for (std::size_t i = 0; i < pred.xyz.size(); ++i) {
        const double x = pred.xyz[i];
        pred.xyz[i] = x + h;
        const double up = objectives::loss_total(pred, gt, w, pairs).total;
        pred.xyz[i] = x - h;
        const double down = objectives::loss_total(pred, gt, w, pairs).total;
        pred.xyz[i] = x;
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
        line.error = std::max(line.error, std::abs(numeric - analytic[i]) / denom);
        ++line.entries;
    }
    return line;
}

struct MiniatureCase {
    forecaster::ForecasterModel model;
    dataio::Sample sample;
    context::RawContext context;
};

MiniatureCase miniature_case(std::uint64_t seed) {
    dataio::SynthConfig sc;
    sc.n_clips = 1;
    sc.frames_per_clip = 30;
    sc.seed = seed;
    const auto clip = dataio::synthesize_clip(sc, 0);
    auto windows = dataio::make_windows(clip.record);
    forecaster::ModelConfig mc;
    mc.d_model = 8;
    mc.heads = 2;
    mc.encoder_blocks = 1;
    mc.decoder_blocks = 1;
    mc.d_feat_text = 4;
    mc.seed = seed;
    MiniatureCase c{forecaster::build(mc, dataio::fit_minmax(std::span(windows.data(), 1))), windows.front(), {}};
    // Perturb zero-initialized biases and unit gains so every path carries signal.
    nn::Prng rng(nn::derive_seed(seed, 0xB1A5));
    for (auto& p : c.model.params.entries)
        for (double& v : p.value.values()) v += rng.gaussian(0.0, 0.05);
    context::ContextOptions co;
    co.text_features = mc.d_feat_text;
    c.context = context::build_raw_context(clip.record, c.sample, co);
    return c;
}

// Signs of every l1 residual of loss_abs and loss_rel; a change between probes means
// the central difference straddles a kink.
std::vector<signed char> kink_signature(const PoseSequence& pred, const PoseSequence& gt) {
    std::vector<signed char> out;
    auto push = [&](double r) { out.push_back(static_cast<signed char>((r > 0) - (r < 0))); };
    for (int t = 0; t < gt.frames; ++t)
        for (int j = 0; j < kJoints; ++j) {
            if (!gt.is_valid(t, j)) continue;
            for (int a = 0; a < 3; ++a) push(pred.joint(t, j)[a] - gt.joint(t, j)[a]);
            const int w = wrist_of(j);
            if (w != j && gt.is_valid(t, w))
                for (int a = 0; a < 3; ++a)
                    push((pred.joint(t, j)[a] - pred.joint(t, w)[a]) - (gt.joint(t, j)[a] - gt.joint(t, w)[a]));
        }
    return out;
}

CheckLine end_to_end_check(std::uint64_t seed) {
    MiniatureCase c = miniature_case(seed);
    const objectives::LossWeights w;
    const auto pairs = objectives::intra_hand_pairs();
    const auto analytic = trainer::sample_gradient(c.model, c.sample, c.context, w, pairs);
    const auto base = kink_signature(forecaster::forward(c.model, c.sample, c.context), c.sample.fut);
    bool straddles = false;
    auto loss = [&] {
        const PoseSequence pred = forecaster::forward(c.model, c.sample, c.context);
        straddles = straddles || kink_signature(pred, c.sample.fut) != base;
        return objectives::loss_total(pred, c.sample.fut, w, pairs).total;
    };
    constexpr double h = 1e-5;
    constexpr std::size_t per_tensor = 4;
    CheckLine line{"end-to-end forward+loss_total", 0.0, kEndToEndTolerance, 0};
    nn::Prng picker(nn::derive_seed(seed, 0xE2E));
    for (std::size_t k = 0; k < c.model.params.size(); ++k) {
        Tensor& value = c.model.params.entries[k].value;
        for (std::size_t n = 0; n < std::min(per_tensor, value.size()); ++n) {
            const std::size_t i = picker.below(value.size());
            const double x = value[i];
            straddles = false;
            value[i] = x + h;
            const double up = loss();
            value[i] = x - h;
            const double down = loss();
            value[i] = x;
            if (straddles) {
                ++line.skipped;
                continue;
            }
            const double numeric = (up - down) / (2 * h);
            const double a = analytic.grads[k][i];
            const double denom = std::max({std::abs(numeric), std::abs(a), 1e-6});
            line.error = std::max(line.error, std::abs(numeric - a) / denom);
            ++line.entries;
        }
    }
    return line;
}

}  // namespace

std::vector<CheckLine> gradient_suite(std::uint64_t seed) {
    std::vector<CheckLine> out;
    out.push_back(op_check("add", [](Graph& g, std::span<const Var> v) { return g.add(v[0], v[1]); }, {{3, 4}, {4}}, seed));
    out.push_back(op_check("subtract", [](Graph& g, std::span<const Var> v) { return g.subtract(v[0], v[1]); },
                           {{3, 4}, {3, 4}}, seed));
    out.push_back(op_check("multiply", [](Graph& g, std::span<const Var> v) { return g.multiply(v[0], v[1]); },
                           {{2, 3, 4}, {3, 4}}, seed));
    out.push_back(op_check("matmul", [](Graph& g, std::span<const Var> v) { return g.matmul(v[0], v[1]); },
                           {{2, 3, 4}, {4, 5}}, seed));
    out.push_back(op_check("transpose", [](Graph& g, std::span<const Var> v) { return g.transpose(v[0]); }, {{3, 5}}, seed));
    out.push_back(op_check("reshape", [](Graph& g, std::span<const Var> v) { return g.reshape(v[0], {3, 4}); }, {{2, 6}},
                           seed));
    out.push_back(op_check("concat", [](Graph& g, std::span<const Var> v) {
        return g.concat({g.concat({v[0], v[1]}, 0), v[2]}, 1);
    }, {{2, 3}, {4, 3}, {6, 2}}, seed));
    out.push_back(op_check("slice", [](Graph& g, std::span<const Var> v) { return g.slice(v[0], 1, 1, 4); }, {{4, 5}},
                           seed));
    out.push_back(op_check("softmax", [](Graph& g, std::span<const Var> v) { return g.softmax(v[0]); }, {{3, 5}}, seed));
    out.push_back(op_check("layer_norm", [](Graph& g, std::span<const Var> v) { return g.layer_norm(v[0]); }, {{3, 6}},
                           seed));
    out.push_back(op_check("gelu", [](Graph& g, std::span<const Var> v) { return g.gelu(v[0]); }, {{3, 4}}, seed));
    out.push_back(op_check("masked_mean", [](Graph& g, std::span<const Var> v) {
        Tensor mask({3, 4}, 1.0);
        mask[1] = mask[6] = mask[11] = 0.0;
        return g.masked_mean(v[0], mask);
    }, {{3, 4}}, seed));
    out.push_back(op_check("scale", [](Graph& g, std::span<const Var> v) { return g.scale(v[0], -1.7); }, {{3, 4}}, seed));
    out.push_back(op_check("sum", [](Graph& g, std::span<const Var> v) { return g.sum(v[0]); }, {{3, 4}}, seed));

    const auto lin = nn::grad_check(nn::CheckedBlock::Linear, seed);
    out.push_back({"linear block", lin.max_relative_error, 1e-6, lin.entries_checked});
    const auto blk = nn::grad_check(nn::CheckedBlock::AttentionBlock, seed);
    out.push_back({"attention block", blk.max_relative_error, kOpTolerance, blk.entries_checked});
    const auto cst = nn::grad_check(nn::CheckedBlock::Constant, seed);
    out.push_back({"constant block", cst.max_relative_error, 0.0, cst.entries_checked});

    {
        context::RawContext raw;
        raw.visual = nn::random_tensor({6, 5}, nn::derive_seed(seed, 11), 0.5);
        raw.visual_time = {0, 0, 0, 19, 19, 19};
        raw.text = context::hashed_text_tokens("grasp the cup firmly", 4);
        auto r = nn::check_gradients(
            [raw](Graph& g, std::span<const Var> v) {
                return context::fuse_context(g, raw, {v[0], v[1], v[2], v[3]});
            },
            {nn::random_tensor({5, 8}, nn::derive_seed(seed, 12)), nn::random_tensor({8}, nn::derive_seed(seed, 13)),
             nn::random_tensor({4, 8}, nn::derive_seed(seed, 14)), nn::random_tensor({8}, nn::derive_seed(seed, 15))},
            {.seed = seed});
        out.push_back({"adapt_and_fuse", r.max_relative_error, kOpTolerance, r.entries_checked});
    }
    {
        nn::Prng rng(nn::derive_seed(seed, 21));
        const PoseSequence obs = random_poses(rng, 20, 0.1);
        auto r = nn::check_gradients(
            [obs](Graph& g, std::span<const Var> v) { return forecaster::encode_state(g, obs, v[0], v[1]); },
            {nn::random_tensor({forecaster::kStateWidth, 8}, nn::derive_seed(seed, 22), 0.1),
             nn::random_tensor({8}, nn::derive_seed(seed, 23))},
            {.max_entries_per_input = 200, .seed = seed});
        out.push_back({"encode_state", r.max_relative_error, kOpTolerance, r.entries_checked});
    }
    out.push_back(loss_gradient_check(seed));
    out.push_back(end_to_end_check(seed));
    return out;
}

}  // namespace egghand::selfcheck
