#include "egghand/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "egghand/error.hpp"
#include "egghand/nn/prng.hpp"

namespace egghand::trainer {

void TrainConfig::validate() const {
    if (steps < 1) fail(ErrorKind::Config, "train config: steps must be >= 1");
    if (batch_size < 1) fail(ErrorKind::Config, "train config: batch_size must be >= 1");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) fail(ErrorKind::Config, "train config: warmup_ratio must be in [0, 1)");
    if (!(lr > 0.0) || !(min_lr >= 0.0) || min_lr > lr) fail(ErrorKind::Config, "train config: need 0 <= min_lr <= lr, lr > 0");
    if (!(weight_decay >= 0.0) || !(grad_clip >= 0.0)) fail(ErrorKind::Config, "train config: weight_decay and grad_clip must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
        fail(ErrorKind::Config, "train config: invalid Adam constants");
    if (eval_interval < 0) fail(ErrorKind::Config, "train config: eval_interval must be >= 0");
    try {
        loss.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Config, e.what());
    }
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"steps", c.steps},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"warmup_ratio", c.warmup_ratio},
            {"min_lr", c.min_lr},
            {"weight_decay", c.weight_decay},
            {"grad_clip", c.grad_clip},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"loss_weights", {c.loss.abs, c.loss.rel, c.loss.pair}},
            {"seed", c.seed},
            {"eval_interval", c.eval_interval},
            {"freeze", c.freeze}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorKind::Config, "train config must be a JSON object");
    TrainConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "steps") c.steps = value.get<int>();
            else if (key == "batch_size") c.batch_size = value.get<int>();
            else if (key == "lr") c.lr = value.get<double>();
            else if (key == "warmup_ratio") c.warmup_ratio = value.get<double>();
            else if (key == "min_lr") c.min_lr = value.get<double>();
            else if (key == "weight_decay") c.weight_decay = value.get<double>();
            else if (key == "grad_clip") c.grad_clip = value.get<double>();
            else if (key == "beta1") c.beta1 = value.get<double>();
            else if (key == "beta2") c.beta2 = value.get<double>();
            else if (key == "eps") c.eps = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "eval_interval") c.eval_interval = value.get<int>();
            else if (key == "freeze") c.freeze = value.get<std::vector<std::string>>();
            else if (key == "loss_weights") {
                const auto w = value.get<std::vector<double>>();
                if (w.size() != 3) fail(ErrorKind::Config, "loss_weights must hold 3 values");
                c.loss = {w[0], w[1], w[2]};
            } else {
                fail(ErrorKind::Config, "unknown train config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

int warmup_steps(const TrainConfig& c) { return static_cast<int>(std::lround(c.warmup_ratio * c.steps)); }

double lr_at(int step, const TrainConfig& c) {
    require(step >= 0 && step < c.steps, "lr_at: step out of range");
    const int warm = warmup_steps(c);
    if (step < warm) return c.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
    const double progress = static_cast<double>(step - warm) / static_cast<double>(c.steps - warm);
    return c.min_lr + (c.lr - c.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState init_optimizer(const forecaster::ParameterStore& params) {
    OptimizerState s;
    for (const auto& p : params.entries) {
        s.m.emplace_back(p.value.shape());
        s.v.emplace_back(p.value.shape());
    }
    return s;
}

double clip_global_norm(std::vector<nn::Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.values()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g.values()) v *= s;
    }
    return norm;
}

bool adamw_step(forecaster::ParameterStore& params, std::vector<nn::Tensor> grads, OptimizerState& state, double lr,
                const TrainConfig& c) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
        fail(ErrorKind::Validation, "adamw_step: " + std::to_string(grads.size()) + " gradients for " +
                                        std::to_string(params.size()) + " parameters");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].shape() != params.entries[i].value.shape())
            fail(ErrorKind::Validation, "adamw_step: gradient " + nn::shape_string(grads[i].shape()) + " vs parameter " +
                                            params.entries[i].name + " " +
                                            nn::shape_string(params.entries[i].value.shape()));
        if (!grads[i].all_finite()) {
            ++state.skipped;
            return false;
        }
    }
    clip_global_norm(grads, c.grad_clip);

    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        auto& p = params.entries[i];
        if (std::any_of(c.freeze.begin(), c.freeze.end(), [&](const std::string& f) { return p.name.starts_with(f); }))
            continue;
        const double wd = forecaster::decay_exempt(p.name) ? 0.0 : c.weight_decay;
        double* theta = p.value.data();
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        const double* g = grads[i].data();
        for (std::size_t k = 0; k < grads[i].size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            theta[k] -= lr * (m_hat / (std::sqrt(v_hat) + c.eps) + wd * theta[k]);
        }
    }
    return true;
}

SampleGradient sample_gradient(const forecaster::ForecasterModel& model, const dataio::Sample& sample,
                               const context::RawContext& ctx, const objectives::LossWeights& weights,
                               const objectives::PairSet& pairs) {
    forecaster::ForwardPass pass = forecaster::forward_graph(model, dataio::normalize(sample.obs, model.stats), ctx, true);
    const nn::Tensor& pred_norm = pass.graph.value(pass.prediction);
    const PoseSequence pred = forecaster::denormalize_prediction(pred_norm, model.stats);

    SampleGradient out;
    out.loss = objectives::loss_total(pred, sample.fut, weights, pairs);
    const auto dpred = objectives::loss_gradient(pred, sample.fut, weights, pairs);
    nn::Tensor seed(pred_norm.shape());
    for (std::size_t i = 0; i < seed.size(); ++i) {
        const auto a = i % 3;
        const double span = model.stats.degenerate(static_cast<int>(a)) ? 0.0 : model.stats.max[a] - model.stats.min[a];
        seed[i] = dpred[i] * span;
    }
    pass.graph.backward(pass.prediction, seed);
    out.grads.reserve(pass.params.size());
    for (std::size_t i = 0; i < pass.params.size(); ++i) {
        nn::Tensor g = pass.graph.take_grad(pass.params[i]);
        out.grads.push_back(g.size() ? std::move(g) : nn::Tensor(model.params.entries[i].value.shape()));
    }
    return out;
}

const char* to_string(Ablation a) {
    switch (a) {
        case Ablation::None: return "none";
        case Ablation::NoisyVision: return "noisy_vision";
        case Ablation::DummyText: return "dummy_text";
        case Ablation::Both: return "both";
    }
    return "unknown";
}

Ablation parse_ablation(const std::string& name) {
    for (Ablation a : {Ablation::None, Ablation::NoisyVision, Ablation::DummyText, Ablation::Both})
        if (name == to_string(a)) return a;
    fail(ErrorKind::Validation, "unknown ablation '" + name + "' (none|noisy_vision|dummy_text|both)");
}

context::ContextOptions context_options(Ablation a, std::uint64_t seed) {
    context::ContextOptions o;
    o.noisy_vision = a == Ablation::NoisyVision || a == Ablation::Both;
    o.dummy_text = a == Ablation::DummyText || a == Ablation::Both;
    o.seed = seed;
    return o;
}

std::string Predictor::name() const {
    switch (kind) {
        case Kind::Model: return "model";
        case Kind::Static: return "static";
        case Kind::Cvm: return "cvm";
    }
    return "unknown";
}

PoseSequence predict(const Predictor& p, const dataio::ClipRecord& record, const dataio::Sample& sample,
                     const EvalOptions& options) {
    switch (p.kind) {
        case Predictor::Kind::Static: return baselines::static_predict(*p.static_model, sample.fut.frames);
        case Predictor::Kind::Cvm: return baselines::cvm_predict(sample.obs, sample.fut.frames);
        case Predictor::Kind::Model: {
            context::ContextOptions ctx = context_options(options.ablation, options.seed);
            ctx.text_features = p.model->config.d_feat_text;
            return forecaster::forward(*p.model, sample, context::build_raw_context(record, sample, ctx));
        }
    }
    fail(ErrorKind::Validation, "unknown predictor");
}

metrics::Report evaluate(const Predictor& predictor, const dataio::LoadedSplit& split, const EvalOptions& options) {
    require(!split.samples.empty(), "evaluate: split has no samples");
    if (predictor.kind == Predictor::Kind::Model) require(predictor.model != nullptr, "evaluate: missing model");
    if (predictor.kind == Predictor::Kind::Static) require(predictor.static_model != nullptr, "evaluate: missing static model");
    if (options.strata_fraction)
        require(*options.strata_fraction > 0.0 && *options.strata_fraction <= 1.0, "strata fraction must be in (0, 1]");

    nn::tune_allocator();
    const std::size_t n = split.samples.size();
    std::vector<metrics::SampleMetrics> per(n);
    auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < n; i += step) {
            const auto& s = split.samples[i];
            const PoseSequence pred = predict(predictor, split.records.at(s.clip_id), s, options);
            per[i] = metrics::sample_metrics(s.id(), pred, s.fut, options.metrics);
        }
    };
    const auto jobs = static_cast<std::size_t>(std::max(1, options.jobs));
    if (jobs == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(jobs);
        for (std::size_t t = 0; t < jobs; ++t)
            threads.emplace_back([&, t] {
                try {
                    work(t, jobs);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    metrics::StrataSpec strata;
    if (options.strata_fraction) {
        std::vector<std::pair<std::string, double>> scores;
        std::vector<std::string> all;
        for (const auto& s : split.samples) {
            scores.emplace_back(s.id(), s.egomotion);
            all.push_back(s.id());
        }
        strata.emplace_back("top", metrics::stratify_top_fraction(scores, *options.strata_fraction));
        strata.emplace_back("all", std::move(all));
    }
    metrics::Report report = metrics::aggregate_report(per, strata, options.metrics);
    report.config["predictor"] = predictor.name();
    report.config["ablation"] = to_string(options.ablation);
    report.config["seed"] = options.seed;
    if (options.strata_fraction) report.config["strata"] = {{"score", "egomotion"}, {"fraction", *options.strata_fraction}};
    return report;
}

namespace {

nlohmann::json log_record(int step, double lr, const objectives::LossBreakdown& mean) {
    return {{"step", step},
            {"lr", lr},
            {"loss_total", mean.total},
            {"loss_abs", mean.abs.value},
            {"loss_rel", mean.rel.value},
            {"loss_pair", mean.pair.value}};
}

}  // namespace

TrainResult train(const dataio::LoadedSplit& train_split, const dataio::LoadedSplit* val_split,
                  const forecaster::ModelConfig& model_config, const TrainConfig& config, const LogSink& sink) {
    config.validate();
    model_config.validate();
    if (train_split.samples.empty()) fail(ErrorKind::Validation, "train: the train split has no samples");

    nn::tune_allocator();
    TrainResult result;
    result.model = forecaster::build(model_config, dataio::fit_minmax(train_split.samples));
    forecaster::ForecasterModel& model = result.model;

    context::ContextOptions ctx_opts = context_options(Ablation::None, config.seed);
    ctx_opts.text_features = model_config.d_feat_text;
    std::vector<context::RawContext> contexts;
    contexts.reserve(train_split.samples.size());
    for (const auto& s : train_split.samples)
        contexts.push_back(context::build_raw_context(train_split.records.at(s.clip_id), s, ctx_opts));

    const auto pairs = objectives::intra_hand_pairs();
    OptimizerState state = init_optimizer(model.params);
    const std::size_t n = train_split.samples.size();
    std::vector<std::size_t> order;
    std::size_t cursor = n;
    std::uint64_t epoch = 0;
    auto emit = [&](nlohmann::json rec) {
        if (sink) sink(rec);
        result.log.push_back(std::move(rec));
    };

    for (int step = 0; step < config.steps; ++step) {
        std::vector<nn::Tensor> batch_grad;
        objectives::LossBreakdown mean;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == n) {
                order.resize(n);
                for (std::size_t i = 0; i < n; ++i) order[i] = i;
                nn::Prng rng(nn::derive_seed(config.seed, epoch++));
                for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
                cursor = 0;
            }
            const std::size_t idx = order[cursor++];
            const auto& sample = train_split.samples[idx];
            SampleGradient sg = sample_gradient(model, sample, contexts[idx], config.loss, pairs);
            if (!std::isfinite(sg.loss.total))
                fail(ErrorKind::Numerical, "non-finite loss at step " + std::to_string(step) + " on sample " + sample.id());
            if (batch_grad.empty()) {
                batch_grad = std::move(sg.grads);
            } else {
                for (std::size_t i = 0; i < batch_grad.size(); ++i) {
                    double* dst = batch_grad[i].data();
                    const double* src = sg.grads[i].data();
                    for (std::size_t k = 0; k < batch_grad[i].size(); ++k) dst[k] += src[k];
                }
            }
            mean.total += sg.loss.total;
            mean.abs.value += sg.loss.abs.value;
            mean.rel.value += sg.loss.rel.value;
            mean.pair.value += sg.loss.pair.value;
        }
        const double inv = 1.0 / config.batch_size;
        for (auto& g : batch_grad)
            for (double& v : g.values()) v *= inv;
        mean.total *= inv;
        mean.abs.value *= inv;
        mean.rel.value *= inv;
        mean.pair.value *= inv;

        const double lr = lr_at(step, config);
        const bool applied = adamw_step(model.params, std::move(batch_grad), state, lr, config);
        nlohmann::json rec = log_record(step, lr, mean);
        if (!applied) rec["skipped_steps"] = state.skipped;
        emit(std::move(rec));
        if (step == 0) result.initial_loss = mean.total;
        result.final_loss = mean.total;

        if (val_split && !val_split->samples.empty() && config.eval_interval > 0 &&
            ((step + 1) % config.eval_interval == 0 || step + 1 == config.steps)) {
            EvalOptions eo;
            eo.seed = config.seed;
            emit({{"step", step}, {"validation", metrics::to_json(evaluate(Predictor::of(model), *val_split, eo))}});
        }
    }
    result.skipped_steps = state.skipped;
    return result;
}

}  // namespace egghand::trainer
