#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "egghand/baselines.hpp"
#include "egghand/context.hpp"
#include "egghand/dataio.hpp"
#include "egghand/forecaster.hpp"
#include "egghand/metrics.hpp"
#include "egghand/objectives.hpp"

namespace egghand::trainer {

struct TrainConfig {
    int steps = 2000;
    int batch_size = 8;
    double lr = 1e-3;
    double warmup_ratio = 0.05;
    double min_lr = 0.0;
    double weight_decay = 0.01;
    /// Global-norm clip; 0 disables.
    double grad_clip = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    objectives::LossWeights loss;
    std::uint64_t seed = 0;
    /// Validation report every n steps (0: none).
    int eval_interval = 0;
    /// Parameters whose name starts with one of these prefixes are not updated.
    std::vector<std::string> freeze;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// round(warmup_ratio * steps).
int warmup_steps(const TrainConfig& config);
double lr_at(int step, const TrainConfig& config);

struct OptimizerState {
    std::vector<nn::Tensor> m, v;
    long step = 0;
    long skipped = 0;
};

OptimizerState init_optimizer(const forecaster::ParameterStore& params);

/// Scales grads in place so their global l2 norm is at most max_norm (0 disables).
/// Returns the norm before clipping.
double clip_global_norm(std::vector<nn::Tensor>& grads, double max_norm);

/// One decoupled-weight-decay Adam update. Gradients are clipped first when
/// config.grad_clip > 0. A non-finite gradient skips the step (state.skipped
/// counts it) and returns false.
bool adamw_step(forecaster::ParameterStore& params, std::vector<nn::Tensor> grads, OptimizerState& state, double lr,
                const TrainConfig& config);

struct SampleGradient {
    objectives::LossBreakdown loss;
    std::vector<nn::Tensor> grads;  // aligned with ParameterStore::entries
};

/// loss_total of forward(model, sample) and its gradient with respect to every parameter.
SampleGradient sample_gradient(const forecaster::ForecasterModel& model, const dataio::Sample& sample,
                               const context::RawContext& context, const objectives::LossWeights& weights,
                               const objectives::PairSet& pairs);

enum class Ablation { None, NoisyVision, DummyText, Both };
const char* to_string(Ablation a);
Ablation parse_ablation(const std::string& name);
context::ContextOptions context_options(Ablation a, std::uint64_t seed);

struct EvalOptions {
    /// Egomotion top fraction; adds "top" and "all" strata when set.
    std::optional<double> strata_fraction;
    Ablation ablation = Ablation::None;
    metrics::MetricOptions metrics;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct Predictor {
    enum class Kind { Model, Static, Cvm };
    Kind kind = Kind::Cvm;
    const forecaster::ForecasterModel* model = nullptr;
    const baselines::StaticModel* static_model = nullptr;

    static Predictor of(const forecaster::ForecasterModel& m) { return {Kind::Model, &m, nullptr}; }
    static Predictor of(const baselines::StaticModel& m) { return {Kind::Static, nullptr, &m}; }
    static Predictor cvm() { return {Kind::Cvm, nullptr, nullptr}; }
    std::string name() const;
};

/// Prediction for one sample; baselines never build a context.
PoseSequence predict(const Predictor& predictor, const dataio::ClipRecord& record, const dataio::Sample& sample,
                     const EvalOptions& options);

metrics::Report evaluate(const Predictor& predictor, const dataio::LoadedSplit& split, const EvalOptions& options = {});

struct TrainResult {
    forecaster::ForecasterModel model;
    std::vector<nlohmann::json> log;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    long skipped_steps = 0;
};

/// Optional per-record hook (each JSON-lines record as it is produced).
using LogSink = std::function<void(const nlohmann::json&)>;

/// Fits NormStats on the train split, builds the model, and runs config.steps AdamW
/// steps of batch_size samples drawn from per-epoch Prng shuffles.
TrainResult train(const dataio::LoadedSplit& train_split, const dataio::LoadedSplit* val_split,
                  const forecaster::ModelConfig& model_config, const TrainConfig& config, const LogSink& sink = {});

}  // namespace egghand::trainer
