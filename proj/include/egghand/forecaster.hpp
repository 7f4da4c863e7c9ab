#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "egghand/context.hpp"
#include "egghand/dataio.hpp"
#include "egghand/nn/graph.hpp"
#include "egghand/pose.hpp"

namespace egghand::forecaster {

struct ModelConfig {
    int d_model = 64;
    int heads = 4;
    int encoder_blocks = 2;
    int decoder_blocks = 2;
    int d_feat_vision = context::kGridFeatures;
    int d_feat_text = 16;
    int t_obs = 20;
    int t_fut = 10;
    int joints = kJoints;
    std::uint64_t seed = 0;
    /// Head output is added to each joint's last valid observed (normalized) position.
    bool delta_head = true;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are a config error.
ModelConfig config_from_json(const nlohmann::json& j);

/// Per frame: 126 masked coordinates followed by 42 mask flags.
inline constexpr int kStateWidth = kCoords + kJoints;

struct Parameter {
    std::string name;
    nn::Tensor value;
    friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Named tensors in declaration order.
struct ParameterStore {
    std::vector<Parameter> entries;

    std::size_t size() const { return entries.size(); }
    std::size_t value_count() const;
    const nn::Tensor& at(const std::string& name) const;
    nn::Tensor& at(const std::string& name);
    friend bool operator==(const ParameterStore&, const ParameterStore&) = default;
};

/// Biases and layer-norm parameters.
bool decay_exempt(const std::string& name);

struct ForecasterModel {
    ModelConfig config;
    ParameterStore params;
    dataio::NormStats stats;
    friend bool operator==(const ForecasterModel&, const ForecasterModel&) = default;
};

/// Closed-form number of scalar parameters.
std::size_t parameter_count(const ModelConfig& config);

/// Weights uniform(-s, s), s = sqrt(1 / fan_in); biases 0; layer-norm gain 1, bias 0;
/// future queries N(0, 0.02^2). Draws come from Prng(seed) in declaration order.
ForecasterModel build(const ModelConfig& config, const dataio::NormStats& stats = {});

/// t_obs x (126 + 42): flattened coordinates with invalid slots zeroed, then mask flags.
nn::Tensor state_features(const PoseSequence& obs_normalized);

/// S = f_s(P) W_s + b_s + E_time(frame index).
nn::Var encode_state(nn::Graph& g, const PoseSequence& obs_normalized, nn::Var w, nn::Var b);

struct ForwardPass {
    nn::Graph graph;
    nn::Var prediction;           // t_fut x 126, normalized
    std::vector<nn::Var> params;  // aligned with ParameterStore::entries
};

/// Builds the full graph. Parameters are tracked when `track` is set.
ForwardPass forward_graph(const ForecasterModel& model, const PoseSequence& obs_normalized,
                          const context::RawContext& context, bool track = false);

/// Normalized prediction (t_fut x 126) mapped back to canonical meters; every joint valid.
PoseSequence denormalize_prediction(const nn::Tensor& normalized, const dataio::NormStats& stats);

/// Prediction in canonical meters for one sample.
PoseSequence forward(const ForecasterModel& model, const dataio::Sample& sample, const context::RawContext& context);

/// Rounds every weight through binary32, as stored at rest.
void quantize(ForecasterModel& model);

/// Quantizes the in-memory weights, then writes the container.
void save_checkpoint(ForecasterModel& model, const std::filesystem::path& path);
ForecasterModel load_checkpoint(const std::filesystem::path& path);

}  // namespace egghand::forecaster
