#include "egghand/forecaster.hpp"

#include <cmath>
#include <optional>

#include "egghand/checkpoint.hpp"
#include "egghand/error.hpp"
#include "egghand/nn/attention.hpp"
#include "egghand/nn/prng.hpp"

namespace egghand::forecaster {

namespace {

enum class Init { Weight, Zero, One, Query };

struct Declared {
    std::string name;
    nn::Shape shape;
    Init init;
};

void declare_ln(std::vector<Declared>& out, const std::string& prefix, std::size_t d) {
    out.push_back({prefix + ".gain", {d}, Init::One});
    out.push_back({prefix + ".bias", {d}, Init::Zero});
}

void declare_attention(std::vector<Declared>& out, const std::string& prefix, std::size_t d) {
    declare_ln(out, prefix + ".ln", d);
    for (const char* p : {"q", "k", "v", "o"}) {
        out.push_back({prefix + ".w" + p, {d, d}, Init::Weight});
        out.push_back({prefix + ".b" + p, {d}, Init::Zero});
    }
}

void declare_ffn(std::vector<Declared>& out, const std::string& prefix, std::size_t d) {
    declare_ln(out, prefix + ".ln", d);
    out.push_back({prefix + ".w1", {d, 4 * d}, Init::Weight});
    out.push_back({prefix + ".b1", {4 * d}, Init::Zero});
    out.push_back({prefix + ".w2", {4 * d, d}, Init::Weight});
    out.push_back({prefix + ".b2", {d}, Init::Zero});
}

std::vector<Declared> declaration(const ModelConfig& c) {
    const auto d = static_cast<std::size_t>(c.d_model);
    std::vector<Declared> out;
    out.push_back({"state.w", {static_cast<std::size_t>(kStateWidth), d}, Init::Weight});
    out.push_back({"state.b", {d}, Init::Zero});
    out.push_back({"adapter.vision.w", {static_cast<std::size_t>(c.d_feat_vision), d}, Init::Weight});
    out.push_back({"adapter.vision.b", {d}, Init::Zero});
    out.push_back({"adapter.text.w", {static_cast<std::size_t>(c.d_feat_text), d}, Init::Weight});
    out.push_back({"adapter.text.b", {d}, Init::Zero});
    for (int i = 0; i < c.encoder_blocks; ++i) {
        const std::string p = "encoder." + std::to_string(i);
        declare_attention(out, p + ".cross", d);
        declare_attention(out, p + ".self", d);
        declare_ffn(out, p + ".ffn", d);
    }
    declare_ln(out, "encoder.norm", d);
    out.push_back({"queries", {static_cast<std::size_t>(c.t_fut), d}, Init::Query});
    for (int i = 0; i < c.decoder_blocks; ++i) {
        const std::string p = "decoder." + std::to_string(i);
        declare_attention(out, p + ".self", d);
        declare_attention(out, p + ".cross", d);
        declare_ffn(out, p + ".ffn", d);
    }
    declare_ln(out, "decoder.norm", d);
    out.push_back({"head.w", {d, static_cast<std::size_t>(kCoords)}, Init::Weight});
    out.push_back({"head.b", {static_cast<std::size_t>(kCoords)}, Init::Zero});
    return out;
}

// Hands out graph leaves in declaration order.
class Cursor {
public:
    Cursor(nn::Graph& g, const ParameterStore& store, bool track, std::vector<nn::Var>& out)
        : g_(g), store_(store), track_(track), out_(out) {}

    nn::Var next() {
        const nn::Var v = g_.parameter_ref(store_.entries.at(out_.size()).value, track_);
        out_.push_back(v);
        return v;
    }

    nn::LayerNormWeights norm() {
        nn::LayerNormWeights w;
        w.gain = next();
        w.bias = next();
        return w;
    }

    nn::AttentionWeights attention() {
        nn::AttentionWeights w;
        w.norm = norm();
        w.wq = next(), w.bq = next();
        w.wk = next(), w.bk = next();
        w.wv = next(), w.bv = next();
        w.wo = next(), w.bo = next();
        return w;
    }

    nn::FeedForwardWeights ffn() {
        nn::FeedForwardWeights w;
        w.norm = norm();
        w.w1 = next(), w.b1 = next();
        w.w2 = next(), w.b2 = next();
        return w;
    }

private:
    nn::Graph& g_;
    const ParameterStore& store_;
    bool track_;
    std::vector<nn::Var>& out_;
};

nn::Tensor range_encoding(int begin, int count, int width) {
    std::vector<double> positions(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) positions[static_cast<std::size_t>(i)] = begin + i;
    return context::encoding_table(positions, width);
}

void check_store(const ModelConfig& config, const ParameterStore& store) {
    const auto decl = declaration(config);
    if (decl.size() != store.size())
        fail(ErrorKind::Integrity, "parameter store has " + std::to_string(store.size()) + " tensors, config declares " +
                                       std::to_string(decl.size()));
    for (std::size_t i = 0; i < decl.size(); ++i) {
        if (decl[i].name != store.entries[i].name || decl[i].shape != store.entries[i].value.shape())
            fail(ErrorKind::Integrity, "parameter " + std::to_string(i) + " is " + store.entries[i].name + " " +
                                           nn::shape_string(store.entries[i].value.shape()) + ", config declares " +
                                           decl[i].name + " " + nn::shape_string(decl[i].shape));
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (d_model < 1 || heads < 1 || encoder_blocks < 1 || decoder_blocks < 1 || d_feat_vision < 1 || d_feat_text < 1 ||
        t_obs < 1 || t_fut < 1)
        fail(ErrorKind::Config, "model config: every width and count must be >= 1");
    if (d_model % heads != 0)
        fail(ErrorKind::Config, "model config: d_model " + std::to_string(d_model) + " is not divisible by heads " +
                                    std::to_string(heads));
    if (joints != kJoints) fail(ErrorKind::Config, "model config: joints must be 42");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"d_model", c.d_model},
            {"heads", c.heads},
            {"encoder_blocks", c.encoder_blocks},
            {"decoder_blocks", c.decoder_blocks},
            {"d_feat_vision", c.d_feat_vision},
            {"d_feat_text", c.d_feat_text},
            {"t_obs", c.t_obs},
            {"t_fut", c.t_fut},
            {"joints", c.joints},
            {"seed", c.seed},
            {"delta_head", c.delta_head}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorKind::Config, "model config must be a JSON object");
    ModelConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "d_model") c.d_model = value.get<int>();
            else if (key == "heads") c.heads = value.get<int>();
            else if (key == "encoder_blocks") c.encoder_blocks = value.get<int>();
            else if (key == "decoder_blocks") c.decoder_blocks = value.get<int>();
            else if (key == "d_feat_vision") c.d_feat_vision = value.get<int>();
            else if (key == "d_feat_text") c.d_feat_text = value.get<int>();
            else if (key == "t_obs") c.t_obs = value.get<int>();
            else if (key == "t_fut") c.t_fut = value.get<int>();
            else if (key == "joints") c.joints = value.get<int>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "delta_head") c.delta_head = value.get<bool>();
            else fail(ErrorKind::Config, "unknown model config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::size_t ParameterStore::value_count() const {
    std::size_t n = 0;
    for (const auto& p : entries) n += p.value.size();
    return n;
}

const nn::Tensor& ParameterStore::at(const std::string& name) const {
    for (const auto& p : entries)
        if (p.name == name) return p.value;
    fail(ErrorKind::Validation, "no parameter named " + name);
}

nn::Tensor& ParameterStore::at(const std::string& name) {
    return const_cast<nn::Tensor&>(std::as_const(*this).at(name));
}

bool decay_exempt(const std::string& name) {
    const auto dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    return leaf.starts_with('b') || name.find(".ln.") != std::string::npos || name.find("norm.") != std::string::npos;
}

std::size_t parameter_count(const ModelConfig& c) {
    const auto d = static_cast<std::size_t>(c.d_model);
    const std::size_t attention = 2 * d + 4 * (d * d + d);
    const std::size_t ffn = 2 * d + (d * 4 * d + 4 * d) + (4 * d * d + d);
    const std::size_t block = 2 * attention + ffn;
    return static_cast<std::size_t>(kStateWidth) * d + d                       // state
           + static_cast<std::size_t>(c.d_feat_vision) * d + d                 // vision adapter
           + static_cast<std::size_t>(c.d_feat_text) * d + d                   // text adapter
           + static_cast<std::size_t>(c.encoder_blocks + c.decoder_blocks) * block  //
           + 2 * (2 * d)                                                       // final norms
           + static_cast<std::size_t>(c.t_fut) * d                             // queries
           + d * kCoords + kCoords;                                            // head
}

ForecasterModel build(const ModelConfig& config, const dataio::NormStats& stats) {
    config.validate();
    ForecasterModel model;
    model.config = config;
    model.stats = stats;
    nn::Prng rng(config.seed);
    for (auto& d : declaration(config)) {
        nn::Tensor t(d.shape);
        switch (d.init) {
            case Init::Weight: {
                const double s = std::sqrt(1.0 / static_cast<double>(d.shape.front()));
                for (double& v : t.values()) v = rng.uniform(-s, s);
                break;
            }
            case Init::Zero: break;
            case Init::One: t.fill(1.0); break;
            case Init::Query:
                for (double& v : t.values()) v = rng.gaussian(0.0, 0.02);
                break;
        }
        model.params.entries.push_back({std::move(d.name), std::move(t)});
    }
    return model;
}

nn::Tensor state_features(const PoseSequence& obs) {
    nn::Tensor f({static_cast<std::size_t>(obs.frames), static_cast<std::size_t>(kStateWidth)});
    for (int t = 0; t < obs.frames; ++t) {
        const auto r = static_cast<std::size_t>(t);
        for (int j = 0; j < kJoints; ++j) {
            if (!obs.is_valid(t, j)) continue;
            const auto c = static_cast<std::size_t>(3 * j);
            for (std::size_t a = 0; a < 3; ++a) f.at(r, c + a) = obs.xyz[PoseSequence::offset(t, j) + a];
            f.at(r, static_cast<std::size_t>(kCoords + j)) = 1.0;
        }
    }
    return f;
}

nn::Var encode_state(nn::Graph& g, const PoseSequence& obs, nn::Var w, nn::Var b) {
    const nn::Tensor& wt = g.value(w);
    if (wt.rank() != 2 || wt.dim(0) != static_cast<std::size_t>(kStateWidth))
        fail(ErrorKind::Validation, "state projection must be " + std::to_string(kStateWidth) + " x D, got " +
                                        nn::shape_string(wt.shape()));
    if (obs.xyz.size() != static_cast<std::size_t>(obs.frames) * kCoords)
        fail(ErrorKind::Validation, "observed poses must be T x 42 x 3");
    const auto width = static_cast<int>(wt.dim(1));
    const nn::Var s = linear(g, g.constant(state_features(obs)), w, b);
    return g.add(s, g.constant(range_encoding(0, obs.frames, width)));
}

ForwardPass forward_graph(const ForecasterModel& model, const PoseSequence& obs, const context::RawContext& ctx,
                          bool track) {
    const ModelConfig& c = model.config;
    if (obs.frames != c.t_obs)
        fail(ErrorKind::Validation, "model expects " + std::to_string(c.t_obs) + " observed frames, got " +
                                        std::to_string(obs.frames));
    check_store(c, model.params);

    ForwardPass pass;
    nn::Graph& g = pass.graph;
    pass.params.reserve(model.params.size());
    Cursor cur(g, model.params, track, pass.params);

    const nn::Var ws = cur.next(), bs = cur.next();
    context::AdapterVars adapters;
    adapters.w_vision = cur.next();
    adapters.b_vision = cur.next();
    adapters.w_text = cur.next();
    adapters.b_text = cur.next();

    const context::FactoredContext context_tokens = context::factor_context(g, ctx, adapters);
    nn::Var x = encode_state(g, obs, ws, bs);
    for (int i = 0; i < c.encoder_blocks; ++i) {
        const auto cross = cur.attention();
        const auto self = cur.attention();
        const auto ffn = cur.ffn();
        const nn::KeyValues kv{context::project_context(g, context_tokens, cross.wk, cross.bk),
                               context::project_context(g, context_tokens, cross.wv, cross.bv)};
        x = nn::attention_sublayer(g, x, kv, cross, c.heads);
        x = nn::attention_sublayer(g, x, std::nullopt, self, c.heads);
        x = nn::feed_forward_sublayer(g, x, ffn);
    }
    const nn::Var z = nn::affine_layer_norm(g, x, cur.norm());

    nn::Var q = g.add(cur.next(), g.constant(range_encoding(c.t_obs, c.t_fut, c.d_model)));
    for (int i = 0; i < c.decoder_blocks; ++i) {
        const auto self = cur.attention();
        const auto cross = cur.attention();
        const auto ffn = cur.ffn();
        q = nn::attention_sublayer(g, q, std::nullopt, self, c.heads);
        q = nn::attention_sublayer(g, q, z, cross, c.heads);
        q = nn::feed_forward_sublayer(g, q, ffn);
    }
    q = nn::affine_layer_norm(g, q, cur.norm());
    const nn::Var hw = cur.next(), hb = cur.next();
    nn::Var out = nn::linear(g, q, hw, hb);

    if (c.delta_head) {
        nn::Tensor last({static_cast<std::size_t>(kCoords)});
        for (int j = 0; j < kJoints; ++j)
            for (int t = obs.frames - 1; t >= 0; --t) {
                if (!obs.is_valid(t, j)) continue;
                for (std::size_t a = 0; a < 3; ++a)
                    last[static_cast<std::size_t>(3 * j) + a] = obs.xyz[PoseSequence::offset(t, j) + a];
                break;
            }
        out = g.add(out, g.constant(std::move(last)));
    }
    pass.prediction = out;
    return pass;
}

PoseSequence denormalize_prediction(const nn::Tensor& normalized, const dataio::NormStats& stats) {
    if (normalized.rank() != 2 || normalized.cols() != static_cast<std::size_t>(kCoords))
        fail(ErrorKind::Validation, "prediction must be T x 126, got " + nn::shape_string(normalized.shape()));
    PoseSequence out(static_cast<int>(normalized.rows()));
    for (std::size_t i = 0; i < normalized.size(); ++i)
        out.xyz[i] = dataio::denormalize_value(normalized[i], static_cast<int>(i % 3), stats);
    return out;
}

PoseSequence forward(const ForecasterModel& model, const dataio::Sample& sample, const context::RawContext& ctx) {
    ForwardPass pass = forward_graph(model, dataio::normalize(sample.obs, model.stats), ctx, false);
    return denormalize_prediction(pass.graph.value(pass.prediction), model.stats);
}

void quantize(ForecasterModel& model) {
    for (auto& p : model.params.entries)
        for (double& v : p.value.values()) v = checkpoint::at_rest(v);
}

void save_checkpoint(ForecasterModel& model, const std::filesystem::path& path) {
    model.config.validate();
    check_store(model.config, model.params);
    quantize(model);
    checkpoint::Container c;
    c.header = {{"kind", "forecaster"}, {"config", to_json(model.config)}};
    auto manifest = nlohmann::json::array();
    for (const auto& p : model.params.entries) manifest.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    c.header["parameters"] = std::move(manifest);
    c.payload.reserve(model.params.value_count());
    for (const auto& p : model.params.entries) c.payload.insert(c.payload.end(), p.value.values().begin(), p.value.values().end());
    for (int a = 0; a < 3; ++a) c.trailer.push_back(model.stats.min[static_cast<std::size_t>(a)]);
    for (int a = 0; a < 3; ++a) c.trailer.push_back(model.stats.max[static_cast<std::size_t>(a)]);
    checkpoint::write_container(c, path);
}

ForecasterModel load_checkpoint(const std::filesystem::path& path) {
    const checkpoint::Container c = checkpoint::read_container(path);
    if (c.header.value("kind", "") != "forecaster")
        fail(ErrorKind::Integrity, path.string() + ": not a forecaster checkpoint");
    if (!c.header.contains("config")) fail(ErrorKind::Integrity, path.string() + ": header has no config");
    ModelConfig config;
    try {
        config = config_from_json(c.header.at("config"));
    } catch (const Error& e) {
        fail(ErrorKind::Integrity, path.string() + ": " + e.what());
    }
    const std::size_t expected = parameter_count(config);
    if (c.payload.size() != expected)
        fail(ErrorKind::Integrity, path.string() + ": config implies " + std::to_string(expected) +
                                       " parameters, payload holds " + std::to_string(c.payload.size()));
    if (c.trailer.size() != 6) fail(ErrorKind::Integrity, path.string() + ": normalization trailer must hold 6 values");

    ForecasterModel model;
    model.config = config;
    std::size_t pos = 0;
    for (auto& d : declaration(config)) {
        nn::Tensor t(d.shape);
        std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(pos), t.size(), t.data());
        pos += t.size();
        model.params.entries.push_back({std::move(d.name), std::move(t)});
    }
    if (c.header.contains("parameters")) {
        const auto& manifest = c.header.at("parameters");
        if (!manifest.is_array() || manifest.size() != model.params.size())
            fail(ErrorKind::Integrity, path.string() + ": parameter manifest does not match config");
        for (std::size_t i = 0; i < manifest.size(); ++i)
            if (manifest[i].value("name", "") != model.params.entries[i].name)
                fail(ErrorKind::Integrity, path.string() + ": manifest entry " + std::to_string(i) + " is not " +
                                               model.params.entries[i].name);
    }
    for (std::size_t a = 0; a < 3; ++a) {
        model.stats.min[a] = c.trailer[a];
        model.stats.max[a] = c.trailer[3 + a];
    }
    return model;
}

}  // namespace egghand::forecaster
