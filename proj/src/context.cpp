#include "egghand/context.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "egghand/error.hpp"
#include "egghand/nn/prng.hpp"

namespace egghand::context {

const char* to_string(VisionSource s) {
    switch (s) {
        case VisionSource::ToyGrid: return "toy_grid";
        case VisionSource::Precomputed: return "precomputed";
        case VisionSource::Noise: return "noise";
    }
    return "unknown";
}

const char* to_string(TextSource s) { return s == TextSource::HashedText ? "hashed_text" : "dummy"; }

nn::Tensor grid_frame_tokens(std::span<const float> frame) {
    if (frame.size() != dataio::kFrameValues)
        fail(ErrorKind::Validation, "grid featurizer expects a 224x224x3 frame, got " +
                                        std::to_string(frame.size()) + " values");
    nn::Tensor out({kGridTokensPerFrame, kGridFeatures});
    constexpr double inv_pixels = 1.0 / (kCellSize * kCellSize);
    for (int gy = 0; gy < kGridCells; ++gy) {
        for (int gx = 0; gx < kGridCells; ++gx) {
            double rgb[3] = {0.0, 0.0, 0.0};
            for (int y = gy * kCellSize; y < (gy + 1) * kCellSize; ++y) {
                const float* row = frame.data() + (static_cast<std::size_t>(y) * dataio::kFrameSize + gx * kCellSize) * 3;
                for (int x = 0; x < kCellSize; ++x)
                    for (int c = 0; c < 3; ++c) rgb[c] += row[x * 3 + c];
            }
            const auto token = static_cast<std::size_t>(gy * kGridCells + gx);
            for (std::size_t c = 0; c < 3; ++c) out.at(token, c) = rgb[c] * inv_pixels;
            out.at(token, 3) = (gx * kCellSize + kCellSize / 2.0) / dataio::kFrameSize;
            out.at(token, 4) = (gy * kCellSize + kCellSize / 2.0) / dataio::kFrameSize;
        }
    }
    return out;
}

nn::Tensor grid_vision_tokens(std::span<const float> frames, int n_frames) {
    if (n_frames < 1 || frames.size() != dataio::kFrameValues * static_cast<std::size_t>(n_frames))
        fail(ErrorKind::Validation, "grid featurizer: frame buffer does not hold " + std::to_string(n_frames) +
                                        " frames of 224x224x3");
    nn::Tensor out({static_cast<std::size_t>(n_frames) * kGridTokensPerFrame, kGridFeatures});
    for (int f = 0; f < n_frames; ++f) {
        const nn::Tensor t = grid_frame_tokens(frames.subspan(static_cast<std::size_t>(f) * dataio::kFrameValues,
                                                              dataio::kFrameValues));
        std::copy(t.values().begin(), t.values().end(), out.data() + static_cast<std::size_t>(f) * t.size());
    }
    return out;
}

std::vector<std::string> tokenize_words(std::string_view text, int max_words) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!current.empty()) words.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    if (words.size() > static_cast<std::size_t>(max_words)) words.resize(static_cast<std::size_t>(max_words));
    if (words.empty()) words.emplace_back();
    return words;
}

nn::Tensor hashed_text_tokens(std::string_view text, int d_feat, int max_words) {
    require(d_feat >= 1, "text feature width must be positive");
    require(max_words >= 1, "max_words must be positive");
    const auto words = tokenize_words(text, max_words);
    nn::Tensor out({words.size(), static_cast<std::size_t>(d_feat)});
    for (std::size_t w = 0; w < words.size(); ++w) {
        nn::Prng rng(nn::fnv1a64(words[w]));
        double norm = 0.0;
        for (int c = 0; c < d_feat; ++c) {
            const double v = rng.gaussian();
            out.at(w, static_cast<std::size_t>(c)) = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (int c = 0; c < d_feat; ++c) out.at(w, static_cast<std::size_t>(c)) /= norm;
    }
    return out;
}

nn::Tensor load_precomputed_tokens(const dataio::ClipRecord& record, std::span<const int> frame_indices) {
    if (!record.vision_tokens) fail(ErrorKind::Unavailable, "precomputed tokens unavailable for clip " + record.clip_id);
    const auto& vt = *record.vision_tokens;
    const auto per_frame = static_cast<std::size_t>(vt.tokens_per_frame) * static_cast<std::size_t>(vt.feature_dim);
    nn::Tensor out({frame_indices.size() * static_cast<std::size_t>(vt.tokens_per_frame),
                    static_cast<std::size_t>(vt.feature_dim)});
    for (std::size_t k = 0; k < frame_indices.size(); ++k) {
        const int f = frame_indices[k];
        if (f < 0 || f >= record.num_frames)
            fail(ErrorKind::Validation, "precomputed token frame " + std::to_string(f) + " out of range");
        const float* src = vt.values.data() + static_cast<std::size_t>(f) * per_frame;
        std::copy(src, src + per_frame, out.data() + k * per_frame);
    }
    return out;
}

std::vector<double> sinusoidal_encoding(double position, int width) {
    std::vector<double> e(static_cast<std::size_t>(width));
    for (int c = 0; c < width; c += 2) {
        const double angle = position / std::pow(10000.0, static_cast<double>(c) / width);
        e[static_cast<std::size_t>(c)] = std::sin(angle);
        if (c + 1 < width) e[static_cast<std::size_t>(c + 1)] = std::cos(angle);
    }
    return e;
}

nn::Tensor encoding_table(std::span<const double> positions, int width) {
    nn::Tensor out({positions.size(), static_cast<std::size_t>(width)});
    const auto w = static_cast<std::size_t>(width);
    for (std::size_t r = 0; r < positions.size(); ++r) {
        double* row = out.data() + r * w;
        if (r > 0 && positions[r] == positions[r - 1]) {
            std::copy_n(row - w, w, row);
            continue;
        }
        const auto e = sinusoidal_encoding(positions[r], width);
        std::copy(e.begin(), e.end(), row);
    }
    return out;
}

nn::Var fuse_context(nn::Graph& g, const RawContext& raw, const AdapterVars& adapters, bool with_encodings) {
    const nn::Tensor& wv = g.value(adapters.w_vision);
    const nn::Tensor& wt = g.value(adapters.w_text);
    if (raw.visual.rank() != 2 || wv.rank() != 2 || raw.visual.cols() != wv.dim(0))
        fail(ErrorKind::Validation, "vision adapter expects width " + std::to_string(wv.rank() ? wv.dim(0) : 0) +
                                        ", raw tokens " + nn::shape_string(raw.visual.shape()));
    if (raw.text.rank() != 2 || wt.rank() != 2 || raw.text.cols() != wt.dim(0))
        fail(ErrorKind::Validation, "text adapter expects width " + std::to_string(wt.rank() ? wt.dim(0) : 0) +
                                        ", raw tokens " + nn::shape_string(raw.text.shape()));
    require(raw.visual_time.size() == raw.visual.rows(), "one source frame per visual token required");
    const int width = static_cast<int>(wv.dim(1));

    nn::Var visual = g.add(g.matmul(g.constant(raw.visual), adapters.w_vision), adapters.b_vision);
    nn::Var text = g.add(g.matmul(g.constant(raw.text), adapters.w_text), adapters.b_text);
    if (with_encodings) {
        visual = g.add(visual, g.constant(encoding_table(raw.visual_time, width)));
        std::vector<double> word_positions(raw.text.rows());
        for (std::size_t i = 0; i < word_positions.size(); ++i) word_positions[i] = static_cast<double>(i);
        text = g.add(text, g.constant(encoding_table(word_positions, width)));
    }
    return g.concat({visual, text}, 0);
}

FactoredContext factor_context(nn::Graph& g, const RawContext& raw, const AdapterVars& adapters) {
    FactoredContext out;
    out.adapters = adapters;
    const nn::Tensor& wv = g.value(adapters.w_vision);
    if (wv.rank() != 2 || raw.visual.rank() != 2 || raw.visual.cols() != wv.dim(0) || wv.dim(0) >= wv.dim(1) ||
        raw.visual_time.size() != raw.visual.rows()) {
        out.fused = fuse_context(g, raw, adapters);
        return out;
    }
    const int width = static_cast<int>(wv.dim(1));
    std::vector<double> times;
    std::vector<std::size_t> slot(raw.visual_time.size());
    for (std::size_t r = 0; r < slot.size(); ++r) {
        const auto it = std::find(times.begin(), times.end(), raw.visual_time[r]);
        slot[r] = static_cast<std::size_t>(it - times.begin());
        if (it == times.end()) times.push_back(raw.visual_time[r]);
    }
    nn::Tensor select({raw.visual.rows(), times.size()});
    for (std::size_t r = 0; r < slot.size(); ++r) select.at(r, slot[r]) = 1.0;

    const nn::Var word_rows = g.add(g.matmul(g.constant(raw.text), adapters.w_text), adapters.b_text);
    std::vector<double> word_positions(raw.text.rows());
    for (std::size_t i = 0; i < word_positions.size(); ++i) word_positions[i] = static_cast<double>(i);
    out.text = g.add(word_rows, g.constant(encoding_table(word_positions, width)));
    out.raw_visual = g.constant(raw.visual);
    out.select = g.constant(std::move(select));
    out.encodings = g.constant(encoding_table(times, width));
    out.factored = true;
    return out;
}

nn::Var project_context(nn::Graph& g, const FactoredContext& ctx, nn::Var w, nn::Var b) {
    if (!ctx.factored) return g.add(g.matmul(ctx.fused, w), b);
    const nn::Var visual = g.add(g.add(g.matmul(ctx.raw_visual, g.matmul(ctx.adapters.w_vision, w)),
                                       g.matmul(ctx.select, g.matmul(ctx.encodings, w))),
                                 g.add(g.matmul(ctx.adapters.b_vision, w), b));
    const nn::Var text = g.add(g.matmul(ctx.text, w), b);
    return g.concat({visual, text}, 0);
}

ContextTokens adapt_and_fuse(const RawContext& raw, const AdapterParams& params, bool with_encodings) {
    nn::Graph g;
    AdapterVars vars{g.parameter(params.w_vision, false), g.parameter(params.b_vision, false),
                     g.parameter(params.w_text, false), g.parameter(params.b_text, false)};
    const nn::Var fused = fuse_context(g, raw, vars, with_encodings);
    ContextTokens out;
    out.fused = g.value(fused);
    const std::size_t lv = raw.visual.rows();
    nn::Graph split;
    const nn::Var f = split.constant(out.fused);
    out.visual = split.value(split.slice(f, 0, 0, lv));
    out.textual = split.value(split.slice(f, 0, lv, out.fused.rows()));
    out.vision_source = raw.vision_source;
    out.text_source = raw.text_source;
    return out;
}

std::vector<float> corrupt_vision(int n_frames, std::uint64_t seed) {
    require(n_frames >= 1, "corrupt_vision needs at least one frame");
    nn::Prng rng(seed);
    std::vector<float> out(dataio::kFrameValues * static_cast<std::size_t>(n_frames));
    for (float& v : out) v = static_cast<float>(std::clamp(rng.gaussian(0.5, 0.25), 0.0, 1.0));
    return out;
}

std::string dummy_text(std::span<const std::string> vocab, std::uint64_t seed) {
    require(!vocab.empty(), "dummy_text needs a non-empty vocabulary");
    nn::Prng rng(seed);
    const auto n_words = 1 + rng.below(3);
    std::string out;
    for (std::uint64_t i = 0; i < n_words; ++i) {
        if (i) out += ' ';
        out += vocab[rng.below(vocab.size())];
    }
    return out;
}

std::vector<std::string> task_vocabulary() {
    return {dataio::kTaskFamilies.begin(), dataio::kTaskFamilies.end()};
}

RawContext build_raw_context(const dataio::ClipRecord& record, const dataio::Sample& sample,
                             const ContextOptions& options) {
    RawContext raw;
    const std::uint64_t sample_seed = nn::derive_seed(options.seed, nn::fnv1a64(sample.id()));
    const auto k = sample.context_frame_indices.size();
    for (int idx : sample.context_frame_indices)
        for (int i = 0; i < kGridTokensPerFrame; ++i) raw.visual_time.push_back(idx);

    if (options.noisy_vision) {
        raw.visual = grid_vision_tokens(corrupt_vision(static_cast<int>(k), nn::derive_seed(sample_seed, 1)),
                                        static_cast<int>(k));
        raw.vision_source = VisionSource::Noise;
    } else if (record.vision_tokens) {
        std::vector<int> absolute;
        for (int idx : sample.context_frame_indices) absolute.push_back(sample.start + idx);
        raw.visual = load_precomputed_tokens(record, absolute);
        raw.vision_source = VisionSource::Precomputed;
        const auto per = static_cast<std::size_t>(record.vision_tokens->tokens_per_frame);
        raw.visual_time.clear();
        for (int idx : sample.context_frame_indices)
            for (std::size_t i = 0; i < per; ++i) raw.visual_time.push_back(idx);
    } else if (record.frames) {
        std::vector<float> frames;
        frames.reserve(k * dataio::kFrameValues);
        for (int idx : sample.context_frame_indices) {
            const auto* src = record.frames->data() + static_cast<std::size_t>(sample.start + idx) * dataio::kFrameValues;
            frames.insert(frames.end(), src, src + dataio::kFrameValues);
        }
        raw.visual = grid_vision_tokens(frames, static_cast<int>(k));
        raw.vision_source = VisionSource::ToyGrid;
    } else {
        fail(ErrorKind::Unavailable, "clip " + record.clip_id + " has neither frames nor precomputed vision tokens");
    }

    if (options.dummy_text) {
        const auto vocab = task_vocabulary();
        raw.text = hashed_text_tokens(dummy_text(vocab, nn::derive_seed(sample_seed, 2)), options.text_features,
                                      options.max_words);
        raw.text_source = TextSource::Dummy;
    } else {
        raw.text = hashed_text_tokens(sample.text, options.text_features, options.max_words);
    }
    return raw;
}

}  // namespace egghand::context
