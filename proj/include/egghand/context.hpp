#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egghand/dataio.hpp"
#include "egghand/nn/graph.hpp"
#include "egghand/nn/tensor.hpp"

namespace egghand::context {

inline constexpr int kGridCells = 7;
inline constexpr int kCellSize = 32;
inline constexpr int kGridTokensPerFrame = kGridCells * kGridCells;
inline constexpr int kGridFeatures = 5;

enum class VisionSource { ToyGrid, Precomputed, Noise };
enum class TextSource { HashedText, Dummy };

const char* to_string(VisionSource s);
const char* to_string(TextSource s);

/// 49 x 5 tokens for one 224x224x3 frame: (mean R, mean G, mean B, center u/224,
/// center v/224) per 32x32 cell, row-major over the 7x7 grid.
nn::Tensor grid_frame_tokens(std::span<const float> frame);

/// (n * 49) x 5 tokens for n frames stored back to back, frame-major.
nn::Tensor grid_vision_tokens(std::span<const float> frames, int n_frames);

/// One token per lowercased whitespace-separated word (at most max_words; the empty
/// text yields a single token for the empty word). Each token is a unit vector of
/// Prng(fnv1a64(word)) Gaussians.
nn::Tensor hashed_text_tokens(std::string_view text, int d_feat, int max_words = 16);

/// Lowercased words as used by hashed_text_tokens.
std::vector<std::string> tokenize_words(std::string_view text, int max_words = 16);

/// Precomputed tokens of the given absolute frame indices, concatenated frame-major.
nn::Tensor load_precomputed_tokens(const dataio::ClipRecord& record, std::span<const int> frame_indices);

/// Interleaved sin/cos encoding: e[2i] = sin(p / 10000^(2i/D)), e[2i+1] = cos(same).
std::vector<double> sinusoidal_encoding(double position, int width);
/// Rows of sinusoidal_encoding for each position.
nn::Tensor encoding_table(std::span<const double> positions, int width);

/// Raw (pre-adapter) multimodal context for one sample.
struct RawContext {
    nn::Tensor visual;                // L_v x D_v
    std::vector<double> visual_time;  // source frame per visual token
    nn::Tensor text;                  // L_t x D_t
    VisionSource vision_source = VisionSource::ToyGrid;
    TextSource text_source = TextSource::HashedText;
};

struct AdapterVars {
    nn::Var w_vision, b_vision, w_text, b_text;
};

struct AdapterParams {
    nn::Tensor w_vision, b_vision, w_text, b_text;
};

/// Shared-width context tokens; fused = [visual; textual].
struct ContextTokens {
    nn::Tensor visual;
    nn::Tensor textual;
    nn::Tensor fused;
    VisionSource vision_source = VisionSource::ToyGrid;
    TextSource text_source = TextSource::HashedText;
};

/// Graph form: V W_v + b_v + E_time(source frame); T W_t + b_t + E_pos(word index);
/// returns the row concatenation. When `with_encodings` is false the encodings are omitted.
nn::Var fuse_context(nn::Graph& g, const RawContext& raw, const AdapterVars& adapters,
                     bool with_encodings = true);

/// Fused tokens kept in factored form so that a projection (fused W + b) is computed
/// as raw (W_v W) + select (E W) + (b_v W + b) on the visual rows, where E holds the
/// distinct time encodings. Falls back to the dense fused tokens when D_v >= D.
struct FactoredContext {
    bool factored = false;
    nn::Var fused;
    nn::Var raw_visual, select, encodings, text;
    AdapterVars adapters;
};

FactoredContext factor_context(nn::Graph& g, const RawContext& raw, const AdapterVars& adapters);
/// Equal to (fused W + b) up to rounding.
nn::Var project_context(nn::Graph& g, const FactoredContext& ctx, nn::Var w, nn::Var b);

ContextTokens adapt_and_fuse(const RawContext& raw, const AdapterParams& params, bool with_encodings = true);

/// n_frames noise images, i.i.d. Gaussian(0.5, 0.25^2) clamped to [0, 1].
std::vector<float> corrupt_vision(int n_frames, std::uint64_t seed);

/// 1-3 words drawn uniformly with replacement from vocab.
std::string dummy_text(std::span<const std::string> vocab, std::uint64_t seed);

/// The synthetic task-word vocabulary.
std::vector<std::string> task_vocabulary();

struct ContextOptions {
    bool noisy_vision = false;
    bool dummy_text = false;
    std::uint64_t seed = 0;
    int text_features = 16;
    int max_words = 16;
};

/// Builds the raw context of a window: its context frames come from precomputed
/// tokens when present, otherwise from stored frames through the grid featurizer.
/// Ablations substitute noise frames and/or dummy text, seeded per sample.
RawContext build_raw_context(const dataio::ClipRecord& record, const dataio::Sample& sample,
                             const ContextOptions& options = {});

}  // namespace egghand::context
