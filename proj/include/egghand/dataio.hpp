#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egghand/geometry.hpp"
#include "egghand/pose.hpp"

namespace egghand::dataio {

inline constexpr int kFrameSize = 224;
inline constexpr std::size_t kFrameValues = static_cast<std::size_t>(kFrameSize) * kFrameSize * 3;
inline constexpr int kBundleFormatVersion = 1;

/// Precomputed per-frame vision features, [T][tokens_per_frame][feature_dim].
struct VisionTokens {
    int tokens_per_frame = 0;
    int feature_dim = 0;
    std::vector<float> values;

    friend bool operator==(const VisionTokens&, const VisionTokens&) = default;
};

/// One egocentric clip as stored on disk. Arrays hold binary32 values exactly as
/// written so that a write/read cycle is bitwise lossless.
struct ClipRecord {
    std::string clip_id;
    double fps = 10.0;
    std::string text;
    int num_frames = 0;
    std::vector<float> poses_world;   // [T][42][3]
    std::vector<float> extrinsics;    // [T][3][4] world->camera
    std::vector<std::uint8_t> mask;   // [T][42]
    std::optional<std::array<float, 4>> intrinsics;  // fx, fy, cx, cy
    std::optional<std::vector<float>> frames;        // [T][224][224][3]
    std::optional<VisionTokens> vision_tokens;

    void validate() const;
    PoseSequence world_poses() const;
    std::vector<geometry::RigidTransform> camera_poses() const;
    geometry::CameraIntrinsics camera_intrinsics() const;

    friend bool operator==(const ClipRecord&, const ClipRecord&) = default;
};

const std::array<std::string, kJoints>& joint_names();

void write_clip_bundle(const ClipRecord& record, const std::filesystem::path& dir);
ClipRecord read_clip_bundle(const std::filesystem::path& dir);

/// One forecasting instance in the canonical frame of its first observed frame.
struct Sample {
    std::string clip_id;
    int start = 0;
    PoseSequence obs;
    PoseSequence fut;
    std::vector<int> context_frame_indices;  // relative to the window start
    std::string text;
    double egomotion = 0.0;
    bool degenerate_yaw = false;
    geometry::RigidTransform world_to_canonical;

    /// "<clip_id>:<start, zero-padded to 6 digits>"; sorts in clip then time order.
    std::string id() const;
};

struct WindowOptions {
    int t_obs = 20;
    int t_fut = 10;
    int stride = 5;
    int context_frames = 4;
    geometry::CanonicalOptions canonical;
};

/// idx_i = round(i (t_obs - 1) / (k - 1)), halves away from zero; k = 1 gives {0}.
std::vector<int> sample_context_frames(int t_obs, int k = 4);

/// Windows starting at 0, stride, 2 stride, ...; empty when the clip is too short.
std::vector<Sample> make_windows(const ClipRecord& record, const WindowOptions& options = {});

struct NormStats {
    std::array<double, 3> min{};
    std::array<double, 3> max{};

    bool degenerate(int axis) const { return max[static_cast<std::size_t>(axis)] == min[static_cast<std::size_t>(axis)]; }
    friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Per-axis min/max over valid joints of every observed and future frame.
NormStats fit_minmax(std::span<const Sample> samples);
double normalize_value(double x, int axis, const NormStats& stats);
double denormalize_value(double y, int axis, const NormStats& stats);
PoseSequence normalize(const PoseSequence& poses, const NormStats& stats);
PoseSequence denormalize(const PoseSequence& poses, const NormStats& stats);

// Dataset layout: <root>/clips/<clip_id>/..., <root>/splits.json.

enum class Split { Train, Val, Test };
const char* to_string(Split split);
Split parse_split(const std::string& name);

/// Stable split assignment: mix64(fnv1a64(clip_id)) % 10 -> 0-7 train, 8 val, 9 test.
Split split_of(const std::string& clip_id);

std::map<std::string, std::vector<std::string>> read_splits(const std::filesystem::path& root);

struct IngestionSummary {
    int clips = 0;
    int skipped_short = 0;
    int samples = 0;
};

struct LoadedSplit {
    std::map<std::string, ClipRecord> records;
    std::vector<Sample> samples;  // ascending Sample::id()
    IngestionSummary summary;
};

LoadedSplit load_split(const std::filesystem::path& root, Split split, const WindowOptions& options = {});

// Synthetic desk-scale generator.

inline constexpr std::array<const char*, 5> kTaskFamilies{"reach_left", "reach_right", "grasp", "wave", "rest"};
inline constexpr std::array<const char*, 4> kTaskModifiers{"slowly", "quickly", "gently", "firmly"};

struct SynthConfig {
    int n_clips = 200;
    int frames_per_clip = 60;
    double egomotion_level = 0.3;
    std::array<double, 5> task_mix{1.0, 1.0, 1.0, 1.0, 1.0};
    std::uint64_t seed = 0;
    /// Also store raw 224x224 frames (large); vision tokens are always stored.
    bool store_frames = false;
    double fps = 10.0;

    void validate() const;
};

struct SyntheticClip {
    ClipRecord record;
    /// Exact binary64 values before binary32 storage.
    PoseSequence world_poses;
    std::vector<geometry::RigidTransform> extrinsics;
    int family = 0;
    int modifier = 0;
};

SyntheticClip synthesize_clip(const SynthConfig& config, int index);

/// Blob rendering of valid joints seen from `extrinsic`, values in [0, 1].
std::vector<float> render_frame(const PoseSequence& world_poses, int frame,
                                const geometry::RigidTransform& extrinsic,
                                const geometry::CameraIntrinsics& intrinsics);

struct SynthSummary {
    int clips = 0;
    std::map<std::string, std::vector<std::string>> splits;
};

SynthSummary synth_generate(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace egghand::dataio
