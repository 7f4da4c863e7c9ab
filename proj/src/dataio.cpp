#include "egghand/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "egghand/error.hpp"
#include "egghand/nn/prng.hpp"

namespace egghand::dataio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "bundle I/O assumes a little-endian host");

std::vector<char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingFile, "missing file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

template <typename T>
std::vector<T> read_array(const fs::path& path, std::size_t expected_count) {
    const auto bytes = read_bytes(path);
    if (bytes.size() != expected_count * sizeof(T))
        fail(ErrorKind::DimensionMismatch, path.filename().string() + ": expected " +
                                               std::to_string(expected_count * sizeof(T)) + " bytes from meta.json, found " +
                                               std::to_string(bytes.size()));
    std::vector<T> out(expected_count);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

template <typename T>
void write_array(const fs::path& path, const std::vector<T>& values) {
    write_bytes(path, values.data(), values.size() * sizeof(T));
}

std::string pad_number(int value, int width) {
    std::ostringstream s;
    s << std::setw(width) << std::setfill('0') << value;
    return s.str();
}

}  // namespace

const std::array<std::string, kJoints>& joint_names() {
    static const std::array<std::string, kJoints> names = [] {
        std::array<std::string, kJoints> n;
        const char* fingers[] = {"thumb", "index", "middle", "ring", "pinky"};
        const char* parts[] = {"mcp", "pip", "dip", "tip"};
        for (int hand = 0; hand < 2; ++hand) {
            const std::string side = hand == 0 ? "left" : "right";
            const int base = hand * kJointsPerHand;
            n[static_cast<std::size_t>(base)] = side + "_wrist";
            for (int f = 0; f < 5; ++f)
                for (int p = 0; p < 4; ++p)
                    n[static_cast<std::size_t>(base + 1 + f * 4 + p)] = side + "_" + fingers[f] + "_" + parts[p];
        }
        return n;
    }();
    return names;
}

// ---------------------------------------------------------------- ClipRecord

void ClipRecord::validate() const {
    require(!clip_id.empty(), "clip_id must be non-empty");
    require(fps > 0.0 && std::isfinite(fps), "fps must be positive");
    require(num_frames >= 1, "clip needs at least one frame");
    const auto t = static_cast<std::size_t>(num_frames);
    if (poses_world.size() != t * kCoords || extrinsics.size() != t * 12 || mask.size() != t * kJoints)
        fail(ErrorKind::DimensionMismatch, "clip " + clip_id + ": array leading dimensions disagree with num_frames");
    if (frames && frames->size() != t * kFrameValues)
        fail(ErrorKind::DimensionMismatch, "clip " + clip_id + ": frames do not hold num_frames images");
    if (vision_tokens) {
        require(vision_tokens->tokens_per_frame >= 1 && vision_tokens->feature_dim >= 1,
                "vision token dimensions must be positive");
        if (vision_tokens->values.size() != t * static_cast<std::size_t>(vision_tokens->tokens_per_frame) *
                                                static_cast<std::size_t>(vision_tokens->feature_dim))
            fail(ErrorKind::DimensionMismatch, "clip " + clip_id + ": vision tokens disagree with declared shape");
    }
    for (float v : poses_world) require(std::isfinite(v), "clip " + clip_id + ": non-finite pose value");
    if (intrinsics) geometry::CameraIntrinsics{(*intrinsics)[0], (*intrinsics)[1], (*intrinsics)[2], (*intrinsics)[3]}.validate();
}

PoseSequence ClipRecord::world_poses() const {
    PoseSequence p(num_frames);
    std::copy(poses_world.begin(), poses_world.end(), p.xyz.begin());
    p.valid = mask;
    return p;
}

std::vector<geometry::RigidTransform> ClipRecord::camera_poses() const {
    std::vector<geometry::RigidTransform> out;
    out.reserve(static_cast<std::size_t>(num_frames));
    for (int t = 0; t < num_frames; ++t) {
        std::array<double, 12> rt{};
        std::copy_n(extrinsics.begin() + static_cast<std::ptrdiff_t>(t) * 12, 12, rt.begin());
        out.push_back(geometry::RigidTransform::from_matrix34(rt));
    }
    return out;
}

geometry::CameraIntrinsics ClipRecord::camera_intrinsics() const {
    if (!intrinsics) return {};
    return {(*intrinsics)[0], (*intrinsics)[1], (*intrinsics)[2], (*intrinsics)[3]};
}

void write_clip_bundle(const ClipRecord& record, const fs::path& dir) {
    record.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

    json meta;
    meta["clip_id"] = record.clip_id;
    meta["fps"] = record.fps;
    meta["num_frames"] = record.num_frames;
    meta["num_joints"] = kJoints;
    meta["units"] = "meters";
    meta["text"] = record.text;
    meta["joint_names"] = joint_names();
    meta["format_version"] = kBundleFormatVersion;
    json optional = json::array();
    if (record.intrinsics) optional.push_back("intrinsics");
    if (record.frames) optional.push_back("frames");
    if (record.vision_tokens) {
        optional.push_back("vision_tokens");
        meta["vision_tokens_shape"] = {{"tokens_per_frame", record.vision_tokens->tokens_per_frame},
                                       {"feature_dim", record.vision_tokens->feature_dim}};
    }
    meta["optional_fields"] = optional;
    const std::string text = meta.dump(2) + "\n";
    write_bytes(dir / "meta.json", text.data(), text.size());

    write_array(dir / "poses_world.f32", record.poses_world);
    write_array(dir / "extrinsics.f32", record.extrinsics);
    write_array(dir / "mask.u8", record.mask);
    if (record.intrinsics) write_bytes(dir / "intrinsics.f32", record.intrinsics->data(), 4 * sizeof(float));
    if (record.frames) write_array(dir / "frames.f32", *record.frames);
    if (record.vision_tokens) write_array(dir / "vision_tokens.f32", record.vision_tokens->values);
}

ClipRecord read_clip_bundle(const fs::path& dir) {
    const auto meta_bytes = read_bytes(dir / "meta.json");
    json meta = json::parse(meta_bytes.begin(), meta_bytes.end(), nullptr, false);
    if (meta.is_discarded() || !meta.is_object() || !meta.contains("format_version") || !meta.contains("clip_id"))
        fail(ErrorKind::BadMagic, (dir / "meta.json").string() + " is not a clip bundle header");
    if (meta["format_version"] != kBundleFormatVersion)
        fail(ErrorKind::BadVersion, (dir / "meta.json").string() + ": unsupported format_version " +
                                        meta["format_version"].dump());
    ClipRecord r;
    try {
        r.clip_id = meta.at("clip_id").get<std::string>();
        r.fps = meta.at("fps").get<double>();
        r.num_frames = meta.at("num_frames").get<int>();
        r.text = meta.at("text").get<std::string>();
        if (meta.at("num_joints").get<int>() != kJoints)
            fail(ErrorKind::DimensionMismatch, (dir / "meta.json").string() + ": num_joints must be 42");
        if (meta.at("units").get<std::string>() != "meters")
            fail(ErrorKind::Validation, (dir / "meta.json").string() + ": units must be meters");
    } catch (const json::exception& e) {
        fail(ErrorKind::BadMagic, (dir / "meta.json").string() + ": malformed header (" + e.what() + ")");
    }
    if (r.num_frames < 1) fail(ErrorKind::DimensionMismatch, "num_frames must be positive");
    const auto t = static_cast<std::size_t>(r.num_frames);
    r.poses_world = read_array<float>(dir / "poses_world.f32", t * kCoords);
    r.extrinsics = read_array<float>(dir / "extrinsics.f32", t * 12);
    r.mask = read_array<std::uint8_t>(dir / "mask.u8", t * kJoints);

    const auto optional = meta.value("optional_fields", json::array());
    auto has = [&](const char* name) { return std::find(optional.begin(), optional.end(), name) != optional.end(); };
    if (has("intrinsics")) {
        const auto v = read_array<float>(dir / "intrinsics.f32", 4);
        r.intrinsics = std::array<float, 4>{v[0], v[1], v[2], v[3]};
    }
    if (has("frames")) r.frames = read_array<float>(dir / "frames.f32", t * kFrameValues);
    if (has("vision_tokens")) {
        VisionTokens vt;
        try {
            vt.tokens_per_frame = meta.at("vision_tokens_shape").at("tokens_per_frame").get<int>();
            vt.feature_dim = meta.at("vision_tokens_shape").at("feature_dim").get<int>();
        } catch (const json::exception&) {
            fail(ErrorKind::BadMagic, (dir / "meta.json").string() + ": vision_tokens_shape missing");
        }
        if (vt.tokens_per_frame < 1 || vt.feature_dim < 1)
            fail(ErrorKind::DimensionMismatch, "vision token dimensions must be positive");
        vt.values = read_array<float>(dir / "vision_tokens.f32", t * static_cast<std::size_t>(vt.tokens_per_frame) *
                                                                     static_cast<std::size_t>(vt.feature_dim));
        r.vision_tokens = std::move(vt);
    }
    r.validate();
    return r;
}

// ---------------------------------------------------------------- windows

std::string Sample::id() const { return clip_id + ":" + pad_number(start, 6); }

std::vector<int> sample_context_frames(int t_obs, int k) {
    require(k >= 1, "need at least one context frame");
    require(k <= t_obs, "cannot sample " + std::to_string(k) + " context frames from " + std::to_string(t_obs));
    if (k == 1) return {0};
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        idx[static_cast<std::size_t>(i)] = static_cast<int>(std::round(static_cast<double>(i) * (t_obs - 1) / (k - 1)));
    return idx;
}

std::vector<Sample> make_windows(const ClipRecord& record, const WindowOptions& options) {
    require(options.t_obs >= 1 && options.t_fut >= 1, "window lengths must be positive");
    require(options.stride >= 1, "stride must be at least 1");
    const int length = options.t_obs + options.t_fut;
    std::vector<Sample> out;
    if (record.num_frames < length) return out;

    const PoseSequence world = record.world_poses();
    const auto cameras = record.camera_poses();
    const auto context = sample_context_frames(options.t_obs, options.context_frames);
    for (int start = 0; start + length <= record.num_frames; start += options.stride) {
        const std::span<const geometry::RigidTransform> window_cams(cameras.data() + start, static_cast<std::size_t>(length));
        const auto canon = geometry::canonicalize_clip(world.range(start, start + length), window_cams, options.canonical);
        Sample s;
        s.clip_id = record.clip_id;
        s.start = start;
        s.obs = canon.poses.range(0, options.t_obs);
        s.fut = canon.poses.range(options.t_obs, length);
        s.context_frame_indices = context;
        s.text = record.text;
        s.egomotion = geometry::egomotion_score(window_cams);
        s.degenerate_yaw = canon.degenerate_yaw;
        s.world_to_canonical = canon.world_to_canonical;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------- normalization

NormStats fit_minmax(std::span<const Sample> samples) {
    NormStats stats;
    std::array<bool, 3> seen{};
    auto visit = [&](const PoseSequence& p) {
        for (int t = 0; t < p.frames; ++t)
            for (int j = 0; j < kJoints; ++j) {
                if (!p.is_valid(t, j)) continue;
                for (int a = 0; a < 3; ++a) {
                    const double v = p.joint(t, j)(a);
                    const auto ua = static_cast<std::size_t>(a);
                    if (!seen[ua]) {
                        stats.min[ua] = stats.max[ua] = v;
                        seen[ua] = true;
                    } else {
                        stats.min[ua] = std::min(stats.min[ua], v);
                        stats.max[ua] = std::max(stats.max[ua], v);
                    }
                }
            }
    };
    for (const Sample& s : samples) {
        visit(s.obs);
        visit(s.fut);
    }
    if (!seen[0]) fail(ErrorKind::Validation, "fit_minmax: no valid joints in the training split");
    return stats;
}

double normalize_value(double x, int axis, const NormStats& stats) {
    const auto a = static_cast<std::size_t>(axis);
    if (stats.degenerate(axis)) return 0.5;
    return (x - stats.min[a]) / (stats.max[a] - stats.min[a]);
}

double denormalize_value(double y, int axis, const NormStats& stats) {
    const auto a = static_cast<std::size_t>(axis);
    if (stats.degenerate(axis)) return stats.min[a];
    return stats.min[a] + y * (stats.max[a] - stats.min[a]);
}

PoseSequence normalize(const PoseSequence& poses, const NormStats& stats) {
    PoseSequence out = poses;
    for (std::size_t i = 0; i < out.xyz.size(); ++i) out.xyz[i] = normalize_value(poses.xyz[i], static_cast<int>(i % 3), stats);
    return out;
}

PoseSequence denormalize(const PoseSequence& poses, const NormStats& stats) {
    PoseSequence out = poses;
    for (std::size_t i = 0; i < out.xyz.size(); ++i) out.xyz[i] = denormalize_value(poses.xyz[i], static_cast<int>(i % 3), stats);
    return out;
}

// ---------------------------------------------------------------- dataset

const char* to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "unknown";
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    fail(ErrorKind::Validation, "unknown split '" + name + "'");
}

Split split_of(const std::string& clip_id) {
    const auto bucket = nn::mix64(nn::fnv1a64(clip_id)) % 10;
    if (bucket < 8) return Split::Train;
    return bucket == 8 ? Split::Val : Split::Test;
}

std::map<std::string, std::vector<std::string>> read_splits(const fs::path& root) {
    const auto bytes = read_bytes(root / "splits.json");
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(ErrorKind::BadMagic, (root / "splits.json").string() + " is malformed");
    std::map<std::string, std::vector<std::string>> out;
    try {
        for (auto& [name, ids] : j.items()) out[name] = ids.get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        fail(ErrorKind::BadMagic, (root / "splits.json").string() + ": " + e.what());
    }
    return out;
}

LoadedSplit load_split(const fs::path& root, Split split, const WindowOptions& options) {
    const auto splits = read_splits(root);
    const auto it = splits.find(to_string(split));
    LoadedSplit out;
    if (it == splits.end()) return out;
    for (const auto& id : it->second) {
        ClipRecord record = read_clip_bundle(root / "clips" / id);
        auto windows = make_windows(record, options);
        ++out.summary.clips;
        if (windows.empty()) ++out.summary.skipped_short;
        for (auto& w : windows) out.samples.push_back(std::move(w));
        out.records.emplace(id, std::move(record));
    }
    std::sort(out.samples.begin(), out.samples.end(), [](const Sample& a, const Sample& b) { return a.id() < b.id(); });
    out.summary.samples = static_cast<int>(out.samples.size());
    return out;
}

}  // namespace egghand::dataio
