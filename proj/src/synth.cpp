#include <Eigen/Geometry>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>

#include "egghand/context.hpp"
#include "egghand/dataio.hpp"
#include "egghand/error.hpp"
#include "egghand/nn/prng.hpp"

namespace egghand::dataio {

namespace {

using Eigen::Vector3d;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum Family { ReachLeft, ReachRight, Grasp, Wave, Rest };
enum Modifier { Slowly, Quickly, Gently, Firmly };

struct Range {
    double lo, hi;
    double draw(nn::Prng& rng) const { return rng.uniform(lo, hi); }
};

struct Sinusoid {
    double amplitude;
    Vector3d direction;
    double frequency;
    double phase;
};

struct HandProfile {
    Range amplitude;
    Range frequency;
    Vector3d bias;  // preferred wrist motion direction
    double curl_mean;
    Range curl_amplitude;
    Range curl_frequency;
    Range yaw_amplitude;
    bool yaw_follows_wrist = false;
};

struct HandMotion {
    int side = 1;  // +1 right hand, -1 left hand
    double scale = 1.0;
    Vector3d base;
    std::vector<Sinusoid> wrist;
    double yaw0 = 0.0, yaw_amplitude = 0.0, yaw_frequency = 0.0, yaw_phase = 0.0;
    double pitch_amplitude = 0.0, pitch_frequency = 0.0, pitch_phase = 0.0;
    double curl_amplitude = 0.0, curl_frequency = 0.0;
    std::array<double, 5> curl_mean{}, curl_phase{};
    std::vector<double> grip_onsets;
    double grip_delta = 0.0;
};

// Grip event: a fixed finger-spread cue, then a grip change whose sign and size
// depend on the modifier.
constexpr double kGripCue = 0.8, kGripRamp = 0.4, kGripHold = 0.8;

double smoothstep(double x) { return x <= 0.0 ? 0.0 : x >= 1.0 ? 1.0 : x * x * (3.0 - 2.0 * x); }

double grip_offset(double dt, double delta) {
    const double cue = -0.3 * (smoothstep(dt / 0.3) - smoothstep((dt - kGripCue) / 0.3));
    const double g = dt - kGripCue;
    return cue + delta * smoothstep(g / kGripRamp) * (1.0 - smoothstep((g - kGripRamp - kGripHold) / kGripRamp));
}

double grip_delta(Modifier modifier) {
    switch (modifier) {
        case Slowly: return -0.5;
        case Quickly: return 0.5;
        case Gently: return -0.9;
        case Firmly: return 0.9;
    }
    return 0.0;
}

const HandProfile kResting{{0.005, 0.015}, {0.1, 0.3}, Vector3d::Zero(), 0.3, {0.05, 0.1}, {0.1, 0.3}, {0.02, 0.08}};

HandProfile profile_for(Family family, bool left_hand) {
    switch (family) {
        case ReachLeft:
        case ReachRight: {
            const bool active = (family == ReachLeft) == left_hand;
            if (!active) return kResting;
            const double lateral = family == ReachLeft ? 1.0 : -1.0;
            return {{0.04, 0.10}, {0.2, 0.5}, Vector3d(0.6, 0.7 * lateral, 0.3), 0.6, {0.3, 0.5}, {0.2, 0.5}, {0.1, 0.3}};
        }
        case Grasp:
            return {{0.02, 0.05}, {0.2, 0.5}, Vector3d(0.5, 0.0, -0.5), 0.8, {0.4, 0.6}, {0.3, 0.6}, {0.05, 0.2}};
        case Wave:
            if (left_hand) return kResting;
            return {{0.05, 0.09}, {0.8, 1.2}, Vector3d(0.0, 1.0, 0.0), 0.15, {0.05, 0.1}, {0.3, 0.6}, {0.3, 0.5}, true};
        case Rest:
            return kResting;
    }
    return kResting;
}

HandMotion draw_hand(nn::Prng& rng, Family family, Modifier modifier, bool left_hand) {
    const HandProfile p = profile_for(family, left_hand);
    const double freq_scale = modifier == Slowly ? 0.6 : modifier == Quickly ? 1.4 : 1.0;
    const double amp_scale = modifier == Gently ? 0.7 : modifier == Firmly ? 1.2 : 1.0;

    HandMotion h;
    h.side = left_hand ? -1 : 1;
    h.scale = rng.uniform(0.9, 1.1);
    h.base = Vector3d(0.42 + rng.uniform(-0.03, 0.03), (left_hand ? 0.15 : -0.15) + rng.uniform(-0.03, 0.03),
                      1.0 + rng.uniform(-0.02, 0.02));
    const int n = 2 + static_cast<int>(rng.below(3));
    for (int k = 0; k < n; ++k) {
        Vector3d d(rng.gaussian(), rng.gaussian(), rng.gaussian());
        d = p.bias + 0.6 * d;
        if (d.norm() < 1e-9) d = Vector3d::UnitX();
        Sinusoid s;
        s.amplitude = p.amplitude.draw(rng) * amp_scale / std::sqrt(static_cast<double>(n) / 2.0);
        s.direction = d.normalized();
        s.frequency = p.frequency.draw(rng) * freq_scale;
        s.phase = rng.uniform(0.0, kTwoPi);
        h.wrist.push_back(s);
    }
    h.yaw0 = rng.uniform(-0.3, 0.3);
    h.yaw_amplitude = p.yaw_amplitude.draw(rng) * amp_scale;
    h.yaw_frequency = p.yaw_follows_wrist ? h.wrist.front().frequency : rng.uniform(0.1, 0.4) * freq_scale;
    h.yaw_phase = p.yaw_follows_wrist ? h.wrist.front().phase : rng.uniform(0.0, kTwoPi);
    h.pitch_amplitude = rng.uniform(0.02, 0.15);
    h.pitch_frequency = rng.uniform(0.1, 0.4) * freq_scale;
    h.pitch_phase = rng.uniform(0.0, kTwoPi);

    h.curl_amplitude = p.curl_amplitude.draw(rng) * amp_scale;
    h.curl_frequency = p.curl_frequency.draw(rng) * freq_scale;
    const double base_phase = rng.uniform(0.0, kTwoPi);
    for (std::size_t f = 0; f < 5; ++f) {
        double mean = p.curl_mean + (modifier == Firmly ? 0.2 : 0.0) + rng.uniform(-0.08, 0.08);
        mean = std::clamp(mean, h.curl_amplitude + 0.02, 1.6 - h.curl_amplitude);
        h.curl_mean[f] = mean;
        h.curl_phase[f] = base_phase + 0.25 * static_cast<double>(f) + rng.uniform(-0.1, 0.1);
    }
    return h;
}

// Hand-frame layout: x along the fingers, y toward the thumb side for the right
// hand (mirrored for the left), z dorsal.
struct FingerGeometry {
    Vector3d base;
    Vector3d direction;
    std::array<double, 3> bones;
    std::array<double, 3> flexion;  // per-joint share of the curl angle
};

const std::array<FingerGeometry, 5>& finger_geometry() {
    static const std::array<FingerGeometry, 5> g{{
        {{0.025, 0.030, -0.010}, Vector3d(0.6, 0.8, -0.2).normalized(), {0.035, 0.030, 0.025}, {0.4, 0.5, 0.4}},
        {{0.085, 0.022, 0.0}, Vector3d(1.0, 0.10, 0.0).normalized(), {0.040, 0.024, 0.020}, {0.8, 1.0, 0.7}},
        {{0.088, 0.002, 0.0}, Vector3d(1.0, 0.0, 0.0), {0.045, 0.028, 0.022}, {0.8, 1.0, 0.7}},
        {{0.083, -0.017, 0.0}, Vector3d(1.0, -0.10, 0.0).normalized(), {0.042, 0.026, 0.021}, {0.8, 1.0, 0.7}},
        {{0.075, -0.034, 0.0}, Vector3d(1.0, -0.20, 0.0).normalized(), {0.034, 0.020, 0.018}, {0.8, 1.0, 0.7}},
    }};
    return g;
}

void place_hand(const HandMotion& h, double time, PoseSequence& poses, int frame, int first_joint) {
    Vector3d wrist = h.base;
    for (const Sinusoid& s : h.wrist) wrist += s.amplitude * std::sin(kTwoPi * s.frequency * time + s.phase) * s.direction;
    const double yaw = h.yaw0 + h.yaw_amplitude * std::sin(kTwoPi * h.yaw_frequency * time + h.yaw_phase);
    const double pitch = h.pitch_amplitude * std::sin(kTwoPi * h.pitch_frequency * time + h.pitch_phase);
    const Eigen::Matrix3d rot =
        (Eigen::AngleAxisd(yaw, Vector3d::UnitZ()) * Eigen::AngleAxisd(pitch, Vector3d::UnitY())).toRotationMatrix();
    const Vector3d mirror(1.0, static_cast<double>(h.side), 1.0);

    poses.joint(frame, first_joint) = wrist;
    double grip = 0.0;
    for (double onset : h.grip_onsets) grip += grip_offset(time - onset, h.grip_delta);
    const auto& fingers = finger_geometry();
    for (std::size_t f = 0; f < 5; ++f) {
        const FingerGeometry& g = fingers[f];
        const double curl = std::max(0.0, h.curl_mean[f] + grip +
                                              h.curl_amplitude * std::sin(kTwoPi * h.curl_frequency * time + h.curl_phase[f]));
        const Vector3d along = g.direction.cwiseProduct(mirror);
        const Vector3d palm = (-Vector3d::UnitZ() + along.z() * along).normalized();
        Vector3d joint = g.base.cwiseProduct(mirror) * h.scale;
        double angle = 0.0;
        const int first = first_joint + 1 + static_cast<int>(f) * 4;
        poses.joint(frame, first) = wrist + rot * joint;
        for (std::size_t b = 0; b < 3; ++b) {
            angle += g.flexion[b] * curl;
            joint += h.scale * g.bones[b] * (std::cos(angle) * along + std::sin(angle) * palm);
            poses.joint(frame, first + 1 + static_cast<int>(b)) = wrist + rot * joint;
        }
    }
}

geometry::RigidTransform camera_pose(const Vector3d& center, double yaw, double pitch) {
    const Vector3d forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), -std::sin(pitch));
    const Vector3d right = forward.cross(Vector3d::UnitZ()).normalized();
    const Vector3d down = forward.cross(right);
    geometry::RigidTransform pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -(pose.rotation * center);
    return pose;
}

}  // namespace

void SynthConfig::validate() const {
    require(n_clips >= 1, "synth: n_clips must be positive");
    require(frames_per_clip >= 30, "synth: frames_per_clip must be at least 30");
    require(egomotion_level >= 0.0 && egomotion_level <= 1.0, "synth: egomotion_level must lie in [0, 1]");
    require(fps > 0.0, "synth: fps must be positive");
    double total = 0.0;
    for (double w : task_mix) {
        require(std::isfinite(w) && w >= 0.0, "synth: task mix weights must be finite and non-negative");
        total += w;
    }
    require(total > 0.0, "synth: task mix weights must not all be zero");
}

std::vector<float> render_frame(const PoseSequence& world_poses, int frame, const geometry::RigidTransform& extrinsic,
                                const geometry::CameraIntrinsics& intrinsics) {
    constexpr double sigma = 3.0;
    constexpr int radius = 9;
    std::vector<float> image(kFrameValues, 0.0f);
    for (int j = 0; j < kJoints; ++j) {
        if (!world_poses.is_valid(frame, j)) continue;
        const Vector3d p = extrinsic.apply(world_poses.joint(frame, j));
        if (p.z() <= 1e-6) continue;
        const double u = intrinsics.fx * p.x() / p.z() + intrinsics.cx;
        const double v = intrinsics.fy * p.y() / p.z() + intrinsics.cy;
        const int local = j % kJointsPerHand;
        const std::array<double, 3> color{j < kJointsPerHand ? 1.0 : 0.0, j < kJointsPerHand ? 0.0 : 1.0,
                                          local > 0 && local % 4 == 0 ? 1.0 : 0.0};
        const int cu = static_cast<int>(std::lround(u)), cv = static_cast<int>(std::lround(v));
        for (int y = std::max(0, cv - radius); y <= std::min(kFrameSize - 1, cv + radius); ++y) {
            for (int x = std::max(0, cu - radius); x <= std::min(kFrameSize - 1, cu + radius); ++x) {
                const double w = std::exp(-((x - u) * (x - u) + (y - v) * (y - v)) / (2.0 * sigma * sigma));
                float* px = image.data() + (static_cast<std::size_t>(y) * kFrameSize + x) * 3;
                for (std::size_t c = 0; c < 3; ++c)
                    px[c] = static_cast<float>(std::min(1.0, px[c] + color[c] * w));
            }
        }
    }
    return image;
}

SyntheticClip synthesize_clip(const SynthConfig& config, int index) {
    config.validate();
    nn::Prng rng(nn::derive_seed(config.seed, static_cast<std::uint64_t>(index)));

    double total = 0.0;
    for (double w : config.task_mix) total += w;
    double pick = rng.uniform() * total;
    int family = 0;
    for (; family < 4; ++family) {
        pick -= config.task_mix[static_cast<std::size_t>(family)];
        if (pick < 0.0) break;
    }
    while (config.task_mix[static_cast<std::size_t>(family)] == 0.0) family = (family + 4) % 5;
    const int modifier = static_cast<int>(rng.below(kTaskModifiers.size()));

    const auto fam = static_cast<Family>(family);
    const auto mod = static_cast<Modifier>(modifier);
    HandMotion left = draw_hand(rng, fam, mod, true);
    HandMotion right = draw_hand(rng, fam, mod, false);
    const double t0 = rng.uniform(0.0, 10.0);

    const int frames = config.frames_per_clip;
    // Grip events at Poisson onsets.
    constexpr double grip_rate = 0.5, grip_span = kGripCue + 2.0 * kGripRamp + kGripHold;
    for (HandMotion* h : {&left, &right}) {
        h->grip_delta = grip_delta(mod);
        auto gap = [&] { return grip_span - std::log(1.0 - rng.uniform()) / grip_rate; };
        for (double t = t0 - gap(); t < t0 + frames / config.fps;) {
            t += gap();
            h->grip_onsets.push_back(t);
        }
    }
    SyntheticClip clip;
    clip.family = family;
    clip.modifier = modifier;
    clip.world_poses = PoseSequence(frames);
    for (int t = 0; t < frames; ++t) {
        const double time = t0 + t / config.fps;
        place_hand(left, time, clip.world_poses, t, kLeftWrist);
        place_hand(right, time, clip.world_poses, t, kRightWrist);
    }

    // Occlusion: two-state Markov chain per joint group (wrist, five fingers per hand),
    // stationary invalid fraction p_enter / (p_enter + p_exit) = 0.1.
    constexpr double p_exit = 0.2, p_enter = p_exit / 9.0;
    for (int hand = 0; hand < 2; ++hand) {
        for (int group = 0; group < 6; ++group) {
            bool occluded = rng.uniform() < 0.1;
            for (int t = 0; t < frames; ++t) {
                if (t > 0) occluded = occluded ? rng.uniform() >= p_exit : rng.uniform() < p_enter;
                const int first = hand * kJointsPerHand + (group == 0 ? 0 : 1 + (group - 1) * 4);
                const int count = group == 0 ? 1 : 4;
                for (int j = first; j < first + count; ++j) clip.world_poses.set_valid(t, j, !occluded);
            }
        }
    }

    // Head camera: smooth damped random walk around a desk-facing home pose.
    const Vector3d home(0.0, 0.0, 1.55);
    const double home_pitch = 0.88;
    const double level = config.egomotion_level;
    Vector3d offset = Vector3d::Zero(), velocity = Vector3d::Zero();
    double yaw = 0.0, yaw_rate = 0.0, pitch = 0.0, pitch_rate = 0.0;
    for (int t = 0; t < frames; ++t) {
        if (t > 0) {
            for (int a = 0; a < 3; ++a) velocity(a) = 0.8 * velocity(a) + level * 0.01 * rng.gaussian();
            offset = 0.98 * offset + velocity;
            yaw_rate = 0.8 * yaw_rate + level * 0.03 * rng.gaussian();
            yaw = 0.98 * yaw + yaw_rate;
            pitch_rate = 0.8 * pitch_rate + level * 0.02 * rng.gaussian();
            pitch = 0.98 * pitch + pitch_rate;
        }
        clip.extrinsics.push_back(camera_pose(home + offset, yaw, home_pitch + pitch));
    }

    ClipRecord& r = clip.record;
    r.clip_id = "clip_" + std::string(4 - std::min<std::size_t>(4, std::to_string(index).size()), '0') + std::to_string(index);
    r.fps = config.fps;
    r.text = std::string(kTaskFamilies[static_cast<std::size_t>(family)]) + " " + kTaskModifiers[static_cast<std::size_t>(modifier)];
    r.num_frames = frames;
    r.poses_world.resize(static_cast<std::size_t>(frames) * kCoords);
    for (std::size_t i = 0; i < r.poses_world.size(); ++i)
        r.poses_world[i] = clip.world_poses.valid[i / 3] ? static_cast<float>(clip.world_poses.xyz[i]) : 0.0f;
    r.mask = clip.world_poses.valid;
    for (const auto& e : clip.extrinsics)
        for (double v : e.to_matrix34()) r.extrinsics.push_back(static_cast<float>(v));
    const geometry::CameraIntrinsics intr;
    r.intrinsics = std::array<float, 4>{static_cast<float>(intr.fx), static_cast<float>(intr.fy),
                                        static_cast<float>(intr.cx), static_cast<float>(intr.cy)};

    VisionTokens tokens{context::kGridTokensPerFrame, context::kGridFeatures, {}};
    tokens.values.reserve(static_cast<std::size_t>(frames) * context::kGridTokensPerFrame * context::kGridFeatures);
    if (config.store_frames) r.frames.emplace();
    for (int t = 0; t < frames; ++t) {
        const auto image = render_frame(clip.world_poses, t, clip.extrinsics[static_cast<std::size_t>(t)], intr);
        const nn::Tensor grid = context::grid_frame_tokens(image);
        for (double v : grid.values()) tokens.values.push_back(static_cast<float>(v));
        if (r.frames) r.frames->insert(r.frames->end(), image.begin(), image.end());
    }
    r.vision_tokens = std::move(tokens);
    return clip;
}

SynthSummary synth_generate(const SynthConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    SynthSummary summary;
    summary.splits["train"];
    summary.splits["val"];
    summary.splits["test"];
    for (int i = 0; i < config.n_clips; ++i) {
        const SyntheticClip clip = synthesize_clip(config, i);
        write_clip_bundle(clip.record, out_dir / "clips" / clip.record.clip_id);
        summary.splits[to_string(split_of(clip.record.clip_id))].push_back(clip.record.clip_id);
        ++summary.clips;
    }
    nlohmann::json j(summary.splits);
    std::ofstream out(out_dir / "splits.json", std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + (out_dir / "splits.json").string());
    out << j.dump(2) << "\n";
    return summary;
}

}  // namespace egghand::dataio
