#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "egghand/dataio.hpp"
#include "egghand/error.hpp"
#include "support.hpp"

using namespace egghand;
using namespace egghand::dataio;
using egghand::testing::TempDir;

namespace {

ClipRecord random_record(int frames, nn::Prng& rng, bool with_frames) {
    ClipRecord r;
    r.clip_id = "clip_rt";
    r.fps = 10.0;
    r.text = "grasp gently";
    r.num_frames = frames;
    for (int i = 0; i < frames * kCoords; ++i) r.poses_world.push_back(static_cast<float>(rng.gaussian()));
    for (int t = 0; t < frames; ++t) {
        const auto x = egghand::testing::random_rigid(rng).to_matrix34();
        for (double v : x) r.extrinsics.push_back(static_cast<float>(v));
    }
    for (int i = 0; i < frames * kJoints; ++i) r.mask.push_back(rng.uniform() < 0.9 ? 1 : 0);
    r.intrinsics = std::array<float, 4>{150.f, 151.f, 112.f, 111.5f};
    VisionTokens vt{3, 2, {}};
    for (int i = 0; i < frames * 6; ++i) vt.values.push_back(static_cast<float>(rng.uniform()));
    r.vision_tokens = vt;
    if (with_frames) {
        std::vector<float> f(static_cast<std::size_t>(frames) * kFrameValues);
        for (auto& v : f) v = static_cast<float>(rng.uniform());
        r.frames = std::move(f);
    }
    return r;
}

ClipRecord straight_clip(int frames) {
    nn::Prng rng(5);
    ClipRecord r = random_record(frames, rng, false);
    for (int t = 0; t < frames; ++t) {
        const auto id = geometry::RigidTransform::identity().to_matrix34();
        std::copy(id.begin(), id.end(), r.extrinsics.begin() + t * 12);
    }
    return r;
}

double bone_length(const PoseSequence& p, int t, int a, int b) { return (p.joint(t, a) - p.joint(t, b)).norm(); }

}  // namespace

TEST_CASE("bundle round trip is bitwise lossless") {
    nn::Prng rng(61);
    TempDir dir("bundle");
    const ClipRecord rec = random_record(30, rng, true);
    write_clip_bundle(rec, dir / "c");
    const ClipRecord back = read_clip_bundle(dir / "c");
    CHECK(back == rec);
    CHECK(std::memcmp(back.poses_world.data(), rec.poses_world.data(), rec.poses_world.size() * 4) == 0);
}

TEST_CASE("bundle without frames reads back with frames absent") {
    nn::Prng rng(62);
    TempDir dir("bundle");
    ClipRecord rec = random_record(30, rng, false);
    rec.intrinsics.reset();
    write_clip_bundle(rec, dir / "c");
    const ClipRecord back = read_clip_bundle(dir / "c");
    CHECK_FALSE(back.frames.has_value());
    CHECK_FALSE(back.intrinsics.has_value());
    CHECK(back == rec);
    CHECK_FALSE(std::filesystem::exists(dir / "c" / "frames.f32"));
}

TEST_CASE("bundle corruption yields distinct error kinds") {
    nn::Prng rng(63);
    TempDir dir("bundle");
    const ClipRecord rec = random_record(30, rng, false);
    write_clip_bundle(rec, dir / "c");
    const auto kind_of = [&](const std::filesystem::path& p) {
        try {
            read_clip_bundle(p);
        } catch (const Error& e) {
            return e.kind();
        }
        FAIL("no error");
        return ErrorKind::Validation;
    };

    CHECK(kind_of(dir / "nowhere") == ErrorKind::MissingFile);

    const auto poses = dir / "c" / "poses_world.f32";
    const std::string bytes = egghand::testing::read_bytes(poses);
    egghand::testing::write_bytes(poses, bytes.substr(0, bytes.size() - 4));
    try {
        read_clip_bundle(dir / "c");
        FAIL("truncated poses accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DimensionMismatch);
        CHECK(std::string(e.what()).find("poses_world.f32") != std::string::npos);
    }
    egghand::testing::write_bytes(poses, bytes);

    const auto meta = dir / "c" / "meta.json";
    const std::string header = egghand::testing::read_bytes(meta);
    egghand::testing::write_bytes(meta, "PNG\x89 not a header");
    CHECK(kind_of(dir / "c") == ErrorKind::BadMagic);
    std::string v2 = header;
    v2.replace(v2.find("\"format_version\": 1"), 19, "\"format_version\": 2");
    egghand::testing::write_bytes(meta, v2);
    CHECK(kind_of(dir / "c") == ErrorKind::BadVersion);
    egghand::testing::write_bytes(meta, header);
    std::filesystem::remove(dir / "c" / "mask.u8");
    CHECK(kind_of(dir / "c") == ErrorKind::MissingFile);
}

TEST_CASE("clip record validation") {
    nn::Prng rng(64);
    ClipRecord rec = random_record(30, rng, false);
    rec.validate();
    ClipRecord short_mask = rec;
    short_mask.mask.pop_back();
    CHECK_THROWS_AS(short_mask.validate(), Error);
    ClipRecord nan_pose = rec;
    nan_pose.poses_world[3] = std::nanf("");
    CHECK_THROWS_AS(nan_pose.validate(), Error);
    CHECK(joint_names()[0] == "left_wrist");
    CHECK(joint_names()[21] == "right_wrist");
}

TEST_CASE("context frame sampling") {
    CHECK(sample_context_frames(20, 4) == std::vector<int>{0, 6, 13, 19});
    CHECK(sample_context_frames(4, 4) == std::vector<int>{0, 1, 2, 3});
    CHECK(sample_context_frames(20, 1) == std::vector<int>{0});
    CHECK(sample_context_frames(3, 2) == std::vector<int>{0, 2});
    CHECK_THROWS_AS(sample_context_frames(3, 4), Error);
    for (int t = 2; t <= 40; ++t)
        for (int k = 2; k <= t; ++k) {
            const auto idx = sample_context_frames(t, k);
            REQUIRE(idx.size() == static_cast<std::size_t>(k));
            CHECK(idx.front() == 0);
            CHECK(idx.back() == t - 1);
            for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] > idx[i - 1]);
        }
}

WindowOptions with_stride(int stride) {
    WindowOptions o;
    o.stride = stride;
    return o;
}

TEST_CASE("window counts follow floor((T - 30) / stride) + 1") {
    CHECK(make_windows(straight_clip(30), with_stride(1)).size() == 1);
    const auto w40 = make_windows(straight_clip(40), with_stride(5));
    REQUIRE(w40.size() == 3);
    CHECK(w40[0].start == 0);
    CHECK(w40[1].start == 5);
    CHECK(w40[2].start == 10);
    CHECK(make_windows(straight_clip(29)).empty());
    for (int t : {30, 31, 37, 44, 60})
        for (int stride : {1, 3, 5, 7})
            CHECK(make_windows(straight_clip(t), with_stride(stride)).size() ==
                  static_cast<std::size_t>((t - 30) / stride + 1));
}

TEST_CASE("windows: canonical anchor, context frames, ids and egomotion") {
    nn::Prng rng(65);
    const ClipRecord rec = random_record(40, rng, false);
    const auto windows = make_windows(rec);
    REQUIRE(windows.size() == 3);
    const auto world = rec.world_poses();
    const auto cams = rec.camera_poses();
    for (const auto& s : windows) {
        CHECK(s.obs.frames == 20);
        CHECK(s.fut.frames == 10);
        CHECK(s.context_frame_indices == std::vector<int>{0, 6, 13, 19});
        CHECK(s.text == rec.text);
        const auto x = geometry::anchor_transform(cams[static_cast<std::size_t>(s.start)], {});
        CHECK((s.obs.joint(3, 7) - x.apply(world.joint(s.start + 3, 7))).norm() < 1e-12);
        CHECK((s.fut.joint(2, 30) - x.apply(world.joint(s.start + 22, 30))).norm() < 1e-12);
        CHECK(s.obs.is_valid(4, 2) == world.is_valid(s.start + 4, 2));
        const std::span<const geometry::RigidTransform> span(cams.data() + s.start, 30);
        CHECK(s.egomotion == doctest::Approx(geometry::egomotion_score(span)).epsilon(1e-12));
    }
    CHECK(windows[1].id() == "clip_rt:000005");
    CHECK(windows[0].id() < windows[1].id());
}

TEST_CASE("normalization: endpoints, round trip and degenerate axes") {
    NormStats stats{{2.0, -1.0, 7.0}, {4.0, 1.0, 7.0}};
    CHECK(normalize_value(2.0, 0, stats) == 0.0);
    CHECK(normalize_value(4.0, 0, stats) == 1.0);
    CHECK(normalize_value(3.0, 0, stats) == 0.5);
    CHECK(normalize_value(7.0, 2, stats) == 0.5);
    CHECK(normalize_value(123.0, 2, stats) == 0.5);
    CHECK(denormalize_value(0.5, 2, stats) == 7.0);
    CHECK(denormalize_value(0.9, 2, stats) == 7.0);

    nn::Prng rng(66);
    const PoseSequence p = egghand::testing::random_pose(5, rng, 0.1);
    NormStats s2{{-0.4, -0.5, -0.3}, {0.5, 0.4, 0.35}};
    const PoseSequence back = denormalize(normalize(p, s2), s2);
    for (std::size_t i = 0; i < p.xyz.size(); ++i) CHECK(std::abs(back.xyz[i] - p.xyz[i]) < 1e-12);
    CHECK(back.valid == p.valid);
}

TEST_CASE("fit_minmax uses valid joints of observed and future frames only") {
    Sample s;
    s.obs = PoseSequence(2);
    s.fut = PoseSequence(1);
    s.obs.joint(0, 0) = Eigen::Vector3d(1.0, 2.0, 3.0);
    s.fut.joint(0, 5) = Eigen::Vector3d(-1.0, 5.0, 0.5);
    s.obs.joint(1, 9) = Eigen::Vector3d(100.0, 100.0, 100.0);
    s.obs.set_valid(1, 9, false);
    const NormStats stats = fit_minmax(std::span<const Sample>(&s, 1));
    CHECK(stats.min == std::array<double, 3>{-1.0, 0.0, 0.0});
    CHECK(stats.max == std::array<double, 3>{1.0, 5.0, 3.0});

    Sample empty;
    empty.obs = PoseSequence(1, false);
    empty.fut = PoseSequence(1, false);
    CHECK_THROWS_AS(fit_minmax(std::span<const Sample>(&empty, 1)), Error);
}

TEST_CASE("split assignment is a pure function of the clip id") {
    CHECK(split_of("clip_0000") == split_of(std::string("clip_") + "0000"));
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 2000; ++i) counts[static_cast<int>(split_of("c" + std::to_string(i)))]++;
    CHECK(std::abs(counts[0] / 2000.0 - 0.8) < 0.04);
    CHECK(std::abs(counts[1] / 2000.0 - 0.1) < 0.03);
    CHECK(std::abs(counts[2] / 2000.0 - 0.1) < 0.03);
    const auto bucket = nn::mix64(nn::fnv1a64("clip_0042")) % 10;
    CHECK(split_of("clip_0042") == (bucket < 8 ? Split::Train : bucket == 8 ? Split::Val : Split::Test));
    CHECK(parse_split("test") == Split::Test);
    CHECK_THROWS_AS(parse_split("holdout"), Error);
}

TEST_CASE("synthetic clips: fixed bone lengths, masks and text") {
    SynthConfig config;
    config.seed = 9;
    double invalid = 0.0, total = 0.0;
    for (int i = 0; i < 20; ++i) {
        const SyntheticClip clip = synthesize_clip(config, i);
        const auto& p = clip.world_poses;
        for (int hand : {0, 21})
            for (int f = 0; f < 5; ++f) {
                const int base = hand + 1 + 4 * f;
                for (int b = 0; b < 4; ++b) {
                    const int a = b == 0 ? hand : base + b - 1;
                    const double l0 = bone_length(p, 0, a, base + b);
                    for (int t = 1; t < p.frames; ++t) CHECK(std::abs(bone_length(p, t, a, base + b) - l0) < 1e-9);
                }
            }
        for (auto m : clip.record.mask) invalid += m == 0 ? 1.0 : 0.0;
        total += static_cast<double>(clip.record.mask.size());
        CHECK(clip.record.text == std::string(kTaskFamilies[static_cast<std::size_t>(clip.family)]) + " " +
                                      kTaskModifiers[static_cast<std::size_t>(clip.modifier)]);
        CHECK(clip.record.vision_tokens.has_value());
    }
    CHECK(std::abs(invalid / total - 0.10) < 0.04);
}

TEST_CASE("synthetic egomotion follows the configured level") {
    auto mean_score = [](double level) {
        SynthConfig config;
        config.egomotion_level = level;
        config.seed = 3;
        double sum = 0.0;
        for (int i = 0; i < 50; ++i) {
            const auto clip = synthesize_clip(config, i);
            sum += geometry::egomotion_score(clip.extrinsics);
        }
        return sum / 50.0;
    };
    CHECK(mean_score(0.0) == 0.0);
    const double lo = mean_score(0.1), mid = mean_score(0.5), hi = mean_score(0.9);
    CHECK(lo < mid);
    CHECK(mid < hi);
}

TEST_CASE("synthetic config validation") {
    SynthConfig c;
    c.frames_per_clip = 29;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.task_mix = {0, 0, 0, 0, 0};
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.task_mix[1] = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.egomotion_level = 1.5;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("synth_generate writes a loadable dataset with a hash split") {
    TempDir dir("synth");
    SynthConfig c;
    c.n_clips = 12;
    c.frames_per_clip = 40;
    const auto summary = synth_generate(c, dir.path());
    CHECK(summary.clips == 12);
    const auto splits = read_splits(dir.path());
    std::set<std::string> all;
    for (const auto& [name, ids] : splits)
        for (const auto& id : ids) {
            CHECK(to_string(split_of(id)) == name);
            all.insert(id);
        }
    CHECK(all.size() == 12);
    const LoadedSplit train = load_split(dir.path(), Split::Train);
    CHECK(train.summary.samples == static_cast<int>(train.samples.size()));
    CHECK(train.samples.size() == train.records.size() * 3);
    for (std::size_t i = 1; i < train.samples.size(); ++i) CHECK(train.samples[i - 1].id() < train.samples[i].id());
}
