#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "egghand/baselines.hpp"
#include "egghand/error.hpp"
#include "egghand/forecaster.hpp"
#include "egghand/geometry.hpp"
#include "egghand/metrics.hpp"
#include "egghand/objectives.hpp"
#include "egghand/selfcheck.hpp"
#include "egghand/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace egghand;
namespace fs = std::filesystem;
using testing::random_pose;
using testing::random_rigid;
using testing::read_bytes;
using testing::TempDir;
using testing::transformed;
using testing::write_bytes;

namespace {

constexpr double kPerOpGradTol = 1e-4;
constexpr double kEndToEndGradTol = 1e-3;
constexpr double kGradSuiteSeconds = 30.0;
constexpr double kInvarianceTol = 1e-12;
constexpr double kScalingTol = 1e-9;
constexpr double kMetricTol = 1e-9;
constexpr double kCanonicalTol = 1e-9;
constexpr double kStaticMeanTol = 1e-12;
constexpr double kCvmTol = 1e-12;
constexpr double kMpjpeMargin = 0.20;
constexpr double kAdeMargin = 0.10;
constexpr double kBenchmarkSeconds = 300.0;
constexpr int kTrials = 100;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c, d);
    return buf;
}

template <class F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Numerical;
}

std::string report_bytes(const metrics::Report& r) { return metrics::to_json(r).dump(2) + "\n"; }

dataio::SynthConfig small_synth(std::uint64_t seed) {
    dataio::SynthConfig c;
    c.n_clips = 20;
    c.frames_per_clip = 40;
    c.seed = seed;
    return c;
}

forecaster::ModelConfig mini_model() {
    forecaster::ModelConfig c;
    c.d_model = 8;
    c.heads = 2;
    c.encoder_blocks = 1;
    c.decoder_blocks = 1;
    return c;
}

Outcome gradient_suite() {
    const double t0 = cpu_seconds();
    const auto lines = selfcheck::gradient_suite(0);
    const double elapsed = cpu_seconds() - t0;
    Outcome o;
    double worst_op = 0.0, worst_e2e = 0.0;
    for (const auto& l : lines) {
        const bool end_to_end = l.name.find("end") != std::string::npos;
        const double limit = end_to_end ? kEndToEndGradTol : kPerOpGradTol;
        (end_to_end ? worst_e2e : worst_op) = std::max(end_to_end ? worst_e2e : worst_op, l.error);
        if (!l.pass() || !(l.error < limit || (l.tolerance == 0.0 && l.error == 0.0))) {
            o.pass = false;
            o.detail += l.name + " ";
        }
    }
    if (worst_e2e == 0.0 && std::none_of(lines.begin(), lines.end(),
                                         [](const auto& l) { return l.name.find("end") != std::string::npos; }))
        o.pass = false, o.detail += "no end-to-end check ";
    if (elapsed >= kGradSuiteSeconds) o.pass = false;
    o.detail += fmt("%.0f checks, max op err %.2e, end-to-end %.2e, %.1f s", static_cast<double>(lines.size()),
                    worst_op, worst_e2e, elapsed);
    return o;
}

Outcome loss_identities() {
    nn::Prng rng(1001);
    const auto pairs = objectives::intra_hand_pairs();
    bool zero = true;
    double trans = 0.0, rigid = 0.0, scale = 0.0;
    for (int trial = 0; trial < kTrials; ++trial) {
        const PoseSequence gt = random_pose(10, rng, 0.1);
        const PoseSequence pred = random_pose(10, rng);
        const auto self = objectives::loss_total(gt, gt, {}, pairs);
        zero = zero && self.abs.value == 0.0 && self.rel.value == 0.0 && self.pair.value == 0.0;

        geometry::RigidTransform shift;
        shift.translation = Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        trans = std::max(trans, std::abs(objectives::loss_rel(transformed(pred, shift), transformed(gt, shift)).value -
                                         objectives::loss_rel(pred, gt).value));
        const auto x = random_rigid(rng);
        rigid = std::max(rigid, std::abs(objectives::loss_pair(transformed(pred, x), transformed(gt, x), pairs).value -
                                         objectives::loss_pair(pred, gt, pairs).value));

        const double s = rng.uniform(0.2, 5.0);
        PoseSequence ps = pred, gs = gt;
        for (double& v : ps.xyz) v *= s;
        for (double& v : gs.xyz) v *= s;
        const auto base = objectives::loss_total(pred, gt, {}, pairs);
        const auto big = objectives::loss_total(ps, gs, {}, pairs);
        scale = std::max({scale, std::abs(big.abs.value - s * base.abs.value),
                          std::abs(big.rel.value - s * base.rel.value),
                          std::abs(big.pair.value - s * s * base.pair.value)});
    }
    return {zero && trans < kInvarianceTol && rigid < kInvarianceTol && scale < kScalingTol,
            fmt("zero-at-gt %.0f, translation %.1e, rigid %.1e, scaling %.1e", zero, trans, rigid, scale)};
}

Outcome metric_oracles() {
    nn::Prng rng(1002);
    double worst = 0.0;
    bool presence = true;
    auto compare = [&](const std::optional<double>& got, double want) {
        if (std::isnan(want)) {
            presence = presence && !got;
        } else if (!got) {
            presence = false;
        } else {
            worst = std::max(worst, std::abs(*got - want));
        }
    };
    for (int trial = 0; trial < kTrials; ++trial) {
        const int frames = 1 + static_cast<int>(rng.below(10));
        const PoseSequence gt = random_pose(frames, rng, rng.uniform(0.0, 0.5));
        const PoseSequence pred = random_pose(frames, rng);
        const auto o = testing::naive_metrics(pred, gt);
        const auto traj = metrics::trajectory_errors(pred, gt);
        const auto pose = metrics::pose_errors(pred, gt);
        compare(traj.ade, o.ade);
        compare(traj.fde, o.fde);
        compare(pose.mpjpe, o.mpjpe);
        compare(pose.mpjpe_f, o.mpjpe_f);
    }
    bool single = true;
    for (int trial = 0; trial < kTrials; ++trial) {
        const PoseSequence gt = random_pose(1, rng, 0.2), pred = random_pose(1, rng);
        const auto traj = metrics::trajectory_errors(pred, gt);
        single = single && traj.ade == traj.fde;
    }
    return {presence && single && worst < kMetricTol,
            fmt("max diff %.1e, ADE = FDE at T = 1: %.0f", worst, single)};
}

// Fills invalid slots with fresh values.
PoseSequence perturb_invalid(PoseSequence p, nn::Prng& rng) {
    for (int t = 0; t < p.frames; ++t)
        for (int j = 0; j < kJoints; ++j)
            if (!p.is_valid(t, j))
                for (int a = 0; a < 3; ++a) p.xyz[PoseSequence::offset(t, j) + a] = rng.uniform(-5.0, 5.0);
    return p;
}

bool same_bits(const objectives::LossBreakdown& a, const objectives::LossBreakdown& b) {
    return a.total == b.total && a.abs.value == b.abs.value && a.rel.value == b.rel.value &&
           a.pair.value == b.pair.value;
}

bool same_bits(const metrics::SampleMetrics& a, const metrics::SampleMetrics& b) {
    return a.ade_sum == b.ade_sum && a.fde_sum == b.fde_sum && a.mpjpe_sum == b.mpjpe_sum &&
           a.mpjpe_f_sum == b.mpjpe_f_sum && a.ade_count == b.ade_count && a.mpjpe_count == b.mpjpe_count;
}

Outcome masking(const dataio::LoadedSplit& data) {
    nn::Prng rng(1004);
    const auto pairs = objectives::intra_hand_pairs();
    int violations = 0;
    for (int trial = 0; trial < kTrials; ++trial) {
        const PoseSequence gt = random_pose(10, rng, 0.3);
        const PoseSequence pred = random_pose(10, rng);
        const PoseSequence gt2 = perturb_invalid(gt, rng);
        if (!same_bits(objectives::loss_total(pred, gt, {}, pairs), objectives::loss_total(pred, gt2, {}, pairs)))
            ++violations;
        if (objectives::loss_gradient(pred, gt, {}, pairs) != objectives::loss_gradient(pred, gt2, {}, pairs))
            ++violations;
        if (!same_bits(metrics::sample_metrics("x", pred, gt), metrics::sample_metrics("x", pred, gt2))) ++violations;
    }

    const auto model = forecaster::build(mini_model(), dataio::fit_minmax(data.samples));
    long masked_inputs = 0;
    for (std::size_t i = 0; i < data.samples.size() && i < 12; ++i) {
        const auto& s = data.samples[i];
        const auto ctx = context::build_raw_context(data.records.at(s.clip_id), s);
        dataio::Sample moved = s;
        moved.obs = perturb_invalid(s.obs, rng);
        masked_inputs += std::count(s.obs.valid.begin(), s.obs.valid.end(), 0);
        if (forecaster::forward(model, s, ctx) != forecaster::forward(model, moved, ctx)) ++violations;
        const auto ga = trainer::sample_gradient(model, s, ctx, {}, pairs);
        const auto gb = trainer::sample_gradient(model, moved, ctx, {}, pairs);
        if (!same_bits(ga.loss, gb.loss) || ga.grads != gb.grads) ++violations;
    }
    return {violations == 0 && masked_inputs > 0,
            fmt("%.0f bitwise violations; %.0f masked model inputs perturbed", violations,
                static_cast<double>(masked_inputs))};
}

Outcome canonicalization() {
    nn::Prng rng(1005);
    double full = 0.0, yaw_move = 0.0, up = 0.0;
    auto max_diff = [](const PoseSequence& a, const PoseSequence& b) {
        double m = 0.0;
        for (std::size_t i = 0; i < a.xyz.size(); ++i) m = std::max(m, std::abs(a.xyz[i] - b.xyz[i]));
        return m;
    };
    for (int trial = 0; trial < kTrials; ++trial) {
        const PoseSequence poses = random_pose(8, rng, 0.1);
        std::vector<geometry::RigidTransform> cams;
        for (int t = 0; t < 8; ++t) cams.push_back(random_rigid(rng, 2.0));

        auto moved_scene = [&](const geometry::RigidTransform& g) {
            std::vector<geometry::RigidTransform> moved;
            for (const auto& c : cams) moved.push_back(c.compose(g.inverse()));
            return std::make_pair(transformed(poses, g), moved);
        };

        geometry::CanonicalOptions fc;
        fc.mode = geometry::CanonicalMode::FullCamera;
        const auto [gp, gc] = moved_scene(random_rigid(rng, 3.0));
        full = std::max(full, max_diff(geometry::canonicalize_clip(poses, cams, fc).poses,
                                       geometry::canonicalize_clip(gp, gc, fc).poses));

        geometry::RigidTransform yaw;
        yaw.rotation = geometry::axis_angle(Eigen::Vector3d::UnitZ(), rng.uniform(-3.0, 3.0));
        yaw.translation = Eigen::Vector3d(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const auto [yp, yc] = moved_scene(yaw);
        const auto canon = geometry::canonicalize_clip(poses, cams);
        yaw_move = std::max(yaw_move, max_diff(canon.poses, geometry::canonicalize_clip(yp, yc).poses));

        for (int t = 0; t < poses.frames; ++t)
            for (int j = 0; j < kJoints; ++j) {
                const int w = wrist_of(j);
                const double world = poses.joint(t, j).z() - poses.joint(t, w).z();
                const double local = canon.poses.joint(t, j).z() - canon.poses.joint(t, w).z();
                up = std::max(up, std::abs(world - local));
            }
    }
    return {full < kCanonicalTol && yaw_move < kCanonicalTol && up < kCanonicalTol,
            fmt("full_camera %.1e, yaw_only under yaw moves %.1e, up component %.1e", full, yaw_move, up)};
}

Outcome baseline_forms(const dataio::LoadedSplit& data) {
    nn::Prng rng(1006);
    double cvm = 0.0;
    for (int trial = 0; trial < kTrials; ++trial) {
        const PoseSequence obs = random_pose(20, rng, rng.uniform(0.0, 0.6));
        const PoseSequence pred = baselines::cvm_predict(obs, 10);
        for (int j = 0; j < kJoints; ++j) {
            std::vector<int> seen;
            for (int t = 19; t >= 0 && seen.size() < 2; --t)
                if (obs.is_valid(t, j)) seen.push_back(t);
            for (int k = 1; k <= 10; ++k) {
                if (seen.empty()) {
                    if (pred.is_valid(k - 1, j)) cvm = INFINITY;
                    continue;
                }
                for (int a = 0; a < 3; ++a) {
                    const double pa = obs.joint(seen[0], j)[a];
                    const double v = seen.size() < 2 ? 0.0 : (pa - obs.joint(seen[1], j)[a]) / (seen[0] - seen[1]);
                    const double want = pa + v * (k + 19 - seen[0]);
                    cvm = std::max(cvm, std::abs(pred.joint(k - 1, j)[a] - want));
                }
            }
        }
    }

    const auto model = baselines::static_fit(data.samples);
    const PoseSequence pred = baselines::static_predict(model, 10);
    bool flat = true;
    for (int t = 1; t < pred.frames; ++t)
        for (int i = 0; i < kCoords; ++i) flat = flat && pred.xyz[static_cast<std::size_t>(t * kCoords + i)] == pred.xyz[static_cast<std::size_t>(i)];
    double mean_err = 0.0;
    for (int j = 0; j < kJoints; ++j)
        for (int a = 0; a < 3; ++a) {
            long double sum = 0.0;
            long n = 0;
            for (const auto& s : data.samples)
                for (const PoseSequence* p : {&s.obs, &s.fut})
                    for (int t = 0; t < p->frames; ++t)
                        if (p->is_valid(t, j)) sum += p->joint(t, j)[a], ++n;
            const double want = n ? static_cast<double>(sum / n) : 0.0;
            mean_err = std::max(mean_err, std::abs(model.mean_pose[static_cast<std::size_t>(j * 3 + a)] - want));
        }
    return {cvm <= kCvmTol && flat && mean_err < kStaticMeanTol,
            fmt("cvm max diff %.1e, static flat %.0f, static mean diff %.1e", cvm, flat, mean_err)};
}

struct Benchmark {
    metrics::Report model, cvm, stat;
    std::map<trainer::Ablation, metrics::Report> ablations;
    double seconds = 0.0;
    bool ran = false;
};

Benchmark run_benchmark(const fs::path& root) {
    Benchmark b;
    dataio::SynthConfig sc;
    sc.n_clips = 200;
    sc.seed = 0;
    dataio::synth_generate(sc, root);
    const double t0 = cpu_seconds();
    const auto train = dataio::load_split(root, dataio::Split::Train);
    const auto test = dataio::load_split(root, dataio::Split::Test);
    trainer::TrainConfig tc;
    tc.steps = 2000;
    const auto trained = trainer::train(train, nullptr, forecaster::ModelConfig{}, tc);
    b.model = trainer::evaluate(trainer::Predictor::of(trained.model), test);
    b.cvm = trainer::evaluate(trainer::Predictor::cvm(), test);
    const auto stat = baselines::static_fit(train.samples);
    b.stat = trainer::evaluate(trainer::Predictor::of(stat), test);
    b.seconds = cpu_seconds() - t0;
    for (auto a : {trainer::Ablation::NoisyVision, trainer::Ablation::DummyText, trainer::Ablation::Both}) {
        trainer::EvalOptions eo;
        eo.ablation = a;
        b.ablations[a] = trainer::evaluate(trainer::Predictor::of(trained.model), test, eo);
    }
    b.ran = true;
    return b;
}

Outcome benchmark_ordering(const Benchmark& b) {
    const double m = b.model.mpjpe.value_or(INFINITY), a = b.model.ade.value_or(INFINITY);
    const double best_mpjpe = std::min(b.cvm.mpjpe.value_or(0.0), b.stat.mpjpe.value_or(0.0));
    const double best_ade = std::min(b.cvm.ade.value_or(0.0), b.stat.ade.value_or(0.0));
    const double mpjpe_gain = 1.0 - m / best_mpjpe, ade_gain = 1.0 - a / best_ade;
    return {mpjpe_gain >= kMpjpeMargin && ade_gain >= kAdeMargin && b.seconds <= kBenchmarkSeconds,
            fmt("MPJPE gain %.1f%%, ADE gain %.1f%% over the best baseline, train+eval %.0f s", 100 * mpjpe_gain,
                100 * ade_gain, b.seconds)};
}

Outcome ablation_direction(const Benchmark& b) {
    const double clean = *b.model.mpjpe;
    const double noisy = *b.ablations.at(trainer::Ablation::NoisyVision).mpjpe;
    const double dummy = *b.ablations.at(trainer::Ablation::DummyText).mpjpe;
    const double both = *b.ablations.at(trainer::Ablation::Both).mpjpe;
    return {noisy >= clean && dummy >= clean && both >= noisy && both >= dummy,
            fmt("MPJPE clean %.5f, noisy_vision %.5f, dummy_text %.5f, both %.5f", clean, noisy, dummy, both)};
}

Outcome stratification(const dataio::LoadedSplit& data) {
    nn::Prng rng(1009);
    int mismatches = 0;
    for (int trial = 0; trial < kTrials; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(80));
        std::vector<std::pair<std::string, double>> scores;
        for (int i = 0; i < n; ++i)
            scores.emplace_back("c" + std::to_string(rng.below(100000)) + "_" + std::to_string(i),
                                static_cast<double>(rng.below(6)));
        if (metrics::stratify_top_fraction(scores, 0.1) != testing::brute_force_top(scores, 0.1)) ++mismatches;
    }
    std::vector<std::pair<std::string, double>> scores;
    for (const auto& s : data.samples) scores.emplace_back(s.id(), s.egomotion);
    const auto top = metrics::stratify_top_fraction(scores, 0.1);
    if (top != testing::brute_force_top(scores, 0.1)) ++mismatches;

    trainer::EvalOptions eo;
    eo.strata_fraction = 0.1;
    const auto json = metrics::to_json(trainer::evaluate(trainer::Predictor::cvm(), data, eo));
    const bool has = json.contains("strata") && json["strata"].contains("top") && json["strata"].contains("all") &&
                     json["strata"]["top"]["n_samples"].get<std::size_t>() == top.size();
    return {mismatches == 0 && has,
            fmt("%.0f mismatches over %.0f selections; report strata top/all present: %.0f", mismatches, kTrials + 1,
                has)};
}

bool same_tree(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
    std::size_t other = 0;
    for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
    if (files.size() != other || files.empty()) return false;
    return std::all_of(files.begin(), files.end(), [&](const fs::path& f) {
        return fs::exists(b / f) && read_bytes(a / f) == read_bytes(b / f);
    });
}

Outcome determinism(const TempDir& dir) {
    const fs::path d1 = dir / "run1", d2 = dir / "run2";
    dataio::synth_generate(small_synth(77), d1);
    dataio::synth_generate(small_synth(77), d2);
    const bool data_same = same_tree(d1, d2);

    trainer::TrainConfig tc;
    tc.steps = 20;
    tc.batch_size = 4;
    std::string ckpt[2], report[2], static_report[2];
    for (int run = 0; run < 2; ++run) {
        const fs::path root = run ? d2 : d1;
        const auto train = dataio::load_split(root, dataio::Split::Train);
        const auto test = dataio::load_split(root, dataio::Split::Test);
        auto result = trainer::train(train, nullptr, mini_model(), tc);
        const fs::path path = root / "model.ckpt";
        forecaster::save_checkpoint(result.model, path);
        ckpt[run] = read_bytes(path);
        const auto loaded = forecaster::load_checkpoint(path);
        report[run] = report_bytes(trainer::evaluate(trainer::Predictor::of(loaded), test));
        const auto stat = baselines::static_fit(train.samples);
        static_report[run] = report_bytes(trainer::evaluate(trainer::Predictor::of(stat), test));
    }
    const bool pass = data_same && ckpt[0] == ckpt[1] && report[0] == report[1] && static_report[0] == static_report[1];
    return {pass, fmt("datasets %.0f, checkpoints %.0f, model reports %.0f, static reports %.0f", data_same,
                      ckpt[0] == ckpt[1], report[0] == report[1], static_report[0] == static_report[1])};
}

Outcome format_fidelity(const TempDir& dir) {
    const fs::path root = dir / "formats";
    auto cfg = small_synth(91);
    cfg.n_clips = 3;
    cfg.store_frames = true;
    dataio::synth_generate(cfg, root);
    const fs::path clip = *fs::directory_iterator(root / "clips");
    const auto record = dataio::read_clip_bundle(clip);
    dataio::write_clip_bundle(record, dir / "copy");
    const bool bundle = same_tree(clip, dir / "copy") && dataio::read_clip_bundle(dir / "copy") == record;

    const auto train = dataio::load_split(root, dataio::Split::Train);
    const auto all = train.samples.empty() ? dataio::load_split(root, dataio::Split::Test) : train;
    auto model = forecaster::build(mini_model(), dataio::fit_minmax(all.samples));
    const fs::path ck = dir / "m.ckpt";
    forecaster::save_checkpoint(model, ck);
    auto back = forecaster::load_checkpoint(ck);
    forecaster::save_checkpoint(back, dir / "m2.ckpt");
    const bool checkpoint = read_bytes(ck) == read_bytes(dir / "m2.ckpt") && back.params == model.params &&
                            back.stats == model.stats && back.config == model.config;

    int wrong = 0;
    auto expect = [&](ErrorKind want, const std::function<void()>& f) { wrong += kind_of(f) != want; };
    auto corrupt = [&](const std::string& file, const std::function<void(std::string&)>& edit, ErrorKind want) {
        const fs::path c = dir / ("bad-" + file);
        fs::remove_all(c);
        fs::copy(clip, c);
        std::string bytes = read_bytes(c / file);
        edit(bytes);
        write_bytes(c / file, bytes);
        expect(want, [&] { dataio::read_clip_bundle(c); });
    };
    corrupt("poses_world.f32", [](std::string& b) { b.resize(b.size() - 4); }, ErrorKind::DimensionMismatch);
    corrupt("mask.u8", [](std::string& b) { b += '\1'; }, ErrorKind::DimensionMismatch);
    corrupt("meta.json", [](std::string& b) { b = "not json"; }, ErrorKind::BadMagic);
    corrupt("meta.json", [](std::string& b) {
        const auto at = b.find("\"format_version\": 1");
        b.replace(at, 19, "\"format_version\": 2");
    }, ErrorKind::BadVersion);
    {
        const fs::path c = dir / "bad-missing";
        fs::copy(clip, c);
        fs::remove(c / "extrinsics.f32");
        expect(ErrorKind::MissingFile, [&] { dataio::read_clip_bundle(c); });
    }
    const std::string good = read_bytes(ck);
    const fs::path bad = dir / "bad.ckpt";
    write_bytes(bad, good.substr(0, good.size() / 2));
    expect(ErrorKind::Truncated, [&] { forecaster::load_checkpoint(bad); });
    write_bytes(bad, "XGGH" + good.substr(4));
    expect(ErrorKind::BadMagic, [&] { forecaster::load_checkpoint(bad); });
    write_bytes(bad, good + "x");
    expect(ErrorKind::Integrity, [&] { forecaster::load_checkpoint(bad); });
    std::string version = good;
    version[4] = 2;
    write_bytes(bad, version);
    expect(ErrorKind::BadVersion, [&] { forecaster::load_checkpoint(bad); });
    return {bundle && checkpoint && wrong == 0,
            fmt("bundle lossless %.0f, checkpoint lossless %.0f, %.0f corruptions misclassified", bundle, checkpoint,
                wrong)};
}

Outcome schedule() {
    bool ok = true;
    int checked = 0;
    for (int steps : {1, 7, 20, 37, 100, 999, 2000, 5000}) {
        trainer::TrainConfig c;
        c.steps = steps;
        const int warm = trainer::warmup_steps(c);
        ok = ok && warm == static_cast<int>(std::lround(0.05 * steps));
        if (warm < steps) ok = ok && trainer::lr_at(warm, c) == c.lr;
        for (int s = warm + 1; s < steps; ++s) ok = ok && trainer::lr_at(s, c) <= trainer::lr_at(s - 1, c);
        ++checked;
    }
    return {ok, fmt("%.0f step counts checked", checked)};
}

}  // namespace

int main() {
    nn::tune_allocator();
    int failures = 0;
    auto run = [&](int id, const char* name, const std::function<Outcome()>& f) {
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("criterion %2d %-28s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    };

    TempDir dir("acceptance");
    dataio::synth_generate(small_synth(5), dir / "small");
    const auto small = dataio::load_split(dir / "small", dataio::Split::Train);
    Benchmark bench;

    run(1, "gradient suite", gradient_suite);
    run(2, "loss identities", loss_identities);
    run(3, "metric oracles", metric_oracles);
    run(4, "masking soundness", [&] { return masking(small); });
    run(5, "canonicalization", canonicalization);
    run(6, "baseline closed forms", [&] { return baseline_forms(small); });
    run(7, "benchmark ordering", [&] {
        bench = run_benchmark(dir / "bench");
        return benchmark_ordering(bench);
    });
    run(8, "ablation direction", [&] {
        if (!bench.ran) return Outcome{false, "benchmark did not run"};
        return ablation_direction(bench);
    });
    run(9, "stratification", [&] { return stratification(small); });
    run(10, "determinism", [&] { return determinism(dir); });
    run(11, "format fidelity", [&] { return format_fidelity(dir); });
    run(12, "schedule contract", schedule);
    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
