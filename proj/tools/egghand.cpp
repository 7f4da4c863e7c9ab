#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "egghand/baselines.hpp"
#include "egghand/dataio.hpp"
#include "egghand/error.hpp"
#include "egghand/forecaster.hpp"
#include "egghand/geometry.hpp"
#include "egghand/metrics.hpp"
#include "egghand/selfcheck.hpp"
#include "egghand/trainer.hpp"
#include "egghand/version.hpp"

namespace fs = std::filesystem;
using namespace egghand;
using nlohmann::json;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Validation:
        case ErrorKind::Config:
        case ErrorKind::Unavailable: return 1;
        case ErrorKind::Numerical: return 3;
        default: return 2;
    }
}

json read_json_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::MissingFile, "missing file: " + path.string());
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) fail(ErrorKind::Validation, path.string() + " is not valid JSON");
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
    f << text;
    if (!f) fail(ErrorKind::Io, "write failed: " + path.string());
}

void require_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) fail(ErrorKind::MissingFile, "dataset directory not found: " + dir.string());
}

std::optional<double> parse_strata(const std::string& spec) {
    if (spec.empty()) return std::nullopt;
    const std::string prefix = "egomotion:";
    if (!spec.starts_with(prefix)) fail(ErrorKind::Validation, "--strata must look like egomotion:<fraction>");
    double f = 0.0;
    try {
        std::size_t used = 0;
        f = std::stod(spec.substr(prefix.size()), &used);
        if (used != spec.size() - prefix.size()) throw std::invalid_argument(spec);
    } catch (const std::exception&) {
        fail(ErrorKind::Validation, "--strata fraction is not a number: " + spec);
    }
    if (!(f > 0.0 && f <= 1.0)) fail(ErrorKind::Validation, "--strata fraction must be in (0, 1]");
    return f;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out;
    int clips = 200;
    int frames = 60;
    double egomotion = 0.3;
    std::uint64_t seed = 0;
    bool store_frames = false;
};

int run_synth(const SynthArgs& a) {
    dataio::SynthConfig c;
    c.n_clips = a.clips;
    c.frames_per_clip = a.frames;
    c.egomotion_level = a.egomotion;
    c.seed = a.seed;
    c.store_frames = a.store_frames;
    c.validate();
    const auto summary = dataio::synth_generate(c, a.out);
    json out = {{"clips", summary.clips}, {"seed", a.seed}, {"out", a.out}};
    for (const auto& [name, ids] : summary.splits) out["splits"][name] = ids.size();
    std::cout << out.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data, out, config, log;
    int steps = 2000;
    std::uint64_t seed = 0;
    int batch = 0;
};

int run_train(const TrainArgs& a, const CLI::App& cmd) {
    forecaster::ModelConfig mc;
    trainer::TrainConfig tc;
    if (!a.config.empty()) {
        const json j = read_json_file(a.config);
        if (!j.is_object()) fail(ErrorKind::Config, "--config must hold a JSON object");
        for (const auto& [key, value] : j.items())
            if (key != "model" && key != "train") fail(ErrorKind::Config, "unknown config section '" + key + "'");
        if (j.contains("model")) mc = forecaster::config_from_json(j.at("model"));
        if (j.contains("train")) tc = trainer::train_config_from_json(j.at("train"));
    }
    if (a.config.empty() || cmd.count("--steps")) tc.steps = a.steps;
    if (a.config.empty() || cmd.count("--seed")) {
        tc.seed = a.seed;
        mc.seed = a.seed;
    }
    if (a.batch > 0) tc.batch_size = a.batch;
    tc.validate();
    mc.validate();
    require_dir(a.data);

    const auto t0 = std::chrono::steady_clock::now();
    const auto train_split = dataio::load_split(a.data, dataio::Split::Train);
    const auto val_split = dataio::load_split(a.data, dataio::Split::Val);
    const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log.jsonl") : fs::path(a.log);
    std::ostringstream log;
    auto result = trainer::train(train_split, &val_split, mc, tc, [&](const json& rec) { log << rec.dump() << "\n"; });
    forecaster::save_checkpoint(result.model, a.out);
    write_text(log_path, log.str());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << json{{"checkpoint", a.out},
                      {"log", log_path.string()},
                      {"steps", tc.steps},
                      {"seed", tc.seed},
                      {"train_samples", train_split.samples.size()},
                      {"initial_loss", result.initial_loss},
                      {"final_loss", result.final_loss},
                      {"skipped_steps", result.skipped_steps},
                      {"seconds", seconds}}
                     .dump()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string data, model, baseline, split = "test", strata, ablate = "none", report;
    std::uint64_t seed = 0;
    int jobs = 1;
};

int run_eval(const EvalArgs& a) {
    const auto split = dataio::parse_split(a.split);
    trainer::EvalOptions opts;
    opts.strata_fraction = parse_strata(a.strata);
    opts.ablation = trainer::parse_ablation(a.ablate);
    opts.seed = a.seed;
    opts.jobs = a.jobs;
    if (a.model.empty() == a.baseline.empty()) fail(ErrorKind::Validation, "give exactly one of --model or --baseline");
    if (!a.baseline.empty() && a.baseline != "static" && a.baseline != "cvm")
        fail(ErrorKind::Validation, "--baseline must be static or cvm");
    require_dir(a.data);

    const auto data = dataio::load_split(a.data, split);
    metrics::Report report;
    if (!a.model.empty()) {
        const auto model = forecaster::load_checkpoint(a.model);
        report = trainer::evaluate(trainer::Predictor::of(model), data, opts);
    } else if (a.baseline == "static") {
        const auto train_split = dataio::load_split(a.data, dataio::Split::Train);
        const auto model = baselines::static_fit(train_split.samples);
        report = trainer::evaluate(trainer::Predictor::of(model), data, opts);
    } else {
        report = trainer::evaluate(trainer::Predictor::cvm(), data, opts);
    }
    report.config["split"] = a.split;
    const std::string text = metrics::to_json(report).dump(2) + "\n";
    write_text(a.report, text);
    std::cout << text;
    return 0;
}

// ---------------------------------------------------------------- forecast / overlay

struct ForecastArgs {
    std::string data, clip, model, out;
    int window = 0;
};

dataio::Sample window_of(const dataio::ClipRecord& record, int window) {
    const auto windows = dataio::make_windows(record);
    if (window < 0 || window >= static_cast<int>(windows.size()))
        fail(ErrorKind::Validation, "clip " + record.clip_id + " has " + std::to_string(windows.size()) +
                                        " windows; --window " + std::to_string(window) + " is out of range");
    return windows[static_cast<std::size_t>(window)];
}

json poses_json(const PoseSequence& p) {
    json frames = json::array();
    for (int t = 0; t < p.frames; ++t) {
        json joints = json::array();
        for (int j = 0; j < kJoints; ++j) {
            const auto q = p.joint(t, j);
            joints.push_back({q.x(), q.y(), q.z()});
        }
        frames.push_back(std::move(joints));
    }
    return frames;
}

int run_forecast(const ForecastArgs& a) {
    require_dir(a.data);
    const auto record = dataio::read_clip_bundle(fs::path(a.data) / "clips" / a.clip);
    const auto sample = window_of(record, a.window);
    const auto model = forecaster::load_checkpoint(a.model);
    context::ContextOptions co;
    co.text_features = model.config.d_feat_text;
    const PoseSequence pred = forecaster::forward(model, sample, context::build_raw_context(record, sample, co));
    const json out = {{"clip_id", a.clip},
                      {"window", a.window},
                      {"start", sample.start},
                      {"frame", "canonical"},
                      {"pred", poses_json(pred)}};
    write_text(a.out, out.dump() + "\n");
    return 0;
}

struct OverlayArgs {
    std::string data, clip, pred, out;
    int frame = -1;
};

PoseSequence poses_from_json(const json& frames) {
    if (!frames.is_array() || frames.empty()) fail(ErrorKind::Validation, "pred must be a non-empty [T][42][3] array");
    PoseSequence p(static_cast<int>(frames.size()));
    for (std::size_t t = 0; t < frames.size(); ++t) {
        if (!frames[t].is_array() || frames[t].size() != kJoints) fail(ErrorKind::Validation, "pred frames must hold 42 joints");
        for (std::size_t j = 0; j < kJoints; ++j) {
            const auto& q = frames[t][j];
            if (!q.is_array() || q.size() != 3) fail(ErrorKind::Validation, "pred joints must hold 3 coordinates");
            for (std::size_t a = 0; a < 3; ++a)
                p.xyz[PoseSequence::offset(static_cast<int>(t), static_cast<int>(j)) + a] = q[a].get<double>();
        }
    }
    return p;
}

std::vector<std::pair<int, int>> skeleton_edges() {
    std::vector<std::pair<int, int>> edges;
    for (int w : {kLeftWrist, kRightWrist})
        for (int finger = 0; finger < 5; ++finger) {
            const int base = w + 1 + 4 * finger;
            edges.emplace_back(w, base);
            for (int k = 0; k < 3; ++k) edges.emplace_back(base + k, base + k + 1);
        }
    return edges;
}

void draw_skeleton(std::ostringstream& svg, const geometry::Projection& proj, const PoseSequence& p, int t,
                   const char* color, double opacity) {
    char buf[256];
    for (const auto& [i, j] : skeleton_edges()) {
        if (!proj.in_front[static_cast<std::size_t>(i)] || !proj.in_front[static_cast<std::size_t>(j)]) continue;
        if (!p.is_valid(t, i) || !p.is_valid(t, j)) continue;
        const auto& a = proj.pixels[static_cast<std::size_t>(i)];
        const auto& b = proj.pixels[static_cast<std::size_t>(j)];
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-opacity=\"%.2f\" "
                      "stroke-width=\"1.2\"/>\n",
                      a.x(), a.y(), b.x(), b.y(), color, opacity);
        svg << buf;
    }
    for (int j = 0; j < kJoints; ++j) {
        if (!proj.in_front[static_cast<std::size_t>(j)] || !p.is_valid(t, j)) continue;
        const auto& a = proj.pixels[static_cast<std::size_t>(j)];
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.6\" fill=\"%s\" fill-opacity=\"%.2f\"/>\n",
                      a.x(), a.y(), color, opacity);
        svg << buf;
    }
}

int run_overlay(const OverlayArgs& a) {
    require_dir(a.data);
    const auto record = dataio::read_clip_bundle(fs::path(a.data) / "clips" / a.clip);
    const json pj = read_json_file(a.pred);
    if (!pj.contains("pred") || !pj.contains("window")) fail(ErrorKind::Validation, a.pred + ": expected a forecast file");
    if (pj.value("clip_id", a.clip) != a.clip)
        fail(ErrorKind::Validation, a.pred + " holds a forecast for clip " + pj.value("clip_id", std::string()));
    const auto sample = window_of(record, pj.at("window").get<int>());
    const PoseSequence pred = poses_from_json(pj.at("pred"));
    if (pred.frames != sample.fut.frames) fail(ErrorKind::Validation, "prediction length does not match the window");
    if (a.frame >= pred.frames) fail(ErrorKind::Validation, "--frame must index a predicted frame");

    const auto cameras = record.camera_poses();
    const auto intr = record.camera_intrinsics();
    const geometry::RigidTransform world_from_canonical = sample.world_to_canonical.inverse();
    const int obs_frames = sample.obs.frames;
    const int cam_index = a.frame < 0 ? sample.start : sample.start + obs_frames + a.frame;
    const auto cam_from_canonical = cameras[static_cast<std::size_t>(cam_index)].compose(world_from_canonical);
    const std::string label = a.frame < 0 ? "view: anchor frame " + std::to_string(sample.start)
                                          : "view: future frame " + std::to_string(cam_index);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << dataio::kFrameSize << "\" height=\""
        << dataio::kFrameSize << "\" viewBox=\"0 0 " << dataio::kFrameSize << " " << dataio::kFrameSize << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"#1e1e1e\"/>\n";
    const int first = a.frame < 0 ? 0 : a.frame;
    const int last = a.frame < 0 ? pred.frames - 1 : a.frame;
    for (int t = first; t <= last; ++t) {
        const double opacity = 0.35 + 0.65 * (t - first + 1) / static_cast<double>(last - first + 1);
        draw_skeleton(svg, geometry::project_to_image(sample.fut, t, intr, cam_from_canonical), sample.fut, t, "#2ecc40",
                      opacity);
        draw_skeleton(svg, geometry::project_to_image(pred, t, intr, cam_from_canonical), pred, t, "#ff4136", opacity);
    }
    svg << "<text x=\"4\" y=\"12\" font-size=\"9\" fill=\"#dddddd\">" << a.clip << " window " << pj.at("window").get<int>()
        << " | " << label << " | green: ground truth, red: forecast</text>\n";
    svg << "</svg>\n";
    write_text(a.out, svg.str());
    return 0;
}

// ---------------------------------------------------------------- gradcheck

int run_gradcheck(std::uint64_t seed) {
    const auto lines = selfcheck::gradient_suite(seed);
    bool ok = true;
    double worst = 0.0;
    for (const auto& l : lines) {
        std::printf("%-34s max_rel_err=%.3e tol=%.0e entries=%zu skipped=%zu %s\n", l.name.c_str(), l.error, l.tolerance,
                    l.entries, l.skipped, l.pass() ? "ok" : "FAIL");
        ok = ok && l.pass();
        worst = std::max(worst, l.error);
    }
    std::printf("gradcheck seed=%llu max_relative_error=%.3e %s\n", static_cast<unsigned long long>(seed), worst,
                ok ? "PASS" : "FAIL");
    return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Egocentric 3D hand-pose forecasting toolkit"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic clip dataset");
    s->add_option("--out", synth.out, "Output dataset directory")->required();
    s->add_option("--clips", synth.clips, "Number of clips")->check(CLI::PositiveNumber);
    s->add_option("--frames", synth.frames, "Frames per clip")->check(CLI::PositiveNumber);
    s->add_option("--egomotion", synth.egomotion, "Camera motion level (0 = static camera)")->check(CLI::NonNegativeNumber);
    s->add_option("--seed", synth.seed, "Random seed");
    s->add_flag("--store-frames", synth.store_frames, "Also store rendered 224x224 frames");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train the forecaster");
    t->add_option("--data", train.data, "Dataset directory")->required();
    t->add_option("--out", train.out, "Checkpoint path")->required();
    t->add_option("--steps", train.steps, "Optimizer steps")->check(CLI::PositiveNumber);
    t->add_option("--seed", train.seed, "Random seed");
    t->add_option("--config", train.config, "JSON file with optional \"model\" and \"train\" sections");
    t->add_option("--batch", train.batch, "Batch size override")->check(CLI::PositiveNumber);
    t->add_option("--log", train.log, "JSON-lines training log (default <out>.log.jsonl)");

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Evaluate a model or baseline and write a report");
    e->add_option("--data", eval.data, "Dataset directory")->required();
    auto* model_opt = e->add_option("--model", eval.model, "Forecaster checkpoint");
    auto* base_opt = e->add_option("--baseline", eval.baseline, "static | cvm");
    model_opt->excludes(base_opt);
    e->add_option("--split", eval.split, "train | val | test");
    e->add_option("--strata", eval.strata, "egomotion:<fraction>");
    e->add_option("--ablate", eval.ablate, "none | noisy_vision | dummy_text | both");
    e->add_option("--report", eval.report, "Report JSON path")->required();
    e->add_option("--seed", eval.seed, "Seed for ablation substitutions");
    e->add_option("--jobs", eval.jobs, "Worker threads")->check(CLI::PositiveNumber);

    ForecastArgs fc;
    auto* f = app.add_subcommand("forecast", "Predict one window of a clip");
    f->add_option("--data", fc.data, "Dataset directory")->required();
    f->add_option("--clip", fc.clip, "Clip id")->required();
    f->add_option("--window", fc.window, "Window index within the clip (start = index * stride)")->required();
    f->add_option("--model", fc.model, "Forecaster checkpoint")->required();
    f->add_option("--out", fc.out, "Output JSON")->required();

    OverlayArgs ov;
    auto* o = app.add_subcommand("overlay", "Render forecast and ground truth as SVG");
    o->add_option("--data", ov.data, "Dataset directory")->required();
    o->add_option("--clip", ov.clip, "Clip id")->required();
    o->add_option("--pred", ov.pred, "Forecast JSON from the forecast subcommand")->required();
    o->add_option("--out", ov.out, "Output SVG")->required();
    o->add_option("--frame", ov.frame, "Future frame index to render from its own camera");

    std::uint64_t gc_seed = 0;
    auto* g = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
    g->add_option("--seed", gc_seed, "Random seed");

    auto* v = app.add_subcommand("version", "Print the version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        std::cerr << app.help() << "\nerror: " << err.what() << "\n";
        return 1;
    }

    try {
        if (s->parsed()) return run_synth(synth);
        if (t->parsed()) return run_train(train, *t);
        if (e->parsed()) return run_eval(eval);
        if (f->parsed()) return run_forecast(fc);
        if (o->parsed()) return run_overlay(ov);
        if (g->parsed()) return run_gradcheck(gc_seed);
        if (v->parsed()) {
            std::cout << "egghand " << kVersion << "\n";
            return 0;
        }
    } catch (const Error& err) {
        std::cerr << "error [" << to_string(err.kind()) << "]: " << err.what() << "\n";
        return exit_code(err.kind());
    } catch (const std::filesystem::filesystem_error& err) {
        std::cerr << "error [io]: " << err.what() << "\n";
        return 2;
    } catch (const json::exception& err) {
        std::cerr << "error [validation]: " << err.what() << "\n";
        return 1;
    }
    return 1;
}
