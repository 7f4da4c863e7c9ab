#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>

#include "egghand/baselines.hpp"
#include "egghand/error.hpp"
#include "egghand/forecaster.hpp"
#include "egghand/geometry.hpp"
#include "egghand/metrics.hpp"
#include "egghand/objectives.hpp"
#include "egghand/selfcheck.hpp"
#include "egghand/trainer.hpp"
#include "egghand/version.hpp"

namespace py = pybind11;
using namespace egghand;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Mask = py::array_t<bool, py::array::c_style | py::array::forcecast>;

PoseSequence to_pose(const Array& xyz, const std::optional<Mask>& valid) {
    if (xyz.ndim() != 3 || xyz.shape(1) != kJoints || xyz.shape(2) != 3)
        fail(ErrorKind::DimensionMismatch, "poses must have shape (T, 42, 3)");
    const auto frames = static_cast<int>(xyz.shape(0));
    PoseSequence p(frames);
    std::copy_n(xyz.data(), p.xyz.size(), p.xyz.data());
    if (valid) {
        if (valid->ndim() != 2 || valid->shape(0) != frames || valid->shape(1) != kJoints)
            fail(ErrorKind::DimensionMismatch, "valid must have shape (T, 42)");
        for (std::size_t i = 0; i < p.valid.size(); ++i) p.valid[i] = valid->data()[i] ? 1 : 0;
    }
    return p;
}

py::tuple from_pose(const PoseSequence& p) {
    Array xyz({static_cast<py::ssize_t>(p.frames), static_cast<py::ssize_t>(kJoints), py::ssize_t{3}});
    std::copy(p.xyz.begin(), p.xyz.end(), xyz.mutable_data());
    Mask valid({static_cast<py::ssize_t>(p.frames), static_cast<py::ssize_t>(kJoints)});
    for (std::size_t i = 0; i < p.valid.size(); ++i) valid.mutable_data()[i] = p.valid[i] != 0;
    return py::make_tuple(xyz, valid);
}

py::object optional_value(const std::optional<double>& v) { return v ? py::cast(*v) : py::none(); }

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Egocentric 3D hand-pose forecasting core";
    m.attr("__version__") = kVersion;

    static py::exception<Error> error(m, "EgghandError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(std::string(to_string(e.kind())) + ": " + e.what());
            exc.attr("kind") = to_string(e.kind());
            PyErr_SetObject(error.ptr(), exc.ptr());
        }
    });

    m.def("synth",
          [](const std::filesystem::path& out, int clips, int frames, double egomotion, std::uint64_t seed,
             bool store_frames) {
              dataio::SynthConfig c;
              c.n_clips = clips;
              c.frames_per_clip = frames;
              c.egomotion_level = egomotion;
              c.seed = seed;
              c.store_frames = store_frames;
              return dataio::synth_generate(c, out).splits;
          },
          py::arg("out"), py::arg("clips") = 200, py::arg("frames") = 60, py::arg("egomotion") = 0.3,
          py::arg("seed") = 0, py::arg("store_frames") = false,
          "Writes a synthetic dataset and returns its split lists.");

    m.def("load_samples",
          [](const std::filesystem::path& root, const std::string& split) {
              const auto data = dataio::load_split(root, dataio::parse_split(split));
              py::list out;
              for (const auto& s : data.samples) {
                  py::dict d;
                  d["id"] = s.id();
                  d["clip_id"] = s.clip_id;
                  d["start"] = s.start;
                  d["obs"] = from_pose(s.obs);
                  d["fut"] = from_pose(s.fut);
                  d["text"] = s.text;
                  d["egomotion"] = s.egomotion;
                  out.append(d);
              }
              return out;
          },
          py::arg("root"), py::arg("split") = "test", "Canonical windows of one split as (xyz, valid) pairs.");

    m.def("canonicalize",
          [](const Array& poses, const std::optional<Mask>& valid, const Array& extrinsics, const std::string& mode) {
              const PoseSequence p = to_pose(poses, valid);
              if (extrinsics.ndim() != 3 || extrinsics.shape(0) != p.frames || extrinsics.shape(1) != 3 ||
                  extrinsics.shape(2) != 4)
                  fail(ErrorKind::DimensionMismatch, "extrinsics must have shape (T, 3, 4)");
              std::vector<geometry::RigidTransform> cams;
              for (int t = 0; t < p.frames; ++t)
                  cams.push_back(geometry::RigidTransform::from_matrix34(
                      std::span<const double, 12>(extrinsics.data() + 12 * t, 12)));
              geometry::CanonicalOptions o;
              if (mode == "full_camera") o.mode = geometry::CanonicalMode::FullCamera;
              else if (mode != "yaw_only") fail(ErrorKind::Validation, "mode must be yaw_only or full_camera");
              return from_pose(geometry::canonicalize_clip(p, cams, o).poses);
          },
          py::arg("poses"), py::arg("valid"), py::arg("extrinsics"), py::arg("mode") = "yaw_only");

    m.def("metrics",
          [](const Array& pred, const Array& gt, const std::optional<Mask>& valid) {
              const auto s = metrics::sample_metrics("x", to_pose(pred, std::nullopt), to_pose(gt, valid));
              const std::array<metrics::SampleMetrics, 1> one{s};
              const auto r = metrics::aggregate_report(one);
              py::dict d;
              d["ade"] = optional_value(r.ade);
              d["fde"] = optional_value(r.fde);
              d["mpjpe"] = optional_value(r.mpjpe);
              d["mpjpe_f"] = optional_value(r.mpjpe_f);
              return d;
          },
          py::arg("pred"), py::arg("gt"), py::arg("valid") = py::none(), "ADE, FDE, MPJPE and MPJPE-F of one sample.");

    m.def("losses",
          [](const Array& pred, const Array& gt, const std::optional<Mask>& valid) {
              const auto b = objectives::loss_total(to_pose(pred, std::nullopt), to_pose(gt, valid), {},
                                                    objectives::intra_hand_pairs());
              py::dict d;
              d["abs"] = b.abs.value;
              d["rel"] = b.rel.value;
              d["pair"] = b.pair.value;
              d["total"] = b.total;
              return d;
          },
          py::arg("pred"), py::arg("gt"), py::arg("valid") = py::none());

    m.def("cvm_predict",
          [](const Array& obs, const std::optional<Mask>& valid, int horizon) {
              return from_pose(baselines::cvm_predict(to_pose(obs, valid), horizon));
          },
          py::arg("obs"), py::arg("valid") = py::none(), py::arg("horizon") = 10);

    m.def("stratify_top_fraction", &metrics::stratify_top_fraction, py::arg("scores"), py::arg("fraction"));

    m.def("lr_at",
          [](int step, int steps, double lr) {
              trainer::TrainConfig c;
              c.steps = steps;
              c.lr = lr;
              return trainer::lr_at(step, c);
          },
          py::arg("step"), py::arg("steps"), py::arg("lr") = 1e-3);

    m.def("train",
          [](const std::filesystem::path& data, const std::filesystem::path& out, int steps, std::uint64_t seed) {
              trainer::TrainConfig tc;
              tc.steps = steps;
              tc.seed = seed;
              forecaster::ModelConfig mc;
              mc.seed = seed;
              const auto split = dataio::load_split(data, dataio::Split::Train);
              py::gil_scoped_release release;
              auto result = trainer::train(split, nullptr, mc, tc);
              forecaster::save_checkpoint(result.model, out);
              return std::make_pair(result.initial_loss, result.final_loss);
          },
          py::arg("data"), py::arg("out"), py::arg("steps") = 2000, py::arg("seed") = 0,
          "Trains the default forecaster and returns (initial_loss, final_loss).");

    m.def("evaluate",
          [](const std::filesystem::path& data, const std::optional<std::filesystem::path>& model,
             const std::optional<std::string>& baseline, const std::string& split, const std::string& ablation,
             std::optional<double> strata) {
              if (model.has_value() == baseline.has_value())
                  fail(ErrorKind::Validation, "give exactly one of model or baseline");
              trainer::EvalOptions o;
              o.ablation = trainer::parse_ablation(ablation);
              o.strata_fraction = strata;
              const auto s = dataio::load_split(data, dataio::parse_split(split));
              metrics::Report r;
              if (model) {
                  const auto m = forecaster::load_checkpoint(*model);
                  r = trainer::evaluate(trainer::Predictor::of(m), s, o);
              } else if (*baseline == "static") {
                  const auto m = baselines::static_fit(dataio::load_split(data, dataio::Split::Train).samples);
                  r = trainer::evaluate(trainer::Predictor::of(m), s, o);
              } else if (*baseline == "cvm") {
                  r = trainer::evaluate(trainer::Predictor::cvm(), s, o);
              } else {
                  fail(ErrorKind::Validation, "baseline must be static or cvm");
              }
              r.config["split"] = split;
              return json_to_py(metrics::to_json(r));
          },
          py::arg("data"), py::arg("model") = py::none(), py::arg("baseline") = py::none(), py::arg("split") = "test",
          py::arg("ablation") = "none", py::arg("strata") = py::none(), "Report dictionary for a model or baseline.");

    m.def("gradient_suite",
          [](std::uint64_t seed) {
              py::list out;
              for (const auto& l : selfcheck::gradient_suite(seed)) {
                  py::dict d;
                  d["name"] = l.name;
                  d["error"] = l.error;
                  d["tolerance"] = l.tolerance;
                  d["passed"] = l.pass();
                  out.append(d);
              }
              return out;
          },
          py::arg("seed") = 0);
}
