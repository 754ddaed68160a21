#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ess/config.hpp"
#include "ess/core.hpp"
#include "ess/eval.hpp"
#include "ess/gradcheck.hpp"
#include "ess/pipeline.hpp"

namespace py = pybind11;
using namespace ess;
using TD = ad::Tensor<double>;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

TD vector_tensor(const Array& a) {
  if (a.ndim() != 1 || a.shape(0) == 0) throw py::value_error("expected a non-empty 1-D array");
  return TD::from_data({std::size_t(a.shape(0))}, std::vector<double>(a.data(), a.data() + a.size()));
}

// An array with zero rows maps to an undefined tensor.
TD matrix_tensor(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  if (a.shape(0) == 0) return TD();
  return TD::from_data({std::size_t(a.shape(0)), std::size_t(a.shape(1))},
                       std::vector<double>(a.data(), a.data() + a.size()));
}

core::DictionaryQueue pose_queue(const std::vector<Pose>& poses) {
  core::DictionaryQueue q(std::max<std::size_t>(poses.size(), 1), 1);
  const float unit = 1.0f;
  for (std::size_t i = 0; i < poses.size(); ++i) q.enqueue(std::span(&unit, 1), poses[i], std::int64_t(i));
  return q;
}

py::dict eval_dict(const app::EvalRecord& r) {
  py::dict d;
  d["model"] = r.model;
  d["dataset"] = r.dataset;
  d["task"] = r.task;
  d["metrics"] = r.metrics;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ess, m) {
  m.doc() = "Spatially-aware contrastive learning toolkit";

  py::register_exception<app::ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<Pose>(m, "Pose")
      .def(py::init<double, double, double, double>(), py::arg("x"), py::arg("y"), py::arg("z"), py::arg("yaw"))
      .def_property_readonly("x", &Pose::x)
      .def_property_readonly("y", &Pose::y)
      .def_property_readonly("z", &Pose::z)
      .def_property_readonly("yaw", &Pose::yaw)
      .def(py::self == py::self)
      .def("__repr__", [](const Pose& p) { return to_string(p); });

  py::class_<SimilarityThreshold>(m, "SimilarityThreshold")
      .def(py::init<ThresholdBound, ThresholdBound>(), py::arg("position"), py::arg("rotation"))
      .def_property_readonly("position", &SimilarityThreshold::position)
      .def_property_readonly("rotation", &SimilarityThreshold::rotation)
      .def("scaled", &SimilarityThreshold::scaled)
      .def("__repr__", [](const SimilarityThreshold& t) { return to_string(t); });

  py::class_<WeightParams>(m, "WeightParams")
      .def(py::init([](double alpha, double beta) {
             WeightParams w{alpha, beta};
             w.validate();
             return w;
           }),
           py::arg("alpha") = 2.0, py::arg("beta") = 1.0 / 60.0)
      .def_readonly("alpha", &WeightParams::alpha)
      .def_readonly("beta", &WeightParams::beta);

  m.def("delta_pos", &delta_pos);
  m.def("delta_rot", &delta_rot);
  m.def("is_positive", py::overload_cast<const Pose&, const Pose&, const SimilarityThreshold&>(&is_positive));
  m.def("pair_weight", py::overload_cast<const Pose&, const Pose&, const WeightParams&>(&pair_weight));

  m.def(
      "find_positives",
      [](const Pose& query, const std::vector<Pose>& poses, const SimilarityThreshold& thr) {
        if (poses.empty()) throw py::value_error("no candidate poses");
        return core::find_positives(query, pose_queue(poses), thr);
      },
      py::arg("query"), py::arg("poses"), py::arg("threshold"));

  m.def(
      "loss_baseline",
      [](const Array& q, const Array& self_key, const Array& keys, double tau) {
        return core::loss_baseline(vector_tensor(q), vector_tensor(self_key), matrix_tensor(keys), tau).item();
      },
      py::arg("q"), py::arg("self_key"), py::arg("keys"), py::arg("tau") = 0.2);
  m.def(
      "loss_mb",
      [](const Array& q, const Array& keys, const std::vector<std::size_t>& positives, double tau) {
        return core::loss_mb(vector_tensor(q), matrix_tensor(keys), positives, tau).item();
      },
      py::arg("q"), py::arg("keys"), py::arg("positives"), py::arg("tau") = 0.2);
  m.def(
      "loss_mw",
      [](const Array& q, const Array& keys, const std::vector<std::size_t>& positives,
         const std::vector<double>& weights, double tau) {
        return core::loss_mw(vector_tensor(q), matrix_tensor(keys), positives, weights, tau).item();
      },
      py::arg("q"), py::arg("keys"), py::arg("positives"), py::arg("weights"), py::arg("tau") = 0.2);

  m.def("rotation_error", &eval::rotation_error, py::arg("predicted"), py::arg("target"));
  m.def(
      "cluster_metrics",
      [](const Array& points, const std::vector<int>& labels, bool pca2) {
        if (points.ndim() != 2) throw py::value_error("points must be 2-D");
        if (std::size_t(points.shape(0)) != labels.size()) throw py::value_error("one label per point");
        const auto r = eval::cluster_metrics(std::span(points.data(), std::size_t(points.size())),
                                             std::size_t(points.shape(1)), labels, pca2);
        py::dict d;
        d["silhouette"] = r.silhouette;
        d["calinski_harabasz"] = r.calinski_harabasz;
        d["davies_bouldin"] = r.davies_bouldin;
        d["samples"] = r.samples;
        d["classes"] = r.classes;
        return d;
      },
      py::arg("points"), py::arg("labels"), py::arg("pca2") = false);

  m.def(
      "generate_plan",
      [](std::uint64_t seed) { return env::plan_to_json(env::generate_floorplan(seed, env::PlanParams{})); },
      py::arg("seed"), "Floor plan with default parameters, as JSON text.");
  m.def(
      "render",
      [](const std::string& plan_json, const Pose& pose, int lighting_id, int width, int height) {
        const auto palette = env::default_lighting_palette();
        if (lighting_id < 0 || std::size_t(lighting_id) >= palette.size()) throw py::value_error("bad lighting id");
        const auto img = env::render(env::plan_from_json(plan_json), pose, palette[std::size_t(lighting_id)], width,
                                     height);
        py::array_t<std::uint8_t> out({height, width, 3});
        std::copy(img.rgb.begin(), img.rgb.end(), out.mutable_data());
        return out;
      },
      py::arg("plan_json"), py::arg("pose"), py::arg("lighting_id") = 0, py::arg("width") = 32,
      py::arg("height") = 32);
  m.def(
      "room_label", [](const std::string& plan_json, const Pose& pose) {
        return env::room_label(env::plan_from_json(plan_json), pose);
      },
      py::arg("plan_json"), py::arg("pose"));

  m.def("gradcheck", [](bool inject_fault) {
    py::list out;
    for (const auto& r : gradcheck::run_suite({.inject_sign_flip = inject_fault})) {
      py::dict d;
      d["name"] = r.name;
      d["worst_rel_err"] = r.worst_rel_err;
      d["tolerance"] = r.tolerance;
      d["checked"] = r.checked;
      d["passed"] = r.passed;
      out.append(d);
    }
    return out;
  }, py::arg("inject_fault") = false);

  m.def(
      "resolve_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return app::config_from_text(text, overrides).resolved_json;
      },
      py::arg("text") = "{}", py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "generate",
      [](const std::vector<std::string>& overrides) {
        const auto g = app::run_generate(app::config_from_text("{}", overrides));
        return py::make_tuple(g.dataset_dir, g.frames);
      },
      py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "train",
      [](const std::vector<std::string>& overrides, const std::filesystem::path& run_dir, std::uint64_t seed) {
        const auto r = app::run_train(app::config_from_text("{}", overrides), run_dir, seed);
        std::vector<std::map<std::string, double>> epochs;
        for (const auto& e : r.epochs) {
          epochs.push_back({{"epoch", e.epoch},
                            {"loss", e.loss},
                            {"pretext_acc", e.pretext_acc},
                            {"mean_positives", e.mean_positives},
                            {"fallbacks", double(e.fallbacks)}});
        }
        return epochs;
      },
      py::arg("overrides"), py::arg("run_dir"), py::arg("seed") = 0);
  m.def(
      "evaluate",
      [](const std::vector<std::string>& overrides, const std::filesystem::path& run_dir) {
        py::list out;
        for (const auto& r : app::run_eval(app::config_from_text("{}", overrides), run_dir)) out.append(eval_dict(r));
        return out;
      },
      py::arg("overrides"), py::arg("run_dir"));
}
