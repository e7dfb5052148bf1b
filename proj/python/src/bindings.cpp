// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "moflow/checkpoint.hpp"
#include "moflow/commands.hpp"
#include "moflow/config.hpp"
#include "moflow/errors.hpp"
#include "moflow/metrics.hpp"
#include "moflow/student.hpp"

namespace py = pybind11;
using namespace moflow;

namespace {

// K x A x T_f x 2 array from (K*A) x 2T_f rows.
py::array_t<double> to_kat2(const Mat& m, int K, int A) {
  const long T_f = m.cols() / 2;
  py::array_t<double> out({static_cast<long>(K), static_cast<long>(A), T_f, 2L});
  auto r = out.mutable_unchecked<4>();
  for (int k = 0; k < K; ++k) {
    for (int a = 0; a < A; ++a) {
      for (long f = 0; f < T_f; ++f) {
        r(k, a, f, 0) = m(k * A + a, 2 * f);
        r(k, a, f, 1) = m(k * A + a, 2 * f + 1);
      }
    }
  }
  return out;
}

// Accepts K x A x T_f x 2 (or A x T_f x 2 with K = 1) and flattens to rows.
Mat from_kat2(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr, int& K, int& A) {
  if (arr.ndim() == 3) {
    K = 1;
    A = static_cast<int>(arr.shape(0));
  } else if (arr.ndim() == 4) {
    K = static_cast<int>(arr.shape(0));
    A = static_cast<int>(arr.shape(1));
  } else {
    throw ShapeError("expected an array shaped (K, A, T_f, 2) or (A, T_f, 2)");
  }
  const long T_f = arr.shape(arr.ndim() - 2);
  if (arr.shape(arr.ndim() - 1) != 2) throw ShapeError("last axis must hold (x, y)");
  Mat m(static_cast<long>(K) * A, 2 * T_f);
  const double* p = arr.data();
  for (long i = 0; i < m.rows(); ++i) {
    for (long c = 0; c < m.cols(); ++c) m(i, c) = p[i * m.cols() + c];
  }
  return m;
}

py::array_t<double> track(const std::vector<std::vector<Point2>>& tracks) {
  const long A = static_cast<long>(tracks.size());
  const long T = A > 0 ? static_cast<long>(tracks[0].size()) : 0;
  py::array_t<double> out({A, T, 2L});
  auto r = out.mutable_unchecked<3>();
  for (long a = 0; a < A; ++a) {
    for (long f = 0; f < T; ++f) {
      r(a, f, 0) = tracks[a][f][0];
      r(a, f, 1) = tracks[a][f][1];
    }
  }
  return out;
}

py::dict sample_dict(const SceneSample& s) {
  py::dict d;
  d["scene_id"] = s.scene_id;
  d["predictions"] = to_kat2(s.predictions, s.K, s.A);
  d["probs"] = py::array_t<double>(s.probs.size(), s.probs.data());
  return d;
}

}  // namespace

PYBIND11_MODULE(_moflow, m) {
  m.doc() = "MoFlow trajectory forecasting: flow-matching teacher, IMLE one-step student, metrics.";

  auto base = py::register_exception<Error>(m, "MoflowError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DatasetError>(m, "DatasetError", base.ptr());

  py::class_<Scene>(m, "Scene")
      .def_readonly("scene_id", &Scene::scene_id)
      .def_readonly("dt", &Scene::dt)
      .def_property_readonly("num_agents", &Scene::num_agents)
      .def_property_readonly("past",
                             [](const Scene& s) {
                               std::vector<std::vector<Point2>> t;
                               for (const auto& a : s.agents) t.push_back(a.past);
                               return track(t);
                             })
      .def_property_readonly("future",
                             [](const Scene& s) {
                               std::vector<std::vector<Point2>> t;
                               for (const auto& a : s.agents) t.push_back(a.future);
                               return track(t);
                             })
      .def_property_readonly("agent_types",
                             [](const Scene& s) {
                               std::vector<std::string> t;
                               for (const auto& a : s.agents) t.push_back(a.agent_type);
                               return t;
                             })
      .def("to_json", &scene_to_json_line);

  m.def(
      "generate_synthetic",
      [](int n_scenes, int A, int G, double goal_separation, double noise_sigma, bool coupled_modes,
         std::uint64_t seed, int first_index) {
        SyntheticConfig c;
        c.A = A;
        c.G = G;
        c.goal_separation = goal_separation;
        c.noise_sigma = noise_sigma;
        c.coupled_modes = coupled_modes;
        c.seed = seed;
        return generate_synthetic(c, n_scenes, first_index);
      },
      py::arg("n_scenes"), py::arg("A") = 2, py::arg("G") = 2, py::arg("goal_separation") = 10.0,
      py::arg("noise_sigma") = 0.1, py::arg("coupled_modes") = false, py::arg("seed") = 0,
      py::arg("first_index") = 0);
  m.def("read_scenes", [](const std::filesystem::path& p) { return read_scenes(p); }, py::arg("path"));

  m.def(
      "time_map",
      [](int n, int T, double p, bool continuous) {
        SamplerConfig c;
        c.T = T;
        c.p = p;
        c.continuous_time_map = continuous;
        c.validate();
        return time_map(n, c);
      },
      py::arg("n"), py::arg("T") = 100, py::arg("p") = 5.0, py::arg("continuous") = false);
  m.def("mask_threshold", &mask_threshold, py::arg("t"), py::arg("k") = 20.0, py::arg("m") = 0.5);

  m.def(
      "chamfer",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
         py::array_t<double, py::array::c_style | py::array::forcecast> b) {
        int Ka, Aa, Kb, Ab;
        const Mat ma = from_kat2(a, Ka, Aa), mb = from_kat2(b, Kb, Ab);
        if (Ka != Kb || Aa != Ab) throw ShapeError("chamfer: set shapes differ");
        return chamfer(ma, mb, Ka);
      },
      py::arg("a"), py::arg("b"));

  auto metric = [](auto fn) {
    return [fn](py::array_t<double, py::array::c_style | py::array::forcecast> preds,
                py::array_t<double, py::array::c_style | py::array::forcecast> gt, std::optional<int> horizon) {
      int K, A, Kg, Ag;
      const Mat p = from_kat2(preds, K, A);
      const Mat g = from_kat2(gt, Kg, Ag);
      if (Kg != 1 || Ag != A) throw ShapeError("ground truth must be shaped (A, T_f, 2)");
      return fn(p, g, K, horizon.value_or(static_cast<int>(g.cols() / 2)));
    };
  };
  m.def("min_ade", metric([](const Mat& p, const Mat& g, int K, int h) { return min_ade(p, g, K, h); }),
        py::arg("preds"), py::arg("gt"), py::arg("horizon") = py::none());
  m.def("min_fde", metric([](const Mat& p, const Mat& g, int K, int h) { return min_fde(p, g, K, h); }),
        py::arg("preds"), py::arg("gt"), py::arg("horizon") = py::none());
  m.def("joint_ade_fde",
        metric([](const Mat& p, const Mat& g, int K, int h) {
          const JointMetrics j = joint_ade_fde(p, g, K, h);
          return std::make_pair(j.jade, j.jfde);
        }),
        py::arg("preds"), py::arg("gt"), py::arg("horizon") = py::none());

  py::class_<RunConfig>(m, "RunConfig")
      .def_readonly("run_name", &RunConfig::run_name)
      .def_readonly("seed", &RunConfig::seed)
      .def_property_readonly("run_dir", &RunConfig::run_dir)
      .def("to_json", [](const RunConfig& c) { return to_json(c).dump(2); })
      .def("hash", &config_hash);
  m.def(
      "load_config",
      [](std::optional<std::filesystem::path> path, const std::vector<std::string>& overrides) {
        return load_run_config(path.value_or(std::filesystem::path()), overrides);
      },
      py::arg("path") = py::none(), py::arg("overrides") = std::vector<std::string>{});

  py::class_<Checkpoint>(m, "Model")
      .def_property_readonly("kind", [](const Checkpoint& c) { return std::string(to_string(c.network.kind())); })
      .def_property_readonly("K", [](const Checkpoint& c) { return c.network.config().K; })
      .def_property_readonly("forward_calls", [](const Checkpoint& c) { return c.network.forward_calls(); })
      .def_readonly("config_hash", &Checkpoint::config_hash)
      .def(
          "sample",
          [](const Checkpoint& c, const Scene& scene, std::uint64_t seed, int T, double p) {
            py::gil_scoped_release release;
            SceneSample s;
            if (c.network.kind() == NetworkKind::teacher) {
              SamplerConfig cfg;
              cfg.T = T;
              cfg.p = p;
              cfg.validate();
              s = sample_batch(c.network, {&scene}, c.normalizer, cfg, c.network.config().K, {seed}).front();
            } else {
              s = student_sample_batch(c.network, {&scene}, c.normalizer, c.network.config().K, {seed}).front();
            }
            py::gil_scoped_acquire acquire;
            return sample_dict(s);
          },
          py::arg("scene"), py::arg("seed") = 0, py::arg("T") = 100, py::arg("p") = 5.0);
  m.def("load_model", &load_checkpoint, py::arg("path"));

  // Commands return JSON text; the python package decodes it.
  m.def("_gen_data", [](const RunConfig& c) { cmd_gen_data(c); });
  m.def("_train_teacher", [](const RunConfig& c) {
    py::gil_scoped_release release;
    return cmd_train_teacher(c).size();
  });
  m.def("_sample", [](const RunConfig& c, std::optional<std::filesystem::path> ckpt, const std::string& split) {
    py::gil_scoped_release release;
    return to_json(cmd_sample(c, ckpt.value_or(std::filesystem::path()), split)).dump();
  });
  m.def("_distill", [](const RunConfig& c) {
    py::gil_scoped_release release;
    const DistillSummary s = cmd_distill(c);
    return Json{{"chamfer_init", s.chamfer_init}, {"chamfer_final", s.chamfer_final}, {"steps", s.steps}}.dump();
  });
  m.def("_evaluate", [](const RunConfig& c, const std::filesystem::path& ckpt, const std::string& split) {
    py::gil_scoped_release release;
    return to_json(cmd_evaluate(c, ckpt, split)).dump();
  });
  m.def("plot", &cmd_plot, py::arg("sample_dump"), py::arg("scenes"), py::arg("scene_ids"), py::arg("out_dir"));
}
