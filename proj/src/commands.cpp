// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "moflow/errors.hpp"
#include "moflow/rng.hpp"

namespace fs = std::filesystem;

namespace moflow {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << text;
  if (!out) throw DatasetError("write failed: " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_config(const RunConfig& config) { write_json(config.run_dir() / "config.json", to_json(config)); }

std::vector<Scene> load_split(const RunConfig& config, const DatasetManifest& manifest, const std::string& split) {
  return read_scenes(split_path(manifest, config.manifest_path(), split), manifest.format());
}

DataDims dims_of(const DatasetManifest& m) { return {m.T_p, m.T_f, m.agent_types}; }

std::uint64_t sampling_seed(const RunConfig& config) { return derive_seed(config.seed, "sampling"); }

EvalOptions eval_options(const RunConfig& config, const DatasetManifest& manifest) {
  EvalOptions o;
  o.horizons = horizon_frames(config.eval.horizons_s, manifest.dt, manifest.T_f);
  o.dt = manifest.dt;
  o.chunk_size = config.eval.chunk_size;
  o.workers = config.workers;
  return o;
}

/// Writes samples.jsonl, report.json, report.txt and timing.json into `dir`.
void write_eval_outputs(const fs::path& dir, const EvalReport& report, const std::vector<SceneSample>& samples) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "samples.jsonl", std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError("cannot write " + (dir / "samples.jsonl").string());
    for (const auto& s : samples) out << sample_to_json_line(s) << '\n';
  }
  write_json(dir / "report.json", to_json(report, false));
  write_text(dir / "report.txt", format_table(report));
  write_json(dir / "timing.json",
             Json{{"mean_wallclock_s", report.mean_wallclock_s}, {"nfe_per_sample", report.nfe_per_sample}});
}

template <class Record>
Json log_json(const Record& r);

template <>
Json log_json(const TrainLogRecord& r) {
  return Json{{"step", r.step},         {"loss", r.loss},     {"regression", r.regression},
              {"ce", r.ce},             {"t_mean", r.t_mean}, {"wallclock_s", r.wallclock_s}};
}

template <>
Json log_json(const DistillLogRecord& r) {
  return Json{{"step", r.step}, {"loss", r.loss}, {"pi_histogram", r.pi_histogram}, {"wallclock_s", r.wallclock_s}};
}

std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void check_architecture(const Network& network, const RunConfig& config, const DatasetManifest& manifest) {
  std::vector<std::string> bad;
  const NetworkConfig& a = network.config();
  const NetworkConfig& b = config.network;
  auto cmp = [&](const char* name, auto x, auto y) {
    if (x != y) bad.push_back(std::string("network.") + name);
  };
  cmp("d_model", a.d_model, b.d_model);
  cmp("d_ff", a.d_ff, b.d_ff);
  cmp("n_heads", a.n_heads, b.n_heads);
  cmp("n_enc_layers", a.n_enc_layers, b.n_enc_layers);
  cmp("n_dec_blocks", a.n_dec_blocks, b.n_dec_blocks);
  cmp("K", a.K, b.K);
  if (network.dims() != dims_of(manifest)) bad.push_back("dataset dimensions (T_p, T_f, agent_types)");
  if (!bad.empty()) {
    std::string msg = "checkpoint architecture disagrees with the config:";
    for (const auto& s : bad) msg += "\n  " + s;
    throw ConfigError(msg);
  }
}

Predictor teacher_predictor(const Network& teacher, const Normalizer& norm, const SamplerConfig& sampler,
                            std::uint64_t seed) {
  Predictor p;
  p.model = "teacher";
  p.K = teacher.config().K;
  p.run = [&teacher, norm, sampler, seed, K = p.K](const std::vector<const Scene*>& chunk, size_t first) {
    std::vector<std::uint64_t> seeds;
    for (size_t i = 0; i < chunk.size(); ++i) seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(first + i)));
    return sample_batch(teacher, chunk, norm, sampler, K, seeds);
  };
  p.forward_calls = [&teacher] { return teacher.forward_calls(); };
  return p;
}

Predictor student_predictor(const Network& student, const Normalizer& norm, std::uint64_t seed) {
  Predictor p;
  p.model = "student";
  p.K = student.config().K;
  p.run = [&student, norm, seed, K = p.K](const std::vector<const Scene*>& chunk, size_t first) {
    std::vector<std::uint64_t> seeds;
    for (size_t i = 0; i < chunk.size(); ++i) seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(first + i)));
    return student_sample_batch(student, chunk, norm, K, seeds);
  };
  p.forward_calls = [&student] { return student.forward_calls(); };
  return p;
}

DatasetManifest cmd_gen_data(const RunConfig& config) {
  const fs::path dir = config.run_dir();
  fs::create_directories(dir / "data");
  write_config(config);
  const DataConfig& d = config.data;
  const auto train = generate_synthetic(d.synthetic, d.n_train, 0);
  const auto val = generate_synthetic(d.synthetic, d.n_val, d.n_train);
  const auto test = generate_synthetic(d.synthetic, d.n_test, d.n_train + d.n_val);
  write_scenes(train, dir / "data" / "train.jsonl");
  write_scenes(val, dir / "data" / "val.jsonl");
  write_scenes(test, dir / "data" / "test.jsonl");

  DatasetManifest m;
  m.name = "synthetic";
  m.T_p = d.synthetic.T_p;
  m.T_f = d.synthetic.T_f;
  m.dt = d.synthetic.dt;
  m.agent_types = d.synthetic.agent_types;
  m.splits = {{"train", "data/train.jsonl"}, {"val", "data/val.jsonl"}, {"test", "data/test.jsonl"}};
  m.normalizer = fit_normalizer(train);
  write_manifest(m, dir / "manifest.json");
  return m;
}

std::vector<TrainLogRecord> cmd_train_teacher(const RunConfig& config) {
  const DatasetManifest manifest = read_manifest(config.manifest_path());
  manifest.normalizer.check();
  const auto scenes = load_split(config, manifest, "train");
  if (scenes.empty()) throw DatasetError("train split is empty");
  std::vector<Example> examples;
  examples.reserve(scenes.size());
  for (const auto& s : scenes) examples.push_back(make_example(s, manifest.normalizer));

  const fs::path dir = config.run_dir();
  fs::create_directories(dir);
  write_config(config);
  Network net(config.network, dims_of(manifest), NetworkKind::teacher, derive_seed(config.seed, "teacher.init"));
  const std::string hash = config_hash(config);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  TrainHooks hooks;
  hooks.on_log = [&](const TrainLogRecord& r) { log << log_json(r).dump() << '\n' << std::flush; };
  hooks.on_checkpoint = [&](long) { save_checkpoint(dir / "teacher.ckpt", net, manifest.normalizer, hash); };
  auto records = train_teacher(net, examples, config.schedule, config.train, hooks);
  save_checkpoint(dir / "teacher.ckpt", net, manifest.normalizer, hash);
  return records;
}

EvalReport cmd_sample(const RunConfig& config, const fs::path& checkpoint, const std::string& split) {
  const DatasetManifest manifest = read_manifest(config.manifest_path());
  Checkpoint ckpt = load_checkpoint(checkpoint.empty() ? config.run_dir() / "teacher.ckpt" : checkpoint);
  if (ckpt.network.kind() != NetworkKind::teacher) throw ConfigError("sample needs a teacher checkpoint");
  check_architecture(ckpt.network, config, manifest);
  const auto scenes = load_split(config, manifest, split);
  std::vector<SceneSample> samples;
  const EvalReport report = evaluate(teacher_predictor(ckpt.network, ckpt.normalizer, config.sampler, sampling_seed(config)),
                                     scenes, eval_options(config, manifest), &samples);
  write_eval_outputs(config.run_dir() / "sample" / split, report, samples);
  return report;
}

DistillSummary cmd_distill(const RunConfig& config) {
  const DatasetManifest manifest = read_manifest(config.manifest_path());
  manifest.normalizer.check();
  const fs::path dir = config.run_dir();
  const fs::path dump = config.distill.teacher_samples.empty() ? dir / "sample" / "train" / "samples.jsonl"
                                                              : fs::path(config.distill.teacher_samples);
  const TeacherSampleStore store = TeacherSampleStore::load(dump);
  std::vector<Scene> scenes;
  for (auto& s : load_split(config, manifest, "train")) {
    if (store.contains(s.scene_id)) scenes.push_back(std::move(s));
  }
  if (scenes.empty()) throw DatasetError("no train scene has a cached teacher sample in " + dump.string());
  const auto examples = make_distill_examples(scenes, store, manifest.normalizer);
  if (store.at(scenes.front().scene_id).K != config.network.K) {
    throw ConfigError("teacher samples have K=" + std::to_string(store.at(scenes.front().scene_id).K) +
                      " but network.K=" + std::to_string(config.network.K));
  }

  fs::create_directories(dir);
  write_config(config);
  Network student(config.network, dims_of(manifest), NetworkKind::student, derive_seed(config.seed, "student.init"));
  const std::uint64_t probe_seed = derive_seed(config.seed, "distill.chamfer");
  DistillSummary summary;
  summary.chamfer_init = mean_chamfer_to_teacher(student, examples, probe_seed);
  const std::string hash = config_hash(config);
  std::ofstream log(dir / "distill_log.jsonl", std::ios::binary | std::ios::trunc);
  DistillHooks hooks;
  hooks.on_log = [&](const DistillLogRecord& r) { log << log_json(r).dump() << '\n' << std::flush; };
  hooks.on_checkpoint = [&](long) { save_checkpoint(dir / "student.ckpt", student, manifest.normalizer, hash); };
  distill(student, examples, config.distill, hooks);
  save_checkpoint(dir / "student.ckpt", student, manifest.normalizer, hash);
  summary.chamfer_final = mean_chamfer_to_teacher(student, examples, probe_seed);
  summary.steps = config.distill.max_steps;
  write_json(dir / "distill_summary.json", Json{{"chamfer_init", summary.chamfer_init},
                                                {"chamfer_final", summary.chamfer_final},
                                                {"steps", summary.steps},
                                                {"n_examples", examples.size()}});
  return summary;
}

EvalReport cmd_evaluate(const RunConfig& config, const fs::path& checkpoint, const std::string& split) {
  const DatasetManifest manifest = read_manifest(config.manifest_path());
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  check_architecture(ckpt.network, config, manifest);
  const auto scenes = load_split(config, manifest, split);
  const Predictor predictor =
      ckpt.network.kind() == NetworkKind::teacher
          ? teacher_predictor(ckpt.network, ckpt.normalizer, config.sampler, sampling_seed(config))
          : student_predictor(ckpt.network, ckpt.normalizer, sampling_seed(config));
  std::vector<SceneSample> samples;
  const EvalReport report = evaluate(predictor, scenes, eval_options(config, manifest), &samples);
  write_eval_outputs(config.run_dir() / "evaluate" / (predictor.model + "-" + split), report, samples);
  return report;
}

std::string render_svg(const Scene& scene, const SceneSample& sample) {
  const Mat gt = future_matrix(scene);
  if (sample.A != scene.num_agents() || sample.T_f != scene.T_f) {
    throw ShapeError("plot: sample for '" + scene.scene_id + "' does not match the scene");
  }
  // Best component by joint ADE over the full horizon.
  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (int k = 0; k < sample.K; ++k) {
    const Mat comp = sample.predictions.middleRows(static_cast<Eigen::Index>(k) * sample.A, sample.A);
    const double err = joint_ade_fde(comp, gt, 1, scene.T_f).jade;
    if (err < best_err) {
      best_err = err;
      best = k;
    }
  }

  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  auto extend = [&](double x, double y) {
    lo_x = std::min(lo_x, x);
    hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y);
    hi_y = std::max(hi_y, y);
  };
  for (const auto& a : scene.agents) {
    for (const auto& p : a.past) extend(p[0], p[1]);
    for (const auto& p : a.future) extend(p[0], p[1]);
  }
  for (Eigen::Index r = 0; r < sample.predictions.rows(); ++r) {
    for (int f = 0; f < sample.T_f; ++f) extend(sample.predictions(r, 2 * f), sample.predictions(r, 2 * f + 1));
  }
  const double size = 600.0, margin = 20.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-6});
  const double scale = (size - 2 * margin) / span;
  auto px = [&](double x) { return svg_number(margin + (x - lo_x) * scale); };
  auto py = [&](double y) { return svg_number(size - margin - (y - lo_y) * scale); };

  auto polyline = [&](const std::vector<Point2>& pts, const std::string& style) {
    std::string s = "  <polyline fill=\"none\" " + style + " points=\"";
    for (size_t i = 0; i < pts.size(); ++i) s += (i ? " " : "") + px(pts[i][0]) + "," + py(pts[i][1]);
    return s + "\"/>\n";
  };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
  svg += "  <title>" + scene.scene_id + "</title>\n  <rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  for (int pass = 0; pass < 2; ++pass) {
    for (int k = 0; k < sample.K; ++k) {
      if ((k == best) != (pass == 1)) continue;  // best component drawn last, on top
      const std::string style = k == best ? "stroke=\"#ff69b4\" stroke-width=\"2.5\" stroke-dasharray=\"4 3\""
                                          : "stroke=\"#7f8fa6\" stroke-width=\"1.2\" stroke-dasharray=\"2 3\"";
      for (int a = 0; a < sample.A; ++a) {
        std::vector<Point2> pts{scene.agents[a].past.back()};
        const Eigen::Index row = static_cast<Eigen::Index>(k) * sample.A + a;
        for (int f = 0; f < sample.T_f; ++f) pts.push_back({sample.predictions(row, 2 * f), sample.predictions(row, 2 * f + 1)});
        svg += polyline(pts, style);
      }
    }
  }
  for (const auto& a : scene.agents) {
    std::vector<Point2> fut{a.past.back()};
    fut.insert(fut.end(), a.future.begin(), a.future.end());
    svg += polyline(fut, "stroke=\"#2e8b57\" stroke-width=\"2\" stroke-dasharray=\"8 4\"");
    svg += polyline(a.past, "stroke=\"#1f3b73\" stroke-width=\"2.5\"");
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<fs::path> cmd_plot(const fs::path& sample_dump, const std::vector<Scene>& scenes,
                               const std::vector<std::string>& scene_ids, const fs::path& out_dir) {
  const TeacherSampleStore store = TeacherSampleStore::load(sample_dump);
  std::map<std::string, const Scene*> by_id;
  for (const auto& s : scenes) by_id[s.scene_id] = &s;
  std::vector<std::string> ids = scene_ids;
  if (ids.empty()) {
    for (const auto& s : scenes) {
      if (store.contains(s.scene_id)) ids.push_back(s.scene_id);
    }
  }
  std::vector<fs::path> written;
  fs::create_directories(out_dir);
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DatasetError("plot: scene '" + id + "' not found in the split");
    const fs::path path = out_dir / (id + ".svg");
    write_text(path, render_svg(*it->second, store.at(id)));
    written.push_back(path);
  }
  return written;
}

}  // namespace moflow
