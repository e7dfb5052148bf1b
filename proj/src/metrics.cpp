// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include "moflow/errors.hpp"

namespace moflow {

namespace {

void check_shapes(const Mat& preds, const Mat& gt, int K, int horizon) {
  if (K < 1 || preds.rows() != K * gt.rows() || preds.cols() != gt.cols() || gt.cols() % 2 != 0) {
    throw ShapeError("metrics: predictions must be (K*A) x 2T_f and ground truth A x 2T_f");
  }
  if (horizon < 1 || 2 * horizon > gt.cols()) {
    throw ShapeError("metrics: horizon " + std::to_string(horizon) + " outside [1, T_f]");
  }
}

double displacement(const Mat& preds, Eigen::Index row, const Mat& gt, Eigen::Index a, int frame) {
  const double dx = preds(row, 2 * frame) - gt(a, 2 * frame);
  const double dy = preds(row, 2 * frame + 1) - gt(a, 2 * frame + 1);
  return std::sqrt(dx * dx + dy * dy);
}

/// K x A table of per-component, per-agent ADE and FDE.
void error_tables(const Mat& preds, const Mat& gt, int K, int horizon, Mat& ade, Mat& fde) {
  const Eigen::Index A = gt.rows();
  ade.resize(K, A);
  fde.resize(K, A);
  for (int k = 0; k < K; ++k) {
    for (Eigen::Index a = 0; a < A; ++a) {
      const Eigen::Index row = k * A + a;
      double s = 0.0;
      for (int f = 0; f < horizon; ++f) s += displacement(preds, row, gt, a, f);
      ade(k, a) = s / horizon;
      fde(k, a) = displacement(preds, row, gt, a, horizon - 1);
    }
  }
}

}  // namespace

double min_ade(const Mat& preds, const Mat& gt, int K, int horizon) {
  check_shapes(preds, gt, K, horizon);
  Mat ade, fde;
  error_tables(preds, gt, K, horizon, ade, fde);
  return ade.colwise().minCoeff().mean();
}

double min_fde(const Mat& preds, const Mat& gt, int K, int horizon) {
  check_shapes(preds, gt, K, horizon);
  Mat ade, fde;
  error_tables(preds, gt, K, horizon, ade, fde);
  return fde.colwise().minCoeff().mean();
}

JointMetrics joint_ade_fde(const Mat& preds, const Mat& gt, int K, int horizon) {
  check_shapes(preds, gt, K, horizon);
  Mat ade, fde;
  error_tables(preds, gt, K, horizon, ade, fde);
  return {ade.rowwise().mean().minCoeff(), fde.rowwise().mean().minCoeff()};
}

Json to_json(const EvalReport& r, bool include_timing) {
  Json horizons = Json::array();
  for (const auto& h : r.horizons) {
    horizons.push_back(Json{{"frames", h.frames},
                            {"seconds", h.seconds},
                            {"min_ade", h.min_ade},
                            {"min_fde", h.min_fde},
                            {"jade", h.jade},
                            {"jfde", h.jfde}});
  }
  Json j{{"model", r.model},
         {"K", r.K},
         {"n_scenes", r.n_scenes},
         {"nfe_per_sample", r.nfe_per_sample},
         {"horizons", std::move(horizons)}};
  if (include_timing) j["mean_wallclock_s"] = r.mean_wallclock_s;
  return j;
}

EvalReport eval_report_from_json(const Json& j) {
  try {
    EvalReport r;
    r.model = j.at("model").get<std::string>();
    r.K = j.at("K").get<int>();
    r.n_scenes = j.at("n_scenes").get<long>();
    r.nfe_per_sample = j.at("nfe_per_sample").get<double>();
    r.mean_wallclock_s = j.value("mean_wallclock_s", 0.0);
    for (const auto& h : j.at("horizons")) {
      r.horizons.push_back({h.at("frames").get<int>(), h.at("seconds").get<double>(), h.at("min_ade").get<double>(),
                            h.at("min_fde").get<double>(), h.at("jade").get<double>(), h.at("jfde").get<double>()});
    }
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad report: ") + e.what());
  }
}

std::string format_table(const EvalReport& r) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "model=%s K=%d scenes=%ld NFE=%.0f\n", r.model.c_str(), r.K, r.n_scenes,
                r.nfe_per_sample);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-8s | %-17s | %-17s\n", "Time", "minADE/minFDE", "JADE/JFDE");
  out += buf;
  out += "---------+-------------------+------------------\n";
  for (const auto& h : r.horizons) {
    std::snprintf(buf, sizeof buf, "%6.2fs  | %7.3f/%-9.3f | %7.3f/%-9.3f\n", h.seconds, h.min_ade, h.min_fde, h.jade,
                  h.jfde);
    out += buf;
  }
  return out;
}

std::vector<int> horizon_frames(const std::vector<double>& seconds, double dt, int T_f) {
  if (!(dt > 0.0)) throw ConfigError("horizon_frames: dt must be > 0");
  std::vector<int> out;
  for (double s : seconds) {
    const long f = std::lround(s / dt);
    if (f < 1 || f > T_f) {
      throw ConfigError("horizon " + std::to_string(s) + "s maps to frame " + std::to_string(f) + ", outside [1, " +
                        std::to_string(T_f) + "]");
    }
    out.push_back(static_cast<int>(f));
  }
  return out;
}

EvalReport evaluate(const Predictor& predictor, const std::vector<Scene>& scenes, const EvalOptions& options,
                    std::vector<SceneSample>* samples_out) {
  if (scenes.empty()) throw DatasetError("evaluate: empty split");
  if (options.horizons.empty()) throw ConfigError("evaluate: no horizons");
  if (options.chunk_size < 1 || options.workers < 1) throw ConfigError("evaluate: chunk_size and workers must be >= 1");

  // Chunks of consecutive scenes sharing the agent count; chunking does not
  // depend on the worker count, so results do not either.
  struct Chunk {
    size_t begin, end;
  };
  std::vector<Chunk> chunks;
  for (size_t i = 0; i < scenes.size();) {
    size_t j = i + 1;
    while (j < scenes.size() && j - i < static_cast<size_t>(options.chunk_size) &&
           scenes[j].num_agents() == scenes[i].num_agents()) {
      ++j;
    }
    chunks.push_back({i, j});
    i = j;
  }

  std::vector<SceneSample> samples(scenes.size());
  const long calls_before = predictor.forward_calls ? predictor.forward_calls() : 0;
  const auto start = std::chrono::steady_clock::now();
  auto run_chunk = [&](size_t c) {
    std::vector<const Scene*> ptrs;
    for (size_t i = chunks[c].begin; i < chunks[c].end; ++i) ptrs.push_back(&scenes[i]);
    auto out = predictor.run(ptrs, chunks[c].begin);
    if (out.size() != ptrs.size()) throw ShapeError("evaluate: predictor returned the wrong number of samples");
    for (size_t i = 0; i < out.size(); ++i) samples[chunks[c].begin + i] = std::move(out[i]);
  };
  if (options.workers == 1) {
    for (size_t c = 0; c < chunks.size(); ++c) run_chunk(c);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(options.workers);
    std::vector<std::thread> threads;
    for (int w = 0; w < options.workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          for (size_t c = next++; c < chunks.size(); c = next++) run_chunk(c);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const long calls = predictor.forward_calls ? predictor.forward_calls() - calls_before : 0;

  EvalReport report;
  report.model = predictor.model;
  report.K = predictor.K;
  report.n_scenes = static_cast<long>(scenes.size());
  report.nfe_per_sample = static_cast<double>(calls) / static_cast<double>(chunks.size());
  report.mean_wallclock_s = elapsed / static_cast<double>(scenes.size());
  for (int h : options.horizons) report.horizons.push_back({h, h * options.dt, 0.0, 0.0, 0.0, 0.0});
  for (size_t i = 0; i < scenes.size(); ++i) {
    const Mat gt = future_matrix(scenes[i]);
    const SceneSample& s = samples[i];
    for (auto& h : report.horizons) {
      const JointMetrics joint = joint_ade_fde(s.predictions, gt, s.K, h.frames);
      h.min_ade += min_ade(s.predictions, gt, s.K, h.frames);
      h.min_fde += min_fde(s.predictions, gt, s.K, h.frames);
      h.jade += joint.jade;
      h.jfde += joint.jfde;
    }
  }
  const double n = static_cast<double>(scenes.size());
  for (auto& h : report.horizons) {
    h.min_ade /= n;
    h.min_fde /= n;
    h.jade /= n;
    h.jfde /= n;
  }
  if (samples_out != nullptr) *samples_out = std::move(samples);
  return report;
}

}  // namespace moflow
