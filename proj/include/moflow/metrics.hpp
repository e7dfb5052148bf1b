// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "moflow/json_io.hpp"
#include "moflow/sampler.hpp"

namespace moflow {

// All metric functions take predictions as (K*A) x 2T_f and ground truth as
// A x 2T_f in absolute coordinates; `horizon` counts frames from 1 to T_f.

/// Marginal best-of-K average displacement: per agent, the best component's
/// mean displacement over the first `horizon` frames, averaged over agents.
double min_ade(const Mat& preds, const Mat& gt, int K, int horizon);

/// Marginal best-of-K displacement at frame `horizon`.
double min_fde(const Mat& preds, const Mat& gt, int K, int horizon);

struct JointMetrics {
  double jade = 0.0;
  double jfde = 0.0;
};

/// Joint variants: one component index shared by every agent in the scene.
JointMetrics joint_ade_fde(const Mat& preds, const Mat& gt, int K, int horizon);

struct HorizonMetrics {
  int frames = 0;
  double seconds = 0.0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double jade = 0.0;
  double jfde = 0.0;

  bool operator==(const HorizonMetrics&) const = default;
};

struct EvalReport {
  std::string model;  // "teacher" or "student"
  int K = 0;
  long n_scenes = 0;
  double nfe_per_sample = 0.0;
  double mean_wallclock_s = 0.0;  // per scene
  std::vector<HorizonMetrics> horizons;

  bool operator==(const EvalReport&) const = default;
};

Json to_json(const EvalReport& report, bool include_timing = true);
EvalReport eval_report_from_json(const Json& j);
/// Plain-text table with one row per horizon: minADE/minFDE and JADE/JFDE.
std::string format_table(const EvalReport& report);

/// Produces samples for a chunk of scenes that share the agent count;
/// `first_index` is the chunk's offset in the split (for seeding).
struct Predictor {
  std::string model;
  int K = 0;
  std::function<std::vector<SceneSample>(const std::vector<const Scene*>& chunk, std::size_t first_index)> run;
  std::function<long()> forward_calls;  // cumulative network evaluations
};

/// Converts horizons in seconds to frame counts for a frame interval dt.
std::vector<int> horizon_frames(const std::vector<double>& seconds, double dt, int T_f);

struct EvalOptions {
  std::vector<int> horizons;  // frames
  double dt = 0.0;
  int chunk_size = 64;
  int workers = 1;
};

/// Runs the predictor over every scene and averages metrics in scene order.
/// Throws DatasetError on an empty split. When `samples_out` is non-null it
/// receives the per-scene samples in split order.
EvalReport evaluate(const Predictor& predictor, const std::vector<Scene>& scenes, const EvalOptions& options,
                    std::vector<SceneSample>* samples_out = nullptr);

}  // namespace moflow
