// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

#include "moflow/rng.hpp"

namespace moflow {

/// Row-major dense matrix used for every tensor in the library. Higher-rank
/// tensors are flattened into rows, e.g. a K x A x 2T_f flow state is stored
/// as (K*A) rows of 2T_f columns with row index k*A + a.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

using Point2 = std::array<double, 2>;

/// Features per past frame: absolute xy, xy relative to the last observed
/// frame, per-frame velocity xy.
inline constexpr int kContextFeatures = 6;

struct AgentRecord {
  std::string agent_id;
  std::string agent_type;
  std::vector<Point2> past;    // T_p frames, oldest first; back() is the last observed frame
  std::vector<Point2> future;  // T_f frames

  bool operator==(const AgentRecord&) const = default;
};

struct Scene {
  std::string scene_id;
  double dt = 0.0;
  int T_p = 0;
  int T_f = 0;
  std::vector<AgentRecord> agents;

  int num_agents() const { return static_cast<int>(agents.size()); }
  bool operator==(const Scene&) const = default;
};

/// Throws ValidationError when a scene breaks its shape or finiteness invariants.
void validate_scene(const Scene& scene);

/// Per-agent history features fed to the context encoder.
struct ContextTensor {
  Mat values;                            // A x (kContextFeatures * T_p)
  std::vector<std::string> agent_types;  // one label per row

  int num_agents() const { return static_cast<int>(values.rows()); }
};

/// K noisy scene-level trajectories at flow time t.
struct FlowState {
  int K = 0;
  int A = 0;
  Mat values;  // (K*A) x 2T_f
  double t = 0.0;
};

/// K scene-level waypoint predictions plus one classification logit each.
struct PredictionSet {
  int K = 0;
  int A = 0;
  Mat waypoints;  // (K*A) x 2T_f
  Vec logits;     // K
};

/// Per-axis extrema of relative future displacements over a training split.
struct Normalizer {
  Point2 min_disp{0.0, 0.0};
  Point2 max_disp{0.0, 0.0};

  /// Throws ConfigError if max <= min on either axis.
  void check() const;
  bool operator==(const Normalizer&) const = default;
};

ContextTensor build_context(const Scene& scene);

/// Future coordinates (A rows of T_f interleaved xy pairs) as a matrix.
Mat future_matrix(const Scene& scene);

/// Maps absolute futures (A x 2T_f, interleaved xy) into normalized
/// displacement space relative to each agent's last observed position.
/// Values outside [-1, 1] are kept as-is.
Mat normalize_future(const Mat& future, const Scene& scene, const Normalizer& norm);

/// Exact inverse of normalize_future. Accepts any row count that is a
/// multiple of A (e.g. K stacked predictions).
Mat denormalize_future(const Mat& normalized, const Scene& scene, const Normalizer& norm);

/// (1 - t) * y0 + t * y1.
Mat interpolate(const Mat& y0, const Mat& y1, double t);

/// One A x 2T_f standard-normal draw repeated K times along the first axis.
Mat tied_noise(int K, int A, int T_f, Rng& rng);

/// K x A x 2T_f i.i.d. standard-normal draw.
Mat iid_noise(int K, int A, int T_f, Rng& rng);

/// Repeats an A x C block K times: row k*A + a = block.row(a).
Mat repeat_rows(const Mat& block, int K);

bool all_finite(const Mat& m);

}  // namespace moflow

namespace moflow {

/// A scene prepared for training: its context and its future in normalized
/// displacement space (A x 2T_f).
struct Example {
  std::string scene_id;
  ContextTensor context;
  Mat target;
};

Example make_example(const Scene& scene, const Normalizer& norm);

/// Shuffled mini-batches of item indices, given each item's agent count;
/// every batch holds items with the same agent count.
std::vector<std::vector<int>> make_batches(const std::vector<int>& agent_counts, int batch_size, Rng& rng);

}  // namespace moflow
