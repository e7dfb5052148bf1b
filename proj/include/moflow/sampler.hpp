// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "moflow/network.hpp"

namespace moflow {

struct SamplerConfig {
  int T = 100;       // Euler steps, one network evaluation each
  double p = 5.0;    // exponent of the late-time branch
  bool continuous_time_map = false;

  /// Requires 1 <= T <= 500 and p >= 1.
  void validate() const;
};

/// Flow time at sampling iteration n (0 <= n <= T). Early steps advance by
/// 1/1000; past T/2 a power-p ramp climbs from T/500 to exactly 1 at n = T.
/// With continuous_time_map the ramp starts from T/2000 instead, removing the
/// jump at n = T/2.
double time_map(int n, const SamplerConfig& config);

/// (S_i - Y^t_i) / (1 - t) for every component; t must be < 1.
Mat kshot_vector_field(const Mat& S, const Mat& y_t, double t);

/// Data prediction at the current state of the ODE: (K*A*B) x 2T_f
/// waypoints plus (B*K) logits.
struct Denoised {
  Mat waypoints;
  Mat logits;
};
using Denoiser = std::function<Denoised(const Mat& y_t, double t)>;

struct Integration {
  Mat state;   // final Y^1
  Mat logits;  // logits of the last denoiser call
  int nfe = 0;
};

/// Euler integration of dY/dt = (D(Y, t) - Y) / (1 - t) over the time map.
/// Exactly T denoiser calls. The step that reaches t = 1 returns the data
/// prediction itself, and zero-length steps leave the state unchanged.
/// Throws SamplingFault naming the step if the state turns non-finite.
Integration integrate(const Denoiser& denoiser, Mat y0, const SamplerConfig& config);

/// K predictions for one scene in absolute coordinates.
struct SceneSample {
  std::string scene_id;
  int K = 0;
  int A = 0;
  int T_f = 0;
  Mat predictions;  // (K*A) x 2T_f absolute coordinates
  Vec logits;       // K
  Vec probs;        // softmax of logits

  PredictionSet as_prediction_set() const { return {K, A, predictions, logits}; }
};

Vec softmax(const Vec& logits);

/// Teacher ODE sampling for a batch of scenes sharing the agent count.
/// Scene i draws its tied initial noise from Rng(noise_seeds[i]), so results
/// do not depend on how scenes are grouped into batches.
std::vector<SceneSample> sample_batch(const Network& teacher, const std::vector<const Scene*>& scenes,
                                      const Normalizer& norm, const SamplerConfig& config, int K,
                                      const std::vector<std::uint64_t>& noise_seeds);

/// One sample-dump line: {"scene_id", "predictions": K x A x T_f x 2 absolute
/// coordinates, "probs": K}.
std::string sample_to_json_line(const SceneSample& sample);
/// Inverse of sample_to_json_line; logits are recovered as log(probs).
SceneSample sample_from_json_line(const std::string& text, long line = 0);

/// Single-scene convenience wrapper around sample_batch.
SceneSample sample(const Network& teacher, const Scene& scene, const Normalizer& norm, const SamplerConfig& config,
                   int K, Rng& rng);

}  // namespace moflow
