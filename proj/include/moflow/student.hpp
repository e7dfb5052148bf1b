// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "moflow/sampler.hpp"
#include "moflow/teacher.hpp"

namespace moflow {

struct DistillConfig {
  int m = 20;  // IMLE candidates per scene and step
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  long max_steps = 2000;
  long warmup_steps = 100;
  bool cosine_decay = true;
  double grad_clip = 1.0;
  long log_every = 50;
  long checkpoint_every = 0;
  std::string teacher_samples;  // sample dump produced by the teacher sampler
  std::uint64_t seed = 0;

  void validate() const;
};

/// Bidirectional set distance between two K-component scene predictions
/// ((K*A) x 2T_f each), using the Frobenius norm of each component pair:
/// (sum_i min_j ||a_i - b_j|| + sum_j min_i ||a_i - b_j||) / K.
double chamfer(const Mat& a, const Mat& b, int K);

/// Differentiable chamfer(target, gamma) averaged over B scenes laid out as
/// in Network::forward; `targets` holds one (K*A) x 2T_f block per scene.
/// The nearest-neighbour assignments are held fixed for differentiation.
ag::Var chamfer_batch(const ag::Var& gamma, const std::vector<const Mat*>& targets, int K, int A);

/// Teacher predictions keyed by scene id, read from a sample dump.
class TeacherSampleStore {
 public:
  TeacherSampleStore() = default;
  static TeacherSampleStore load(const std::filesystem::path& path);

  void insert(SceneSample sample);
  /// Throws DatasetError when the scene has no cached sample.
  const SceneSample& at(const std::string& scene_id) const;
  bool contains(const std::string& scene_id) const { return samples_.count(scene_id) > 0; }
  std::size_t size() const { return samples_.size(); }

 private:
  std::map<std::string, SceneSample> samples_;
};

/// A training example for the student: context plus the cached teacher
/// prediction mapped into normalized displacement space.
struct DistillExample {
  std::string scene_id;
  ContextTensor context;
  Mat teacher;  // (K*A) x 2T_f, normalized
};

std::vector<DistillExample> make_distill_examples(const std::vector<Scene>& scenes, const TeacherSampleStore& store,
                                                  const Normalizer& norm);

struct DistillStepStats {
  double loss = 0.0;
  double grad_norm = 0.0;
  std::vector<int> pi;  // selected candidate per scene
};

/// One IMLE update: m fresh noise draws per scene, a no-gradient pass to pick
/// the candidate nearest to the teacher sample in chamfer distance (ties to
/// the lowest index), then a gradient step on that candidate only. Both
/// passes run the network in eval mode so the selected candidate is the one
/// that is differentiated.
DistillStepStats distill_step(Network& student, AdamW& optimizer, const std::vector<const DistillExample*>& batch,
                              const DistillConfig& config, Rng& rng);

struct DistillLogRecord {
  long step = 0;
  double loss = 0.0;
  double wallclock_s = 0.0;
  std::vector<long> pi_histogram;  // counts of selected candidate indices since the last record
};

struct DistillHooks {
  std::function<void(const DistillLogRecord&)> on_log;
  std::function<void(long step)> on_checkpoint;
};

std::vector<DistillLogRecord> distill(Network& student, const std::vector<DistillExample>& examples,
                                      const DistillConfig& config, const DistillHooks& hooks = {});

/// Mean chamfer distance between student one-step samples (drawn with the
/// given seed) and the cached teacher samples, in normalized space.
double mean_chamfer_to_teacher(const Network& student, const std::vector<DistillExample>& examples,
                               std::uint64_t seed);

/// One-step student sampling for a batch of scenes sharing the agent count.
/// Probabilities are uniform 1/K.
std::vector<SceneSample> student_sample_batch(const Network& student, const std::vector<const Scene*>& scenes,
                                              const Normalizer& norm, int K,
                                              const std::vector<std::uint64_t>& noise_seeds);

SceneSample student_sample(const Network& student, const Scene& scene, const Normalizer& norm, int K, Rng& rng);

}  // namespace moflow
