// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "moflow/network.hpp"
#include "moflow/optim.hpp"

namespace moflow {

/// Logit-normal flow-time distribution: logit(t) ~ N(mu_t, sigma_t^2).
struct TimeSchedule {
  double mu_t = -0.5;
  double sigma_t = 1.5;

  void validate() const;
};

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  long max_steps = 2000;
  long warmup_steps = 100;
  bool cosine_decay = true;  // decay to 10% of the base rate by max_steps
  double grad_clip = 1.0;
  bool mask_enabled = true;
  long log_every = 50;
  long checkpoint_every = 0;  // 0: only at the end
  std::uint64_t seed = 0;

  /// Throws ConfigError listing every violated field.
  void validate(const char* section = "train") const;
};

double logistic(double x);

/// t = logistic(kappa), kappa ~ N(mu_t, sigma_t^2); always strictly inside (0, 1).
double sample_time(const TimeSchedule& schedule, Rng& rng);

/// Index of the component of `S` ((K*A) x C) closest to `y1` (A x C) in
/// squared Frobenius distance; ties go to the lowest index.
int closest_index(const Mat& S, const Mat& y1, int K);

struct FmLossTerms {
  double total = 0.0;
  double regression = 0.0;  // ||S_j* - Y1||_F^2
  double ce = 0.0;          // softmax cross-entropy of the logits against j*
  int j_star = 0;
};

/// Winner-take-all regression plus classification loss for one scene;
/// `y1` is the normalized target (A x 2T_f).
FmLossTerms fm_loss(const PredictionSet& pred, const Mat& y1);

struct FmBatchLoss {
  ag::Var loss;  // batch mean of the per-scene total
  double regression = 0.0;
  double ce = 0.0;
  std::vector<int> j_star;
};

/// Differentiable batch form of fm_loss over the token layout of
/// Network::forward. j* is held fixed (no gradient through the argmin).
FmBatchLoss fm_loss_batch(const ag::Var& waypoints, const ag::Var& logits, const std::vector<const Mat*>& targets,
                          int K, int A);

struct EquivalenceResidual {
  double velocity_form = 0.0;  // ||v - (Y1 - Y0)||^2
  double data_form = 0.0;      // ||(Y^t + (1 - t) v - Y1) / (1 - t)||^2
  double residual = 0.0;       // |velocity_form - data_form|
  double relative = 0.0;       // residual / max(velocity_form, data_form), 0 when both vanish
};

/// Evaluates the velocity-space and data-space flow-matching losses on the
/// exact interpolant of (y0, y1) at t < 1 and reports their difference.
EquivalenceResidual loss_equivalence_check(const Mat& v, const Mat& y0, const Mat& y1, double t);

/// Warmup then optional cosine decay to 10% of `base`.
double scheduled_learning_rate(double base, long step, long warmup, long total, bool cosine);

struct StepStats {
  double loss = 0.0;
  double regression = 0.0;
  double ce = 0.0;
  double t_mean = 0.0;
  double grad_norm = 0.0;
};

/// One optimizer update on a batch of examples sharing the agent count.
StepStats train_step(Network& network, AdamW& optimizer, const std::vector<const Example*>& batch,
                     const TimeSchedule& schedule, const TrainConfig& config, Rng& rng);

struct TrainLogRecord {
  long step = 0;
  double loss = 0.0;
  double regression = 0.0;
  double ce = 0.0;
  double t_mean = 0.0;
  double wallclock_s = 0.0;
};

struct TrainHooks {
  std::function<void(const TrainLogRecord&)> on_log;
  std::function<void(long step)> on_checkpoint;
};

/// Runs config.max_steps updates over shuffled epochs. Log records average
/// the steps since the previous record.
std::vector<TrainLogRecord> train_teacher(Network& network, const std::vector<Example>& examples,
                                          const TimeSchedule& schedule, const TrainConfig& config,
                                          const TrainHooks& hooks = {});

}  // namespace moflow
