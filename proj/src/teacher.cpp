// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/teacher.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "moflow/errors.hpp"

namespace moflow {

void TimeSchedule::validate() const {
  if (!(sigma_t > 0.0) || !std::isfinite(sigma_t)) throw ConfigError("schedule.sigma_t must be > 0");
  if (!std::isfinite(mu_t)) throw ConfigError("schedule.mu_t must be finite");
}

void TrainConfig::validate(const char* section) const {
  const std::string s = section;
  std::vector<std::string> bad;
  if (batch_size < 1) bad.push_back(s + ".batch_size must be >= 1");
  if (!(learning_rate > 0.0)) bad.push_back(s + ".learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) bad.push_back(s + ".weight_decay must be >= 0");
  if (max_steps < 1) bad.push_back(s + ".max_steps must be >= 1");
  if (warmup_steps < 0) bad.push_back(s + ".warmup_steps must be >= 0");
  if (!(grad_clip >= 0.0)) bad.push_back(s + ".grad_clip must be >= 0");
  if (log_every < 1) bad.push_back(s + ".log_every must be >= 1");
  if (checkpoint_every < 0) bad.push_back(s + ".checkpoint_every must be >= 0");
  if (!bad.empty()) {
    std::string msg = "invalid " + s + " config:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double sample_time(const TimeSchedule& schedule, Rng& rng) {
  const double kappa = schedule.mu_t + schedule.sigma_t * standard_normal(rng);
  const double t = logistic(kappa);
  if (t <= 0.0) return std::numeric_limits<double>::min();
  if (t >= 1.0) return std::nextafter(1.0, 0.0);
  return t;
}

int closest_index(const Mat& S, const Mat& y1, int K) {
  const Eigen::Index A = y1.rows();
  if (K < 1 || S.rows() != K * A || S.cols() != y1.cols()) throw ShapeError("closest_index: shape mismatch");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    const double d = (S.middleRows(k * A, A) - y1).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

namespace {

double log_sum_exp(const double* x, int n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - mx);
  return mx + std::log(s);
}

}  // namespace

FmLossTerms fm_loss(const PredictionSet& pred, const Mat& y1) {
  if (pred.logits.size() != pred.K) throw ShapeError("fm_loss: logits length must equal K");
  if (!pred.waypoints.allFinite() || !pred.logits.allFinite() || !y1.allFinite()) {
    throw ValidationError("fm_loss: non-finite input");
  }
  FmLossTerms out;
  out.j_star = closest_index(pred.waypoints, y1, pred.K);
  out.regression = (pred.waypoints.middleRows(out.j_star * y1.rows(), y1.rows()) - y1).squaredNorm();
  out.ce = log_sum_exp(pred.logits.data(), pred.K) - pred.logits(out.j_star);
  out.total = out.regression + out.ce;
  return out;
}

FmBatchLoss fm_loss_batch(const ag::Var& waypoints, const ag::Var& logits, const std::vector<const Mat*>& targets,
                          int K, int A) {
  const int B = static_cast<int>(targets.size());
  if (B < 1) throw ShapeError("fm_loss_batch: empty batch");
  if (waypoints.rows() != static_cast<Eigen::Index>(B) * K * A || logits.rows() != static_cast<Eigen::Index>(B) * K ||
      logits.cols() != 1) {
    throw ShapeError("fm_loss_batch: output shapes do not match the batch");
  }
  const Mat& S = waypoints.value();
  const Mat& Z = logits.value();
  if (!S.allFinite() || !Z.allFinite()) throw TrainingFault("non-finite network output");

  FmBatchLoss out;
  out.j_star.resize(B);
  Mat dS = Mat::Zero(S.rows(), S.cols());
  Mat dZ = Mat::Zero(Z.rows(), 1);
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const Mat& y1 = *targets[b];
    const Eigen::Index base = static_cast<Eigen::Index>(b) * K * A;
    const int j = closest_index(S.middleRows(base, static_cast<Eigen::Index>(K) * A), y1, K);
    out.j_star[b] = j;
    const Mat diff = S.middleRows(base + static_cast<Eigen::Index>(j) * A, A) - y1;
    const double reg = diff.squaredNorm();
    const double* z = Z.data() + static_cast<Eigen::Index>(b) * K;
    const double lse = log_sum_exp(z, K);
    const double ce = lse - z[j];
    out.regression += reg / B;
    out.ce += ce / B;
    total += (reg + ce) / B;
    dS.middleRows(base + static_cast<Eigen::Index>(j) * A, A) = (2.0 / B) * diff;
    for (int k = 0; k < K; ++k) {
      dZ(static_cast<Eigen::Index>(b) * K + k, 0) = (std::exp(z[k] - lse) - (k == j ? 1.0 : 0.0)) / B;
    }
  }
  Mat value(1, 1);
  value(0, 0) = total;
  out.loss = ag::make_op(std::move(value), {waypoints, logits},
                         [waypoints, logits, dS = std::move(dS), dZ = std::move(dZ)](ag::Node& self) {
                           const double g = self.grad(0, 0);
                           if (waypoints.requires_grad()) waypoints.node()->accumulate(dS * g);
                           if (logits.requires_grad()) logits.node()->accumulate(dZ * g);
                         });
  return out;
}

EquivalenceResidual loss_equivalence_check(const Mat& v, const Mat& y0, const Mat& y1, double t) {
  if (v.rows() != y0.rows() || v.cols() != y0.cols() || y0.rows() != y1.rows() || y0.cols() != y1.cols()) {
    throw ShapeError("loss_equivalence_check: shape mismatch");
  }
  if (!(t >= 0.0 && t < 1.0)) throw ValidationError("loss_equivalence_check: t must lie in [0, 1)");
  const Mat yt = interpolate(y0, y1, t);
  EquivalenceResidual r;
  r.velocity_form = (v - (y1 - y0)).squaredNorm();
  r.data_form = ((yt + (1.0 - t) * v - y1) / (1.0 - t)).squaredNorm();
  r.residual = std::abs(r.velocity_form - r.data_form);
  const double scale = std::max(r.velocity_form, r.data_form);
  r.relative = scale > 0.0 ? r.residual / scale : 0.0;
  return r;
}

double scheduled_learning_rate(double base, long step, long warmup, long total, bool cosine) {
  if (warmup > 0 && step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (!cosine || total <= warmup) return base;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  return base * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

StepStats train_step(Network& network, AdamW& optimizer, const std::vector<const Example*>& batch,
                     const TimeSchedule& schedule, const TrainConfig& config, Rng& rng) {
  if (batch.empty()) throw DatasetError("train_step: empty batch");
  const int B = static_cast<int>(batch.size());
  const int K = network.config().K;
  const int A = batch.front()->context.num_agents();
  const int T_f = network.dims().T_f;

  Mat noisy(static_cast<Eigen::Index>(B) * K * A, 2 * T_f);
  std::vector<double> t(B);
  std::vector<const ContextTensor*> contexts(B);
  std::vector<const Mat*> targets(B);
  StepStats stats;
  for (int b = 0; b < B; ++b) {
    const Example& ex = *batch[b];
    if (ex.context.num_agents() != A) throw ShapeError("train_step: batch mixes agent counts");
    contexts[b] = &ex.context;
    targets[b] = &ex.target;
    const Mat y0 = tied_noise(K, A, T_f, rng);
    t[b] = sample_time(schedule, rng);
    noisy.middleRows(static_cast<Eigen::Index>(b) * K * A, static_cast<Eigen::Index>(K) * A) =
        interpolate(y0, repeat_rows(ex.target, K), t[b]);
    stats.t_mean += t[b] / B;
  }

  BatchInput in = network.make_batch(contexts, K, std::move(noisy), std::move(t));
  in.apply_mask = config.mask_enabled;
  const BatchOutput out = network.forward(in, Mode::train, &rng);
  const FmBatchLoss loss = fm_loss_batch(out.waypoints, out.logits, targets, K, A);
  stats.loss = loss.loss.item();
  stats.regression = loss.regression;
  stats.ce = loss.ce;
  if (!std::isfinite(stats.loss)) throw TrainingFault("non-finite training loss");
  ag::backward(loss.loss);
  stats.grad_norm = optimizer.step();
  return stats;
}

std::vector<TrainLogRecord> train_teacher(Network& network, const std::vector<Example>& examples,
                                          const TimeSchedule& schedule, const TrainConfig& config,
                                          const TrainHooks& hooks) {
  schedule.validate();
  config.validate();
  if (examples.empty()) throw DatasetError("train_teacher: no training examples");
  if (network.kind() != NetworkKind::teacher) throw ConfigError("train_teacher needs a teacher network");

  Rng rng(config.seed);
  AdamW optimizer(network.params(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay, config.grad_clip});
  const auto start = std::chrono::steady_clock::now();
  std::vector<TrainLogRecord> log;
  TrainLogRecord acc;
  long acc_steps = 0;
  std::vector<std::vector<int>> batches;
  size_t next_batch = 0;
  std::vector<int> agent_counts;
  for (const auto& ex : examples) agent_counts.push_back(ex.context.num_agents());

  for (long step = 0; step < config.max_steps; ++step) {
    if (next_batch == batches.size()) {
      batches = make_batches(agent_counts, config.batch_size, rng);
      next_batch = 0;
    }
    std::vector<const Example*> batch;
    for (int i : batches[next_batch++]) batch.push_back(&examples[i]);

    optimizer.set_learning_rate(scheduled_learning_rate(config.learning_rate, step, config.warmup_steps,
                                                        config.max_steps, config.cosine_decay));
    const StepStats s = train_step(network, optimizer, batch, schedule, config, rng);
    acc.loss += s.loss;
    acc.regression += s.regression;
    acc.ce += s.ce;
    acc.t_mean += s.t_mean;
    ++acc_steps;

    const long done = step + 1;
    if (done % config.log_every == 0 || done == config.max_steps) {
      TrainLogRecord rec;
      rec.step = done;
      rec.loss = acc.loss / acc_steps;
      rec.regression = acc.regression / acc_steps;
      rec.ce = acc.ce / acc_steps;
      rec.t_mean = acc.t_mean / acc_steps;
      rec.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log.push_back(rec);
      if (hooks.on_log) hooks.on_log(rec);
      acc = {};
      acc_steps = 0;
    }
    if (hooks.on_checkpoint &&
        ((config.checkpoint_every > 0 && done % config.checkpoint_every == 0) || done == config.max_steps)) {
      hooks.on_checkpoint(done);
    }
  }
  return log;
}

}  // namespace moflow
