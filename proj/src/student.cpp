// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/student.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "moflow/errors.hpp"

namespace moflow {

void DistillConfig::validate() const {
  std::vector<std::string> bad;
  if (m < 1) bad.push_back("distill.m must be >= 1");
  if (batch_size < 1) bad.push_back("distill.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) bad.push_back("distill.learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) bad.push_back("distill.weight_decay must be >= 0");
  if (max_steps < 1) bad.push_back("distill.max_steps must be >= 1");
  if (warmup_steps < 0) bad.push_back("distill.warmup_steps must be >= 0");
  if (!(grad_clip >= 0.0)) bad.push_back("distill.grad_clip must be >= 0");
  if (log_every < 1) bad.push_back("distill.log_every must be >= 1");
  if (checkpoint_every < 0) bad.push_back("distill.checkpoint_every must be >= 0");
  if (!bad.empty()) {
    std::string msg = "invalid distill config:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
}

namespace {

/// Pairwise Frobenius distances between the K components of a and b.
Mat pairwise_distances(const Mat& a, const Mat& b, int K, Eigen::Index A) {
  Mat d(K, K);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) d(i, j) = (a.middleRows(i * A, A) - b.middleRows(j * A, A)).norm();
  }
  return d;
}

int argmin_row(const Mat& d, int i) {
  int best = 0;
  for (int j = 1; j < d.cols(); ++j) {
    if (d(i, j) < d(i, best)) best = j;
  }
  return best;
}

int argmin_col(const Mat& d, int j) {
  int best = 0;
  for (int i = 1; i < d.rows(); ++i) {
    if (d(i, j) < d(best, j)) best = i;
  }
  return best;
}

}  // namespace

double chamfer(const Mat& a, const Mat& b, int K) {
  if (K < 1 || a.rows() != b.rows() || a.cols() != b.cols() || a.rows() % K != 0) {
    throw ShapeError("chamfer: shape mismatch");
  }
  const Eigen::Index A = a.rows() / K;
  const Mat d = pairwise_distances(a, b, K, A);
  return (d.rowwise().minCoeff().sum() + d.colwise().minCoeff().sum()) / K;
}

ag::Var chamfer_batch(const ag::Var& gamma, const std::vector<const Mat*>& targets, int K, int A) {
  const int B = static_cast<int>(targets.size());
  const Eigen::Index block = static_cast<Eigen::Index>(K) * A;
  if (B < 1 || gamma.rows() != B * block) throw ShapeError("chamfer_batch: shape mismatch");
  const Mat& G = gamma.value();
  Mat grad = Mat::Zero(G.rows(), G.cols());
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const Mat& Y = *targets[b];
    if (Y.rows() != block || Y.cols() != G.cols()) throw ShapeError("chamfer_batch: target shape");
    const Mat Gb = G.middleRows(b * block, block);
    const Mat d = pairwise_distances(Y, Gb, K, A);
    double value = 0.0;
    auto add_term = [&](int i, int j) {
      value += d(i, j);
      if (d(i, j) > 0.0) {
        grad.middleRows(b * block + static_cast<Eigen::Index>(j) * A, A) +=
            (Gb.middleRows(static_cast<Eigen::Index>(j) * A, A) - Y.middleRows(static_cast<Eigen::Index>(i) * A, A)) /
            (d(i, j) * K * B);
      }
    };
    for (int i = 0; i < K; ++i) add_term(i, argmin_row(d, i));
    for (int j = 0; j < K; ++j) add_term(argmin_col(d, j), j);
    total += value / K / B;
  }
  Mat v(1, 1);
  v(0, 0) = total;
  return ag::make_op(std::move(v), {gamma}, [gamma, grad = std::move(grad)](ag::Node& self) {
    gamma.node()->accumulate(grad * self.grad(0, 0));
  });
}

TeacherSampleStore TeacherSampleStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open teacher sample dump " + path.string());
  TeacherSampleStore store;
  std::string text;
  long line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    store.insert(sample_from_json_line(text, line));
  }
  return store;
}

void TeacherSampleStore::insert(SceneSample sample) {
  std::string id = sample.scene_id;
  samples_.insert_or_assign(std::move(id), std::move(sample));
}

const SceneSample& TeacherSampleStore::at(const std::string& scene_id) const {
  const auto it = samples_.find(scene_id);
  if (it == samples_.end()) throw DatasetError("no teacher sample for scene '" + scene_id + "'");
  return it->second;
}

std::vector<DistillExample> make_distill_examples(const std::vector<Scene>& scenes, const TeacherSampleStore& store,
                                                  const Normalizer& norm) {
  std::vector<DistillExample> out;
  out.reserve(scenes.size());
  for (const auto& scene : scenes) {
    const SceneSample& s = store.at(scene.scene_id);
    if (s.A != scene.num_agents() || s.T_f != scene.T_f) {
      throw DatasetError("teacher sample for scene '" + scene.scene_id + "' does not match the scene shape");
    }
    DistillExample ex;
    ex.scene_id = scene.scene_id;
    ex.context = build_context(scene);
    ex.teacher = normalize_future(s.predictions, scene, norm);
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

/// Student forward over B scenes sharing A, with a precomputed encoding
/// expanded to `copies` candidate scenes per real scene.
BatchOutput student_forward(const Network& student, const std::vector<const ContextTensor*>& contexts, int K,
                            Mat z, int copies, const ag::Var* encoded) {
  std::vector<const ContextTensor*> expanded;
  expanded.reserve(contexts.size() * copies);
  for (const auto* c : contexts) {
    for (int j = 0; j < copies; ++j) expanded.push_back(c);
  }
  BatchInput in = student.make_batch(expanded, K, std::move(z), {});
  if (encoded != nullptr) {
    const int A = in.A;
    std::vector<int> rows;
    rows.reserve(static_cast<size_t>(in.B) * A);
    for (int v = 0; v < in.B; ++v) {
      for (int a = 0; a < A; ++a) rows.push_back((v / copies) * A + a);
    }
    in.encoded = ag::gather_rows(*encoded, std::move(rows));
  }
  return student.forward(in, Mode::eval, nullptr);
}

}  // namespace

DistillStepStats distill_step(Network& student, AdamW& optimizer, const std::vector<const DistillExample*>& batch,
                              const DistillConfig& config, Rng& rng) {
  if (batch.empty()) throw DatasetError("distill_step: empty batch");
  if (student.kind() != NetworkKind::student) throw ConfigError("distill_step needs a student network");
  const int B = static_cast<int>(batch.size());
  const int K = student.config().K;
  const int A = batch.front()->context.num_agents();
  const int T_f = student.dims().T_f;
  const int m = config.m;
  const Eigen::Index block = static_cast<Eigen::Index>(K) * A;

  std::vector<const ContextTensor*> contexts(B);
  std::vector<const Mat*> targets(B);
  Mat z_all(static_cast<Eigen::Index>(B) * m * block, 2 * T_f);
  for (int b = 0; b < B; ++b) {
    if (batch[b]->context.num_agents() != A) throw ShapeError("distill_step: batch mixes agent counts");
    if (batch[b]->teacher.rows() != block) throw ShapeError("distill_step: teacher sample K differs from the student");
    contexts[b] = &batch[b]->context;
    targets[b] = &batch[b]->teacher;
    for (int j = 0; j < m; ++j) {
      z_all.middleRows((static_cast<Eigen::Index>(b) * m + j) * block, block) = iid_noise(K, A, T_f, rng);
    }
  }

  DistillStepStats stats;
  stats.pi.resize(B);
  {
    ag::NoGradGuard no_grad;
    BatchInput enc_in = student.make_batch(contexts, K, Mat::Zero(B * block, 2 * T_f), {});
    const ag::Var encoded = student.encode_context(enc_in.context, enc_in.agent_types, B, A, Mode::eval, nullptr);
    const BatchOutput cand = student_forward(student, contexts, K, z_all, m, &encoded);
    const Mat& G = cand.waypoints.value();
    for (int b = 0; b < B; ++b) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j) {
        const double d = chamfer(*targets[b], G.middleRows((static_cast<Eigen::Index>(b) * m + j) * block, block), K);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      stats.pi[b] = best;
    }
  }

  Mat z_sel(static_cast<Eigen::Index>(B) * block, 2 * T_f);
  for (int b = 0; b < B; ++b) {
    z_sel.middleRows(b * block, block) = z_all.middleRows((static_cast<Eigen::Index>(b) * m + stats.pi[b]) * block, block);
  }
  const BatchOutput out = student_forward(student, contexts, K, std::move(z_sel), 1, nullptr);
  const ag::Var loss = chamfer_batch(out.waypoints, targets, K, A);
  stats.loss = loss.item();
  if (!std::isfinite(stats.loss)) throw TrainingFault("non-finite distillation loss");
  ag::backward(loss);
  stats.grad_norm = optimizer.step();
  return stats;
}

std::vector<DistillLogRecord> distill(Network& student, const std::vector<DistillExample>& examples,
                                      const DistillConfig& config, const DistillHooks& hooks) {
  config.validate();
  if (examples.empty()) throw DatasetError("distill: no training examples");
  Rng rng(config.seed);
  AdamW optimizer(student.params(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay, config.grad_clip});
  const auto start = std::chrono::steady_clock::now();
  std::vector<DistillLogRecord> log;
  double acc_loss = 0.0;
  long acc_steps = 0;
  std::vector<long> hist(config.m, 0);
  std::vector<std::vector<int>> batches;
  size_t next_batch = 0;
  std::vector<int> agent_counts;
  for (const auto& ex : examples) agent_counts.push_back(ex.context.num_agents());

  for (long step = 0; step < config.max_steps; ++step) {
    if (next_batch == batches.size()) {
      batches = make_batches(agent_counts, config.batch_size, rng);
      next_batch = 0;
    }
    std::vector<const DistillExample*> batch;
    for (int i : batches[next_batch++]) batch.push_back(&examples[i]);
    optimizer.set_learning_rate(scheduled_learning_rate(config.learning_rate, step, config.warmup_steps,
                                                        config.max_steps, config.cosine_decay));
    const DistillStepStats s = distill_step(student, optimizer, batch, config, rng);
    acc_loss += s.loss;
    ++acc_steps;
    for (int p : s.pi) ++hist[p];

    const long done = step + 1;
    if (done % config.log_every == 0 || done == config.max_steps) {
      DistillLogRecord rec;
      rec.step = done;
      rec.loss = acc_loss / acc_steps;
      rec.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      rec.pi_histogram = hist;
      log.push_back(rec);
      if (hooks.on_log) hooks.on_log(rec);
      acc_loss = 0.0;
      acc_steps = 0;
      std::fill(hist.begin(), hist.end(), 0);
    }
    if (hooks.on_checkpoint &&
        ((config.checkpoint_every > 0 && done % config.checkpoint_every == 0) || done == config.max_steps)) {
      hooks.on_checkpoint(done);
    }
  }
  return log;
}

double mean_chamfer_to_teacher(const Network& student, const std::vector<DistillExample>& examples,
                               std::uint64_t seed) {
  if (examples.empty()) throw DatasetError("mean_chamfer_to_teacher: no examples");
  const int K = student.config().K;
  const int T_f = student.dims().T_f;
  ag::NoGradGuard no_grad;
  double total = 0.0;
  constexpr size_t kChunk = 128;
  for (size_t start = 0; start < examples.size();) {
    const int A = examples[start].context.num_agents();
    std::vector<const ContextTensor*> contexts;
    size_t end = start;
    while (end < examples.size() && end - start < kChunk && examples[end].context.num_agents() == A) {
      contexts.push_back(&examples[end].context);
      ++end;
    }
    const Eigen::Index block = static_cast<Eigen::Index>(K) * A;
    Mat z(static_cast<Eigen::Index>(contexts.size()) * block, 2 * T_f);
    for (size_t i = start; i < end; ++i) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      z.middleRows(static_cast<Eigen::Index>(i - start) * block, block) = iid_noise(K, A, T_f, rng);
    }
    const BatchOutput out = student_forward(student, contexts, K, std::move(z), 1, nullptr);
    for (size_t i = start; i < end; ++i) {
      total += chamfer(examples[i].teacher, out.waypoints.value().middleRows(static_cast<Eigen::Index>(i - start) * block, block), K);
    }
    start = end;
  }
  return total / static_cast<double>(examples.size());
}

std::vector<SceneSample> student_sample_batch(const Network& student, const std::vector<const Scene*>& scenes,
                                              const Normalizer& norm, int K,
                                              const std::vector<std::uint64_t>& noise_seeds) {
  if (student.kind() != NetworkKind::student) throw ConfigError("student_sample needs a student network");
  if (scenes.empty()) return {};
  if (noise_seeds.size() != scenes.size()) throw ShapeError("student_sample_batch: one noise seed per scene required");
  const int B = static_cast<int>(scenes.size());
  const int A = scenes.front()->num_agents();
  const int T_f = student.dims().T_f;
  const Eigen::Index block = static_cast<Eigen::Index>(K) * A;

  std::vector<ContextTensor> contexts;
  contexts.reserve(B);
  std::vector<const ContextTensor*> ptrs;
  Mat z(B * block, 2 * T_f);
  for (int b = 0; b < B; ++b) {
    contexts.push_back(build_context(*scenes[b]));
    Rng rng(noise_seeds[b]);
    z.middleRows(b * block, block) = iid_noise(K, A, T_f, rng);
  }
  for (const auto& c : contexts) ptrs.push_back(&c);

  ag::NoGradGuard no_grad;
  const BatchOutput out = student_forward(student, ptrs, K, std::move(z), 1, nullptr);
  std::vector<SceneSample> result;
  result.reserve(B);
  for (int b = 0; b < B; ++b) {
    SceneSample s;
    s.scene_id = scenes[b]->scene_id;
    s.K = K;
    s.A = A;
    s.T_f = T_f;
    s.predictions = denormalize_future(out.waypoints.value().middleRows(b * block, block), *scenes[b], norm);
    s.logits = Vec::Zero(K);
    s.probs = Vec::Constant(K, 1.0 / K);
    result.push_back(std::move(s));
  }
  return result;
}

SceneSample student_sample(const Network& student, const Scene& scene, const Normalizer& norm, int K, Rng& rng) {
  const std::uint64_t seed = rng();
  return student_sample_batch(student, {&scene}, norm, K, {seed}).front();
}

}  // namespace moflow
