// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "moflow/errors.hpp"

namespace moflow {

namespace {

bool finite(const Point2& p) { return std::isfinite(p[0]) && std::isfinite(p[1]); }

}  // namespace

void validate_scene(const Scene& scene) {
  const std::string where = "scene '" + scene.scene_id + "': ";
  if (!(scene.dt > 0.0) || !std::isfinite(scene.dt)) {
    throw ValidationError(where + "dt must be positive");
  }
  if (scene.T_p < 1 || scene.T_f < 1) {
    throw ValidationError(where + "T_p and T_f must be positive");
  }
  if (scene.agents.empty()) {
    throw ValidationError(where + "at least one agent required");
  }
  for (const auto& agent : scene.agents) {
    if (static_cast<int>(agent.past.size()) != scene.T_p) {
      throw ValidationError(where + "agent '" + agent.agent_id + "' has " +
                            std::to_string(agent.past.size()) + " past frames, expected " +
                            std::to_string(scene.T_p));
    }
    if (static_cast<int>(agent.future.size()) != scene.T_f) {
      throw ValidationError(where + "agent '" + agent.agent_id + "' has " +
                            std::to_string(agent.future.size()) + " future frames, expected " +
                            std::to_string(scene.T_f));
    }
    for (const auto& p : agent.past) {
      if (!finite(p)) throw ValidationError(where + "non-finite past coordinate");
    }
    for (const auto& p : agent.future) {
      if (!finite(p)) throw ValidationError(where + "non-finite future coordinate");
    }
  }
}

void Normalizer::check() const {
  for (int axis = 0; axis < 2; ++axis) {
    if (!(max_disp[axis] > min_disp[axis])) {
      throw ConfigError("degenerate normalizer: max_disp <= min_disp on axis " +
                        std::to_string(axis));
    }
  }
}

ContextTensor build_context(const Scene& scene) {
  validate_scene(scene);
  const int A = scene.num_agents();
  const int T_p = scene.T_p;
  ContextTensor ctx;
  ctx.values = Mat::Zero(A, kContextFeatures * T_p);
  ctx.agent_types.reserve(A);
  for (int a = 0; a < A; ++a) {
    const auto& past = scene.agents[a].past;
    const Point2& last = past.back();
    for (int f = 0; f < T_p; ++f) {
      const int c = kContextFeatures * f;
      ctx.values(a, c + 0) = past[f][0];
      ctx.values(a, c + 1) = past[f][1];
      ctx.values(a, c + 2) = past[f][0] - last[0];
      ctx.values(a, c + 3) = past[f][1] - last[1];
      if (f > 0) {
        ctx.values(a, c + 4) = (past[f][0] - past[f - 1][0]) / scene.dt;
        ctx.values(a, c + 5) = (past[f][1] - past[f - 1][1]) / scene.dt;
      }
    }
    ctx.agent_types.push_back(scene.agents[a].agent_type);
  }
  return ctx;
}

Mat future_matrix(const Scene& scene) {
  Mat out(scene.num_agents(), 2 * scene.T_f);
  for (int a = 0; a < scene.num_agents(); ++a) {
    const auto& fut = scene.agents[a].future;
    if (static_cast<int>(fut.size()) != scene.T_f) {
      throw ValidationError("future length mismatch for agent " + std::to_string(a));
    }
    for (int f = 0; f < scene.T_f; ++f) {
      out(a, 2 * f) = fut[f][0];
      out(a, 2 * f + 1) = fut[f][1];
    }
  }
  return out;
}

namespace {

void check_future_shape(const Mat& m, const Scene& scene) {
  const int A = scene.num_agents();
  if (m.cols() != 2 * scene.T_f || A == 0 || m.rows() % A != 0) {
    throw ShapeError("future matrix is " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected a multiple of " + std::to_string(A) +
                     " rows and " + std::to_string(2 * scene.T_f) + " columns");
  }
}

}  // namespace

Mat normalize_future(const Mat& future, const Scene& scene, const Normalizer& norm) {
  norm.check();
  check_future_shape(future, scene);
  const int A = scene.num_agents();
  Mat out(future.rows(), future.cols());
  for (Eigen::Index r = 0; r < future.rows(); ++r) {
    const Point2& last = scene.agents[r % A].past.back();
    for (Eigen::Index c = 0; c < future.cols(); ++c) {
      const int axis = static_cast<int>(c % 2);
      const double rel = future(r, c) - last[axis];
      out(r, c) = 2.0 * (rel - norm.min_disp[axis]) / (norm.max_disp[axis] - norm.min_disp[axis]) - 1.0;
    }
  }
  return out;
}

Mat denormalize_future(const Mat& normalized, const Scene& scene, const Normalizer& norm) {
  norm.check();
  check_future_shape(normalized, scene);
  const int A = scene.num_agents();
  Mat out(normalized.rows(), normalized.cols());
  for (Eigen::Index r = 0; r < normalized.rows(); ++r) {
    const Point2& last = scene.agents[r % A].past.back();
    for (Eigen::Index c = 0; c < normalized.cols(); ++c) {
      const int axis = static_cast<int>(c % 2);
      const double rel = (normalized(r, c) + 1.0) * 0.5 * (norm.max_disp[axis] - norm.min_disp[axis]) +
                         norm.min_disp[axis];
      out(r, c) = rel + last[axis];
    }
  }
  return out;
}

Mat interpolate(const Mat& y0, const Mat& y1, double t) {
  if (y0.rows() != y1.rows() || y0.cols() != y1.cols()) {
    throw ShapeError("interpolate: shape mismatch");
  }
  if (!(t >= 0.0 && t <= 1.0)) {
    throw ValidationError("interpolate: t must lie in [0, 1]");
  }
  if (t == 0.0) return y0;
  if (t == 1.0) return y1;
  return (1.0 - t) * y0 + t * y1;
}

Mat tied_noise(int K, int A, int T_f, Rng& rng) {
  if (K < 1) throw ValidationError("tied_noise: K must be >= 1");
  Mat block(A, 2 * T_f);
  for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = standard_normal(rng);
  return repeat_rows(block, K);
}

Mat iid_noise(int K, int A, int T_f, Rng& rng) {
  Mat out(static_cast<Eigen::Index>(K) * A, 2 * T_f);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = standard_normal(rng);
  return out;
}

Mat repeat_rows(const Mat& block, int K) {
  const Eigen::Index A = block.rows();
  Mat out(K * A, block.cols());
  for (int k = 0; k < K; ++k) out.middleRows(k * A, A) = block;
  return out;
}

bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace moflow


namespace moflow {

Example make_example(const Scene& scene, const Normalizer& norm) {
  Example ex;
  ex.scene_id = scene.scene_id;
  ex.context = build_context(scene);
  ex.target = normalize_future(future_matrix(scene), scene, norm);
  return ex;
}

std::vector<std::vector<int>> make_batches(const std::vector<int>& agent_counts, int batch_size, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::map<int, std::vector<int>> by_agents;
  for (int i = 0; i < static_cast<int>(agent_counts.size()); ++i) by_agents[agent_counts[i]].push_back(i);
  std::vector<std::vector<int>> batches;
  for (auto& [A, idx] : by_agents) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (size_t start = 0; start < idx.size(); start += batch_size) {
      const size_t end = std::min(idx.size(), start + static_cast<size_t>(batch_size));
      batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start), idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace moflow
