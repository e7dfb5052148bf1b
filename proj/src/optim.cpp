// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/optim.hpp"

#include <cmath>

#include "moflow/errors.hpp"

namespace moflow {

AdamW::AdamW(ParameterSet& params, AdamWConfig config) : params_(&params), config_(config) {
  for (const auto& [name, var] : params.entries()) {
    m_.push_back(Mat::Zero(var.rows(), var.cols()));
    v_.push_back(Mat::Zero(var.rows(), var.cols()));
  }
}

double AdamW::step() {
  auto& entries = params_->entries();
  double sq = 0.0;
  for (const auto& [name, var] : entries) {
    if (!var.has_grad()) continue;
    const Mat& g = var.node()->grad;
    if (!g.allFinite()) throw TrainingFault("non-finite gradient for parameter " + name);
    sq += g.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double clip = (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;

  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  for (size_t i = 0; i < entries.size(); ++i) {
    ag::Var& var = entries[i].second;
    Mat& p = var.mutable_value();
    p *= 1.0 - lr * config_.weight_decay;
    if (!var.has_grad()) continue;
    const Mat g = var.node()->grad * clip;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
    var.zero_grad();
  }
  return norm;
}

}  // namespace moflow
