// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moflow/network.hpp"

namespace moflow {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
};

/// Adam with decoupled weight decay over a ParameterSet.
class AdamW {
 public:
  AdamW(ParameterSet& params, AdamWConfig config);

  /// Applies one update from the accumulated gradients and clears them.
  /// Returns the pre-clip global gradient norm. Throws TrainingFault when
  /// any gradient is non-finite.
  double step();
  long steps() const { return steps_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const AdamWConfig& config() const { return config_; }

 private:
  ParameterSet* params_;
  AdamWConfig config_;
  std::vector<Mat> m_, v_;
  long steps_ = 0;
};

}  // namespace moflow
