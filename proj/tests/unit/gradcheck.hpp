// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "moflow/autograd.hpp"

namespace testutil {

/// Largest relative error between the analytic gradient of a scalar function
/// and central finite differences, over every entry of every input.
inline double gradcheck(std::vector<moflow::ag::Var>& inputs,
                        const std::function<moflow::ag::Var(const std::vector<moflow::ag::Var>&)>& f,
                        double h = 1e-6) {
  for (auto& v : inputs) v.zero_grad();
  moflow::ag::backward(f(inputs));
  double worst = 0.0;
  for (auto& v : inputs) {
    const moflow::Mat analytic = v.has_grad() ? v.grad() : moflow::Mat::Zero(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.value().size(); ++i) {
      double& x = v.mutable_value().data()[i];
      const double saved = x;
      x = saved + h;
      const double up = f(inputs).item();
      x = saved - h;
      const double down = f(inputs).item();
      x = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max({1e-3, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace testutil
