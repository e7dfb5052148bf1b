// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over row-major double
// matrices. Every value is 2-D; higher-rank tensors are flattened into rows
// and the ops that need structure (attention, gathers, group means) take
// explicit row index tables.

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "moflow/core.hpp"

namespace moflow::ag {

struct Node {
  Mat value;
  Mat grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// grad += g, allocating on first use.
  void accumulate(const Mat& g);
  Mat& grad_ref();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Mat value);
  static Var parameter(Mat value);

  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  /// Gradient; a zero matrix of the value's shape if nothing was accumulated.
  Mat grad() const;
  bool has_grad() const { return node_->grad.size() > 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Backpropagates from a scalar root with seed gradient `seed` (default 1).
void backward(const Var& root, double seed = 1.0);

/// While alive, new ops record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op node. `backward` is dropped when no parent needs gradients.
Var make_op(Mat value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
/// x * w + b, with w in x (in_features x out_features) layout and b a 1 x out row.
Var linear(const Var& x, const Var& w, const Var& b);

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a 1 x C row to every row.
Var add_row(const Var& x, const Var& row);
/// Multiplies row r by factors[r] (factors are constants).
Var scale_rows(const Var& x, std::vector<double> factors);
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Structural.
/// out.row(i) = table.row(index[i]); gradient scatters back with +=.
Var gather_rows(const Var& table, std::vector<int> index);
/// out.row(g) = mean of x rows whose group[r] == g.
Var group_mean(const Var& x, std::vector<int> group, int n_groups);
/// Sum of all entries as a 1 x 1 value.
Var sum(const Var& x);

/// Sequence layout for attention: group g, position s lives in row
/// rows[g * length + s]. Attention only mixes rows inside one group.
struct AttentionLayout {
  int groups = 0;
  int length = 0;
  std::vector<int> rows;
};

/// Scaled dot-product multi-head attention core on projected q, k, v
/// (all N x D). Dropout on the attention weights is applied only when
/// `dropout > 0` and `rng` is non-null.
Var attention(const Var& q, const Var& k, const Var& v, const AttentionLayout& layout, int heads,
              double dropout, Rng* rng);

}  // namespace moflow::ag
