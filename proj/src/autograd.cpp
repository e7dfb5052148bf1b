// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "moflow/errors.hpp"

namespace moflow::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

void Node::accumulate(const Mat& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Mat& Node::grad_ref() {
  if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
  return grad;
}

Var Var::constant(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Mat Var::grad() const {
  if (node_->grad.size() == 0) return Mat::Zero(rows(), cols());
  return node_->grad;
}

double Var::item() const {
  if (node_->value.size() != 1) throw ShapeError("item() on a non-scalar value");
  return node_->value(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var make_op(Mat value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::move(backward);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& root, double seed) {
  if (!root.requires_grad()) return;
  if (root.value().size() != 1) throw ShapeError("backward() requires a scalar root");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_ref()(0, 0) += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() > 0) node->backward(*node);
  }
  // Intermediate gradients are released; leaves keep theirs for the optimizer.
  for (Node* node : order) {
    if (node->backward) node->grad.resize(0, 0);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Mat out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) a.node()->accumulate(self.grad * b.value().transpose());
    if (b.requires_grad()) b.node()->accumulate(a.value().transpose() * self.grad);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x.cols() != w.rows()) throw ShapeError("linear: input width does not match weight rows");
  if (b.rows() != 1 || b.cols() != w.cols()) throw ShapeError("linear: bias shape");
  Mat out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return make_op(std::move(out), {x, w, b}, [x, w, b](Node& self) {
    if (x.requires_grad()) x.node()->accumulate(self.grad * w.value().transpose());
    if (w.requires_grad()) w.node()->accumulate(x.value().transpose() * self.grad);
    if (b.requires_grad()) b.node()->accumulate(self.grad.colwise().sum());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) a.node()->accumulate(self.grad);
    if (b.requires_grad()) b.node()->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [a, b](Node& self) {
    if (a.requires_grad()) a.node()->accumulate(self.grad);
    if (b.requires_grad()) b.node()->accumulate(-self.grad);
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [a, s](Node& self) { a.node()->accumulate(self.grad * s); });
}

Var add_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw ShapeError("add_row: row shape");
  Mat out = x.value();
  out.rowwise() += row.value().row(0);
  return make_op(std::move(out), {x, row}, [x, row](Node& self) {
    if (x.requires_grad()) x.node()->accumulate(self.grad);
    if (row.requires_grad()) row.node()->accumulate(self.grad.colwise().sum());
  });
}

Var scale_rows(const Var& x, std::vector<double> factors) {
  if (static_cast<Eigen::Index>(factors.size()) != x.rows()) throw ShapeError("scale_rows: factor count");
  Mat out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) *= factors[r];
  return make_op(std::move(out), {x}, [x, f = std::move(factors)](Node& self) {
    Mat g = self.grad;
    for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) *= f[r];
    x.node()->accumulate(g);
  });
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var gelu(const Var& x) {
  Mat out(x.rows(), x.cols());
  const Mat& in = x.value();
  for (Eigen::Index i = 0; i < in.size(); ++i) {
    const double v = in.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return make_op(std::move(out), {x}, [x](Node& self) {
    const Mat& in = x.value();
    Mat g(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < in.size(); ++i) {
      const double v = in.data()[i];
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      g.data()[i] = d * self.grad.data()[i];
    }
    x.node()->accumulate(g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ShapeError("layer_norm: affine parameter shape");
  }
  Mat xhat(n, d);
  Vec inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = x.value().row(r);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (row.array() - mean) * inv_std(r);
  }
  Mat out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_op(std::move(out), {x, gamma, beta},
                 [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   const Mat& dy = self.grad;
                   if (gamma.requires_grad()) {
                     gamma.node()->accumulate((dy.array() * xhat.array()).colwise().sum().matrix());
                   }
                   if (beta.requires_grad()) beta.node()->accumulate(dy.colwise().sum());
                   if (x.requires_grad()) {
                     Mat dxhat = dy.array().rowwise() * gamma.value().row(0).array();
                     Mat dx(dy.rows(), dy.cols());
                     for (Eigen::Index r = 0; r < dy.rows(); ++r) {
                       const double m1 = dxhat.row(r).mean();
                       const double m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
                       dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
                     }
                     x.node()->accumulate(dx);
                   }
                 });
}

Var gather_rows(const Var& table, std::vector<int> index) {
  Mat out(static_cast<Eigen::Index>(index.size()), table.cols());
  for (size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= table.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(index[i]);
  }
  return make_op(std::move(out), {table}, [table, idx = std::move(index)](Node& self) {
    Mat g = Mat::Zero(table.rows(), table.cols());
    for (size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    table.node()->accumulate(g);
  });
}

Var group_mean(const Var& x, std::vector<int> group, int n_groups) {
  if (static_cast<Eigen::Index>(group.size()) != x.rows()) throw ShapeError("group_mean: group count");
  std::vector<double> counts(n_groups, 0.0);
  Mat out = Mat::Zero(n_groups, x.cols());
  for (size_t r = 0; r < group.size(); ++r) {
    out.row(group[r]) += x.value().row(static_cast<Eigen::Index>(r));
    counts[group[r]] += 1.0;
  }
  for (int g = 0; g < n_groups; ++g) {
    if (counts[g] == 0.0) throw ShapeError("group_mean: empty group");
    out.row(g) /= counts[g];
  }
  return make_op(std::move(out), {x},
                 [x, grp = std::move(group), cnt = std::move(counts)](Node& self) {
                   Mat g(x.rows(), x.cols());
                   for (size_t r = 0; r < grp.size(); ++r) {
                     g.row(static_cast<Eigen::Index>(r)) = self.grad.row(grp[r]) / cnt[grp[r]];
                   }
                   x.node()->accumulate(g);
                 });
}

Var sum(const Var& x) {
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  return make_op(std::move(out), {x}, [x](Node& self) {
    x.node()->accumulate(Mat::Constant(x.rows(), x.cols(), self.grad(0, 0)));
  });
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionLayout& layout, int heads,
              double dropout, Rng* rng) {
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const int D = static_cast<int>(q.cols());
  if (heads < 1 || D % heads != 0) throw ShapeError("attention: width not divisible by heads");
  const int G = layout.groups;
  const int L = layout.length;
  if (static_cast<int>(layout.rows.size()) != G * L) throw ShapeError("attention: layout size");
  const int dh = D / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool use_dropout = dropout > 0.0 && rng != nullptr;
  const double keep_scale = use_dropout ? 1.0 / (1.0 - dropout) : 1.0;

  // probs holds softmax weights, weights the post-dropout weights actually used.
  const size_t block = static_cast<size_t>(L) * L;
  std::vector<double> probs(static_cast<size_t>(G) * heads * block);
  std::vector<double> weights(use_dropout ? probs.size() : 0);
  Mat out = Mat::Zero(q.rows(), D);
  const Mat& Q = q.value();
  const Mat& Kv = k.value();
  const Mat& V = v.value();
  std::vector<double> scores(L);

  for (int g = 0; g < G; ++g) {
    const int* rows = layout.rows.data() + static_cast<size_t>(g) * L;
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * dh;
      double* P = probs.data() + (static_cast<size_t>(g) * heads + h) * block;
      double* W = use_dropout ? weights.data() + (static_cast<size_t>(g) * heads + h) * block : P;
      for (int s = 0; s < L; ++s) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int u = 0; u < L; ++u) {
          scores[u] = Q.row(rows[s]).segment(c0, dh).dot(Kv.row(rows[u]).segment(c0, dh)) * inv_sqrt;
          mx = std::max(mx, scores[u]);
        }
        double z = 0.0;
        for (int u = 0; u < L; ++u) {
          scores[u] = std::exp(scores[u] - mx);
          z += scores[u];
        }
        for (int u = 0; u < L; ++u) {
          P[s * L + u] = scores[u] / z;
          if (use_dropout) W[s * L + u] = uniform01(*rng) < dropout ? 0.0 : P[s * L + u] * keep_scale;
        }
        auto o = out.row(rows[s]).segment(c0, dh);
        for (int u = 0; u < L; ++u) o += W[s * L + u] * V.row(rows[u]).segment(c0, dh);
      }
    }
  }

  return make_op(
      std::move(out), {q, k, v},
      [q, k, v, layout, heads, dh, inv_sqrt, use_dropout, keep_scale, probs = std::move(probs),
       weights = std::move(weights)](Node& self) {
        const int G = layout.groups;
        const int L = layout.length;
        const size_t block = static_cast<size_t>(L) * L;
        const Mat& Q = q.value();
        const Mat& Kv = k.value();
        const Mat& V = v.value();
        const Mat& dO = self.grad;
        Mat dQ = Mat::Zero(Q.rows(), Q.cols());
        Mat dK = Mat::Zero(Q.rows(), Q.cols());
        Mat dV = Mat::Zero(Q.rows(), Q.cols());
        std::vector<double> dP(L);
        for (int g = 0; g < G; ++g) {
          const int* rows = layout.rows.data() + static_cast<size_t>(g) * L;
          for (int h = 0; h < heads; ++h) {
            const int c0 = h * dh;
            const size_t off = (static_cast<size_t>(g) * heads + h) * block;
            const double* P = probs.data() + off;
            const double* W = use_dropout ? weights.data() + off : P;
            for (int s = 0; s < L; ++s) {
              const auto dos = dO.row(rows[s]).segment(c0, dh);
              double dot = 0.0;
              for (int u = 0; u < L; ++u) {
                dV.row(rows[u]).segment(c0, dh) += W[s * L + u] * dos;
                double dw = dos.dot(V.row(rows[u]).segment(c0, dh));
                // Dropped entries pass no gradient; kept ones carry the rescale.
                if (use_dropout) dw = W[s * L + u] == 0.0 ? 0.0 : dw * keep_scale;
                dP[u] = dw;
                dot += dw * P[s * L + u];
              }
              for (int u = 0; u < L; ++u) {
                const double ds = P[s * L + u] * (dP[u] - dot) * inv_sqrt;
                if (ds == 0.0) continue;
                dQ.row(rows[s]).segment(c0, dh) += ds * Kv.row(rows[u]).segment(c0, dh);
                dK.row(rows[u]).segment(c0, dh) += ds * Q.row(rows[s]).segment(c0, dh);
              }
            }
          }
        }
        if (q.requires_grad()) q.node()->accumulate(dQ);
        if (k.requires_grad()) k.node()->accumulate(dK);
        if (v.requires_grad()) v.node()->accumulate(dV);
      });
}

}  // namespace moflow::ag
