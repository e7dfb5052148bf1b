// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/network.hpp"

#include <cmath>

#include "moflow/errors.hpp"

namespace moflow {

void NetworkConfig::validate() const {
  std::vector<std::string> bad;
  if (d_model < 1) bad.push_back("network.d_model must be >= 1");
  if (d_ff < 1) bad.push_back("network.d_ff must be >= 1");
  if (n_heads < 1) bad.push_back("network.n_heads must be >= 1");
  if (n_heads >= 1 && d_model >= 1 && d_model % n_heads != 0) {
    bad.push_back("network.d_model must be divisible by network.n_heads");
  }
  if (n_enc_layers < 0) bad.push_back("network.n_enc_layers must be >= 0");
  if (n_dec_blocks < 0) bad.push_back("network.n_dec_blocks must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad.push_back("network.dropout must lie in [0, 1)");
  if (K < 1) bad.push_back("network.K must be >= 1");
  if (!std::isfinite(mask_k)) bad.push_back("network.mask_k must be finite");
  if (!std::isfinite(mask_m)) bad.push_back("network.mask_m must be finite");
  if (!bad.empty()) {
    std::string msg = "invalid network config:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
}

const char* to_string(NetworkKind kind) { return kind == NetworkKind::teacher ? "teacher" : "student"; }

NetworkKind network_kind_from_string(const std::string& s) {
  if (s == "teacher") return NetworkKind::teacher;
  if (s == "student") return NetworkKind::student;
  throw FormatError("unknown network kind '" + s + "'");
}

ag::Var& ParameterSet::add(std::string name, Mat init) {
  for (const auto& [n, v] : entries_) {
    if (n == name) throw ConfigError("duplicate parameter name " + name);
  }
  entries_.emplace_back(std::move(name), ag::Var::parameter(std::move(init)));
  return entries_.back().second;
}

const ag::Var& ParameterSet::at(const std::string& name) const {
  for (const auto& [n, v] : entries_) {
    if (n == name) return v;
  }
  throw ConfigError("no parameter named " + name);
}

std::size_t ParameterSet::total_size() const {
  std::size_t total = 0;
  for (const auto& [n, v] : entries_) total += static_cast<std::size_t>(v.value().size());
  return total;
}

void ParameterSet::zero_grad() {
  for (auto& [n, v] : entries_) v.zero_grad();
}

double mask_threshold(double t, double k, double m) { return 1.0 / (1.0 + std::exp(-k * (t - m))); }

Mat sinusoidal_encoding(const std::vector<double>& positions, int width, bool cos_first) {
  const int half = width / 2;
  Mat out = Mat::Zero(static_cast<Eigen::Index>(positions.size()), width);
  for (size_t r = 0; r < positions.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double s = std::sin(positions[r] * freq);
      const double c = std::cos(positions[r] * freq);
      out(static_cast<Eigen::Index>(r), i) = cos_first ? c : s;
      out(static_cast<Eigen::Index>(r), half + i) = cos_first ? s : c;
    }
  }
  return out;
}

Network::Linear Network::make_linear(const std::string& name, int in, int out, double gain, Rng& rng) {
  const double bound = gain / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  Linear l;
  l.w = params_.add(name + ".w", std::move(w));
  l.b = params_.add(name + ".b", Mat::Zero(1, out));
  return l;
}

Network::Norm Network::make_norm(const std::string& name, int width) {
  Norm n;
  n.gamma = params_.add(name + ".gamma", Mat::Ones(1, width));
  n.beta = params_.add(name + ".beta", Mat::Zero(1, width));
  return n;
}

Network::AttentionBlock Network::make_block(const std::string& name, Rng& rng) {
  const int d = config_.d_model;
  AttentionBlock blk;
  blk.ln1 = make_norm(name + ".ln1", d);
  blk.q = make_linear(name + ".q", d, d, 1.0, rng);
  blk.k = make_linear(name + ".k", d, d, 1.0, rng);
  blk.v = make_linear(name + ".v", d, d, 1.0, rng);
  blk.o = make_linear(name + ".o", d, d, 1.0, rng);
  blk.ln2 = make_norm(name + ".ln2", d);
  blk.ff1 = make_linear(name + ".ff1", d, config_.d_ff, 1.0, rng);
  blk.ff2 = make_linear(name + ".ff2", config_.d_ff, d, 1.0, rng);
  return blk;
}

Network::Network(NetworkConfig config, DataDims dims, NetworkKind kind, std::uint64_t seed)
    : config_(std::move(config)), dims_(std::move(dims)), kind_(kind) {
  config_.validate();
  if (dims_.T_p < 1 || dims_.T_f < 1) throw ConfigError("network dims: T_p and T_f must be >= 1");
  if (dims_.agent_types.empty()) throw ConfigError("network dims: at least one agent type required");
  Rng rng(seed);
  const int d = config_.d_model;

  ctx_fc1_ = make_linear("context.fc1", kContextFeatures * dims_.T_p, d, 1.0, rng);
  ctx_fc2_ = make_linear("context.fc2", d, d, 1.0, rng);
  {
    std::normal_distribution<double> dist(0.0, 0.1);
    Mat table(static_cast<Eigen::Index>(dims_.agent_types.size()), d);
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = dist(rng);
    type_table_ = params_.add("context.type_embedding", std::move(table));
  }
  for (int i = 0; i < config_.n_enc_layers; ++i) {
    encoder_.push_back(make_block("encoder." + std::to_string(i), rng));
  }
  encoder_norm_ = make_norm("encoder.norm", d);

  noise_fc1_ = make_linear("noise.fc1", 2 * dims_.T_f, d, 1.0, rng);
  noise_fc2_ = make_linear("noise.fc2", d, d, 1.0, rng);
  if (kind_ == NetworkKind::teacher) time_proj_ = make_linear("time.proj", d, d, 1.0, rng);

  for (int i = 0; i < config_.n_dec_blocks; ++i) {
    decoder_.push_back(make_block("decoder." + std::to_string(i) + ".k_axis", rng));
    decoder_.push_back(make_block("decoder." + std::to_string(i) + ".agent_axis", rng));
  }
  decoder_norm_ = make_norm("decoder.norm", d);
  waypoint_head_ = make_linear("head.waypoints", d, 2 * dims_.T_f, 1e-2, rng);
  logit_head_ = make_linear("head.logit", d, 1, 1.0, rng);
}

std::vector<int> Network::type_indices(const std::vector<std::string>& labels) const {
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& label : labels) {
    int found = -1;
    for (size_t i = 0; i < dims_.agent_types.size(); ++i) {
      if (dims_.agent_types[i] == label) found = static_cast<int>(i);
    }
    if (found < 0) throw ValidationError("unknown agent_type '" + label + "'");
    out.push_back(found);
  }
  return out;
}

ag::Var Network::apply(const Linear& l, const ag::Var& x) const { return ag::linear(x, l.w, l.b); }

ag::Var Network::apply(const Norm& n, const ag::Var& x) const {
  return ag::layer_norm(x, n.gamma, n.beta);
}

ag::Var Network::apply(const AttentionBlock& blk, const ag::Var& x, const ag::AttentionLayout& layout,
                       Mode mode, Rng* rng) const {
  const ag::Var h = apply(blk.ln1, x);
  const double p = mode == Mode::train ? config_.dropout : 0.0;
  const ag::Var attn =
      ag::attention(apply(blk.q, h), apply(blk.k, h), apply(blk.v, h), layout, config_.n_heads, p,
                    mode == Mode::train ? rng : nullptr);
  const ag::Var x1 = ag::add(x, apply(blk.o, attn));
  const ag::Var ff = apply(blk.ff2, ag::gelu(apply(blk.ff1, apply(blk.ln2, x1))));
  return ag::add(x1, ff);
}

ag::Var Network::encode_context(const Mat& context, const std::vector<int>& types, int B, int A,
                                Mode mode, Rng* rng) const {
  if (context.rows() != static_cast<Eigen::Index>(B) * A ||
      context.cols() != kContextFeatures * dims_.T_p) {
    throw ShapeError("encode_context: context is " + std::to_string(context.rows()) + "x" +
                     std::to_string(context.cols()) + ", expected " + std::to_string(B * A) + "x" +
                     std::to_string(kContextFeatures * dims_.T_p));
  }
  if (static_cast<int>(types.size()) != B * A) throw ShapeError("encode_context: type count");
  if (!context.allFinite()) throw ValidationError("encode_context: non-finite context");

  const ag::Var c = ag::Var::constant(context);
  ag::Var h = apply(ctx_fc2_, ag::gelu(apply(ctx_fc1_, c)));
  h = ag::add(h, ag::gather_rows(type_table_, types));

  ag::AttentionLayout layout{B, A, {}};
  layout.rows.resize(static_cast<size_t>(B) * A);
  for (int i = 0; i < B * A; ++i) layout.rows[i] = i;
  for (const auto& blk : encoder_) h = apply(blk, h, layout, mode, rng);
  return apply(encoder_norm_, h);
}

ag::Var Network::encode_context(const ContextTensor& ctx) const {
  return encode_context(ctx.values, type_indices(ctx.agent_types), 1, ctx.num_agents(), Mode::eval,
                        nullptr);
}

ag::Var Network::embed_flow_time(const std::vector<double>& t) const {
  if (kind_ != NetworkKind::teacher) throw ConfigError("the student network has no flow-time embedding");
  std::vector<double> scaled(t.size());
  for (size_t i = 0; i < t.size(); ++i) scaled[i] = 1000.0 * t[i];
  return apply(time_proj_, ag::Var::constant(sinusoidal_encoding(scaled, config_.d_model)));
}

BatchOutput Network::forward(const BatchInput& in, Mode mode, Rng* rng) const {
  ++*forward_calls_;
  const int B = in.B, A = in.A, K = in.K;
  const int d = config_.d_model;
  const Eigen::Index n_tok = static_cast<Eigen::Index>(B) * K * A;
  if (B < 1 || A < 1 || K < 1) throw ShapeError("forward: B, A, K must be >= 1");
  if (in.noisy.rows() != n_tok || in.noisy.cols() != 2 * dims_.T_f) {
    throw ShapeError("forward: noisy input is " + std::to_string(in.noisy.rows()) + "x" +
                     std::to_string(in.noisy.cols()) + ", expected " + std::to_string(n_tok) + "x" +
                     std::to_string(2 * dims_.T_f));
  }
  if (!in.noisy.value().allFinite()) throw ValidationError("forward: non-finite noisy input");
  const bool teacher = kind_ == NetworkKind::teacher;
  if (teacher && static_cast<int>(in.t.size()) != B) throw ShapeError("forward: need one flow time per scene");
  if (mode == Mode::train && rng == nullptr) throw ConfigError("forward: train mode needs a random source");

  const ag::Var h_enc = in.encoded ? in.encoded : encode_context(in.context, in.agent_types, B, A, mode, rng);
  if (h_enc.rows() != static_cast<Eigen::Index>(B) * A || h_enc.cols() != d) {
    throw ShapeError("forward: precomputed context encoding has the wrong shape");
  }

  BatchOutput out;
  out.masked.assign(B, false);
  ag::Var noise_emb = apply(noise_fc2_, ag::gelu(apply(noise_fc1_, in.noisy)));
  if (teacher && mode == Mode::train && in.apply_mask) {
    bool any = false;
    for (int b = 0; b < B; ++b) {
      out.masked[b] = uniform01(*rng) < mask_threshold(in.t[b], config_.mask_k, config_.mask_m);
      any = any || out.masked[b];
    }
    if (any) {
      std::vector<double> factors(n_tok, 1.0);
      for (int b = 0; b < B; ++b) {
        if (!out.masked[b]) continue;
        for (int r = b * K * A; r < (b + 1) * K * A; ++r) factors[r] = 0.0;
      }
      noise_emb = ag::scale_rows(noise_emb, std::move(factors));
    }
  }

  std::vector<int> enc_index(n_tok), scene_index(n_tok), pred_group(n_tok);
  std::vector<double> agent_pos(A), pred_pos(K);
  for (int a = 0; a < A; ++a) agent_pos[a] = a;
  for (int k = 0; k < K; ++k) pred_pos[k] = k;
  const Mat agent_pe = sinusoidal_encoding(agent_pos, d);
  const Mat pred_pe = sinusoidal_encoding(pred_pos, d, /*cos_first=*/true);
  Mat pe(n_tok, d);
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < K; ++k) {
      for (int a = 0; a < A; ++a) {
        const int r = (b * K + k) * A + a;
        enc_index[r] = b * A + a;
        scene_index[r] = b;
        pred_group[r] = b * K + k;
        pe.row(r) = agent_pe.row(a) + pred_pe.row(k);
      }
    }
  }

  ag::Var x = ag::add(noise_emb, ag::gather_rows(h_enc, enc_index));
  if (teacher) x = ag::add(x, ag::gather_rows(embed_flow_time(in.t), scene_index));
  x = ag::add(x, ag::Var::constant(std::move(pe)));

  // Attention over the K predictions of each (scene, agent), then over the
  // agents of each (scene, prediction).
  ag::AttentionLayout k_axis{B * A, K, std::vector<int>(n_tok)};
  ag::AttentionLayout agent_axis{B * K, A, std::vector<int>(n_tok)};
  for (int b = 0; b < B; ++b) {
    for (int a = 0; a < A; ++a) {
      for (int k = 0; k < K; ++k) k_axis.rows[(b * A + a) * K + k] = (b * K + k) * A + a;
    }
  }
  for (int i = 0; i < static_cast<int>(n_tok); ++i) agent_axis.rows[i] = i;

  for (size_t i = 0; i < decoder_.size(); ++i) {
    x = apply(decoder_[i], x, i % 2 == 0 ? k_axis : agent_axis, mode, rng);
  }
  x = apply(decoder_norm_, x);
  out.waypoints = apply(waypoint_head_, x);
  out.logits = ag::group_mean(apply(logit_head_, x), std::move(pred_group), B * K);
  return out;
}

BatchInput Network::make_batch(const std::vector<const ContextTensor*>& contexts, int K, Mat noisy,
                               std::vector<double> t) const {
  if (contexts.empty()) throw ShapeError("make_batch: no scenes");
  BatchInput in;
  in.B = static_cast<int>(contexts.size());
  in.A = contexts.front()->num_agents();
  in.K = K;
  in.context.resize(static_cast<Eigen::Index>(in.B) * in.A, kContextFeatures * dims_.T_p);
  for (int b = 0; b < in.B; ++b) {
    const ContextTensor& c = *contexts[b];
    if (c.num_agents() != in.A) throw ShapeError("make_batch: scenes in a batch must share the agent count");
    if (c.values.cols() != in.context.cols()) throw ShapeError("make_batch: context width mismatch");
    in.context.middleRows(static_cast<Eigen::Index>(b) * in.A, in.A) = c.values;
    const auto idx = type_indices(c.agent_types);
    in.agent_types.insert(in.agent_types.end(), idx.begin(), idx.end());
  }
  in.noisy = ag::Var::constant(std::move(noisy));
  in.t = std::move(t);
  return in;
}

namespace {

PredictionSet to_prediction_set(const BatchOutput& out, int K, int A) {
  PredictionSet p;
  p.K = K;
  p.A = A;
  p.waypoints = out.waypoints.value();
  p.logits = Eigen::Map<const Vec>(out.logits.value().data(), K);
  return p;
}

}  // namespace

PredictionSet Network::forward_teacher(const FlowState& state, const ContextTensor& ctx, Mode mode,
                                       Rng* rng) const {
  if (kind_ != NetworkKind::teacher) throw ConfigError("forward_teacher called on a student network");
  if (state.A != ctx.num_agents()) throw ShapeError("forward_teacher: agent count mismatch");
  ag::NoGradGuard no_grad;
  const BatchInput in = make_batch({&ctx}, state.K, state.values, {state.t});
  return to_prediction_set(forward(in, mode, rng), state.K, state.A);
}

PredictionSet Network::forward_student(const Mat& z, int K, const ContextTensor& ctx) const {
  if (kind_ != NetworkKind::student) throw ConfigError("forward_student called on a teacher network");
  ag::NoGradGuard no_grad;
  const BatchInput in = make_batch({&ctx}, K, z, {});
  return to_prediction_set(forward(in, Mode::eval, nullptr), K, ctx.num_agents());
}

}  // namespace moflow
