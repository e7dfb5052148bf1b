// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "moflow/autograd.hpp"
#include "moflow/core.hpp"

namespace moflow {

struct NetworkConfig {
  int d_model = 128;
  int d_ff = 512;
  int n_heads = 8;
  int n_enc_layers = 4;
  int n_dec_blocks = 4;
  double dropout = 0.1;  // attention dropout
  int K = 20;
  double mask_k = 20.0;  // steepness of the masking threshold
  double mask_m = 0.5;   // midpoint of the masking threshold

  /// Throws ConfigError listing every violated field.
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

/// Dataset dimensions a network is built for.
struct DataDims {
  int T_p = 0;
  int T_f = 0;
  std::vector<std::string> agent_types;

  bool operator==(const DataDims&) const = default;
};

enum class NetworkKind { teacher, student };
enum class Mode { train, eval };

const char* to_string(NetworkKind kind);
NetworkKind network_kind_from_string(const std::string& s);

/// Named parameter tensors in a fixed, construction-defined order.
class ParameterSet {
 public:
  ag::Var& add(std::string name, Mat init);
  const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, ag::Var>>& entries() { return entries_; }
  const ag::Var& at(const std::string& name) const;
  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, ag::Var>> entries_;
};

/// Probability of masking the noise embedding at flow time t:
/// 1 / (1 + exp(-k (t - m))).
double mask_threshold(double t, double k, double m);

/// A batch of B scenes sharing agent count A and K components.
/// Token rows are ordered (b * K + k) * A + a.
struct BatchInput {
  int B = 0;
  int A = 0;
  int K = 0;
  Mat context;                   // (B*A) x 6T_p
  std::vector<int> agent_types;  // B*A indices into DataDims::agent_types
  ag::Var noisy;                 // (B*K*A) x 2T_f, Y^t for the teacher, Z for the student
  std::vector<double> t;         // B flow times; ignored by the student
  bool apply_mask = true;        // honoured only in train mode for the teacher
  ag::Var encoded;               // optional precomputed encode_context output (eval reuse)
};

struct BatchOutput {
  ag::Var waypoints;         // (B*K*A) x 2T_f, normalized displacement space
  ag::Var logits;            // (B*K) x 1
  std::vector<bool> masked;  // per scene, whether the noise embedding was zeroed
};

/// D_theta (teacher) or its time-free one-step counterpart G_phi (student):
/// context encoder, noise embedding, optional flow-time embedding and a
/// decoder of factorized self-attention over the K and agent axes.
class Network {
 public:
  Network(NetworkConfig config, DataDims dims, NetworkKind kind, std::uint64_t seed);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  const NetworkConfig& config() const { return config_; }
  const DataDims& dims() const { return dims_; }
  NetworkKind kind() const { return kind_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Maps agent type labels to table rows; throws ValidationError on unknown labels.
  std::vector<int> type_indices(const std::vector<std::string>& labels) const;

  /// H_enc for a batch of contexts laid out as (B*A) rows.
  ag::Var encode_context(const Mat& context, const std::vector<int>& types, int B, int A, Mode mode,
                         Rng* rng) const;
  ag::Var encode_context(const ContextTensor& ctx) const;

  /// Sinusoidal features of 1000 t followed by the learned projection; B x d_model.
  ag::Var embed_flow_time(const std::vector<double>& t) const;

  BatchOutput forward(const BatchInput& input, Mode mode, Rng* rng) const;

  /// Single-scene teacher call D_theta(Y^t, C, t).
  PredictionSet forward_teacher(const FlowState& state, const ContextTensor& ctx, Mode mode,
                                Rng* rng) const;
  /// Single-scene student call G_phi(Z, C); z is (K*A) x 2T_f.
  PredictionSet forward_student(const Mat& z, int K, const ContextTensor& ctx) const;

  /// Number of forward() invocations since construction or the last reset.
  long forward_calls() const { return forward_calls_->load(); }
  void reset_forward_calls() { *forward_calls_ = 0; }

  /// Builds a BatchInput from scenes that share A. `noisy` is stacked in scene order.
  BatchInput make_batch(const std::vector<const ContextTensor*>& contexts, int K, Mat noisy,
                        std::vector<double> t) const;

 private:
  struct Linear {
    ag::Var w, b;
  };
  struct Norm {
    ag::Var gamma, beta;
  };
  struct AttentionBlock {
    Norm ln1;
    Linear q, k, v, o;
    Norm ln2;
    Linear ff1, ff2;
  };

  Linear make_linear(const std::string& name, int in, int out, double gain, Rng& rng);
  Norm make_norm(const std::string& name, int width);
  AttentionBlock make_block(const std::string& name, Rng& rng);

  ag::Var apply(const Linear& l, const ag::Var& x) const;
  ag::Var apply(const Norm& n, const ag::Var& x) const;
  ag::Var apply(const AttentionBlock& blk, const ag::Var& x, const ag::AttentionLayout& layout,
                Mode mode, Rng* rng) const;

  NetworkConfig config_;
  DataDims dims_;
  NetworkKind kind_;
  ParameterSet params_;

  Linear ctx_fc1_, ctx_fc2_;
  ag::Var type_table_;
  std::vector<AttentionBlock> encoder_;
  Norm encoder_norm_;
  Linear noise_fc1_, noise_fc2_;
  Linear time_proj_;  // teacher only
  std::vector<AttentionBlock> decoder_;  // 2 per block: K axis then agent axis
  Norm decoder_norm_;
  Linear waypoint_head_, logit_head_;

  std::shared_ptr<std::atomic<long>> forward_calls_ = std::make_shared<std::atomic<long>>(0);
};

/// Fixed sinusoidal encoding of integer or real positions; rows = positions.
Mat sinusoidal_encoding(const std::vector<double>& positions, int width, bool cos_first = false);

}  // namespace moflow
