// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/sampler.hpp"

#include <cmath>

#include "moflow/errors.hpp"
#include "moflow/json_io.hpp"

namespace moflow {

void SamplerConfig::validate() const {
  std::vector<std::string> bad;
  if (T < 1) bad.push_back("sampler.T must be >= 1");
  if (T > 500) bad.push_back("sampler.T must be <= 500");
  if (!(p >= 1.0)) bad.push_back("sampler.p must be >= 1");
  if (!bad.empty()) {
    std::string msg = "invalid sampler config:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
}

double time_map(int n, const SamplerConfig& config) {
  config.validate();
  if (n < 0 || n > config.T) {
    throw ValidationError("time_map: n = " + std::to_string(n) + " outside [0, " + std::to_string(config.T) + "]");
  }
  if (n == 0) return 0.0;
  if (n == config.T) return 1.0;
  const double T = config.T;
  const double half = T / 2.0;
  if (n <= half) return n / 1000.0;
  const double start = config.continuous_time_map ? T / 2000.0 : T / 500.0;
  return start + (1.0 - start) * std::pow(n - half, config.p) / std::pow(half, config.p);
}

Mat kshot_vector_field(const Mat& S, const Mat& y_t, double t) {
  if (S.rows() != y_t.rows() || S.cols() != y_t.cols()) throw ShapeError("kshot_vector_field: shape mismatch");
  if (!(t < 1.0)) throw ValidationError("kshot_vector_field: t must be < 1");
  return (S - y_t) / (1.0 - t);
}

Integration integrate(const Denoiser& denoiser, Mat y0, const SamplerConfig& config) {
  config.validate();
  Integration out;
  out.state = std::move(y0);
  for (int n = 0; n < config.T; ++n) {
    const double t_now = time_map(n, config);
    const double t_next = time_map(n + 1, config);
    Denoised d = denoiser(out.state, t_now);
    ++out.nfe;
    if (d.waypoints.rows() != out.state.rows() || d.waypoints.cols() != out.state.cols()) {
      throw ShapeError("integrate: denoiser output shape differs from the state");
    }
    out.logits = std::move(d.logits);
    if (t_next > t_now) {
      if (t_next == 1.0) {
        // Y + (1 - t)(S - Y)/(1 - t) = S, taken symbolically.
        out.state = std::move(d.waypoints);
      } else {
        out.state += (t_next - t_now) * kshot_vector_field(d.waypoints, out.state, t_now);
      }
    }
    if (!out.state.allFinite()) {
      throw SamplingFault("non-finite ODE state at step " + std::to_string(n), n);
    }
  }
  return out;
}

Vec softmax(const Vec& logits) {
  if (logits.size() == 0) return logits;
  const double mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp();
  return e / e.sum();
}

std::vector<SceneSample> sample_batch(const Network& teacher, const std::vector<const Scene*>& scenes,
                                      const Normalizer& norm, const SamplerConfig& config, int K,
                                      const std::vector<std::uint64_t>& noise_seeds) {
  if (teacher.kind() != NetworkKind::teacher) throw ConfigError("sample_batch needs a teacher network");
  if (scenes.empty()) return {};
  if (noise_seeds.size() != scenes.size()) throw ShapeError("sample_batch: one noise seed per scene required");
  const int B = static_cast<int>(scenes.size());
  const int A = scenes.front()->num_agents();
  const int T_f = teacher.dims().T_f;

  std::vector<ContextTensor> contexts;
  contexts.reserve(B);
  std::vector<const ContextTensor*> ctx_ptrs;
  Mat y0(static_cast<Eigen::Index>(B) * K * A, 2 * T_f);
  for (int b = 0; b < B; ++b) {
    if (scenes[b]->T_f != T_f) throw ShapeError("sample_batch: scene T_f differs from the network");
    contexts.push_back(build_context(*scenes[b]));
    Rng rng(noise_seeds[b]);
    y0.middleRows(static_cast<Eigen::Index>(b) * K * A, static_cast<Eigen::Index>(K) * A) =
        tied_noise(K, A, T_f, rng);
  }
  for (const auto& c : contexts) ctx_ptrs.push_back(&c);

  ag::NoGradGuard no_grad;
  // The context encoding does not depend on the flow state; compute it once.
  const BatchInput proto = teacher.make_batch(ctx_ptrs, K, Mat::Zero(y0.rows(), y0.cols()), {});
  const ag::Var encoded = teacher.encode_context(proto.context, proto.agent_types, B, A, Mode::eval, nullptr);
  const Denoiser denoiser = [&](const Mat& y_t, double t) {
    BatchInput in = proto;
    in.noisy = ag::Var::constant(y_t);
    in.t.assign(B, t);
    in.encoded = encoded;
    const BatchOutput o = teacher.forward(in, Mode::eval, nullptr);
    return Denoised{o.waypoints.value(), o.logits.value()};
  };
  const Integration result = integrate(denoiser, std::move(y0), config);

  std::vector<SceneSample> out;
  out.reserve(B);
  for (int b = 0; b < B; ++b) {
    SceneSample s;
    s.scene_id = scenes[b]->scene_id;
    s.K = K;
    s.A = A;
    s.T_f = T_f;
    s.predictions = denormalize_future(
        result.state.middleRows(static_cast<Eigen::Index>(b) * K * A, static_cast<Eigen::Index>(K) * A), *scenes[b],
        norm);
    s.logits = Eigen::Map<const Vec>(result.logits.data() + static_cast<Eigen::Index>(b) * K, K);
    s.probs = softmax(s.logits);
    out.push_back(std::move(s));
  }
  return out;
}

std::string sample_to_json_line(const SceneSample& s) {
  Json preds = Json::array();
  for (int k = 0; k < s.K; ++k) {
    Json agents = Json::array();
    for (int a = 0; a < s.A; ++a) {
      Json frames = Json::array();
      const auto row = s.predictions.row(static_cast<Eigen::Index>(k) * s.A + a);
      for (int f = 0; f < s.T_f; ++f) frames.push_back({row(2 * f), row(2 * f + 1)});
      agents.push_back(std::move(frames));
    }
    preds.push_back(std::move(agents));
  }
  Json probs = Json::array();
  for (Eigen::Index k = 0; k < s.probs.size(); ++k) probs.push_back(s.probs(k));
  return Json{{"scene_id", s.scene_id}, {"predictions", std::move(preds)}, {"probs", std::move(probs)}}.dump();
}

SceneSample sample_from_json_line(const std::string& text, long line) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line);
  }
  try {
    SceneSample s;
    s.scene_id = j.at("scene_id").get<std::string>();
    const Json& preds = j.at("predictions");
    s.K = static_cast<int>(preds.size());
    if (s.K < 1) throw ParseError("predictions must hold at least one component", line);
    s.A = static_cast<int>(preds[0].size());
    if (s.A < 1) throw ParseError("predictions must hold at least one agent", line);
    s.T_f = static_cast<int>(preds[0][0].size());
    s.predictions.resize(static_cast<Eigen::Index>(s.K) * s.A, 2 * s.T_f);
    for (int k = 0; k < s.K; ++k) {
      if (static_cast<int>(preds[k].size()) != s.A) throw ParseError("ragged agent axis in predictions", line);
      for (int a = 0; a < s.A; ++a) {
        const Json& frames = preds[k][a];
        if (static_cast<int>(frames.size()) != s.T_f) throw ParseError("ragged frame axis in predictions", line);
        for (int f = 0; f < s.T_f; ++f) {
          const Eigen::Index r = static_cast<Eigen::Index>(k) * s.A + a;
          s.predictions(r, 2 * f) = frames[f].at(0).get<double>();
          s.predictions(r, 2 * f + 1) = frames[f].at(1).get<double>();
        }
      }
    }
    const auto probs = j.at("probs").get<std::vector<double>>();
    if (static_cast<int>(probs.size()) != s.K) throw ParseError("probs length differs from K", line);
    s.probs = Eigen::Map<const Vec>(probs.data(), s.K);
    s.logits = s.probs.array().log();
    return s;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("bad sample record: ") + e.what(), line);
  }
}

SceneSample sample(const Network& teacher, const Scene& scene, const Normalizer& norm, const SamplerConfig& config,
                   int K, Rng& rng) {
  const std::uint64_t seed = rng();
  return sample_batch(teacher, {&scene}, norm, config, K, {seed}).front();
}

}  // namespace moflow
