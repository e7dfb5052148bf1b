// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "moflow/errors.hpp"
#include "moflow/rng.hpp"

namespace moflow {

namespace {

const char* type_name(const Json& v) { return v.type_name(); }

/// Reads fields out of a JSON object, recording problems instead of throwing.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

  template <class Fn>
  void section(const Json& parent, const std::string& path, const std::string& key, Fn&& body) {
    if (!parent.contains(key)) {
      Json empty = Json::object();
      Scope s{&empty, join(path, key), {}};
      run(s, body);
      return;
    }
    const Json& obj = parent.at(key);
    if (!obj.is_object()) {
      errors_.push_back(join(path, key) + ": expected an object, got " + type_name(obj));
      return;
    }
    Scope s{&obj, join(path, key), {}};
    run(s, body);
  }

  template <class Fn>
  void root(const Json& doc, Fn&& body) {
    if (!doc.is_object()) {
      errors_.push_back(std::string("config: expected an object, got ") + type_name(doc));
      return;
    }
    Scope s{&doc, "", {}};
    run(s, body);
  }

  template <class T>
  void field(const std::string& key, T& out) {
    Scope& s = scopes_.back();
    s.seen.insert(key);
    if (!s.obj->contains(key)) return;
    const Json& v = s.obj->at(key);
    const std::string name = join(s.path, key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return mismatch(name, "a boolean", v);
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) return mismatch(name, "a nonnegative integer", v);
      out = v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return mismatch(name, "an integer", v);
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return mismatch(name, "a number", v);
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return mismatch(name, "a string", v);
      out = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) return mismatch(name, "an array of strings", v);
      for (const auto& e : v) {
        if (!e.is_string()) return mismatch(name, "an array of strings", v);
      }
      out = v.get<T>();
    } else {
      static_assert(std::is_same_v<T, std::vector<double>>);
      if (!v.is_array()) return mismatch(name, "an array of numbers", v);
      for (const auto& e : v) {
        if (!e.is_number()) return mismatch(name, "an array of numbers", v);
      }
      out = v.get<T>();
    }
  }

  void error(std::string msg) { errors_.push_back(std::move(msg)); }

 private:
  struct Scope {
    const Json* obj;
    std::string path;
    std::set<std::string> seen;
  };

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  template <class Fn>
  void run(Scope& s, Fn& body) {
    scopes_.push_back(s);
    body();
    Scope done = scopes_.back();
    scopes_.pop_back();
    for (const auto& [k, v] : done.obj->items()) {
      if (!done.seen.count(k)) errors_.push_back("unknown key '" + join(done.path, k) + "'");
    }
    if (!scopes_.empty()) {
      // Sections nested in the current scope count as known keys.
      const auto dot = done.path.rfind('.');
      scopes_.back().seen.insert(dot == std::string::npos ? done.path : done.path.substr(dot + 1));
    }
  }

  void mismatch(const std::string& name, const char* expected, const Json& v) {
    errors_.push_back(name + ": expected " + expected + ", got " + type_name(v));
  }

  std::vector<std::string>& errors_;
  std::vector<Scope> scopes_;
};

/// Writes fields into a JSON object.
class Writer {
 public:
  Json doc = Json::object();

  template <class Fn>
  void section(const Json&, const std::string&, const std::string& key, Fn&& body) {
    stack_.push_back(Json::object());
    body();
    Json obj = std::move(stack_.back());
    stack_.pop_back();
    current()[key] = std::move(obj);
  }

  template <class Fn>
  void root(const Json&, Fn&& body) {
    body();
  }

  template <class T>
  void field(const std::string& key, const T& value) {
    current()[key] = value;
  }

 private:
  Json& current() { return stack_.empty() ? doc : stack_.back(); }
  std::vector<Json> stack_;
};

/// One description of the document layout shared by parsing and dumping.
template <class V, class C>
void visit(V& v, const Json& doc, C& c) {
  const Json none = Json::object();
  auto sub = [&](const char* key) -> const Json& {
    return doc.is_object() && doc.contains(key) ? doc.at(key) : none;
  };
  v.root(doc, [&] {
    v.field("run_name", c.run_name);
    v.field("out_dir", c.out_dir);
    v.field("seed", c.seed);
    v.field("workers", c.workers);
    v.field("manifest", c.manifest);
    v.section(doc, "", "network", [&] {
      auto& n = c.network;
      v.field("d_model", n.d_model);
      v.field("d_ff", n.d_ff);
      v.field("n_heads", n.n_heads);
      v.field("n_enc_layers", n.n_enc_layers);
      v.field("n_dec_blocks", n.n_dec_blocks);
      v.field("dropout", n.dropout);
      v.field("K", n.K);
      v.field("mask_k", n.mask_k);
      v.field("mask_m", n.mask_m);
    });
    v.section(doc, "", "schedule", [&] {
      v.field("mu_t", c.schedule.mu_t);
      v.field("sigma_t", c.schedule.sigma_t);
    });
    v.section(doc, "", "train", [&] {
      auto& t = c.train;
      v.field("batch_size", t.batch_size);
      v.field("learning_rate", t.learning_rate);
      v.field("weight_decay", t.weight_decay);
      v.field("max_steps", t.max_steps);
      v.field("warmup_steps", t.warmup_steps);
      v.field("cosine_decay", t.cosine_decay);
      v.field("grad_clip", t.grad_clip);
      v.field("mask_enabled", t.mask_enabled);
      v.field("log_every", t.log_every);
      v.field("checkpoint_every", t.checkpoint_every);
    });
    v.section(doc, "", "sampler", [&] {
      v.field("T", c.sampler.T);
      v.field("p", c.sampler.p);
      v.field("continuous_time_map", c.sampler.continuous_time_map);
    });
    v.section(doc, "", "distill", [&] {
      auto& d = c.distill;
      v.field("m", d.m);
      v.field("batch_size", d.batch_size);
      v.field("learning_rate", d.learning_rate);
      v.field("weight_decay", d.weight_decay);
      v.field("max_steps", d.max_steps);
      v.field("warmup_steps", d.warmup_steps);
      v.field("cosine_decay", d.cosine_decay);
      v.field("grad_clip", d.grad_clip);
      v.field("log_every", d.log_every);
      v.field("checkpoint_every", d.checkpoint_every);
      v.field("teacher_samples", d.teacher_samples);
    });
    v.section(doc, "", "data", [&] {
      auto& d = c.data;
      v.field("n_train", d.n_train);
      v.field("n_val", d.n_val);
      v.field("n_test", d.n_test);
      v.section(sub("data"), "data", "synthetic", [&] {
        auto& s = d.synthetic;
        v.field("A", s.A);
        v.field("G", s.G);
        v.field("goal_separation", s.goal_separation);
        v.field("speed", s.speed);
        v.field("noise_sigma", s.noise_sigma);
        v.field("mode_switch_prob", s.mode_switch_prob);
        v.field("coupled_modes", s.coupled_modes);
        v.field("T_p", s.T_p);
        v.field("T_f", s.T_f);
        v.field("dt", s.dt);
        v.field("area", s.area);
        v.field("agent_types", s.agent_types);
      });
    });
    v.section(doc, "", "eval", [&] {
      v.field("horizons_s", c.eval.horizons_s);
      v.field("split", c.eval.split);
      v.field("chunk_size", c.eval.chunk_size);
    });
  });
}

/// Runs a validate() member and turns its ConfigError into listed lines.
template <class Fn>
void collect(std::vector<std::string>& errors, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    std::istringstream in(e.what());
    std::string line;
    bool any = false;
    while (std::getline(in, line)) {
      if (line.rfind("  ", 0) == 0) {
        errors.push_back(line.substr(2));
        any = true;
      }
    }
    if (!any) errors.push_back(e.what());
  }
}

}  // namespace

std::filesystem::path RunConfig::run_dir() const {
  const char* env = std::getenv("MOFLOW_OUT");
  const std::filesystem::path base = (env != nullptr && *env != '\0') ? std::filesystem::path(env) : std::filesystem::path(out_dir);
  return base / run_name;
}

std::filesystem::path RunConfig::manifest_path() const {
  return manifest.empty() ? run_dir() / "manifest.json" : std::filesystem::path(manifest);
}

RunConfig run_config_from_json(const Json& doc) {
  RunConfig c;
  std::vector<std::string> errors;
  Reader reader(errors);
  visit(reader, doc, c);

  if (c.run_name.empty() || c.run_name.find('/') != std::string::npos) {
    errors.push_back("run_name must be a nonempty name without '/'");
  }
  if (c.workers < 1) errors.push_back("workers must be >= 1");
  collect(errors, [&] { c.network.validate(); });
  collect(errors, [&] { c.schedule.validate(); });
  collect(errors, [&] { c.train.validate("train"); });
  collect(errors, [&] { c.sampler.validate(); });
  collect(errors, [&] { c.distill.validate(); });
  collect(errors, [&] { c.data.synthetic.validate(); });
  if (c.data.n_train < 1) errors.push_back("data.n_train must be >= 1");
  if (c.data.n_val < 0) errors.push_back("data.n_val must be >= 0");
  if (c.data.n_test < 0) errors.push_back("data.n_test must be >= 0");
  if (c.eval.horizons_s.empty()) errors.push_back("eval.horizons_s must not be empty");
  for (double h : c.eval.horizons_s) {
    if (!(h > 0.0)) errors.push_back("eval.horizons_s entries must be > 0");
  }
  if (c.eval.chunk_size < 1) errors.push_back("eval.chunk_size must be >= 1");
  if (!errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }

  c.train.seed = derive_seed(c.seed, "train");
  c.distill.seed = derive_seed(c.seed, "distill");
  c.data.synthetic.seed = derive_seed(c.seed, "data");
  return c;
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like dotted.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::exception&) {
    value = text;
  }
  Json* node = &doc;
  size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
    if (!node->is_object()) throw ConfigError("override '" + assignment + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  Json doc = Json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
      doc = Json::parse(in);
    } catch (const Json::exception& e) {
      throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

Json to_json(const RunConfig& config) {
  Writer w;
  const Json none = Json::object();
  visit(w, none, config);
  return w.doc;
}

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(config).dump())));
  return buf;
}

}  // namespace moflow
