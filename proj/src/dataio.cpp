// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "moflow/errors.hpp"
#include "moflow/json_io.hpp"

namespace moflow {

namespace fs = std::filesystem;

namespace {

std::vector<Point2> points_from_json(const Json& j, const std::string& what, long line) {
  if (!j.is_array()) throw ParseError(what + " must be an array of [x, y] pairs", line);
  std::vector<Point2> out;
  out.reserve(j.size());
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ParseError(what + " must contain [x, y] numeric pairs", line);
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

Json points_to_json(const std::vector<Point2>& pts) {
  Json arr = Json::array();
  for (const auto& p : pts) arr.push_back({p[0], p[1]});
  return arr;
}

}  // namespace

Scene scene_from_json_line(const std::string& text, const SceneFormat& format, long line) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line);
  }
  if (!j.is_object()) throw ParseError("scene must be a JSON object", line);
  for (const char* key : {"scene_id", "dt", "agents"}) {
    if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'", line);
  }
  Scene scene;
  try {
    scene.scene_id = j.at("scene_id").get<std::string>();
    scene.dt = j.at("dt").get<double>();
  } catch (const Json::exception&) {
    throw ParseError("scene_id must be a string and dt a number", line);
  }
  const Json& agents = j.at("agents");
  if (!agents.is_array() || agents.empty()) throw ParseError("agents must be a non-empty array", line);
  for (const auto& a : agents) {
    if (!a.is_object() || !a.contains("id") || !a.contains("type") || !a.contains("past") || !a.contains("future")) {
      throw ParseError("agent needs id, type, past, future", line);
    }
    AgentRecord rec;
    try {
      rec.agent_id = a.at("id").get<std::string>();
      rec.agent_type = a.at("type").get<std::string>();
    } catch (const Json::exception&) {
      throw ParseError("agent id and type must be strings", line);
    }
    rec.past = points_from_json(a.at("past"), "past", line);
    rec.future = points_from_json(a.at("future"), "future", line);
    if (!format.agent_types.empty() &&
        std::find(format.agent_types.begin(), format.agent_types.end(), rec.agent_type) == format.agent_types.end()) {
      throw ParseError("type error: unknown agent_type '" + rec.agent_type + "'", line);
    }
    scene.agents.push_back(std::move(rec));
  }
  scene.T_p = format.T_p.value_or(static_cast<int>(scene.agents.front().past.size()));
  scene.T_f = format.T_f.value_or(static_cast<int>(scene.agents.front().future.size()));
  try {
    validate_scene(scene);
  } catch (const ValidationError& e) {
    throw ParseError(std::string("shape error: ") + e.what(), line);
  }
  return scene;
}

std::string scene_to_json_line(const Scene& scene) {
  Json agents = Json::array();
  for (const auto& a : scene.agents) {
    agents.push_back(Json{{"id", a.agent_id},
                          {"type", a.agent_type},
                          {"past", points_to_json(a.past)},
                          {"future", points_to_json(a.future)}});
  }
  Json j{{"scene_id", scene.scene_id}, {"dt", scene.dt}, {"agents", std::move(agents)}};
  return j.dump();
}

SceneReader::SceneReader(const fs::path& path, SceneFormat format)
    : path_(path), in_(path), format_(std::move(format)) {
  if (!in_) throw DatasetError("cannot open scene file " + path.string());
}

std::optional<Scene> SceneReader::next() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    Scene scene = scene_from_json_line(text, format_, line_);
    // The first scene fixes the frame counts for the rest of the file.
    if (!format_.T_p) format_.T_p = scene.T_p;
    if (!format_.T_f) format_.T_f = scene.T_f;
    return scene;
  }
  return std::nullopt;
}

std::vector<Scene> read_scenes(const fs::path& path, SceneFormat format) {
  SceneReader reader(path, std::move(format));
  std::vector<Scene> out;
  while (auto scene = reader.next()) out.push_back(std::move(*scene));
  return out;
}

void write_scenes(const std::vector<Scene>& scenes, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write scene file " + path.string());
  for (const auto& s : scenes) out << scene_to_json_line(s) << '\n';
  if (!out) throw DatasetError("write failed for " + path.string());
}

void SyntheticConfig::validate() const {
  std::vector<std::string> bad;
  if (A < 1) bad.push_back("synthetic.A must be >= 1");
  if (G < 1) bad.push_back("synthetic.G must be >= 1");
  if (!(goal_separation > 0.0)) bad.push_back("synthetic.goal_separation must be > 0");
  if (!(speed >= 0.0)) bad.push_back("synthetic.speed must be >= 0");
  if (!(noise_sigma >= 0.0)) bad.push_back("synthetic.noise_sigma must be >= 0");
  if (!(mode_switch_prob >= 0.0 && mode_switch_prob <= 1.0)) bad.push_back("synthetic.mode_switch_prob must lie in [0, 1]");
  if (T_p < 1) bad.push_back("synthetic.T_p must be >= 1");
  if (T_f < 1) bad.push_back("synthetic.T_f must be >= 1");
  if (!(dt > 0.0)) bad.push_back("synthetic.dt must be > 0");
  if (!(area >= 0.0)) bad.push_back("synthetic.area must be >= 0");
  if (agent_types.empty()) bad.push_back("synthetic.agent_types must not be empty");
  if (!bad.empty()) {
    std::string msg = "invalid synthetic config:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
}

std::vector<Scene> generate_synthetic(const SyntheticConfig& config, int n_scenes, int first_index) {
  config.validate();
  std::vector<Scene> scenes;
  scenes.reserve(std::max(n_scenes, 0));
  const double two_pi = 2.0 * std::numbers::pi;
  const double radius = config.goal_separation / 2.0;
  for (int i = 0; i < n_scenes; ++i) {
    const int index = first_index + i;
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(index)));
    Scene scene;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%07d", index);
    scene.scene_id = id;
    scene.dt = config.dt;
    scene.T_p = config.T_p;
    scene.T_f = config.T_f;

    const bool scene_switch = uniform01(rng) < config.mode_switch_prob;
    for (int a = 0; a < config.A; ++a) {
      AgentRecord rec;
      rec.agent_id = "agent" + std::to_string(a);
      rec.agent_type = config.agent_types[a % config.agent_types.size()];
      const double x0 = config.area * (2.0 * uniform01(rng) - 1.0);
      const double y0 = config.area * (2.0 * uniform01(rng) - 1.0);
      const double heading = two_pi * uniform01(rng);
      const double vx = config.speed * std::cos(heading);
      const double vy = config.speed * std::sin(heading);
      const bool agent_switch = uniform01(rng) < config.mode_switch_prob;
      const bool switched = config.coupled_modes ? scene_switch : agent_switch;

      int goal = 0;
      if (switched && config.G > 1) {
        goal = 1 + static_cast<int>(uniform01(rng) * (config.G - 1));
        goal = std::min(goal, config.G - 1);
      }
      const double horizon = config.T_f * config.dt;
      double gx = x0 + vx * horizon;
      double gy = y0 + vy * horizon;
      if (config.G > 1) {
        const double angle = heading + std::numbers::pi / 2.0 + two_pi * goal / config.G;
        gx += radius * std::cos(angle);
        gy += radius * std::sin(angle);
      }

      for (int f = 0; f < config.T_p; ++f) {
        const double back = (config.T_p - 1 - f) * config.dt;
        rec.past.push_back({x0 - vx * back, y0 - vy * back});
      }
      for (int f = 1; f <= config.T_f; ++f) {
        const double frac = static_cast<double>(f) / config.T_f;
        rec.future.push_back({x0 + frac * (gx - x0), y0 + frac * (gy - y0)});
      }
      if (config.noise_sigma > 0.0) {
        for (auto* track : {&rec.past, &rec.future}) {
          for (auto& p : *track) {
            p[0] += config.noise_sigma * standard_normal(rng);
            p[1] += config.noise_sigma * standard_normal(rng);
          }
        }
      }
      scene.agents.push_back(std::move(rec));
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

Normalizer fit_normalizer(const std::vector<Scene>& scenes) {
  if (scenes.empty()) throw DatasetError("fit_normalizer: no training scenes");
  Normalizer n;
  n.min_disp = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  n.max_disp = {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& s : scenes) {
    for (const auto& a : s.agents) {
      const Point2& last = a.past.back();
      for (const auto& p : a.future) {
        for (int axis = 0; axis < 2; ++axis) {
          const double rel = p[axis] - last[axis];
          n.min_disp[axis] = std::min(n.min_disp[axis], rel);
          n.max_disp[axis] = std::max(n.max_disp[axis], rel);
        }
      }
    }
  }
  return n;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  Json splits = Json::object();
  for (const auto& [name, file] : m.splits) splits[name] = file;
  Json j{{"name", m.name},
         {"T_p", m.T_p},
         {"T_f", m.T_f},
         {"dt", m.dt},
         {"agent_types", m.agent_types},
         {"splits", std::move(splits)},
         {"normalizer", to_json(m.normalizer)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const fs::path& path, bool verify) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open manifest " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.T_p = j.at("T_p").get<int>();
    m.T_f = j.at("T_f").get<int>();
    m.dt = j.at("dt").get<double>();
    m.agent_types = j.at("agent_types").get<std::vector<std::string>>();
    for (const auto& [name, file] : j.at("splits").items()) m.splits[name] = file.get<std::string>();
    m.normalizer = normalizer_from_json(j.at("normalizer"));
  } catch (const Json::exception& e) {
    throw FormatError(std::string("manifest ") + path.string() + ": " + e.what());
  }
  if (verify) {
    for (const auto& [name, file] : m.splits) {
      const fs::path p = split_path(m, path, name);
      if (!fs::exists(p)) throw DatasetError("split '" + name + "' file missing: " + p.string());
      SceneReader reader(p, m.format());
      while (reader.next()) {
      }
    }
  }
  return m;
}

fs::path split_path(const DatasetManifest& m, const fs::path& manifest_path, const std::string& split) {
  const auto it = m.splits.find(split);
  if (it == m.splits.end()) throw DatasetError("manifest has no split named '" + split + "'");
  const fs::path p(it->second);
  return p.is_absolute() ? p : manifest_path.parent_path() / p;
}

}  // namespace moflow
