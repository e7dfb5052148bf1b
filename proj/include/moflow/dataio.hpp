// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "moflow/core.hpp"

namespace moflow {

/// Expectations a scene file is checked against while reading. Unset
/// frame counts are fixed by the first scene; an empty type list accepts
/// any label.
struct SceneFormat {
  std::optional<int> T_p;
  std::optional<int> T_f;
  std::vector<std::string> agent_types;
};

/// Streams scenes from a JSON-lines file, one scene per line. Blank lines
/// are skipped. Errors carry the offending line number.
class SceneReader {
 public:
  explicit SceneReader(const std::filesystem::path& path, SceneFormat format = {});

  /// Next scene, or nullopt at end of file.
  std::optional<Scene> next();
  long line() const { return line_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  SceneFormat format_;
  long line_ = 0;
};

std::vector<Scene> read_scenes(const std::filesystem::path& path, SceneFormat format = {});
void write_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path);

/// Serializes one scene as a single JSON line (no trailing newline).
std::string scene_to_json_line(const Scene& scene);
/// Parses one JSON line; `line` is used for error messages only.
Scene scene_from_json_line(const std::string& text, const SceneFormat& format, long line = 0);

struct SyntheticConfig {
  int A = 2;                      // agents per scene
  int G = 2;                      // candidate goals per agent
  double goal_separation = 10.0;  // distance between opposite goals
  double speed = 2.0;             // nominal speed, units per second
  double noise_sigma = 0.1;       // per-frame positional noise std
  double mode_switch_prob = 0.5;  // probability of leaving the default goal
  bool coupled_modes = false;     // one switch decision per scene instead of per agent
  int T_p = 8;
  int T_f = 8;
  double dt = 0.5;
  double area = 10.0;  // start positions are uniform in [-area, area]^2
  std::vector<std::string> agent_types{"pedestrian"};
  std::uint64_t seed = 0;

  /// Throws ConfigError listing every violated field.
  void validate() const;
};

/// Goal-directed walkers. The past is a constant-velocity walk; at the
/// past/future boundary each agent heads for goal 0 or, with probability
/// mode_switch_prob, one of the other goals. Goals sit on a circle of
/// radius goal_separation / 2 around the constant-velocity continuation
/// point, goal 0 on the left of the heading; with G = 1 the single goal is
/// the continuation point itself. Scene i depends only on (config, i).
std::vector<Scene> generate_synthetic(const SyntheticConfig& config, int n_scenes, int first_index = 0);

/// Per-axis min/max of future displacement relative to the last observed
/// position, over every agent and frame. May be degenerate; Normalizer::check
/// rejects that at use.
Normalizer fit_normalizer(const std::vector<Scene>& scenes);

struct DatasetManifest {
  std::string name;
  int T_p = 0;
  int T_f = 0;
  double dt = 0.0;
  std::vector<std::string> agent_types;
  std::map<std::string, std::string> splits;  // split name -> path relative to the manifest
  Normalizer normalizer;

  SceneFormat format() const { return {T_p, T_f, agent_types}; }
};

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Loads a manifest. With `verify`, every split file must exist and parse
/// against the manifest's frame counts and type set.
DatasetManifest read_manifest(const std::filesystem::path& path, bool verify = true);
/// Absolute path of a split listed in the manifest at `manifest_path`.
std::filesystem::path split_path(const DatasetManifest& manifest, const std::filesystem::path& manifest_path,
                                 const std::string& split);

}  // namespace moflow
