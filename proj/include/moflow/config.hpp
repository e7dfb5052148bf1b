// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "moflow/dataio.hpp"
#include "moflow/json_io.hpp"
#include "moflow/sampler.hpp"
#include "moflow/student.hpp"
#include "moflow/teacher.hpp"

namespace moflow {

struct DataConfig {
  SyntheticConfig synthetic;
  int n_train = 5000;
  int n_val = 500;
  int n_test = 500;
};

struct EvalConfig {
  std::vector<double> horizons_s{1.0, 2.0, 3.0, 4.0};
  std::string split = "test";
  int chunk_size = 64;  // scenes per network call
};

/// Everything a command needs. Subsystem seeds are derived from `seed` while
/// parsing, so a config file carries one root seed only.
struct RunConfig {
  std::string run_name = "default";
  std::string out_dir = "runs";
  std::uint64_t seed = 0;
  int workers = 1;
  std::string manifest;  // empty: <run dir>/manifest.json
  NetworkConfig network;
  TimeSchedule schedule;
  TrainConfig train;
  SamplerConfig sampler;
  DistillConfig distill;
  DataConfig data;
  EvalConfig eval;

  /// <out>/<run_name>, where MOFLOW_OUT replaces out_dir when set.
  std::filesystem::path run_dir() const;
  std::filesystem::path manifest_path() const;
};

/// Parses a config document over the defaults. Unknown keys, type errors and
/// range violations are collected and raised together as one ConfigError.
RunConfig run_config_from_json(const Json& doc);

/// Reads a JSON file (or starts from {} for an empty path), applies
/// "dotted.path=value" overrides, then parses. Values are read as JSON, falling
/// back to a plain string.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Applies one "dotted.path=value" override to a document.
void apply_override(Json& doc, const std::string& assignment);

/// Canonical document with every field, in a stable key order.
Json to_json(const RunConfig& config);

/// Hex FNV-1a digest of the canonical document.
std::string config_hash(const RunConfig& config);

}  // namespace moflow
