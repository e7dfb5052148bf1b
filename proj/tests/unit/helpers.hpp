// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "moflow/core.hpp"
#include "moflow/rng.hpp"

namespace testutil {

inline moflow::Scene random_scene(moflow::Rng& rng, int A, int T_p, int T_f, const std::string& id = "s") {
  moflow::Scene s;
  s.scene_id = id;
  s.dt = 0.5;
  s.T_p = T_p;
  s.T_f = T_f;
  for (int a = 0; a < A; ++a) {
    moflow::AgentRecord r;
    r.agent_id = "a" + std::to_string(a);
    r.agent_type = "pedestrian";
    for (int f = 0; f < T_p; ++f) r.past.push_back({4 * moflow::standard_normal(rng), 4 * moflow::standard_normal(rng)});
    for (int f = 0; f < T_f; ++f) {
      r.future.push_back({4 * moflow::standard_normal(rng), 4 * moflow::standard_normal(rng)});
    }
    s.agents.push_back(std::move(r));
  }
  return s;
}

inline moflow::Mat random_mat(moflow::Rng& rng, long rows, long cols) {
  moflow::Mat m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = moflow::standard_normal(rng);
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("moflow_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
