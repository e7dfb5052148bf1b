// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "moflow/network.hpp"

namespace moflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to rebuild a trained network for evaluation.
struct Checkpoint {
  Network network;
  Normalizer normalizer;
  std::string config_hash;  // hex digest of the run config that produced it
};

/// Layout: 8-byte magic "MOFLOWCK", u32 format version, u64 header length,
/// JSON header (kind, network config, dims, normalizer, config hash,
/// parameter names and shapes), then every parameter as little-endian f64
/// in header order.
void save_checkpoint(const std::filesystem::path& path, const Network& network, const Normalizer& normalizer,
                     const std::string& config_hash);

/// Throws FormatError on bad magic, a different format version, or a
/// parameter table that does not match the architecture in the header.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace moflow
