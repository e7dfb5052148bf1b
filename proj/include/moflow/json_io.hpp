// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "moflow/core.hpp"
#include "moflow/network.hpp"

namespace moflow {

using Json = nlohmann::json;

Json to_json(const Normalizer& n);
Normalizer normalizer_from_json(const Json& j);

Json to_json(const NetworkConfig& c);
/// Strict: unknown keys raise ConfigError; missing keys keep defaults.
NetworkConfig network_config_from_json(const Json& j);

Json to_json(const DataDims& d);
DataDims data_dims_from_json(const Json& j);

/// Rows of an (R x C) matrix as nested arrays.
Json matrix_to_json(const Mat& m);

}  // namespace moflow
