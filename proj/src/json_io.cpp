// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/json_io.hpp"

#include <set>

#include "moflow/errors.hpp"

namespace moflow {

namespace {

Point2 point_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw FormatError(std::string(what) + " must be a 2-element numeric array");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  std::string bad;
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) bad += (bad.empty() ? "" : ", ") + section + "." + key;
  }
  if (!bad.empty()) throw ConfigError("unknown config key(s): " + bad);
}

}  // namespace

Json to_json(const Normalizer& n) {
  return Json{{"min_disp", {n.min_disp[0], n.min_disp[1]}}, {"max_disp", {n.max_disp[0], n.max_disp[1]}}};
}

Normalizer normalizer_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("min_disp") || !j.contains("max_disp")) {
    throw FormatError("normalizer needs min_disp and max_disp");
  }
  Normalizer n;
  n.min_disp = point_from_json(j.at("min_disp"), "normalizer.min_disp");
  n.max_disp = point_from_json(j.at("max_disp"), "normalizer.max_disp");
  return n;
}

Json to_json(const NetworkConfig& c) {
  return Json{{"d_model", c.d_model},           {"d_ff", c.d_ff},
              {"n_heads", c.n_heads},           {"n_enc_layers", c.n_enc_layers},
              {"n_dec_blocks", c.n_dec_blocks}, {"dropout", c.dropout},
              {"K", c.K},                       {"mask_k", c.mask_k},
              {"mask_m", c.mask_m}};
}

NetworkConfig network_config_from_json(const Json& j) {
  reject_unknown(j, {"d_model", "d_ff", "n_heads", "n_enc_layers", "n_dec_blocks", "dropout", "K", "mask_k", "mask_m"},
                 "network");
  NetworkConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_enc_layers = j.value("n_enc_layers", c.n_enc_layers);
  c.n_dec_blocks = j.value("n_dec_blocks", c.n_dec_blocks);
  c.dropout = j.value("dropout", c.dropout);
  c.K = j.value("K", c.K);
  c.mask_k = j.value("mask_k", c.mask_k);
  c.mask_m = j.value("mask_m", c.mask_m);
  return c;
}

Json to_json(const DataDims& d) {
  return Json{{"T_p", d.T_p}, {"T_f", d.T_f}, {"agent_types", d.agent_types}};
}

DataDims data_dims_from_json(const Json& j) {
  DataDims d;
  d.T_p = j.at("T_p").get<int>();
  d.T_f = j.at("T_f").get<int>();
  d.agent_types = j.at("agent_types").get<std::vector<std::string>>();
  return d;
}

Json matrix_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace moflow
