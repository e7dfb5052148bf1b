// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#include "moflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "moflow/errors.hpp"
#include "moflow/json_io.hpp"

namespace moflow {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'F', 'L', 'O', 'W', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& network, const Normalizer& normalizer,
                     const std::string& config_hash) {
  Json params = Json::array();
  for (const auto& [name, var] : network.params().entries()) {
    params.push_back(Json{{"name", name}, {"rows", var.rows()}, {"cols", var.cols()}});
  }
  const Json header{{"kind", to_string(network.kind())},
                    {"network", to_json(network.config())},
                    {"dims", to_json(network.dims())},
                    {"normalizer", to_json(normalizer)},
                    {"config_hash", config_hash},
                    {"params", std::move(params)}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, var] : network.params().entries()) {
    const Mat& v = var.value();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw FormatError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError(path.string() + " is not a checkpoint file");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto len = read_pod<std::uint64_t>(in);
  if (len > (1ULL << 30)) throw FormatError("checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("checkpoint truncated");

  Json header;
  try {
    header = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  Checkpoint ckpt{Network(network_config_from_json(header.at("network")), data_dims_from_json(header.at("dims")),
                          network_kind_from_string(header.at("kind").get<std::string>()), 0),
                  normalizer_from_json(header.at("normalizer")), header.at("config_hash").get<std::string>()};

  auto& entries = ckpt.network.params().entries();
  const Json& table = header.at("params");
  if (table.size() != entries.size()) throw FormatError("checkpoint parameter count does not match the architecture");
  for (size_t i = 0; i < entries.size(); ++i) {
    auto& [name, var] = entries[i];
    if (table[i].at("name").get<std::string>() != name || table[i].at("rows").get<Eigen::Index>() != var.rows() ||
        table[i].at("cols").get<Eigen::Index>() != var.cols()) {
      throw FormatError("checkpoint parameter " + std::to_string(i) + " does not match '" + name + "'");
    }
    Mat& v = var.mutable_value();
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw FormatError("checkpoint truncated while reading " + name);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint parameters");
  return ckpt;
}

}  // namespace moflow
