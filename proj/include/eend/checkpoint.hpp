// Copyright 2026 The eend-dat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Single-file checkpoints.
//
// Layout (little endian):
//   8 bytes  magic "EENDCKPT"
//   u32      format version (1)
//   u64      header length, then that many bytes of JSON:
//            {"config": ..., "config_hash": "...", "epoch": n, "validation_der": x}
//   u64      tensor count, then per tensor:
//            u32 name length, name bytes, u64 rows, u64 cols,
//            rows*cols f64 values in row-major order
//
// Feature normalization statistics travel as the tensors "features.mean"
// and "features.std".

#pragma once

#include "eend/model.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>

namespace eend {

inline constexpr char kCheckpointMagic[8] = {'E', 'E', 'N', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::string config_hash;
  int epoch = 0;
  double validation_der = std::numeric_limits<double>::infinity();
  std::map<std::string, Matrix> tensors;  // parameters plus feature statistics
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error(path + ": truncated checkpoint");
  return v;
}

}  // namespace detail

inline Checkpoint capture_checkpoint(const EendModel& model, int epoch, double validation_der) {
  Checkpoint c;
  c.config = model.config();
  c.config_hash = model.hash();
  c.epoch = epoch;
  c.validation_der = validation_der;
  c.tensors = model.params().snapshot();
  c.tensors["features.mean"] = model.feature_mean();
  c.tensors["features.std"] = model.feature_std();
  return c;
}

/// Writes to a sibling temporary file, then renames over the target.
inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::write_pod(os, kCheckpointVersion);
    json header = {{"config", to_json(c.config)},
                   {"config_hash", c.config_hash},
                   {"epoch", c.epoch},
                   {"validation_der", std::isfinite(c.validation_der) ? json(c.validation_der) : json(nullptr)}};
    const std::string text = header.dump();
    detail::write_pod(os, static_cast<std::uint64_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    detail::write_pod(os, static_cast<std::uint64_t>(c.tensors.size()));
    for (const auto& [name, m] : c.tensors) {
      detail::write_pod(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_pod(os, static_cast<std::uint64_t>(m.rows()));
      detail::write_pod(os, static_cast<std::uint64_t>(m.cols()));
      os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw std::runtime_error(path + ": not a checkpoint file");
  }
  const auto version = detail::read_pod<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto header_len = detail::read_pod<std::uint64_t>(is, path);
  if (header_len > (1u << 24)) throw std::runtime_error(path + ": implausible header length");
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) throw std::runtime_error(path + ": truncated header");
  const json header = json::parse(text);
  Checkpoint c;
  c.config = model_config_from_json(header.at("config"));
  c.config_hash = header.at("config_hash").get<std::string>();
  if (c.config_hash != config_hash(c.config)) throw std::runtime_error(path + ": config hash does not match stored config");
  c.epoch = header.at("epoch").get<int>();
  const json& der = header.at("validation_der");
  c.validation_der = der.is_null() ? std::numeric_limits<double>::infinity() : der.get<double>();
  const auto count = detail::read_pod<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw std::runtime_error(path + ": truncated tensor name");
    const auto rows = detail::read_pod<std::uint64_t>(is, path);
    const auto cols = detail::read_pod<std::uint64_t>(is, path);
    if (rows * cols > (1ull << 32)) throw std::runtime_error(path + ": implausible tensor size for " + name);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw std::runtime_error(path + ": truncated tensor " + name);
    }
    c.tensors.emplace(std::move(name), std::move(m));
  }
  return c;
}

/// Copies checkpoint values into a model built from the same config.
inline void apply_checkpoint(EendModel& model, const Checkpoint& c) {
  if (c.config_hash != model.hash()) {
    throw std::invalid_argument("checkpoint config hash " + c.config_hash + " does not match model config hash " +
                                model.hash());
  }
  std::map<std::string, Matrix> params = c.tensors;
  auto take = [&params](const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("checkpoint lacks " + name);
    Matrix m = std::move(it->second);
    params.erase(it);
    return m;
  };
  Matrix mean = take("features.mean");
  Matrix stddev = take("features.std");
  model.params().load(params);
  model.set_feature_stats(std::move(mean), std::move(stddev));
}

inline EendModel model_from_checkpoint(const Checkpoint& c) {
  EendModel model = EendModel::create(c.config, 0);
  apply_checkpoint(model, c);
  return model;
}

}  // namespace eend
