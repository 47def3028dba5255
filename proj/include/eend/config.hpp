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

// Layered run configuration. Built-in defaults are overlaid by a JSON file,
// which the command line overrides in turn. Every section rejects keys it
// does not know. See README.md for the schema.

#pragma once

#include "eend/features.hpp"
#include "eend/training.hpp"

#include <fstream>
#include <sstream>

namespace eend {

struct DomainEntry {
  DomainSpec spec;
  bool seen = true;  // unseen domains only appear in the eval split
};

struct DataConfig {
  std::vector<DomainEntry> domains;
  int sample_rate = 8000;
  int train_per_domain = 40;
  int val_per_domain = 4;
  int eval_per_domain = 8;
  double min_duration_s = 20.0;
  double max_duration_s = 40.0;
};

struct PathConfig {
  std::string corpus = "corpus";
  std::string model = "model";
  std::string hypotheses = "hyp";
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  FeatureConfig features;
  ModelConfig model;
  TrainConfig train;
  InferenceConfig inference;
  PathConfig paths;

  std::vector<std::string> seen_domains() const {
    std::vector<std::string> out;
    for (const auto& d : data.domains) {
      if (d.seen) out.push_back(d.spec.name);
    }
    return out;
  }

  /// Fills derived fields and checks every section.
  void finalize() {
    train.seed = seed;
    if (model.encoder.domains.empty()) model.encoder.domains = seen_domains();
    model.encoder.input_dim = features.num_mel;
    validate();
  }

  void validate() const {
    validate_domains(std::vector<DomainSpec>(specs()), model.max_speakers);
    if (data.sample_rate < 8000) throw std::invalid_argument("data.sample_rate must be >= 8000");
    if (data.train_per_domain < 0 || data.val_per_domain < 0 || data.eval_per_domain < 0) {
      throw std::invalid_argument("data: per-domain counts must be >= 0");
    }
    if (!(data.min_duration_s > 0.0) || data.max_duration_s < data.min_duration_s) {
      throw std::invalid_argument("data: duration range must be positive and ordered");
    }
    if (features.num_mel < 1 || !(features.window_s > 0.0) || !(features.hop_s > 0.0)) {
      throw std::invalid_argument("features: num_mel, window_s and hop_s must be positive");
    }
    if (model.encoder.input_dim != features.num_mel) throw std::invalid_argument("model.encoder.input_dim must equal features.num_mel");
    model.validate();
    train.validate();
    inference.validate();
  }

  std::vector<DomainSpec> specs() const {
    std::vector<DomainSpec> out;
    for (const auto& d : data.domains) out.push_back(d.spec);
    return out;
  }
};

/// Three seen domains with distinct noise colours and speaker ranges plus
/// one held-out domain.
inline std::vector<DomainEntry> default_domains() {
  return {
      {{"meeting", 2, 4, 0.25, {"pink", 12.0}, 0.6, 101}, true},
      {{"broadcast", 1, 3, 0.05, {"hum", 18.0}, 1.2, 202}, true},
      {{"telephone", 2, 2, 0.15, {"white", 10.0}, 0.8, 303}, true},
      {{"field", 1, 3, 0.2, {"brown", 8.0}, 1.0, 404}, false},
  };
}

inline RunConfig default_run_config() {
  RunConfig c;
  c.data.domains = default_domains();
  c.model.encoder.use_summary_vector = true;
  c.model.domain_head = DomainHeadInput::kSummary;
  return c;
}

inline json to_json(const DomainEntry& d) {
  return {{"name", d.spec.name},
          {"speaker_count_range", {d.spec.min_speakers, d.spec.max_speakers}},
          {"overlap_ratio", d.spec.overlap_ratio},
          {"noise", {{"shape", d.spec.noise.shape}, {"snr_db", d.spec.noise.snr_db}}},
          {"pause_scale", d.spec.pause_scale},
          {"seed_namespace", d.spec.seed_namespace},
          {"seen", d.seen}};
}

inline json to_json(const RunConfig& c) {
  json domains = json::array();
  for (const auto& d : c.data.domains) domains.push_back(to_json(d));
  return {
      {"seed", c.seed},
      {"data",
       {{"domains", domains},
        {"sample_rate", c.data.sample_rate},
        {"train_per_domain", c.data.train_per_domain},
        {"val_per_domain", c.data.val_per_domain},
        {"eval_per_domain", c.data.eval_per_domain},
        {"duration_s", {c.data.min_duration_s, c.data.max_duration_s}}}},
      {"features", {{"num_mel", c.features.num_mel}, {"window_s", c.features.window_s}, {"hop_s", c.features.hop_s}}},
      {"model", to_json(c.model)},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"scheduler", c.train.scheduler == Scheduler::kNoam ? "noam" : "constant"},
        {"warmup_steps", c.train.warmup_steps},
        {"alpha", c.train.weights.alpha},
        {"beta", c.train.weights.beta},
        {"adapter_dropout", c.train.adapter_dropout},
        {"crop_frames", c.train.crop_frames},
        {"average_best", c.train.average_best}}},
      {"inference",
       {{"diarization_threshold", c.inference.diarization_threshold},
        {"existence_threshold", c.inference.existence_threshold},
        {"median_frames", c.inference.median_frames},
        {"max_decode_steps", c.inference.max_decode_steps}}},
      {"paths", {{"corpus", c.paths.corpus}, {"model", c.paths.model}, {"hypotheses", c.paths.hypotheses}}},
  };
}

namespace detail {

inline DomainEntry domain_from_json(const json& j, std::size_t index) {
  const std::string where = "data.domains[" + std::to_string(index) + "]";
  reject_unknown_keys(j, {"name", "speaker_count_range", "overlap_ratio", "noise", "pause_scale", "seed_namespace", "seen"},
                      where);
  if (!j.contains("name")) throw std::invalid_argument(where + ": name is required");
  DomainEntry d;
  read_key(j, "name", d.spec.name, where);
  if (j.contains("speaker_count_range")) {
    std::vector<int> r;
    read_key(j, "speaker_count_range", r, where);
    if (r.size() != 2) throw std::invalid_argument(where + ".speaker_count_range: expected [min, max]");
    d.spec.min_speakers = r[0];
    d.spec.max_speakers = r[1];
  }
  read_key(j, "overlap_ratio", d.spec.overlap_ratio, where);
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    reject_unknown_keys(n, {"shape", "snr_db"}, where + ".noise");
    read_key(n, "shape", d.spec.noise.shape, where + ".noise");
    read_key(n, "snr_db", d.spec.noise.snr_db, where + ".noise");
  }
  read_key(j, "pause_scale", d.spec.pause_scale, where);
  read_key(j, "seed_namespace", d.spec.seed_namespace, where);
  read_key(j, "seen", d.seen, where);
  return d;
}

}  // namespace detail

/// Overlays j onto c (keys absent from j keep their current value).
inline void update_from_json(RunConfig& c, const json& j) {
  using detail::read_key;
  using detail::reject_unknown_keys;
  reject_unknown_keys(j, {"seed", "data", "features", "model", "train", "inference", "paths"}, "config");
  read_key(j, "seed", c.seed, "config");
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown_keys(d, {"domains", "sample_rate", "train_per_domain", "val_per_domain", "eval_per_domain", "duration_s"},
                        "data");
    if (d.contains("domains")) {
      if (!d.at("domains").is_array()) throw std::invalid_argument("data.domains: expected an array");
      c.data.domains.clear();
      for (std::size_t i = 0; i < d.at("domains").size(); ++i) c.data.domains.push_back(detail::domain_from_json(d.at("domains")[i], i));
    }
    read_key(d, "sample_rate", c.data.sample_rate, "data");
    read_key(d, "train_per_domain", c.data.train_per_domain, "data");
    read_key(d, "val_per_domain", c.data.val_per_domain, "data");
    read_key(d, "eval_per_domain", c.data.eval_per_domain, "data");
    if (d.contains("duration_s")) {
      std::vector<double> r;
      read_key(d, "duration_s", r, "data");
      if (r.size() != 2) throw std::invalid_argument("data.duration_s: expected [min, max]");
      c.data.min_duration_s = r[0];
      c.data.max_duration_s = r[1];
    }
  }
  if (j.contains("features")) {
    const json& f = j.at("features");
    reject_unknown_keys(f, {"num_mel", "window_s", "hop_s"}, "features");
    read_key(f, "num_mel", c.features.num_mel, "features");
    read_key(f, "window_s", c.features.window_s, "features");
    read_key(f, "hop_s", c.features.hop_s, "features");
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown_keys(m, {"encoder", "domain_head_input", "max_speakers"}, "model");
    if (m.contains("encoder")) update_from_json(c.model.encoder, m.at("encoder"), "model.encoder");
    if (m.contains("domain_head_input")) {
      std::string v;
      read_key(m, "domain_head_input", v, "model");
      c.model.domain_head = parse_domain_head_input(v);
    }
    read_key(m, "max_speakers", c.model.max_speakers, "model");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown_keys(t,
                        {"epochs", "batch_size", "lr", "scheduler", "warmup_steps", "alpha", "beta", "adapter_dropout",
                         "crop_frames", "average_best"},
                        "train");
    read_key(t, "epochs", c.train.epochs, "train");
    read_key(t, "batch_size", c.train.batch_size, "train");
    read_key(t, "lr", c.train.lr, "train");
    if (t.contains("scheduler")) {
      std::string s;
      read_key(t, "scheduler", s, "train");
      if (s == "constant") {
        c.train.scheduler = Scheduler::kConstant;
      } else if (s == "noam") {
        c.train.scheduler = Scheduler::kNoam;
      } else {
        throw std::invalid_argument("train.scheduler must be constant or noam, got '" + s + "'");
      }
    }
    read_key(t, "warmup_steps", c.train.warmup_steps, "train");
    read_key(t, "alpha", c.train.weights.alpha, "train");
    read_key(t, "beta", c.train.weights.beta, "train");
    read_key(t, "adapter_dropout", c.train.adapter_dropout, "train");
    read_key(t, "crop_frames", c.train.crop_frames, "train");
    read_key(t, "average_best", c.train.average_best, "train");
  }
  if (j.contains("inference")) {
    const json& i = j.at("inference");
    reject_unknown_keys(i, {"diarization_threshold", "existence_threshold", "median_frames", "max_decode_steps"},
                        "inference");
    read_key(i, "diarization_threshold", c.inference.diarization_threshold, "inference");
    read_key(i, "existence_threshold", c.inference.existence_threshold, "inference");
    read_key(i, "median_frames", c.inference.median_frames, "inference");
    read_key(i, "max_decode_steps", c.inference.max_decode_steps, "inference");
  }
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    reject_unknown_keys(p, {"corpus", "model", "hypotheses"}, "paths");
    read_key(p, "corpus", c.paths.corpus, "paths");
    read_key(p, "model", c.paths.model, "paths");
    read_key(p, "hypotheses", c.paths.hypotheses, "paths");
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

/// Defaults overlaid with the optional file; finalize() is left to the
/// caller so command-line overrides can be applied first.
inline RunConfig load_run_config(const std::optional<std::string>& path) {
  RunConfig c = default_run_config();
  if (path) update_from_json(c, read_json_file(*path));
  return c;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << "\n";
}

}  // namespace eend
