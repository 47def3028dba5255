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

// The full diarization network: feature normalization, Conformer encoder
// with adapters, encoder-decoder attractors and the optional domain head.

#pragma once

#include "eend/datagen.hpp"
#include "eend/eda.hpp"
#include "eend/encoder.hpp"
#include "eend/losses.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

namespace eend {

enum class DomainHeadInput { kNone, kSummary, kEdaStates };

inline std::string to_string(DomainHeadInput v) {
  switch (v) {
    case DomainHeadInput::kSummary: return "summary";
    case DomainHeadInput::kEdaStates: return "eda_states";
    default: return "none";
  }
}

inline DomainHeadInput parse_domain_head_input(const std::string& s) {
  if (s == "summary") return DomainHeadInput::kSummary;
  if (s == "eda_states") return DomainHeadInput::kEdaStates;
  if (s == "none") return DomainHeadInput::kNone;
  throw std::invalid_argument("domain_head_input must be one of none|summary|eda_states, got '" + s + "'");
}

struct ModelConfig {
  EncoderConfig encoder;
  DomainHeadInput domain_head = DomainHeadInput::kNone;
  int max_speakers = 4;

  void validate() const {
    encoder.validate();
    if (max_speakers < 1) throw std::invalid_argument("max_speakers must be >= 1");
    if (domain_head == DomainHeadInput::kSummary && !encoder.use_summary_vector) {
      throw std::invalid_argument("domain_head_input=summary requires encoder.use_summary_vector");
    }
    if (domain_head != DomainHeadInput::kNone && encoder.domains.empty()) {
      throw std::invalid_argument("a domain head needs at least one training domain");
    }
  }
};

using json = nlohmann::json;

inline json to_json(const EncoderConfig& c) {
  json j = {{"input_dim", c.input_dim},
            {"num_blocks", c.num_blocks},
            {"d_model", c.d_model},
            {"num_heads", c.num_heads},
            {"ff_hidden", c.ff_hidden},
            {"conv_kernel", c.conv_kernel},
            {"subsample_factor", c.subsample_factor},
            {"adapter_bottleneck", c.adapter_bottleneck},
            {"use_summary_vector", c.use_summary_vector},
            {"summary_bypasses_adapters", c.summary_bypasses_adapters},
            {"domains", c.domains}};
  j["adapter_blocks"] = c.adapter_blocks ? json(*c.adapter_blocks) : json("all");
  return j;
}

inline json to_json(const ModelConfig& c) {
  return {{"encoder", to_json(c.encoder)}, {"domain_head_input", to_string(c.domain_head)},
          {"max_speakers", c.max_speakers}};
}

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&key](const char* k) { return key == k; })) {
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

/// Overlays the keys present in j onto c; unknown keys are rejected.
inline void update_from_json(EncoderConfig& c, const json& j, const std::string& where = "encoder") {
  detail::reject_unknown_keys(j,
                              {"input_dim", "num_blocks", "d_model", "num_heads", "ff_hidden", "conv_kernel",
                               "subsample_factor", "adapter_bottleneck", "adapter_blocks", "use_summary_vector",
                               "summary_bypasses_adapters", "domains"},
                              where);
  detail::read_key(j, "input_dim", c.input_dim, where);
  detail::read_key(j, "num_blocks", c.num_blocks, where);
  detail::read_key(j, "d_model", c.d_model, where);
  detail::read_key(j, "num_heads", c.num_heads, where);
  detail::read_key(j, "ff_hidden", c.ff_hidden, where);
  detail::read_key(j, "conv_kernel", c.conv_kernel, where);
  detail::read_key(j, "subsample_factor", c.subsample_factor, where);
  detail::read_key(j, "adapter_bottleneck", c.adapter_bottleneck, where);
  detail::read_key(j, "use_summary_vector", c.use_summary_vector, where);
  detail::read_key(j, "summary_bypasses_adapters", c.summary_bypasses_adapters, where);
  detail::read_key(j, "domains", c.domains, where);
  if (j.contains("adapter_blocks")) {
    const json& b = j.at("adapter_blocks");
    if (b.is_string() && b.get<std::string>() == "all") {
      c.adapter_blocks.reset();
    } else {
      std::vector<int> blocks;
      detail::read_key(j, "adapter_blocks", blocks, where);
      c.adapter_blocks = blocks;
    }
  }
}

inline ModelConfig model_config_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"encoder", "domain_head_input", "max_speakers"}, "model");
  ModelConfig c;
  if (j.contains("encoder")) update_from_json(c.encoder, j.at("encoder"));
  if (j.contains("domain_head_input")) c.domain_head = parse_domain_head_input(j.at("domain_head_input").get<std::string>());
  detail::read_key(j, "max_speakers", c.max_speakers, "model");
  c.validate();
  return c;
}

/// FNV-1a 64 over the canonical (key-sorted) JSON dump, as 16 hex digits.
inline std::string config_hash(const ModelConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Per-sample training losses. total already carries the alpha/beta weights.
struct SampleLoss {
  Tensor total;
  double diarization = 0.0;
  double attractor = 0.0;
  std::optional<double> domain;
  int num_speakers = 0;
};

struct SampleOptions {
  AdapterRoute route;
  bool shuffle = false;
  std::uint64_t shuffle_seed = 0;
  LossWeights weights;
};

class EendModel {
 public:
  EendModel(const EendModel&) = delete;
  EendModel& operator=(const EendModel&) = delete;
  EendModel(EendModel&&) = default;
  EendModel& operator=(EendModel&&) = default;

  static EendModel create(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    EendModel m;
    m.config_ = config;
    Rng rng(seed);
    m.encoder_ = ConformerEncoder::create(config.encoder, m.params_, rng);
    m.eda_ = EncoderDecoderAttractor::create(m.params_, config.encoder.d_model, rng);
    if (config.domain_head != DomainHeadInput::kNone) {
      const int dim = config.domain_head == DomainHeadInput::kSummary ? config.encoder.d_model : 2 * config.encoder.d_model;
      m.head_ = DomainHead::create(m.params_, dim, static_cast<int>(config.encoder.domains.size()), rng);
    }
    m.feature_mean_ = Matrix::Zero(1, config.encoder.input_dim);
    m.feature_std_ = Matrix::Ones(1, config.encoder.input_dim);
    return m;
  }

  const ModelConfig& config() const { return config_; }
  std::string hash() const { return config_hash(config_); }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const ConformerEncoder& encoder() const { return encoder_; }
  const EncoderDecoderAttractor& eda() const { return eda_; }
  const std::optional<DomainHead>& domain_head() const { return head_; }
  const std::vector<std::string>& domains() const { return config_.encoder.domains; }

  /// Global mean/variance normalization applied to every input.
  void set_feature_stats(Matrix mean, Matrix stddev) {
    if (mean.cols() != config_.encoder.input_dim || stddev.cols() != config_.encoder.input_dim) {
      throw std::invalid_argument("feature statistics width mismatch");
    }
    feature_mean_ = std::move(mean);
    feature_std_ = std::move(stddev);
  }
  const Matrix& feature_mean() const { return feature_mean_; }
  const Matrix& feature_std() const { return feature_std_; }

  Tensor normalize(const Matrix& features) const {
    Matrix x = features.rowwise() - feature_mean_.row(0);
    x.array().rowwise() /= feature_std_.row(0).array();
    return Tensor::constant(std::move(x));
  }

  EncoderOutput encode(const FrameFeatures& features, const AdapterRoute& route) const {
    return encoder_.encode(normalize(features.values), route);
  }

  /// Domain-head input for the configured variant.
  Tensor domain_vector(const EncoderOutput& enc, const EdaState& state) const {
    if (config_.domain_head == DomainHeadInput::kSummary) return *enc.summary;
    return concat_cols({state.h, state.c});
  }

  /// Forward pass with every training objective for one sample.
  SampleLoss sample_loss(const FrameFeatures& features, const SpeakerActivityMatrix& labels,
                         std::optional<std::size_t> domain_index, const SampleOptions& opt) const {
    if (labels.frames() != features.frames()) throw std::invalid_argument("sample_loss: label/feature length mismatch");
    const int speakers = static_cast<int>(labels.num_speakers());
    if (speakers > config_.max_speakers) throw std::invalid_argument("sample_loss: more speakers than max_speakers");
    EncoderOutput enc = encode(features, opt.route);
    EdaState state = eda_.encode(detach_for_eda(enc.embeddings), opt.shuffle, opt.shuffle_seed);
    AttractorTrace trace = eda_.decode(state, speakers + 1);

    SampleLoss out;
    out.num_speakers = speakers;
    Tensor attr = attractor_existence_loss(trace.existence_logits, speakers);
    Tensor diar = Tensor::constant(Matrix::Zero(1, 1));
    if (speakers > 0) {
      Tensor logits = speaker_logits(enc.embeddings, slice_rows(trace.attractors, 0, speakers));
      diar = pit_diarization_loss(logits, labels.values, config_.max_speakers).loss;
    }
    std::optional<Tensor> dom;
    if (head_ && domain_index) {
      dom = domain_classification_loss(domain_vector(enc, state), static_cast<Eigen::Index>(*domain_index), *head_).loss;
      out.domain = dom->item();
    }
    out.diarization = diar.item();
    out.attractor = attr.item();
    out.total = combined_loss(diar, attr, dom, opt.weights);
    return out;
  }

 private:
  EendModel() = default;

  ModelConfig config_;
  ParameterStore params_;
  ConformerEncoder encoder_;
  EncoderDecoderAttractor eda_;
  std::optional<DomainHead> head_;
  Matrix feature_mean_;
  Matrix feature_std_;
};

}  // namespace eend
