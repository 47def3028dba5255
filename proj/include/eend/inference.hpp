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

// Decoding: encoder -> attractors -> posteriors -> threshold -> median
// filter -> segments.

#pragma once

#include "eend/model.hpp"
#include "eend/scoring.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace eend {

struct InferenceConfig {
  double diarization_threshold = 0.5;
  double existence_threshold = 0.5;
  int median_frames = 11;
  AdapterRoute adapter;  // nullopt = no adapters
  int max_decode_steps = 20;

  void validate() const {
    auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in_unit(diarization_threshold)) throw std::invalid_argument("diarization_threshold must be in (0, 1)");
    if (!in_unit(existence_threshold)) throw std::invalid_argument("existence_threshold must be in (0, 1)");
    if (median_frames < 1 || median_frames % 2 == 0) throw std::invalid_argument("median_frames must be odd and >= 1");
    if (max_decode_steps < 1) throw std::invalid_argument("max_decode_steps must be >= 1");
  }
};

struct DiarizedSegment {
  int speaker = 0;
  double start_s = 0.0;
  double end_s = 0.0;

  bool operator==(const DiarizedSegment&) const = default;
};

struct DiarizationResult {
  std::vector<DiarizedSegment> segments;
  int num_speakers = 0;
  std::optional<std::string> predicted_domain;
  std::vector<double> attractor_probs;

  bool operator==(const DiarizationResult&) const = default;
};

/// Sliding majority vote. Near the edges the window shrinks symmetrically
/// to the available context.
inline std::vector<int> median_filter(const std::vector<int>& column, int window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("median_filter: window must be odd and >= 1");
  const auto n = static_cast<std::ptrdiff_t>(column.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<std::ptrdiff_t> prefix(column.size() + 1, 0);
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    prefix[static_cast<std::size_t>(t) + 1] = prefix[static_cast<std::size_t>(t)] + (column[static_cast<std::size_t>(t)] ? 1 : 0);
  }
  std::vector<int> out(column.size(), 0);
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const std::ptrdiff_t k = std::min({half, t, n - 1 - t});
    const std::ptrdiff_t ones = prefix[static_cast<std::size_t>(t + k + 1)] - prefix[static_cast<std::size_t>(t - k)];
    out[static_cast<std::size_t>(t)] = 2 * ones > 2 * k + 1 ? 1 : 0;
  }
  return out;
}

/// Maximal runs of ones as [first * hop, (last + 1) * hop).
inline std::vector<std::pair<double, double>> frames_to_segments(const std::vector<int>& column, double hop_s) {
  std::vector<std::pair<double, double>> out;
  std::size_t t = 0;
  while (t < column.size()) {
    if (!column[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < column.size() && column[end]) ++end;
    out.emplace_back(static_cast<double>(t) * hop_s, static_cast<double>(end) * hop_s);
    t = end;
  }
  return out;
}

/// Posteriors for the active attractors, thresholded, smoothed and cut
/// into segments. Speaker indices follow attractor order.
inline DiarizationResult decode_activity(const Matrix& embeddings, const AttractorSet& attractors,
                                         const InferenceConfig& cfg, double hop_s) {
  cfg.validate();
  DiarizationResult result;
  result.attractor_probs = attractors.probs;
  if (attractors.active_count == 0) return result;
  const Matrix posteriors =
      frame_speaker_posteriors(attractors.attractors.topRows(attractors.active_count), embeddings);
  std::vector<int> column(static_cast<std::size_t>(posteriors.rows()));
  for (Eigen::Index s = 0; s < posteriors.cols(); ++s) {
    for (Eigen::Index t = 0; t < posteriors.rows(); ++t) {
      column[static_cast<std::size_t>(t)] = posteriors(t, s) > cfg.diarization_threshold ? 1 : 0;
    }
    const auto runs = frames_to_segments(median_filter(column, cfg.median_frames), hop_s);
    for (const auto& [a, b] : runs) result.segments.push_back({static_cast<int>(s), a, b});
    if (!runs.empty()) ++result.num_speakers;
  }
  return result;
}

/// Frame posteriors before thresholding, T x active speakers.
inline Matrix diarization_posteriors(const FrameFeatures& features, const EendModel& model,
                                     const InferenceConfig& cfg) {
  cfg.validate();
  NoGradGuard no_grad;
  EncoderOutput enc = model.encode(features, cfg.adapter);
  EdaState state = model.eda().encode(enc.embeddings, false, 0);
  AttractorSet set = model.eda().decode_until(state, cfg.existence_threshold, cfg.max_decode_steps);
  return frame_speaker_posteriors(set.attractors.topRows(set.active_count), enc.embeddings.value());
}

struct DomainPrediction {
  std::string name;
  Vector probs;
};

/// Arg-max of the auxiliary head; ties resolve to the earlier domain.
inline DomainPrediction predict_domain(const FrameFeatures& features, const EendModel& model,
                                       const AdapterRoute& route = std::nullopt) {
  if (!model.domain_head()) throw std::invalid_argument("predict_domain: model has no domain head");
  NoGradGuard no_grad;
  EncoderOutput enc = model.encode(features, route);
  EdaState state{Tensor::constant(Matrix::Zero(1, 1)), Tensor::constant(Matrix::Zero(1, 1))};
  if (model.config().domain_head == DomainHeadInput::kEdaStates) state = model.eda().encode(enc.embeddings, false, 0);
  Vector probs = softmax(model.domain_head()->logits(model.domain_vector(enc, state)).value());
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i) {
    if (probs(i) > probs(best)) best = i;
  }
  return {model.domains()[static_cast<std::size_t>(best)], std::move(probs)};
}

inline DiarizationResult diarize(const FrameFeatures& features, const EendModel& model, const InferenceConfig& cfg,
                                 bool with_domain_prediction = false) {
  cfg.validate();
  DiarizationResult result;
  {
    NoGradGuard no_grad;
    EncoderOutput enc = model.encode(features, cfg.adapter);
    EdaState state = model.eda().encode(enc.embeddings, false, 0);
    AttractorSet set = model.eda().decode_until(state, cfg.existence_threshold, cfg.max_decode_steps);
    result = decode_activity(enc.embeddings.value(), set, cfg, features.hop_s);
  }
  if (with_domain_prediction) result.predicted_domain = predict_domain(features, model, cfg.adapter).name;
  return result;
}

inline std::vector<RttmSegment> to_rttm(const DiarizationResult& result, const std::string& file_id) {
  std::vector<RttmSegment> out;
  for (const auto& s : result.segments) {
    out.push_back({file_id, s.start_s, s.end_s - s.start_s, "spk" + std::to_string(s.speaker)});
  }
  std::sort(out.begin(), out.end(), [](const RttmSegment& a, const RttmSegment& b) {
    return a.onset_s != b.onset_s ? a.onset_s < b.onset_s : a.speaker < b.speaker;
  });
  return out;
}

}  // namespace eend
