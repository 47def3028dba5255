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

// Synthetic multi-domain conversations.
//
// Each speaker is a harmonic source with its own pitch, two formant-like
// resonances and a slow syllabic amplitude modulation. Utterances alternate
// between speakers; consecutive utterances either leave an exponential pause
// or overlap by an amount chosen so that overlapped time / speech time
// matches the domain's overlap ratio. Domain identity is carried by an
// additive noise floor with a characteristic spectral shape and SNR.

#pragma once

#include "eend/features.hpp"
#include "eend/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace eend {

inline const std::vector<std::string>& noise_shapes() {
  static const std::vector<std::string> shapes = {"white", "pink", "brown", "violet", "hum"};
  return shapes;
}

struct NoiseProfile {
  std::string shape = "white";
  double snr_db = 20.0;
};

struct DomainSpec {
  std::string name;
  int min_speakers = 1;
  int max_speakers = 4;
  double overlap_ratio = 0.1;
  NoiseProfile noise;
  double pause_scale = 1.0;  // mean pause in seconds
  std::uint64_t seed_namespace = 0;

  void validate(int max_speakers_limit) const {
    auto fail = [this](const std::string& msg) { throw std::invalid_argument("domain '" + name + "': " + msg); };
    if (name.empty()) throw std::invalid_argument("domain name must not be empty");
    if (min_speakers < 1) fail("speaker_count_range minimum must be >= 1");
    if (max_speakers < min_speakers) fail("speaker_count_range maximum below minimum");
    if (max_speakers > max_speakers_limit) {
      fail("speaker_count_range maximum exceeds max_speakers " + std::to_string(max_speakers_limit));
    }
    if (!(overlap_ratio >= 0.0 && overlap_ratio <= 1.0)) fail("overlap_ratio must lie in [0, 1]");
    if (!(pause_scale > 0.0)) fail("pause_scale must be positive");
    if (std::find(noise_shapes().begin(), noise_shapes().end(), noise.shape) == noise_shapes().end()) {
      fail("unknown noise shape '" + noise.shape + "'");
    }
  }
};

inline void validate_domains(const std::vector<DomainSpec>& specs, int max_speakers_limit) {
  std::set<std::string> names;
  for (const auto& s : specs) {
    s.validate(max_speakers_limit);
    if (!names.insert(s.name).second) throw std::invalid_argument("duplicate domain name " + s.name);
  }
}

struct Segment {
  std::string speaker;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct Mixture {
  std::vector<double> waveform;
  int sample_rate = 8000;
  std::vector<Segment> segments;
  std::string domain;

  double duration_s() const { return static_cast<double>(waveform.size()) / sample_rate; }

  std::vector<std::string> speakers() const {
    std::set<std::string> ids;
    for (const auto& s : segments) ids.insert(s.speaker);
    return {ids.begin(), ids.end()};
  }
};

struct SpeakerActivityMatrix {
  Matrix values;                      // T x S
  std::vector<std::string> speakers;  // column ids

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index num_speakers() const { return values.cols(); }
};

/// Fraction of speech time (any speaker active) during which at least two
/// speakers are active.
inline double overlap_fraction(const std::vector<Segment>& segments) {
  std::vector<std::pair<double, int>> events;
  for (const auto& s : segments) {
    events.emplace_back(s.start_s, +1);
    events.emplace_back(s.end_s, -1);
  }
  std::sort(events.begin(), events.end());
  double speech = 0.0;
  double overlap = 0.0;
  int active = 0;
  double last = 0.0;
  for (const auto& [t, delta] : events) {
    const double span = t - last;
    if (active >= 1) speech += span;
    if (active >= 2) overlap += span;
    active += delta;
    last = t;
  }
  return speech > 0.0 ? overlap / speech : 0.0;
}

namespace detail {

struct Voice {
  double f0;
  double formant1;
  double formant2;
  double bandwidth;
  double gain;
  double vibrato_rate;
  double syllable_rate;
};

inline Voice draw_voice(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Voice v;
  v.f0 = 90.0 + 170.0 * u(rng);
  v.formant1 = 300.0 + 600.0 * u(rng);
  v.formant2 = 1000.0 + 1600.0 * u(rng);
  v.bandwidth = 150.0 + 200.0 * u(rng);
  v.gain = 0.6 + 0.4 * u(rng);
  v.vibrato_rate = 0.4 + 0.6 * u(rng);
  v.syllable_rate = 3.0 + 2.0 * u(rng);
  return v;
}

inline void render_utterance(const Voice& v, double start_s, double end_s, int sr, Rng& rng,
                             std::vector<double>& out) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double nyquist = sr / 2.0;
  std::vector<double> amps;
  for (int k = 1; k * v.f0 < nyquist - 200.0 && k <= 40; ++k) {
    const double f = k * v.f0;
    const double a1 = std::exp(-0.5 * std::pow((f - v.formant1) / v.bandwidth, 2));
    const double a2 = 0.7 * std::exp(-0.5 * std::pow((f - v.formant2) / v.bandwidth, 2));
    amps.push_back(a1 + a2 + 0.03 / k);
  }
  double norm = 0.0;
  for (double a : amps) norm += a * a;
  norm = std::sqrt(norm / 2.0);
  const double level = 0.1 * v.gain / norm;

  const auto first = static_cast<std::size_t>(std::lround(start_s * sr));
  const auto last = std::min(out.size(), static_cast<std::size_t>(std::lround(end_s * sr)));
  if (first >= last) return;
  const double vib_phase = phase(rng);
  const double syl_phase = phase(rng);
  std::vector<double> ph(amps.size());
  for (auto& p : ph) p = phase(rng);
  const double len = static_cast<double>(last - first);
  const double ramp = 0.02 * sr;
  double f0_phase = 0.0;
  for (std::size_t n = first; n < last; ++n) {
    const double t = static_cast<double>(n) / sr;
    const double f0 = v.f0 * (1.0 + 0.04 * std::sin(2.0 * std::numbers::pi * v.vibrato_rate * t + vib_phase));
    f0_phase += 2.0 * std::numbers::pi * f0 / sr;
    double s = 0.0;
    for (std::size_t k = 0; k < amps.size(); ++k) {
      if (amps[k] < 0.02) continue;
      s += amps[k] * std::sin(static_cast<double>(k + 1) * f0_phase + ph[k]);
    }
    const double pos = static_cast<double>(n - first);
    const double edge = std::min({1.0, pos / ramp, (len - pos) / ramp});
    const double syllable = 0.65 + 0.35 * std::sin(2.0 * std::numbers::pi * v.syllable_rate * t + syl_phase);
    out[n] += level * edge * syllable * s;
  }
}

inline std::vector<double> shaped_noise(const std::string& shape, std::size_t n, int sr, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  if (shape == "white") {
    for (auto& v : x) v = g(rng);
  } else if (shape == "pink") {
    // Paul Kellet's refined pink filter.
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (auto& v : x) {
      const double w = g(rng);
      b0 = 0.99886 * b0 + w * 0.0555179;
      b1 = 0.99332 * b1 + w * 0.0750759;
      b2 = 0.96900 * b2 + w * 0.1538520;
      b3 = 0.86650 * b3 + w * 0.3104856;
      b4 = 0.55000 * b4 + w * 0.5329522;
      b5 = -0.7616 * b5 - w * 0.0168980;
      v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
      b6 = w * 0.115926;
    }
  } else if (shape == "brown") {
    double y = 0.0;
    for (auto& v : x) {
      y = 0.98 * y + g(rng);
      v = y;
    }
  } else if (shape == "violet") {
    double prev = g(rng);
    for (auto& v : x) {
      const double w = g(rng);
      v = w - prev;
      prev = w;
    }
  } else if (shape == "hum") {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    double ph[8];
    for (double& p : ph) p = phase(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      double s = 0.3 * g(rng);
      for (int k = 1; k <= 8; ++k) s += std::sin(2.0 * std::numbers::pi * 50.0 * k * t + ph[k - 1]) / k;
      x[i] = s;
    }
  } else {
    throw std::invalid_argument("unknown noise shape '" + shape + "'");
  }
  double power = 0.0;
  for (double v : x) power += v * v;
  power /= std::max<std::size_t>(n, 1);
  if (power > 0.0) {
    const double s = 1.0 / std::sqrt(power);
    for (auto& v : x) v *= s;
  }
  return x;
}

}  // namespace detail

inline Mixture simulate_mixture(const DomainSpec& spec, int num_speakers, double duration_s, std::uint64_t seed,
                                int sample_rate = 8000) {
  if (num_speakers < spec.min_speakers || num_speakers > spec.max_speakers) {
    throw std::invalid_argument("simulate_mixture: " + std::to_string(num_speakers) +
                                " speakers outside the range of domain '" + spec.name + "'");
  }
  if (!(duration_s > 0.0)) throw std::invalid_argument("simulate_mixture: duration must be positive");
  if (sample_rate < 8000) throw std::invalid_argument("simulate_mixture: sample rate below 8 kHz");

  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed_namespace), static_cast<std::uint32_t>(spec.seed_namespace >> 32),
                    static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(num_speakers), static_cast<std::uint32_t>(std::lround(duration_s * 1000.0))};
  Rng rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> pause(1.0 / spec.pause_scale);

  std::vector<detail::Voice> voices;
  for (int s = 0; s < num_speakers; ++s) voices.push_back(detail::draw_voice(rng));

  // Turn plan long enough to cover the duration even when fully overlapped.
  const double len_scale = std::min(1.0, duration_s / (5.0 * num_speakers));
  std::vector<int> order(static_cast<std::size_t>(num_speakers));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> who;
  std::vector<double> len;
  double planned = 0.0;
  while (planned < 2.5 * duration_s + 10.0) {
    int spk;
    if (who.size() < order.size()) {
      spk = order[who.size()];
    } else if (num_speakers == 1) {
      spk = 0;
    } else {
      spk = static_cast<int>(unit(rng) * (num_speakers - 1));
      if (spk >= who.back()) ++spk;
    }
    who.push_back(spk);
    len.push_back((1.0 + 3.0 * unit(rng)) * len_scale);
    planned += len.back();
  }

  // Overlap amounts: o_i <= min(L_{i-1}, L_i)/2 rules out triple overlap;
  // total overlap O = r * sum(L) / (1 + r) gives O / (sum(L) - O) = r.
  const std::size_t n = who.size();
  std::vector<double> overlap(n, 0.0);
  if (num_speakers >= 2 && spec.overlap_ratio > 0.0) {
    std::vector<bool> chosen(n, false);
    double target = spec.overlap_ratio / (1.0 + spec.overlap_ratio) * planned;
    double capacity = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      chosen[i] = unit(rng) < 0.5;
      if (chosen[i]) capacity += std::min(len[i - 1], len[i]) / 2.0;
    }
    if (capacity < target) {
      capacity = 0.0;
      for (std::size_t i = 1; i < n; ++i) {
        chosen[i] = true;
        capacity += std::min(len[i - 1], len[i]) / 2.0;
      }
    }
    const double c = capacity > 0.0 ? std::min(1.0, target / capacity) : 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      if (chosen[i]) overlap[i] = c * std::min(len[i - 1], len[i]) / 2.0;
    }
  }

  Mixture mix;
  mix.sample_rate = sample_rate;
  mix.domain = spec.name;
  mix.waveform.assign(static_cast<std::size_t>(std::lround(duration_s * sample_rate)), 0.0);
  double cursor = std::min(pause(rng) * len_scale, 0.2 * duration_s);
  for (std::size_t i = 0; i < n; ++i) {
    double start = cursor;
    if (i > 0) start = overlap[i] > 0.0 ? cursor - overlap[i] : cursor + pause(rng) * (i < order.size() ? len_scale : 1.0);
    if (start >= duration_s) break;
    const double end = std::min(start + len[i], duration_s);
    cursor = start + len[i];
    if (end - start < 0.2) continue;
    mix.segments.push_back({"s" + std::to_string(who[i]), start, end});
    detail::render_utterance(voices[static_cast<std::size_t>(who[i])], start, end, sample_rate, rng, mix.waveform);
  }

  // Noise scaled against the mean power of speech-active samples.
  std::vector<bool> active(mix.waveform.size(), false);
  for (const auto& s : mix.segments) {
    const auto a = static_cast<std::size_t>(std::lround(s.start_s * sample_rate));
    const auto b = std::min(active.size(), static_cast<std::size_t>(std::lround(s.end_s * sample_rate)));
    for (std::size_t k = a; k < b; ++k) active[k] = true;
  }
  double speech_power = 0.0;
  std::size_t speech_samples = 0;
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (active[k]) {
      speech_power += mix.waveform[k] * mix.waveform[k];
      ++speech_samples;
    }
  }
  speech_power = speech_samples > 0 ? speech_power / static_cast<double>(speech_samples) : 1e-2;
  const double noise_rms = std::sqrt(speech_power / std::pow(10.0, spec.noise.snr_db / 10.0));
  const auto noise = detail::shaped_noise(spec.noise.shape, mix.waveform.size(), sample_rate, rng);
  for (std::size_t k = 0; k < mix.waveform.size(); ++k) mix.waveform[k] += noise_rms * noise[k];
  return mix;
}

/// Binary T x S activity. Frame t is active for a speaker when t * hop lies
/// inside one of its segments. With more than max_speakers distinct speakers
/// only the max_speakers with the most speech are kept (ties: lower id).
inline SpeakerActivityMatrix frames_to_labels(const std::vector<Segment>& segments, double hop_s, Eigen::Index frames,
                                              int max_speakers) {
  if (frames <= 0) throw std::invalid_argument("frames_to_labels: T must be positive");
  if (!(hop_s > 0.0)) throw std::invalid_argument("frames_to_labels: hop must be positive");
  std::map<std::string, double> talk;
  for (const auto& s : segments) talk[s.speaker] += std::max(0.0, s.end_s - s.start_s);
  std::vector<std::string> ids;
  for (const auto& [id, _] : talk) ids.push_back(id);
  if (static_cast<int>(ids.size()) > max_speakers) {
    std::vector<std::string> ranked = ids;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&talk](const std::string& a, const std::string& b) { return talk[a] > talk[b]; });
    ranked.resize(static_cast<std::size_t>(std::max(max_speakers, 0)));
    std::set<std::string> keep(ranked.begin(), ranked.end());
    ids.erase(std::remove_if(ids.begin(), ids.end(), [&keep](const std::string& id) { return !keep.count(id); }),
              ids.end());
  }
  SpeakerActivityMatrix out;
  out.speakers = ids;
  out.values = Matrix::Zero(frames, static_cast<Eigen::Index>(ids.size()));
  for (const auto& s : segments) {
    auto it = std::find(ids.begin(), ids.end(), s.speaker);
    if (it == ids.end()) continue;
    const auto col = static_cast<Eigen::Index>(it - ids.begin());
    const auto first = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(s.start_s / hop_s - 1e-9)));
    for (Eigen::Index t = first; t < frames; ++t) {
      const double time = static_cast<double>(t) * hop_s;
      if (time >= s.end_s) break;
      if (time >= s.start_s) out.values(t, col) = 1.0;
    }
  }
  return out;
}

/// Contiguous crop with a uniform random start; speakers silent inside the
/// crop are dropped from the labels.
inline std::pair<FrameFeatures, SpeakerActivityMatrix> crop_sample(const FrameFeatures& features,
                                                                   const SpeakerActivityMatrix& labels,
                                                                   Eigen::Index crop_frames, std::uint64_t seed) {
  const auto total = features.frames();
  if (labels.frames() != total) throw std::invalid_argument("crop_sample: feature/label length mismatch");
  if (crop_frames < 1 || crop_frames > total) {
    throw std::invalid_argument("crop_sample: crop of " + std::to_string(crop_frames) + " frames from " +
                                std::to_string(total));
  }
  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, total - crop_frames);
  const Eigen::Index start = pick(rng);
  FrameFeatures f{features.values.middleRows(start, crop_frames), features.hop_s, features.window_s};
  SpeakerActivityMatrix l;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index s = 0; s < labels.num_speakers(); ++s) {
    if (labels.values.col(s).segment(start, crop_frames).sum() > 0.0) keep.push_back(s);
  }
  l.values.resize(crop_frames, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    l.values.col(static_cast<Eigen::Index>(i)) = labels.values.col(keep[i]).segment(start, crop_frames);
    l.speakers.push_back(labels.speakers[static_cast<std::size_t>(keep[i])]);
  }
  return {std::move(f), std::move(l)};
}

}  // namespace eend
