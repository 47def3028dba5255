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

// Log mel filterbank front end: Hamming window, power spectrum, HTK mel
// triangles spanning 0 Hz to Nyquist, natural log with an additive floor.

#pragma once

#include "eend/tensor.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace eend {

struct FeatureConfig {
  int num_mel = 23;
  double window_s = 0.025;
  double hop_s = 0.01;
  double log_floor = 1e-10;
};

struct FrameFeatures {
  Matrix values;  // T x F
  double hop_s = 0.01;
  double window_s = 0.025;

  Eigen::Index frames() const { return values.rows(); }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// num_mel x (fft_size/2 + 1) triangular filters.
inline Matrix mel_filterbank(int num_mel, int fft_size, int sample_rate) {
  const int bins = fft_size / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(num_mel) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(num_mel + 1));
  }
  Matrix fb = Matrix::Zero(num_mel, bins);
  for (int m = 0; m < num_mel; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      if (f > lo && f < hi) fb(m, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

/// Frames with T = floor((N - W) / H) + 1 for window W and hop H in samples.
inline Eigen::Index frame_count(std::size_t num_samples, int sample_rate, const FeatureConfig& cfg) {
  const auto win = static_cast<std::size_t>(std::lround(cfg.window_s * sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_s * sample_rate));
  if (num_samples < win) return 0;
  return static_cast<Eigen::Index>((num_samples - win) / hop + 1);
}

inline FrameFeatures extract_logmel(std::span<const double> waveform, int sample_rate,
                                    const FeatureConfig& cfg = {}) {
  if (waveform.empty()) throw std::invalid_argument("extract_logmel: empty waveform");
  if (sample_rate < 8000) throw std::invalid_argument("extract_logmel: sample rate below 8 kHz");
  if (cfg.num_mel < 1 || cfg.window_s <= 0.0 || cfg.hop_s <= 0.0) {
    throw std::invalid_argument("extract_logmel: invalid feature configuration");
  }
  const int win = static_cast<int>(std::lround(cfg.window_s * sample_rate));
  const int hop = static_cast<int>(std::lround(cfg.hop_s * sample_rate));
  const Eigen::Index frames = frame_count(waveform.size(), sample_rate, cfg);
  if (frames < 1) throw std::invalid_argument("extract_logmel: waveform shorter than one analysis window");

  int fft_size = 1;
  while (fft_size < win) fft_size *= 2;
  const Matrix fb = mel_filterbank(cfg.num_mel, fft_size, sample_rate);
  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    window[static_cast<std::size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (win - 1));
  }

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(fft_size), 0.0);
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(fft_size / 2 + 1);
  FrameFeatures out;
  out.values.resize(frames, cfg.num_mel);
  out.hop_s = cfg.hop_s;
  out.window_s = cfg.window_s;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
    for (int i = 0; i < win; ++i) {
      buf[static_cast<std::size_t>(i)] = waveform[off + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
    }
    fft.fwd(spec, buf);
    for (int k = 0; k <= fft_size / 2; ++k) power(k) = std::norm(spec[static_cast<std::size_t>(k)]);
    Eigen::VectorXd mel = fb * power;
    for (int m = 0; m < cfg.num_mel; ++m) out.values(t, m) = std::log(mel(m) + cfg.log_floor);
  }
  return out;
}

}  // namespace eend
