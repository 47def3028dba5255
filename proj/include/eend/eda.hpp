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

// Encoder-decoder attractors. An LSTM summarizes the frame embeddings into
// (h0, c0); a second LSTM, fed zero vectors, unrolls one attractor per step
// and a logistic unit scores whether that attractor is a real speaker.

#pragma once

#include "eend/params.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

namespace eend {

struct LstmParams {
  Tensor input_weight;      // I x 4H
  Tensor recurrent_weight;  // H x 4H
  Tensor bias;              // 1 x 4H, forget slice starts at 1.0

  static LstmParams create(ParameterStore& store, const std::string& name, int input, int hidden, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    Matrix bias = uniform_matrix(1, 4 * hidden, bound, rng);
    bias.middleCols(hidden, hidden).setOnes();
    return {store.add(name + ".input_weight", uniform_matrix(input, 4 * hidden, bound, rng)),
            store.add(name + ".recurrent_weight", uniform_matrix(hidden, 4 * hidden, bound, rng)),
            store.add(name + ".bias", std::move(bias))};
  }

  int hidden() const { return static_cast<int>(recurrent_weight.rows()); }

  LstmOutput run(const Tensor& x, const Tensor& h0, const Tensor& c0) const {
    return lstm(x, h0, c0, input_weight, recurrent_weight, bias);
  }
};

struct EdaState {
  Tensor h;  // 1 x d
  Tensor c;  // 1 x d
};

struct AttractorSet {
  Matrix attractors;  // K x d
  std::vector<double> probs;
  int active_count = 0;
};

/// Differentiable decoder output for a fixed number of steps.
struct AttractorTrace {
  Tensor attractors;        // steps x d
  Tensor existence_logits;  // steps x 1
};

/// Number of leading probabilities at or above the threshold; the first
/// sub-threshold entry ends the count.
inline int count_active(const std::vector<double>& probs, double threshold) {
  int n = 0;
  for (double p : probs) {
    if (p < threshold) break;
    ++n;
  }
  return n;
}

/// Values unchanged, gradient path to the encoder cut.
inline Tensor detach_for_eda(const Tensor& embeddings) { return detach(embeddings); }

/// Uniform random frame order drawn from seed.
inline std::vector<Eigen::Index> shuffled_order(Eigen::Index n, std::uint64_t seed) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

class EncoderDecoderAttractor {
 public:
  EncoderDecoderAttractor() = default;

  static EncoderDecoderAttractor create(ParameterStore& store, int d_model, Rng& rng,
                                        const std::string& prefix = "eda") {
    EncoderDecoderAttractor eda;
    eda.encoder_ = LstmParams::create(store, prefix + ".encoder", d_model, d_model, rng);
    eda.decoder_ = LstmParams::create(store, prefix + ".decoder", d_model, d_model, rng);
    eda.existence_ = Linear::create(store, prefix + ".existence", d_model, 1, rng);
    return eda;
  }

  int d_model() const { return encoder_.hidden(); }
  const LstmParams& encoder_lstm() const { return encoder_; }
  const LstmParams& decoder_lstm() const { return decoder_; }

  /// Final (h, c) after reading the embeddings, optionally in a shuffled
  /// frame order (training only).
  EdaState encode(const Tensor& embeddings, bool shuffle, std::uint64_t seed) const {
    if (embeddings.rows() == 0) throw std::invalid_argument("eda_encode: empty embedding sequence");
    if (embeddings.cols() != d_model()) throw std::invalid_argument("eda_encode: embedding width mismatch");
    Tensor seq = shuffle ? permute_rows(embeddings, shuffled_order(embeddings.rows(), seed)) : embeddings;
    const auto zero = Tensor::constant(Matrix::Zero(1, d_model()));
    LstmOutput out = encoder_.run(seq, zero, zero);
    return {slice_rows(out.hidden, out.hidden.rows() - 1, 1), out.cell};
  }

  AttractorTrace decode(const EdaState& state, int steps) const {
    if (steps < 1) throw std::invalid_argument("eda_decode: steps must be >= 1");
    const auto zeros = Tensor::constant(Matrix::Zero(steps, d_model()));
    LstmOutput out = decoder_.run(zeros, state.h, state.c);
    return {out.hidden, existence_(out.hidden)};
  }

  /// Fixed-length decode reported as values. active_count applies the
  /// leading-run rule at the given threshold.
  AttractorSet decode_values(const EdaState& state, int steps, double threshold) const {
    AttractorTrace trace = decode(state, steps);
    AttractorSet set;
    set.attractors = trace.attractors.value();
    for (Eigen::Index s = 0; s < steps; ++s) set.probs.push_back(detail::sigmoid(trace.existence_logits.value()(s, 0)));
    set.active_count = count_active(set.probs, threshold);
    return set;
  }

  /// Inference decode: one step at a time, stopping at the first attractor
  /// whose existence probability falls below threshold, or at max_steps.
  /// The stopping attractor is kept in the set but not counted.
  AttractorSet decode_until(const EdaState& state, double threshold, int max_steps) const {
    if (max_steps < 1) throw std::invalid_argument("eda_decode: max_steps must be >= 1");
    AttractorSet set;
    set.attractors.resize(0, d_model());
    Tensor h = state.h;
    Tensor c = state.c;
    const auto zero = Tensor::constant(Matrix::Zero(1, d_model()));
    for (int s = 0; s < max_steps; ++s) {
      LstmOutput out = decoder_.run(zero, h, c);
      h = out.hidden;
      c = out.cell;
      const double p = detail::sigmoid(existence_(h).value()(0, 0));
      set.attractors.conservativeResize(set.attractors.rows() + 1, Eigen::NoChange);
      set.attractors.bottomRows(1) = h.value();
      set.probs.push_back(p);
      if (p < threshold) break;
      ++set.active_count;
    }
    return set;
  }

 private:
  LstmParams encoder_;
  LstmParams decoder_;
  Linear existence_;
};

}  // namespace eend
