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

#pragma once

#include "eend/eend.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace eend::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

/// Fixed random projection turning a matrix-valued output into a scalar, so
/// every output entry contributes with a distinct weight.
inline Tensor weighted_sum(const Tensor& out, std::uint64_t seed = 99) {
  Rng rng(seed);
  Matrix w = random_matrix(out.rows(), out.cols(), rng);
  return sum(mul(out, Tensor::constant(w)));
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Compares backward() against central differences for every scalar of
/// every tensor in `wrt`. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradients(const std::function<Tensor()>& loss, const std::vector<std::pair<std::string, Tensor>>& wrt,
                                 double h = 1e-5, double floor = 1e-6) {
  for (auto [_, t] : wrt) t.zero_grad();
  backward(loss());
  GradCheck out;
  for (const auto& [name, t] : wrt) {
    const Matrix analytic = t.grad();
    Tensor handle = t;
    Matrix& v = handle.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      double plus, minus;
      {
        NoGradGuard g;
        v.data()[i] = orig + h;
        plus = loss().item();
        v.data()[i] = orig - h;
        minus = loss().item();
        v.data()[i] = orig;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

/// Named parameters with the given name prefix.
inline std::vector<std::pair<std::string, Tensor>> params_with_prefix(const ParameterStore& store, const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : store.all()) {
    if (name.rfind(prefix, 0) == 0) out.emplace_back(name, t);
  }
  return out;
}

/// Randomizes every parameter with the prefix (adapters start at identity,
/// which would hide gradient paths).
inline void randomize(ParameterStore& store, const std::string& prefix, Rng& rng, double scale = 0.3) {
  for (const auto& [name, t] : store.all()) {
    if (name.rfind(prefix, 0) != 0) continue;
    Tensor h = t;
    h.mutable_value() = random_matrix(t.rows(), t.cols(), rng, scale);
  }
}

inline EncoderConfig toy_encoder_config(int d = 8, int blocks = 2) {
  EncoderConfig c;
  c.input_dim = 5;
  c.num_blocks = blocks;
  c.d_model = d;
  c.num_heads = 2;
  c.ff_hidden = 2 * d;
  c.conv_kernel = 3;
  c.subsample_factor = 4;
  c.adapter_bottleneck = 3;
  c.domains = {"alpha", "beta"};
  return c;
}

}  // namespace eend::testing
