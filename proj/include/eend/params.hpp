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

#include "eend/ops.hpp"

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace eend {

using Rng = std::mt19937_64;

/// Named registry of trainable leaves. Names are stable across runs and are
/// the keys used in checkpoints.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Matrix value) {
    if (params_.count(name)) throw std::logic_error("duplicate parameter " + name);
    Tensor t = Tensor::parameter(std::move(value));
    params_.emplace(name, t);
    return t;
  }

  const Tensor& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const std::map<std::string, Tensor>& all() const { return params_; }

  void zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
  }

  std::size_t count_scalars(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) {
      if (name.rfind(prefix, 0) == 0) n += static_cast<std::size_t>(t.value().size());
    }
    return n;
  }

  std::map<std::string, Matrix> snapshot() const {
    std::map<std::string, Matrix> out;
    for (const auto& [name, t] : params_) out.emplace(name, t.value());
    return out;
  }

  /// Overwrites values in place; shapes and names must match exactly.
  void load(const std::map<std::string, Matrix>& values) {
    if (values.size() != params_.size()) {
      throw std::invalid_argument("parameter count mismatch: expected " + std::to_string(params_.size()) +
                                  ", got " + std::to_string(values.size()));
    }
    for (auto& [name, t] : params_) {
      auto it = values.find(name);
      if (it == values.end()) throw std::invalid_argument("missing parameter " + name);
      if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
        throw std::invalid_argument("shape mismatch for parameter " + name);
      }
      t.mutable_value() = it->second;
    }
  }

 private:
  std::map<std::string, Tensor> params_;
};

inline Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

inline Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// y = x W + b with W stored in x out.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear create(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
                       Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    return {store.add(name + ".weight", uniform_matrix(in, out, bound, rng)),
            store.add(name + ".bias", uniform_matrix(1, out, bound, rng))};
  }

  Tensor operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm create(ParameterStore& store, const std::string& name, Eigen::Index dim) {
    return {store.add(name + ".gain", Matrix::Ones(1, dim)), store.add(name + ".bias", Matrix::Zero(1, dim))};
  }

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

}  // namespace eend
