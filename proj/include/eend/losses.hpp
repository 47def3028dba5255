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

// Training objectives: permutation-invariant diarization BCE, attractor
// existence BCE and the auxiliary domain-classification cross-entropy.

#pragma once

#include "eend/params.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace eend {

struct LossWeights {
  double alpha = 1.0;
  double beta = 2.0;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  }
};

inline constexpr double kProbClamp = 1e-7;
inline constexpr int kDefaultMaxPitSpeakers = 4;

namespace detail {

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

inline double bce(double p, double y) {
  const double q = clamp_prob(p);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

inline double bce_logit(double x, double y) { return softplus(x) - x * y; }

// cost(s, l) = sum_t loss(pred(t, s), label(t, l)).
template <typename Elementwise>
Matrix pairwise_cost(const Matrix& pred, const Matrix& labels, Elementwise loss) {
  const auto s = pred.cols();
  Matrix cost = Matrix::Zero(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = 0; j < s; ++j) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < pred.rows(); ++t) acc += loss(pred(t, i), labels(t, j));
      cost(i, j) = acc;
    }
  }
  return cost;
}

// Lexicographic enumeration keeps the first (smallest) minimizer.
inline std::pair<double, std::vector<int>> best_permutation(const Matrix& cost) {
  const auto s = static_cast<int>(cost.rows());
  std::vector<int> perm(static_cast<std::size_t>(s));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_total = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < s; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    if (total < best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_total, best};
}

inline void check_pit_shapes(Eigen::Index pr, Eigen::Index pc, const Matrix& labels, int max_speakers) {
  if (pr != labels.rows() || pc != labels.cols()) throw std::invalid_argument("pit loss: shape mismatch");
  if (pc > max_speakers) {
    throw std::invalid_argument("pit loss: " + std::to_string(pc) + " speakers exceeds the permutation limit of " +
                                std::to_string(max_speakers));
  }
  if (pr == 0 || pc == 0) throw std::invalid_argument("pit loss: empty input");
}

}  // namespace detail

/// T x S matrix sigmoid(e_t . a_s).
inline Matrix frame_speaker_posteriors(const Matrix& attractors, const Matrix& embeddings) {
  if (attractors.cols() != embeddings.cols()) throw std::invalid_argument("posteriors: dimension mismatch");
  return detail::sigmoid(Matrix(embeddings * attractors.transpose()));
}

/// Differentiable logits e_t . a_s.
inline Tensor speaker_logits(const Tensor& embeddings, const Tensor& attractors) {
  return matmul(embeddings, transpose(attractors));
}

struct PitResult {
  double loss = 0.0;
  // permutation[s] = label column matched to prediction column s.
  std::vector<int> permutation;
};

/// Minimum over column permutations of summed BCE, normalized by T*S.
inline PitResult pit_diarization_loss(const Matrix& posteriors, const Matrix& labels,
                                      int max_speakers = kDefaultMaxPitSpeakers) {
  detail::check_pit_shapes(posteriors.rows(), posteriors.cols(), labels, max_speakers);
  Matrix cost = detail::pairwise_cost(posteriors, labels, detail::bce);
  auto [total, perm] = detail::best_permutation(cost);
  return {total / static_cast<double>(posteriors.rows() * posteriors.cols()), perm};
}

struct PitTensorResult {
  Tensor loss;
  std::vector<int> permutation;
};

/// Same objective on logits, with gradient through the winning permutation.
inline PitTensorResult pit_diarization_loss(const Tensor& logits, const Matrix& labels,
                                            int max_speakers = kDefaultMaxPitSpeakers) {
  detail::check_pit_shapes(logits.rows(), logits.cols(), labels, max_speakers);
  Matrix cost = detail::pairwise_cost(logits.value(), labels, detail::bce_logit);
  auto perm = detail::best_permutation(cost).second;
  Matrix permuted(labels.rows(), labels.cols());
  for (std::size_t s = 0; s < perm.size(); ++s) permuted.col(static_cast<Eigen::Index>(s)) = labels.col(perm[s]);
  const double norm = 1.0 / static_cast<double>(labels.rows() * labels.cols());
  return {scale(bce_with_logits_sum(logits, permuted), norm), std::move(perm)};
}

/// Existence targets (1,...,1,0) with num_speakers ones.
inline Matrix existence_targets(int num_speakers) {
  Matrix l = Matrix::Ones(num_speakers + 1, 1);
  l(num_speakers, 0) = 0.0;
  return l;
}

inline double attractor_existence_loss(const std::vector<double>& probs, int num_speakers) {
  if (num_speakers < 0 || probs.size() != static_cast<std::size_t>(num_speakers) + 1) {
    throw std::invalid_argument("attractor_existence_loss: expected S+1 probabilities");
  }
  double total = 0.0;
  for (int s = 0; s <= num_speakers; ++s) total += detail::bce(probs[static_cast<std::size_t>(s)], s < num_speakers ? 1.0 : 0.0);
  return total / static_cast<double>(num_speakers + 1);
}

inline Tensor attractor_existence_loss(const Tensor& existence_logits, int num_speakers) {
  if (num_speakers < 0 || existence_logits.rows() != num_speakers + 1 || existence_logits.cols() != 1) {
    throw std::invalid_argument("attractor_existence_loss: expected S+1 logits");
  }
  return scale(bce_with_logits_sum(existence_logits, existence_targets(num_speakers)),
               1.0 / static_cast<double>(num_speakers + 1));
}

/// Residual feed-forward (hidden width = input width) followed by a
/// projection onto the domain logits.
struct DomainHead {
  Linear ff_in;
  Linear ff_out;
  Linear classifier;

  static DomainHead create(ParameterStore& store, int input_dim, int num_domains, Rng& rng,
                           const std::string& prefix = "domain_head") {
    return {Linear::create(store, prefix + ".ff_in", input_dim, input_dim, rng),
            Linear::create(store, prefix + ".ff_out", input_dim, input_dim, rng),
            Linear::create(store, prefix + ".classifier", input_dim, num_domains, rng)};
  }

  int input_dim() const { return static_cast<int>(ff_in.weight.rows()); }
  int num_domains() const { return static_cast<int>(classifier.weight.cols()); }

  Tensor logits(const Tensor& v) const {
    if (v.rows() != 1 || v.cols() != input_dim()) throw std::invalid_argument("domain head: input width mismatch");
    Tensor z = add(v, ff_out(swish(ff_in(v))));
    return classifier(z);
  }
};

struct DomainLoss {
  Tensor loss;
  Vector probs;
};

inline Vector softmax(const Matrix& row) {
  const double m = row.maxCoeff();
  Vector e = (row.row(0).array() - m).exp().matrix().transpose();
  return e / e.sum();
}

inline DomainLoss domain_classification_loss(const Tensor& v, Eigen::Index true_domain, const DomainHead& head) {
  if (true_domain < 0 || true_domain >= head.num_domains()) {
    throw std::invalid_argument("domain_classification_loss: unknown domain index " + std::to_string(true_domain));
  }
  Tensor logits = head.logits(v);
  return {softmax_cross_entropy(logits, true_domain), softmax(logits.value())};
}

inline double combined_loss(double diar, double attr, std::optional<double> domain, const LossWeights& w) {
  w.validate();
  double total = diar + w.alpha * attr;
  if (domain) total += w.beta * *domain;
  return total;
}

inline Tensor combined_loss(const Tensor& diar, const Tensor& attr, const std::optional<Tensor>& domain,
                            const LossWeights& w) {
  w.validate();
  Tensor total = add(diar, scale(attr, w.alpha));
  if (domain) total = add(total, scale(*domain, w.beta));
  return total;
}

}  // namespace eend
