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

// Multi-domain training: per-sample adapter routing with adapter dropout,
// Adam, learning-rate schedules, validation and checkpoint averaging.

#pragma once

#include "eend/checkpoint.hpp"
#include "eend/inference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <unordered_map>

namespace eend {

enum class Scheduler { kConstant, kNoam };

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double lr = 5e-5;
  Scheduler scheduler = Scheduler::kConstant;
  int warmup_steps = 100000;
  LossWeights weights;
  double adapter_dropout = 0.0;
  int crop_frames = 5000;
  std::uint64_t seed = 0;
  int average_best = 10;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (warmup_steps < 1) throw std::invalid_argument("warmup_steps must be >= 1");
    if (!(adapter_dropout >= 0.0 && adapter_dropout <= 1.0)) throw std::invalid_argument("adapter_dropout must be in [0, 1]");
    if (crop_frames < 1) throw std::invalid_argument("crop_frames must be >= 1");
    if (average_best < 1) throw std::invalid_argument("average_best must be >= 1");
    weights.validate();
  }
};

/// d^-0.5 * min(step^-0.5, step * warmup^-1.5).
inline double noam_lr(long step, int d_model, long warmup) {
  if (step < 1) throw std::invalid_argument("noam_lr: step must be >= 1");
  if (d_model < 1 || warmup < 1) throw std::invalid_argument("noam_lr: d_model and warmup must be >= 1");
  const auto s = static_cast<double>(step);
  return std::pow(d_model, -0.5) * std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(warmup), -1.5));
}

/// Adam whose update touches only parameters that received gradient in the
/// current step; each parameter keeps its own step count for bias
/// correction.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& store, double lr) {
    for (auto& [name, param] : store.all()) {
      if (!param.has_grad()) continue;
      State& s = state_[name];
      if (s.m.size() == 0) {
        s.m = Matrix::Zero(param.rows(), param.cols());
        s.v = Matrix::Zero(param.rows(), param.cols());
      }
      ++s.t;
      const Matrix& g = param.node()->grad;
      s.m = beta1_ * s.m + (1.0 - beta1_) * g;
      s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
      const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
      Matrix& w = param.node()->value;
      w.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
    }
  }

 private:
  struct State {
    Matrix m;
    Matrix v;
    long t = 0;
  };
  double beta1_, beta2_, eps_;
  std::unordered_map<std::string, State> state_;
};

struct TrainingSample {
  FrameFeatures features;
  SpeakerActivityMatrix labels;
  std::string domain;
};

/// Held-out recording with its reference segments for DER.
struct ValidationSample {
  std::string id;
  FrameFeatures features;
  SpeakerActivityMatrix labels;
  std::vector<RttmSegment> reference;
  std::string domain;
};

struct StepRecord {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double diarization = 0.0;
  double attractor = 0.0;
  double domain = 0.0;
  int routed_none = 0;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-sample adapter routing: nullopt (adapters skipped) with probability
/// p, else the sample's own domain.
inline AdapterRoute draw_route(const std::string& domain, double p, Rng& rng) {
  if (p >= 1.0) return std::nullopt;
  if (p > 0.0 && std::bernoulli_distribution(p)(rng)) return std::nullopt;
  return domain;
}

inline double scheduled_lr(const TrainConfig& cfg, long step, int d_model) {
  return cfg.scheduler == Scheduler::kNoam ? noam_lr(step, d_model, cfg.warmup_steps) : cfg.lr;
}

/// One optimizer update on the mean combined loss of the batch.
inline StepRecord train_step(const std::vector<const TrainingSample*>& batch, EendModel& model, const TrainConfig& cfg,
                             Adam& optimizer, Rng& rng, long step) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  for (const auto* s : batch) {
    if (!model.config().encoder.domain_index(s->domain)) {
      throw std::invalid_argument(model.encoder().unknown_domain_message(s->domain));
    }
  }
  model.params().zero_grad();
  StepRecord rec;
  rec.step = step;
  rec.lr = scheduled_lr(cfg, step, model.config().encoder.d_model);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  int with_domain = 0;
  for (const auto* s : batch) {
    SampleOptions opt;
    opt.route = draw_route(s->domain, cfg.adapter_dropout, rng);
    opt.shuffle = true;
    opt.shuffle_seed = rng();
    opt.weights = cfg.weights;
    if (!opt.route) ++rec.routed_none;
    SampleLoss l = model.sample_loss(s->features, s->labels, model.config().encoder.domain_index(s->domain), opt);
    if (!std::isfinite(l.total.item())) {
      throw NonFiniteLoss("non-finite loss at step " + std::to_string(step) + " (diarization " +
                          std::to_string(l.diarization) + ", attractor " + std::to_string(l.attractor) +
                          ", domain " + (l.domain ? std::to_string(*l.domain) : std::string("n/a")) +
                          ", lr " + std::to_string(rec.lr) + ")");
    }
    backward(scale(l.total, inv_batch));
    rec.loss += l.total.item() * inv_batch;
    rec.diarization += l.diarization * inv_batch;
    rec.attractor += l.attractor * inv_batch;
    if (l.domain) {
      rec.domain += *l.domain;
      ++with_domain;
    }
  }
  if (with_domain > 0) rec.domain /= with_domain;
  optimizer.step(model.params(), rec.lr);
  return rec;
}

struct ValidationReport {
  double diarization_loss = 0.0;  // mean PIT BCE at ground-truth speaker count
  double der = 0.0;               // pooled over recordings
  double domain_accuracy = 0.0;   // NaN when the model has no head
};

/// Ground-truth-domain adapters, no shuffling, full recordings.
inline ValidationReport validate_model(const EendModel& model, const std::vector<ValidationSample>& samples,
                                       const InferenceConfig& base) {
  ValidationReport r;
  r.domain_accuracy = std::numeric_limits<double>::quiet_NaN();
  if (samples.empty()) return r;
  NoGradGuard no_grad;
  std::vector<RttmSegment> ref, hyp;
  int correct = 0;
  for (const auto& s : samples) {
    SampleOptions opt;
    opt.route = s.domain;
    r.diarization_loss += model.sample_loss(s.features, s.labels, std::nullopt, opt).diarization;
    InferenceConfig cfg = base;
    cfg.adapter = s.domain;
    auto seg = to_rttm(diarize(s.features, model, cfg), s.id);
    hyp.insert(hyp.end(), seg.begin(), seg.end());
    ref.insert(ref.end(), s.reference.begin(), s.reference.end());
    if (model.domain_head() && predict_domain(s.features, model, std::nullopt).name == s.domain) ++correct;
  }
  r.diarization_loss /= static_cast<double>(samples.size());
  r.der = compute_der(ref, hyp, 0.0).der;
  if (model.domain_head()) r.domain_accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return r;
}

/// k entries with the smallest validation DER, ties to the earlier epoch.
template <typename C>
std::vector<C> select_best(const std::vector<C>& checkpoints, int k) {
  if (k < 1) throw std::invalid_argument("select_best: k must be >= 1");
  if (static_cast<std::size_t>(k) > checkpoints.size()) {
    throw std::invalid_argument("select_best: k=" + std::to_string(k) + " exceeds the " +
                                std::to_string(checkpoints.size()) + " available checkpoints");
  }
  std::vector<C> sorted = checkpoints;
  std::stable_sort(sorted.begin(), sorted.end(), [](const C& a, const C& b) {
    if (a.validation_der != b.validation_der) return a.validation_der < b.validation_der;
    return a.epoch < b.epoch;
  });
  sorted.resize(static_cast<std::size_t>(k));
  return sorted;
}

/// Element-wise mean of every tensor. The result carries the latest epoch
/// and an unknown validation DER.
inline Checkpoint average_checkpoints(const std::vector<Checkpoint>& checkpoints) {
  if (checkpoints.empty()) throw std::invalid_argument("average_checkpoints: empty list");
  Checkpoint out = checkpoints.front();
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    const Checkpoint& c = checkpoints[i];
    if (c.config_hash != out.config_hash) {
      throw std::invalid_argument("average_checkpoints: config hash mismatch (" + c.config_hash + " vs " +
                                  out.config_hash + ")");
    }
    if (c.tensors.size() != out.tensors.size()) throw std::invalid_argument("average_checkpoints: tensor sets differ");
    for (auto& [name, m] : out.tensors) {
      auto it = c.tensors.find(name);
      if (it == c.tensors.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
        throw std::invalid_argument("average_checkpoints: tensor " + name + " missing or reshaped");
      }
      m += it->second;
    }
    out.epoch = std::max(out.epoch, c.epoch);
  }
  const double inv = 1.0 / static_cast<double>(checkpoints.size());
  for (auto& [name, m] : out.tensors) m *= inv;
  out.validation_der = std::numeric_limits<double>::infinity();
  return out;
}

/// Global per-bin mean and standard deviation over all training frames.
inline std::pair<Matrix, Matrix> feature_statistics(const std::vector<TrainingSample>& samples, int dim) {
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim), sq = Eigen::RowVectorXd::Zero(dim);
  double n = 0.0;
  for (const auto& s : samples) {
    sum += s.features.values.colwise().sum();
    sq += s.features.values.array().square().matrix().colwise().sum();
    n += static_cast<double>(s.features.frames());
  }
  Matrix mean = Matrix::Zero(1, dim), stddev = Matrix::Ones(1, dim);
  if (n > 0.0) {
    mean.row(0) = sum / n;
    stddev.row(0) = ((sq / n).array() - mean.row(0).array().square()).max(1e-12).sqrt().matrix();
  }
  return {mean, stddev};
}

struct EpochReport {
  int epoch = 0;
  long steps = 0;
  double train_loss = 0.0;
  ValidationReport validation;
};

/// Epoch loop over a pooled multi-domain corpus. Batches are drawn
/// uniformly from a per-epoch shuffle; each sample is re-cropped per epoch.
class Trainer {
 public:
  using StepLogger = std::function<void(const StepRecord&, int epoch)>;

  Trainer(EendModel& model, TrainConfig cfg, InferenceConfig inference = {})
      : model_(model), cfg_(std::move(cfg)), inference_(std::move(inference)), rng_(cfg_.seed) {
    cfg_.validate();
  }

  void set_step_logger(StepLogger logger) { logger_ = std::move(logger); }
  long steps() const { return step_; }

  EpochReport run_epoch(const std::vector<TrainingSample>& train, const std::vector<ValidationSample>& validation,
                        int epoch) {
    if (train.empty()) throw std::invalid_argument("training set is empty");
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    EpochReport report;
    report.epoch = epoch;
    std::vector<TrainingSample> cropped;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
      cropped.clear();
      for (std::size_t i = start; i < end; ++i) cropped.push_back(crop_for_training(train[order[i]]));
      std::vector<const TrainingSample*> batch;
      for (const auto& s : cropped) batch.push_back(&s);
      StepRecord rec = train_step(batch, model_, cfg_, optimizer_, rng_, ++step_);
      if (logger_) logger_(rec, epoch);
      report.train_loss += rec.loss;
      ++report.steps;
    }
    report.train_loss /= static_cast<double>(std::max<long>(1, report.steps));
    report.validation = validate_model(model_, validation, inference_);
    return report;
  }

 private:
  TrainingSample crop_for_training(const TrainingSample& s) {
    const std::uint64_t seed = rng_();
    if (s.features.frames() <= cfg_.crop_frames) return s;
    auto [f, l] = crop_sample(s.features, s.labels, cfg_.crop_frames, seed);
    return {std::move(f), std::move(l), s.domain};
  }

  EendModel& model_;
  TrainConfig cfg_;
  InferenceConfig inference_;
  Rng rng_;
  Adam optimizer_;
  StepLogger logger_;
  long step_ = 0;
};

}  // namespace eend
