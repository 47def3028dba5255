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

#include "test_util.hpp"

#include <gtest/gtest.h>

namespace eend {
namespace {

using testing::random_matrix;
using testing::toy_encoder_config;

EendModel toy_model(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.encoder = toy_encoder_config();
  return EendModel::create(cfg, seed);
}

// Two speakers in alternating blocks, features shifted by who is talking.
TrainingSample toy_sample(Rng& rng, const std::string& domain, int frames = 64) {
  Matrix labels = Matrix::Zero(frames, 2);
  Matrix feats = random_matrix(frames, 5, rng, 0.3);
  for (int t = 0; t < frames; ++t) {
    const int s = (t / 16) % 2;
    labels(t, s) = 1.0;
    feats(t, s) += 1.5;
  }
  return {FrameFeatures{feats, 0.01, 0.025}, SpeakerActivityMatrix{labels, {"a", "b"}}, domain};
}

std::map<std::string, Matrix> with_prefix(const std::map<std::string, Matrix>& all, const std::string& prefix) {
  std::map<std::string, Matrix> out;
  for (const auto& [k, v] : all) {
    if (k.rfind(prefix, 0) == 0) out.emplace(k, v);
  }
  return out;
}

TEST(Noam, KnownValuesAndShape) {
  EXPECT_NEAR(noam_lr(1, 256, 100000), std::pow(256.0, -0.5) * std::pow(1e5, -1.5), 1e-20);
  EXPECT_NEAR(noam_lr(1, 256, 100000), 1.976e-9, 1e-12);
  EXPECT_NEAR(noam_lr(4000, 64, 4000), std::pow(64.0, -0.5) * std::pow(4000.0, -0.5), 1e-15);
  for (long s = 2; s <= 4000; s += 37) EXPECT_GT(noam_lr(s, 64, 4000), noam_lr(s - 1, 64, 4000));
  for (long s = 4001; s <= 20000; s += 371) EXPECT_LT(noam_lr(s, 64, 4000), noam_lr(s - 1, 64, 4000));
  EXPECT_THROW(noam_lr(0, 64, 4000), std::invalid_argument);
}

struct FakeCkpt {
  int epoch;
  double validation_der;
};

TEST(SelectBest, SmallestDerTiesToEarlierEpoch) {
  std::vector<FakeCkpt> c = {{1, 0.3}, {2, 0.1}, {3, 0.2}};
  auto best = select_best(c, 2);
  ASSERT_EQ(best.size(), 2u);
  EXPECT_EQ(best[0].epoch, 2);
  EXPECT_EQ(best[1].epoch, 3);
  EXPECT_EQ(select_best(c, 3).size(), 3u);
  std::vector<FakeCkpt> tie = {{1, 0.2}, {2, 0.1}, {3, 0.2}, {4, 0.2}};
  auto t = select_best(tie, 3);
  EXPECT_EQ(t[1].epoch, 1);
  EXPECT_EQ(t[2].epoch, 3);
  EXPECT_THROW(select_best(c, 4), std::invalid_argument);
  EXPECT_THROW(select_best(c, 0), std::invalid_argument);
}

TEST(AverageCheckpoints, ElementwiseMean) {
  EendModel m = toy_model(1);
  Checkpoint a = capture_checkpoint(m, 1, 0.3);
  auto single = average_checkpoints({a});
  for (const auto& [k, v] : a.tensors) EXPECT_EQ(single.tensors.at(k), v);

  Rng rng(1);
  std::vector<Checkpoint> ten;
  for (int i = 0; i < 10; ++i) {
    Checkpoint c = a;
    c.epoch = i + 1;
    for (auto& [k, v] : c.tensors) v = random_matrix(v.rows(), v.cols(), rng);
    ten.push_back(c);
  }
  auto avg = average_checkpoints(ten);
  EXPECT_EQ(avg.epoch, 10);
  for (const auto& [k, v] : avg.tensors) {
    double oracle = 0.0;
    for (const auto& c : ten) oracle += c.tensors.at(k)(0, 0);
    EXPECT_NEAR(v(0, 0), oracle / 10.0, 1e-12) << k;
  }
  Checkpoint other = a;
  other.config_hash = "different";
  EXPECT_THROW(average_checkpoints({a, other}), std::invalid_argument);
  EXPECT_THROW(average_checkpoints({}), std::invalid_argument);
}

TEST(AdapterDropout, RoutingFrequency) {
  for (double p : {0.025, 0.1}) {
    Rng rng(7);
    int none = 0;
    for (int i = 0; i < 10000; ++i) none += !draw_route("alpha", p, rng).has_value();
    EXPECT_NEAR(none / 10000.0, p, 0.02);
  }
  Rng rng(8);
  EXPECT_EQ(draw_route("alpha", 0.0, rng), AdapterRoute("alpha"));
  EXPECT_FALSE(draw_route("alpha", 1.0, rng).has_value());
}

TEST(TrainStep, FullDropoutLeavesAdaptersUntouched) {
  EendModel m = toy_model(2);
  Rng rng(2);
  std::vector<TrainingSample> data = {toy_sample(rng, "alpha"), toy_sample(rng, "beta")};
  TrainConfig cfg;
  cfg.adapter_dropout = 1.0;
  cfg.lr = 1e-2;
  Adam opt;
  const auto before = m.params().snapshot();
  std::vector<const TrainingSample*> batch = {&data[0], &data[1]};
  auto rec = train_step(batch, m, cfg, opt, rng, 1);
  EXPECT_EQ(rec.routed_none, 2);
  const auto after = m.params().snapshot();
  for (const auto& [k, v] : with_prefix(before, "encoder.adapter.")) EXPECT_EQ(after.at(k), v) << k;
  for (const auto& [name, t] : m.params().all()) {
    if (name.rfind("encoder.adapter.", 0) == 0) {
      EXPECT_TRUE(!t.has_grad() || t.grad().isZero(0.0)) << name;
    } else if (name.rfind("encoder.block", 0) == 0) {
      EXPECT_NE(after.at(name), before.at(name)) << name;
    }
  }
}

// Every step of a 50-step run: adapters of domains absent from the batch
// keep their exact values, and the trunk always moves.
TEST(TrainStep, GradientIsolationOverFiftySteps) {
  EendModel m = toy_model(3);
  Rng data_rng(3);
  std::vector<TrainingSample> data;
  for (int i = 0; i < 6; ++i) data.push_back(toy_sample(data_rng, i % 2 ? "beta" : "alpha", 48));
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.adapter_dropout = 0.1;
  Adam opt;
  Rng rng(4);
  std::uniform_int_distribution<int> pick(0, 5), size(1, 3);
  for (long step = 1; step <= 50; ++step) {
    std::vector<const TrainingSample*> batch;
    const int n = size(rng);
    // Single-domain batches on even steps, mixed otherwise.
    for (int i = 0; i < n; ++i) {
      int j = pick(rng);
      if (step % 2 == 0) j = 2 * (j / 2);
      batch.push_back(&data[static_cast<std::size_t>(j)]);
    }
    std::set<std::string> present;
    for (const auto* s : batch) present.insert(s->domain);
    const auto before = m.params().snapshot();
    train_step(batch, m, cfg, opt, rng, step);
    const auto after = m.params().snapshot();
    for (const std::string dom : {"alpha", "beta"}) {
      if (present.count(dom)) continue;
      for (const auto& [k, v] : with_prefix(before, "encoder.adapter." + dom + ".")) {
        ASSERT_EQ(after.at(k), v) << "step " << step << " " << k;
      }
    }
    ASSERT_NE(after.at("encoder.block1.ff1.expand.weight"), before.at("encoder.block1.ff1.expand.weight"));
  }
}

TEST(TrainStep, RejectsUnknownDomainAndEmptyBatch) {
  EendModel m = toy_model(4);
  Rng rng(4);
  auto s = toy_sample(rng, "gamma");
  TrainConfig cfg;
  Adam opt;
  EXPECT_THROW(train_step({&s}, m, cfg, opt, rng, 1), std::invalid_argument);
  EXPECT_THROW(train_step({}, m, cfg, opt, rng, 1), std::invalid_argument);
}

TEST(TrainStep, NonFiniteLossIsReported) {
  EendModel m = toy_model(5);
  Rng rng(5);
  auto s = toy_sample(rng, "alpha");
  s.features.values(3, 2) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  Adam opt;
  EXPECT_THROW(train_step({&s}, m, cfg, opt, rng, 1), NonFiniteLoss);
}

std::vector<double> overfit_losses(std::uint64_t seed, int steps) {
  EendModel m = toy_model(seed);
  Rng data_rng(seed);
  std::vector<TrainingSample> data = {toy_sample(data_rng, "alpha"), toy_sample(data_rng, "beta")};
  std::vector<const TrainingSample*> batch = {&data[0], &data[1]};
  TrainConfig cfg;
  cfg.lr = 3e-3;
  Adam opt;
  Rng rng(seed + 1);
  std::vector<double> losses;
  for (long step = 1; step <= steps; ++step) losses.push_back(train_step(batch, m, cfg, opt, rng, step).loss);
  return losses;
}

TEST(TrainStep, OverfitsATinyBatch) {
  auto losses = overfit_losses(6, 200);
  const double first = std::accumulate(losses.begin(), losses.begin() + 10, 0.0) / 10.0;
  const double last = std::accumulate(losses.end() - 10, losses.end(), 0.0) / 10.0;
  EXPECT_LT(last, 0.5 * first) << first << " -> " << last;
}

TEST(TrainStep, ReproducibleUnderFixedSeed) {
  EXPECT_EQ(overfit_losses(7, 10), overfit_losses(7, 10));
}

TEST(Trainer, EpochReportsValidation) {
  EendModel m = toy_model(8);
  Rng rng(8);
  std::vector<TrainingSample> train;
  for (int i = 0; i < 5; ++i) train.push_back(toy_sample(rng, i % 2 ? "beta" : "alpha", 80));
  std::vector<ValidationSample> val;
  for (int i = 0; i < 2; ++i) {
    auto s = toy_sample(rng, "alpha", 80);
    val.push_back({"v" + std::to_string(i), s.features, s.labels,
                   {{"v" + std::to_string(i), 0.0, 0.16, "a"}, {"v" + std::to_string(i), 0.16, 0.16, "b"}}, "alpha"});
  }
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.crop_frames = 40;
  cfg.lr = 1e-3;
  Trainer trainer(m, cfg);
  long logged = 0;
  trainer.set_step_logger([&](const StepRecord&, int) { ++logged; });
  auto r = trainer.run_epoch(train, val, 1);
  EXPECT_EQ(r.steps, 3);
  EXPECT_EQ(logged, 3);
  EXPECT_TRUE(std::isfinite(r.train_loss));
  EXPECT_TRUE(std::isfinite(r.validation.diarization_loss));
  EXPECT_GE(r.validation.der, 0.0);
  EXPECT_TRUE(std::isnan(r.validation.domain_accuracy) || r.validation.domain_accuracy >= 0.0);
  EXPECT_THROW(trainer.run_epoch({}, val, 2), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.adapter_dropout = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace eend
