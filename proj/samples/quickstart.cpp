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

// Library walkthrough without the CLI: simulate a few mixtures per domain,
// train a small model for a handful of epochs, then diarize one held-out
// recording with its own adapters and with none.

#include "eend/eend.hpp"

#include <iostream>

int main() {
  eend::RunConfig cfg = eend::default_run_config();
  cfg.seed = 3;
  cfg.data.train_per_domain = 24;
  cfg.data.val_per_domain = 2;
  cfg.data.eval_per_domain = 1;
  cfg.data.min_duration_s = 8.0;
  cfg.data.max_duration_s = 12.0;
  cfg.model.encoder.d_model = 32;
  cfg.model.encoder.num_blocks = 2;
  cfg.model.encoder.ff_hidden = 128;
  cfg.model.encoder.adapter_bottleneck = 8;
  cfg.train.batch_size = 4;
  cfg.train.crop_frames = 800;
  cfg.train.lr = 1e-3;
  cfg.train.adapter_dropout = 0.1;
  cfg.finalize();

  std::vector<eend::TrainingSample> train;
  std::vector<eend::ValidationSample> val;
  std::vector<eend::Recording> eval;
  for (const auto& item : eend::corpus_plan(cfg)) {
    eend::Recording r = eend::simulate_recording(cfg, item);
    if (item.split == 0) {
      train.push_back(eend::to_training_sample(r, cfg.model.max_speakers));
    } else if (item.split == 1) {
      val.push_back(eend::to_validation_sample(r, cfg.model.max_speakers));
    } else {
      eval.push_back(std::move(r));
    }
  }

  eend::EendModel model = eend::EendModel::create(cfg.model, cfg.seed);
  auto [mean, stddev] = eend::feature_statistics(train, cfg.features.num_mel);
  model.set_feature_stats(mean, stddev);
  eend::Trainer trainer(model, cfg.train, cfg.inference);
  for (int epoch = 1; epoch <= 10; ++epoch) {
    const auto rep = trainer.run_epoch(train, val, epoch);
    std::cout << "epoch " << epoch << " train loss " << rep.train_loss << " validation DER " << rep.validation.der
              << "\n";
  }

  const eend::Recording& rec = eval.front();
  for (const eend::AdapterRoute route : {eend::AdapterRoute(rec.domain), eend::AdapterRoute()}) {
    eend::InferenceConfig icfg = cfg.inference;
    icfg.adapter = route;
    const auto result = eend::diarize(rec.features, model, icfg, true);
    const auto hyp = eend::to_rttm(result, rec.id);
    std::cout << rec.id << " adapter " << eend::route_label(route) << ": " << result.num_speakers
              << " speakers, predicted domain " << result.predicted_domain.value_or("?") << ", DER "
              << eend::compute_der(rec.reference, hyp).der << "\n";
  }
}
