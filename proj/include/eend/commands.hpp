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

// Pipeline commands behind the eend-dat executable. Validation problems
// surface as std::invalid_argument before any output is written; I/O and
// numerical failures surface as std::runtime_error.

#pragma once

#include "eend/evaluation.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>

namespace eend {

namespace fs = std::filesystem;

inline constexpr const char* kConfigEnvVar = "EEND_CONFIG";
inline constexpr const char* kEffectiveConfigName = "effective_config.json";

/// Config file from the flag, else from $EEND_CONFIG, else built-in defaults.
inline RunConfig resolve_config(const std::optional<std::string>& flag_path, const std::optional<std::uint64_t>& seed) {
  std::optional<std::string> path = flag_path;
  if (!path) {
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) path = env;
  }
  RunConfig cfg = load_run_config(path);
  if (seed) cfg.seed = *seed;
  cfg.finalize();
  return cfg;
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

// ---------------------------------------------------------------- simulate

struct SimulateSummary {
  std::string manifest;
  std::size_t records = 0;
};

/// Writes wav/<split>/<id>.wav, rttm/<split>/<id>.rttm, manifest.jsonl and
/// the effective config under out_dir.
inline SimulateSummary cmd_simulate(const RunConfig& cfg, const std::string& out_dir, std::ostream& log = std::cerr) {
  cfg.validate();
  const fs::path root(out_dir);
  ensure_directory(root);
  const auto plan = corpus_plan(cfg);
  std::string manifest;
  for (const auto& item : plan) {
    const Mixture mix = simulate_item(cfg, item);
    const std::string id = item_id(item);
    const std::string split = split_name(item.split);
    ensure_directory(root / "wav" / split);
    ensure_directory(root / "rttm" / split);
    ManifestRecord rec{id,
                       "wav/" + split + "/" + id + ".wav",
                       "rttm/" + split + "/" + id + ".rttm",
                       mix.domain,
                       mix.duration_s(),
                       static_cast<int>(mix.speakers().size()),
                       split};
    write_wav((root / rec.path).string(), mix.waveform, mix.sample_rate);
    write_text_file(root / rec.rttm, write_rttm(mixture_reference(mix, id)));
    manifest += to_json(rec).dump() + "\n";
  }
  const fs::path manifest_path = root / "manifest.jsonl";
  write_text_file(manifest_path, manifest);
  write_json_file((root / kEffectiveConfigName).string(), to_json(cfg));
  log << "simulated " << plan.size() << " mixtures into " << root.string() << "\n";
  return {manifest_path.string(), plan.size()};
}

// ------------------------------------------------------------------- train

struct TrainSummary {
  std::string final_checkpoint;
  std::vector<int> epochs_written;
  std::vector<int> averaged_epochs;
};

namespace detail {

inline std::vector<Recording> load_split(const Manifest& m, const std::string& split, const RunConfig& cfg,
                                         bool require_known_domain) {
  std::vector<Recording> out;
  for (const auto& r : m.split(split)) {
    if (require_known_domain && !cfg.model.encoder.domain_index(r.domain)) {
      throw std::invalid_argument("manifest record " + r.id + " has domain '" + r.domain +
                                  "' which is not among the configured training domains");
    }
    out.push_back(load_recording(m, r, cfg.features));
  }
  return out;
}

inline std::string epoch_file(int epoch) { return "epoch_" + std::to_string(epoch) + ".ckpt"; }

}  // namespace detail

/// Trains on the manifest's train split, validates on its val split after
/// every epoch, writes one checkpoint per epoch and final.ckpt holding the
/// average of the k best epochs by validation DER. With resume, training
/// continues after the checkpoint's epoch up to cfg.train.epochs; optimizer
/// moments restart from zero.
inline TrainSummary cmd_train(const RunConfig& cfg, const std::string& manifest_path, const std::string& out_dir,
                              const std::optional<std::string>& resume = std::nullopt, std::ostream& log = std::cerr) {
  cfg.validate();
  const Manifest manifest = read_manifest(manifest_path);
  const auto train_recs = detail::load_split(manifest, "train", cfg, true);
  const auto val_recs = detail::load_split(manifest, "val", cfg, true);
  if (train_recs.empty()) throw std::invalid_argument("manifest " + manifest_path + " has no train records");

  std::vector<TrainingSample> train;
  for (const auto& r : train_recs) train.push_back(to_training_sample(r, cfg.model.max_speakers));
  std::vector<ValidationSample> val;
  for (const auto& r : val_recs) val.push_back(to_validation_sample(r, cfg.model.max_speakers));

  EendModel model = EendModel::create(cfg.model, cfg.seed);
  int start_epoch = 0;
  if (resume) {
    const Checkpoint c = load_checkpoint(*resume);
    apply_checkpoint(model, c);
    start_epoch = c.epoch;
  } else {
    auto [mean, stddev] = feature_statistics(train, cfg.features.num_mel);
    model.set_feature_stats(std::move(mean), std::move(stddev));
  }

  const fs::path root(out_dir);
  ensure_directory(root);
  write_json_file((root / kEffectiveConfigName).string(), to_json(cfg));
  std::ofstream train_log(root / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!train_log) throw std::runtime_error("cannot write " + (root / "train_log.jsonl").string());

  TrainConfig tcfg = cfg.train;
  if (start_epoch > 0) tcfg.seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(start_epoch));
  Trainer trainer(model, tcfg, cfg.inference);
  trainer.set_step_logger([&train_log](const StepRecord& r, int epoch) {
    train_log << json{{"type", "step"},          {"epoch", epoch},           {"step", r.step},
                      {"lr", r.lr},              {"loss", r.loss},           {"diarization", r.diarization},
                      {"attractor", r.attractor}, {"domain", r.domain},      {"routed_none", r.routed_none}}
                     .dump()
              << "\n";
  });

  TrainSummary summary;
  for (int epoch = start_epoch + 1; epoch <= cfg.train.epochs; ++epoch) {
    const EpochReport rep = trainer.run_epoch(train, val, epoch);
    const double der = val.empty() ? std::numeric_limits<double>::infinity() : rep.validation.der;
    save_checkpoint((root / detail::epoch_file(epoch)).string(), capture_checkpoint(model, epoch, der));
    summary.epochs_written.push_back(epoch);
    json rec = {{"type", "epoch"}, {"epoch", epoch}, {"train_loss", rep.train_loss}};
    rec["validation_loss"] = val.empty() ? json(nullptr) : json(rep.validation.diarization_loss);
    rec["validation_der"] = std::isfinite(der) ? json(der) : json(nullptr);
    rec["domain_accuracy"] = std::isnan(rep.validation.domain_accuracy) ? json(nullptr) : json(rep.validation.domain_accuracy);
    train_log << rec.dump() << "\n";
    train_log.flush();
    log << "epoch " << epoch << " train_loss " << rep.train_loss << " validation_der " << der << "\n";
  }

  std::vector<Checkpoint> pool;
  for (int epoch = 1; epoch <= std::max(start_epoch, cfg.train.epochs); ++epoch) {
    const fs::path p = root / detail::epoch_file(epoch);
    if (fs::exists(p)) pool.push_back(load_checkpoint(p.string()));
  }
  Checkpoint final_ckpt;
  if (pool.empty()) {
    final_ckpt = capture_checkpoint(model, start_epoch, std::numeric_limits<double>::infinity());
  } else {
    const int k = std::min<int>(cfg.train.average_best, static_cast<int>(pool.size()));
    const auto best = select_best(pool, k);
    for (const auto& c : best) summary.averaged_epochs.push_back(c.epoch);
    final_ckpt = average_checkpoints(best);
  }
  summary.final_checkpoint = (root / "final.ckpt").string();
  save_checkpoint(summary.final_checkpoint, final_ckpt);
  return summary;
}

// ------------------------------------------------------------------- infer

struct InferInputs {
  std::optional<std::string> manifest;
  std::string split = "eval";  // or "all"
  std::vector<std::string> audio;
};

inline EendModel load_model_for(const RunConfig& cfg, const std::string& model_path) {
  const Checkpoint c = load_checkpoint(model_path);
  if (c.config_hash != config_hash(cfg.model)) {
    throw std::invalid_argument("model " + model_path + " was trained with config hash " + c.config_hash +
                                " but the run config hashes to " + config_hash(cfg.model));
  }
  return model_from_checkpoint(c);
}

/// "auto" picks each recording's own domain when it was trained on,
/// otherwise no adapter.
inline AdapterRoute resolve_adapter(const std::string& mode, const std::string& domain, const EendModel& model) {
  if (mode == "none") return std::nullopt;
  if (mode == "auto") {
    if (model.config().encoder.domain_index(domain)) return domain;
    return std::nullopt;
  }
  return mode;
}

inline void check_adapter_mode(const std::string& mode, const EendModel& model) {
  if (mode == "none" || mode == "auto") return;
  if (!model.config().encoder.domain_index(mode)) throw std::invalid_argument(model.encoder().unknown_domain_message(mode));
}

/// One hypothesis RTTM per input recording, named <id>.rttm.
inline std::vector<std::string> cmd_infer(const RunConfig& cfg, const std::string& model_path, const InferInputs& inputs,
                                          const std::string& adapter, const std::string& out_dir,
                                          std::ostream& log = std::cerr) {
  cfg.validate();
  const EendModel model = load_model_for(cfg, model_path);
  check_adapter_mode(adapter, model);
  if (!inputs.manifest && inputs.audio.empty()) throw std::invalid_argument("infer: give a manifest or audio files");
  if (inputs.split != "all" && inputs.split != "train" && inputs.split != "val" && inputs.split != "eval") {
    throw std::invalid_argument("infer: split must be train, val, eval or all");
  }

  struct Job {
    std::string id;
    std::string domain;
    std::function<FrameFeatures()> features;
  };
  std::vector<Job> jobs;
  std::optional<Manifest> manifest;
  if (inputs.manifest) {
    manifest = read_manifest(*inputs.manifest);
    for (const auto& r : manifest->records) {
      if (inputs.split != "all" && r.split != inputs.split) continue;
      jobs.push_back({r.id, r.domain, [&manifest, r, &cfg] {
                        const WavData w = read_wav((manifest->root / r.path).string());
                        return extract_logmel(w.samples, w.sample_rate, cfg.features);
                      }});
    }
  }
  for (const auto& path : inputs.audio) {
    if (!fs::exists(path)) throw std::invalid_argument("infer: no such audio file " + path);
    jobs.push_back({fs::path(path).stem().string(), "", [path, &cfg] {
                      const WavData w = read_wav(path);
                      return extract_logmel(w.samples, w.sample_rate, cfg.features);
                    }});
  }

  const fs::path root(out_dir);
  ensure_directory(root);
  write_json_file((root / kEffectiveConfigName).string(), to_json(cfg));
  std::vector<std::string> written;
  for (const auto& job : jobs) {
    InferenceConfig icfg = cfg.inference;
    icfg.adapter = resolve_adapter(adapter, job.domain, model);
    const DiarizationResult res = diarize(job.features(), model, icfg);
    const fs::path out = root / (job.id + ".rttm");
    write_text_file(out, write_rttm(to_rttm(res, job.id)));
    written.push_back(out.string());
  }
  log << "wrote " << written.size() << " hypotheses to " << root.string() << "\n";
  return written;
}

// ------------------------------------------------------------------- score

struct ScoreReport {
  std::vector<std::pair<std::string, DerBreakdown>> files;
  DerBreakdown pooled;
  std::string text;
};

inline std::vector<std::string> rttm_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".rttm") out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Per-file and pooled DER over matching <name>.rttm files.
inline ScoreReport cmd_score(const std::string& ref_dir, const std::string& hyp_dir, double collar_s) {
  if (!(collar_s >= 0.0)) throw std::invalid_argument("collar must be >= 0");
  const auto ref_names = rttm_stems(ref_dir);
  const auto hyp_names = rttm_stems(hyp_dir);
  for (const auto& n : ref_names) {
    if (!std::binary_search(hyp_names.begin(), hyp_names.end(), n)) {
      throw std::invalid_argument("hypothesis " + n + ".rttm missing from " + hyp_dir);
    }
  }
  for (const auto& n : hyp_names) {
    if (!std::binary_search(ref_names.begin(), ref_names.end(), n)) {
      throw std::invalid_argument("reference " + n + ".rttm missing from " + ref_dir);
    }
  }
  ScoreReport report;
  DerCounts pooled;
  char buf[160];
  report.text = "file\tmissed_s\tfalsealarm_s\tconfusion_s\ttotal_ref_s\tder\n";
  auto row = [&buf](const std::string& name, const DerBreakdown& b) {
    std::snprintf(buf, sizeof buf, "\t%.3f\t%.3f\t%.3f\t%.3f\t%.4f\n", b.missed_s, b.falsealarm_s, b.confusion_s,
                  b.total_ref_s, b.der);
    return name + buf;
  };
  for (const auto& n : ref_names) {
    const auto ref = parse_rttm(read_text_file(fs::path(ref_dir) / (n + ".rttm")));
    const auto hyp = parse_rttm(read_text_file(fs::path(hyp_dir) / (n + ".rttm")));
    // Scored as one recording regardless of the file ids inside.
    const DerCounts c = score_recording(ref, hyp, collar_s);
    pooled += c;
    report.files.emplace_back(n, c.breakdown());
    report.text += row(n, c.breakdown());
  }
  report.pooled = pooled.breakdown();
  report.text += row("POOLED", report.pooled);
  return report;
}

// -------------------------------------------------------------------- grid

inline DerGrid cmd_grid(const RunConfig& cfg, const std::string& model_path, const std::string& manifest_path,
                        const std::string& split = "eval") {
  cfg.validate();
  const EendModel model = load_model_for(cfg, model_path);
  const Manifest manifest = read_manifest(manifest_path);
  std::map<std::string, std::vector<Recording>> corpora;
  for (const auto& r : manifest.split(split)) corpora[r.domain].push_back(load_recording(manifest, r, cfg.features));
  if (corpora.empty()) throw std::invalid_argument("manifest " + manifest_path + " has no '" + split + "' records");
  return evaluation_grid(model, corpora, cfg.inference);
}

}  // namespace eend
