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

// eend-dat: simulate | train | infer | score | grid
// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

#include "eend/eend.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c, bool with_seed = true) {
  cmd->add_option("--config", c.config, "JSON run config (default: $EEND_CONFIG, else built-in defaults)");
  if (with_seed) cmd->add_option("--seed", c.seed, "Overrides the config seed");
  cmd->add_option("--out", c.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-adaptive end-to-end speaker diarization"};
  app.require_subcommand(1);

  Common sim_opts;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic multi-domain corpus");
  add_common(sim, sim_opts);

  Common train_opts;
  std::optional<std::string> train_manifest, resume;
  auto* train = app.add_subcommand("train", "Train and write per-epoch plus averaged checkpoints");
  add_common(train, train_opts);
  train->add_option("--manifest", train_manifest, "Corpus manifest (default: <paths.corpus>/manifest.jsonl)");
  train->add_option("--resume", resume, "Continue from this checkpoint");

  Common infer_opts;
  std::optional<std::string> infer_model, infer_manifest;
  std::string infer_split = "eval";
  std::string adapter = "auto";
  std::vector<std::string> audio;
  auto* infer = app.add_subcommand("infer", "Write hypothesis RTTMs");
  add_common(infer, infer_opts, false);
  infer->add_option("--model", infer_model, "Checkpoint (default: <paths.model>/final.ckpt)");
  infer->add_option("--manifest", infer_manifest, "Corpus manifest to decode");
  infer->add_option("--split", infer_split, "Manifest split to decode: train, val, eval or all")->capture_default_str();
  infer->add_option("--adapter", adapter, "none, auto (each recording's own trained domain) or a domain name")
      ->capture_default_str();
  infer->add_option("audio", audio, "WAV files to decode (RIFF, 16-bit PCM, mono)");

  std::string ref_dir, hyp_dir;
  double collar = 0.0;
  std::optional<std::string> score_out;
  auto* score = app.add_subcommand("score", "DER of hypothesis RTTMs against references");
  score->add_option("--ref", ref_dir, "Directory of reference <name>.rttm files")->required();
  score->add_option("--hyp", hyp_dir, "Directory of hypothesis <name>.rttm files")->required();
  score->add_option("--collar", collar, "No-score collar in seconds, split around each reference boundary")
      ->capture_default_str();
  score->add_option("--out", score_out, "Write the report to this directory instead of stdout");

  Common grid_opts;
  std::optional<std::string> grid_model, grid_manifest;
  std::string grid_split = "eval";
  auto* grid = app.add_subcommand("grid", "DER for every adapter choice on every evaluation domain");
  add_common(grid, grid_opts, false);
  grid->add_option("--model", grid_model, "Checkpoint (default: <paths.model>/final.ckpt)");
  grid->add_option("--manifest", grid_manifest, "Corpus manifest (default: <paths.corpus>/manifest.jsonl)");
  grid->add_option("--split", grid_split, "Manifest split to evaluate")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) {
      const auto cfg = eend::resolve_config(sim_opts.config, sim_opts.seed);
      const auto summary = eend::cmd_simulate(cfg, sim_opts.out.value_or(cfg.paths.corpus));
      std::cout << summary.manifest << "\n";
    } else if (*train) {
      const auto cfg = eend::resolve_config(train_opts.config, train_opts.seed);
      const auto manifest = train_manifest.value_or(cfg.paths.corpus + "/manifest.jsonl");
      const auto summary = eend::cmd_train(cfg, manifest, train_opts.out.value_or(cfg.paths.model), resume);
      std::cout << summary.final_checkpoint << "\n";
    } else if (*infer) {
      const auto cfg = eend::resolve_config(infer_opts.config, std::nullopt);
      eend::InferInputs inputs;
      inputs.manifest = infer_manifest;
      inputs.split = infer_split;
      inputs.audio = audio;
      if (!inputs.manifest && inputs.audio.empty()) inputs.manifest = cfg.paths.corpus + "/manifest.jsonl";
      const auto written = eend::cmd_infer(cfg, infer_model.value_or(cfg.paths.model + "/final.ckpt"), inputs, adapter,
                                           infer_opts.out.value_or(cfg.paths.hypotheses));
      for (const auto& w : written) std::cout << w << "\n";
    } else if (*score) {
      const auto report = eend::cmd_score(ref_dir, hyp_dir, collar);
      if (score_out) {
        eend::ensure_directory(*score_out);
        eend::write_text_file(std::filesystem::path(*score_out) / "der_report.tsv", report.text);
        eend::write_json_file((std::filesystem::path(*score_out) / eend::kEffectiveConfigName).string(),
                              {{"ref", ref_dir}, {"hyp", hyp_dir}, {"collar", collar}});
      }
      std::cout << report.text;
    } else if (*grid) {
      const auto cfg = eend::resolve_config(grid_opts.config, std::nullopt);
      const auto g = eend::cmd_grid(cfg, grid_model.value_or(cfg.paths.model + "/final.ckpt"),
                                    grid_manifest.value_or(cfg.paths.corpus + "/manifest.jsonl"), grid_split);
      const std::string table = eend::format_grid(g);
      if (grid_opts.out) {
        eend::ensure_directory(*grid_opts.out);
        eend::write_text_file(std::filesystem::path(*grid_opts.out) / "grid.tsv", table);
        eend::write_json_file((std::filesystem::path(*grid_opts.out) / eend::kEffectiveConfigName).string(),
                              eend::to_json(cfg));
      }
      std::cout << table;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
