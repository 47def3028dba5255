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

// On-disk corpora: a JSON-lines manifest next to wav/ and rttm/ folders.
//
// Manifest record:
//   {"id": "meeting_train_0003", "path": "wav/meeting_train_0003.wav",
//    "rttm": "rttm/meeting_train_0003.rttm", "domain": "meeting",
//    "duration_s": 31.2, "num_speakers": 3, "split": "train"}
// Paths are relative to the manifest's directory.

#pragma once

#include "eend/config.hpp"
#include "eend/wav.hpp"

#include <filesystem>

namespace eend {

struct ManifestRecord {
  std::string id;
  std::string path;
  std::string rttm;
  std::string domain;
  double duration_s = 0.0;
  int num_speakers = 0;
  std::string split;
};

inline json to_json(const ManifestRecord& r) {
  return {{"id", r.id},         {"path", r.path},
          {"rttm", r.rttm},     {"domain", r.domain},
          {"duration_s", r.duration_s}, {"num_speakers", r.num_speakers},
          {"split", r.split}};
}

inline ManifestRecord manifest_record_from_json(const json& j, const std::string& where) {
  detail::reject_unknown_keys(j, {"id", "path", "rttm", "domain", "duration_s", "num_speakers", "split"}, where);
  for (const char* key : {"id", "path", "rttm", "domain", "split"}) {
    if (!j.contains(key)) throw std::invalid_argument(where + ": missing '" + key + "'");
  }
  ManifestRecord r;
  detail::read_key(j, "id", r.id, where);
  detail::read_key(j, "path", r.path, where);
  detail::read_key(j, "rttm", r.rttm, where);
  detail::read_key(j, "domain", r.domain, where);
  detail::read_key(j, "duration_s", r.duration_s, where);
  detail::read_key(j, "num_speakers", r.num_speakers, where);
  detail::read_key(j, "split", r.split, where);
  return r;
}

struct Manifest {
  std::filesystem::path root;  // directory the relative paths resolve against
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> split(const std::string& name) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records) {
      if (r.split == name) out.push_back(r);
    }
    return out;
  }
};

inline Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path);
  Manifest m;
  m.root = std::filesystem::path(path).parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    try {
      m.records.push_back(manifest_record_from_json(json::parse(line), where));
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
  }
  return m;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

/// A recording ready for training, validation or scoring.
struct Recording {
  std::string id;
  std::string domain;
  FrameFeatures features;
  std::vector<RttmSegment> reference;
};

inline std::vector<Segment> to_segments(const std::vector<RttmSegment>& rttm) {
  std::vector<Segment> out;
  for (const auto& s : rttm) out.push_back({s.speaker, s.onset_s, s.end_s()});
  return out;
}

inline Recording load_recording(const Manifest& m, const ManifestRecord& r, const FeatureConfig& features) {
  const WavData wav = read_wav((m.root / r.path).string());
  Recording rec;
  rec.id = r.id;
  rec.domain = r.domain;
  rec.features = extract_logmel(wav.samples, wav.sample_rate, features);
  rec.reference = parse_rttm(read_text_file(m.root / r.rttm));
  return rec;
}

inline SpeakerActivityMatrix labels_for(const Recording& rec, int max_speakers) {
  return frames_to_labels(to_segments(rec.reference), rec.features.hop_s, rec.features.frames(), max_speakers);
}

inline TrainingSample to_training_sample(const Recording& rec, int max_speakers) {
  return {rec.features, labels_for(rec, max_speakers), rec.domain};
}

inline ValidationSample to_validation_sample(const Recording& rec, int max_speakers) {
  return {rec.id, rec.features, labels_for(rec, max_speakers), rec.reference, rec.domain};
}

inline std::vector<RttmSegment> mixture_reference(const Mixture& mix, const std::string& file_id) {
  std::vector<RttmSegment> out;
  for (const auto& s : mix.segments) out.push_back({file_id, s.start_s, s.end_s - s.start_s, s.speaker});
  return out;
}

/// Reproducible per-mixture seed from the run seed, domain, split and index.
inline std::uint64_t mixture_seed(std::uint64_t run_seed, const DomainSpec& spec, int split, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(run_seed), static_cast<std::uint32_t>(run_seed >> 32),
                    static_cast<std::uint32_t>(spec.seed_namespace), static_cast<std::uint32_t>(split),
                    static_cast<std::uint32_t>(index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Speaker count and duration for one mixture, drawn from its seed.
inline std::pair<int, double> mixture_shape(const DomainSpec& spec, const DataConfig& data, std::uint64_t seed) {
  Rng rng(seed ^ 0x5bd1e995ULL);
  const int speakers = std::uniform_int_distribution<int>(spec.min_speakers, spec.max_speakers)(rng);
  const double duration = std::uniform_real_distribution<double>(data.min_duration_s, data.max_duration_s)(rng);
  return {speakers, std::round(duration * 100.0) / 100.0};
}

inline std::string split_name(int split) {
  static const char* names[] = {"train", "val", "eval"};
  return names[split];
}

/// Every mixture a corpus holds, as (domain entry, split, index) triples in
/// manifest order. Unseen domains only contribute evaluation mixtures.
struct CorpusItem {
  const DomainEntry* domain;
  int split;
  int index;
};

inline std::vector<CorpusItem> corpus_plan(const RunConfig& cfg) {
  std::vector<CorpusItem> out;
  for (const auto& d : cfg.data.domains) {
    const int counts[] = {d.seen ? cfg.data.train_per_domain : 0, d.seen ? cfg.data.val_per_domain : 0,
                          cfg.data.eval_per_domain};
    for (int split = 0; split < 3; ++split) {
      for (int i = 0; i < counts[split]; ++i) out.push_back({&d, split, i});
    }
  }
  return out;
}

inline Mixture simulate_item(const RunConfig& cfg, const CorpusItem& item) {
  const std::uint64_t seed = mixture_seed(cfg.seed, item.domain->spec, item.split, item.index);
  const auto [speakers, duration] = mixture_shape(item.domain->spec, cfg.data, seed);
  return simulate_mixture(item.domain->spec, speakers, duration, seed, cfg.data.sample_rate);
}

inline std::string item_id(const CorpusItem& item) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", item.index);
  return item.domain->spec.name + "_" + split_name(item.split) + "_" + buf;
}

/// In-memory recording for a corpus item (no files touched).
inline Recording simulate_recording(const RunConfig& cfg, const CorpusItem& item) {
  const Mixture mix = simulate_item(cfg, item);
  Recording rec;
  rec.id = item_id(item);
  rec.domain = mix.domain;
  rec.features = extract_logmel(mix.waveform, mix.sample_rate, cfg.features);
  rec.reference = mixture_reference(mix, rec.id);
  return rec;
}

}  // namespace eend
