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

// RTTM exchange and overlap-aware diarization error rate with an optimal
// one-to-one speaker mapping. All interval arithmetic runs on integer
// milliseconds.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eend {

struct RttmSegment {
  std::string file_id;
  double onset_s = 0.0;
  double duration_s = 0.0;
  std::string speaker;

  double end_s() const { return onset_s + duration_s; }
  bool operator==(const RttmSegment&) const = default;
};

inline std::vector<RttmSegment> parse_rttm(const std::string& text) {
  std::vector<RttmSegment> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    for (std::string f; ls >> f;) fields.push_back(f);
    if (fields.empty() || fields[0] != "SPEAKER") continue;
    auto fail = [lineno](const std::string& why) {
      throw std::runtime_error("rttm line " + std::to_string(lineno) + ": " + why);
    };
    if (fields.size() < 8) fail("expected at least 8 fields, got " + std::to_string(fields.size()));
    RttmSegment seg;
    seg.file_id = fields[1];
    try {
      std::size_t used = 0;
      seg.onset_s = std::stod(fields[3], &used);
      if (used != fields[3].size()) fail("bad onset '" + fields[3] + "'");
      seg.duration_s = std::stod(fields[4], &used);
      if (used != fields[4].size()) fail("bad duration '" + fields[4] + "'");
    } catch (const std::logic_error&) {
      fail("non-numeric onset or duration");
    }
    if (!(seg.onset_s >= 0.0)) fail("negative onset");
    if (!(seg.duration_s > 0.0)) fail("non-positive duration");
    seg.speaker = fields[7];
    out.push_back(std::move(seg));
  }
  return out;
}

inline std::string format_rttm_line(const RttmSegment& s) {
  char buf[64];
  std::string line = "SPEAKER " + s.file_id + " 1 ";
  std::snprintf(buf, sizeof buf, "%.3f %.3f", s.onset_s, s.duration_s);
  return line + buf + " <NA> <NA> " + s.speaker + " <NA> <NA>";
}

inline std::string write_rttm(const std::vector<RttmSegment>& segments) {
  std::string out;
  for (const auto& s : segments) out += format_rttm_line(s) + "\n";
  return out;
}

struct DerBreakdown {
  double missed_s = 0.0;
  double falsealarm_s = 0.0;
  double confusion_s = 0.0;
  double total_ref_s = 0.0;
  double der = 0.0;
};

/// Same decomposition in integer milliseconds.
struct DerCounts {
  std::int64_t missed = 0;
  std::int64_t falsealarm = 0;
  std::int64_t confusion = 0;
  std::int64_t total_ref = 0;

  DerCounts& operator+=(const DerCounts& o) {
    missed += o.missed;
    falsealarm += o.falsealarm;
    confusion += o.confusion;
    total_ref += o.total_ref;
    return *this;
  }

  DerBreakdown breakdown() const {
    DerBreakdown b{missed / 1000.0, falsealarm / 1000.0, confusion / 1000.0, total_ref / 1000.0, 0.0};
    const std::int64_t errors = missed + falsealarm + confusion;
    if (total_ref > 0) {
      b.der = static_cast<double>(errors) / static_cast<double>(total_ref);
    } else {
      b.der = errors > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return b;
  }
};

inline std::int64_t to_ms(double s) { return std::llround(s * 1000.0); }

/// Elementary scoring intervals of one recording: per interval the active
/// reference and hypothesis speaker indices.
struct Timeline {
  std::vector<std::string> ref_speakers;
  std::vector<std::string> hyp_speakers;
  struct Interval {
    std::int64_t duration_ms = 0;
    std::vector<int> ref;
    std::vector<int> hyp;
  };
  std::vector<Interval> intervals;  // scored intervals only
};

namespace detail {

struct MsSegment {
  std::int64_t start;
  std::int64_t end;
  int speaker;
};

inline std::vector<MsSegment> index_segments(const std::vector<RttmSegment>& segs, std::vector<std::string>& names) {
  std::map<std::string, int> ids;
  std::vector<MsSegment> out;
  for (const auto& s : segs) {
    auto [it, inserted] = ids.emplace(s.speaker, static_cast<int>(names.size()));
    if (inserted) names.push_back(s.speaker);
    const std::int64_t a = to_ms(s.onset_s);
    const std::int64_t b = to_ms(s.end_s());
    if (b > a) out.push_back({a, b, it->second});
  }
  return out;
}

inline std::vector<int> active_at(const std::vector<MsSegment>& segs, std::int64_t a, std::int64_t b, int speakers) {
  std::vector<char> on(static_cast<std::size_t>(speakers), 0);
  for (const auto& s : segs) {
    if (s.start <= a && s.end >= b) on[static_cast<std::size_t>(s.speaker)] = 1;
  }
  std::vector<int> ids;
  for (int i = 0; i < speakers; ++i) {
    if (on[static_cast<std::size_t>(i)]) ids.push_back(i);
  }
  return ids;
}

}  // namespace detail

/// Partitions one recording at every segment and no-score-zone boundary.
/// collar_s/2 on each side of every reference boundary is excluded.
inline Timeline build_timeline(const std::vector<RttmSegment>& ref, const std::vector<RttmSegment>& hyp,
                               double collar_s) {
  if (!(collar_s >= 0.0)) throw std::invalid_argument("collar must be >= 0");
  Timeline tl;
  const auto r = detail::index_segments(ref, tl.ref_speakers);
  const auto h = detail::index_segments(hyp, tl.hyp_speakers);
  const std::int64_t half = std::llround(collar_s * 1000.0 / 2.0);
  std::vector<std::pair<std::int64_t, std::int64_t>> no_score;
  std::set<std::int64_t> cuts;
  for (const auto& s : r) {
    cuts.insert(s.start);
    cuts.insert(s.end);
    if (half > 0) {
      for (std::int64_t b : {s.start, s.end}) {
        no_score.emplace_back(b - half, b + half);
        cuts.insert(b - half);
        cuts.insert(b + half);
      }
    }
  }
  for (const auto& s : h) {
    cuts.insert(s.start);
    cuts.insert(s.end);
  }
  const int nr = static_cast<int>(tl.ref_speakers.size());
  const int nh = static_cast<int>(tl.hyp_speakers.size());
  for (auto it = cuts.begin(); it != cuts.end() && std::next(it) != cuts.end(); ++it) {
    const std::int64_t a = *it;
    const std::int64_t b = *std::next(it);
    const bool excluded = std::any_of(no_score.begin(), no_score.end(),
                                      [a, b](const auto& z) { return z.first <= a && z.second >= b; });
    if (excluded) continue;
    Timeline::Interval iv{b - a, detail::active_at(r, a, b, nr), detail::active_at(h, a, b, nh)};
    if (iv.ref.empty() && iv.hyp.empty()) continue;
    tl.intervals.push_back(std::move(iv));
  }
  return tl;
}

/// Maximum-weight assignment on a rows x cols matrix (Kuhn-Munkres).
/// Returns for each row the assigned column or -1.
inline std::vector<int> max_weight_assignment(const std::vector<std::vector<std::int64_t>>& weight) {
  const int rows = static_cast<int>(weight.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(weight[0].size());
  const int n = std::max(rows, cols);
  if (n == 0) return {};
  std::int64_t top = 0;
  for (const auto& row : weight) {
    for (auto w : row) top = std::max(top, w);
  }
  // Min-cost on the padded square matrix, 1-based potentials.
  auto cost = [&](int i, int j) -> std::int64_t {
    const std::int64_t w = (i < rows && j < cols) ? weight[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] : 0;
    return top - w;
  };
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> u(static_cast<std::size_t>(n) + 1, 0), v(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<std::int64_t> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      std::int64_t delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const std::int64_t cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(static_cast<std::size_t>(rows), -1);
  for (int j = 1; j <= n; ++j) {
    const int i = p[static_cast<std::size_t>(j)] - 1;
    if (i >= 0 && i < rows && j - 1 < cols) assign[static_cast<std::size_t>(i)] = j - 1;
  }
  return assign;
}

/// Error counts for a timeline under a fixed ref -> hyp mapping (-1 = unmapped).
inline DerCounts count_errors(const Timeline& tl, const std::vector<int>& mapping) {
  DerCounts c;
  for (const auto& iv : tl.intervals) {
    const auto nref = static_cast<std::int64_t>(iv.ref.size());
    const auto nhyp = static_cast<std::int64_t>(iv.hyp.size());
    std::int64_t correct = 0;
    for (int r : iv.ref) {
      const int m = mapping[static_cast<std::size_t>(r)];
      if (m >= 0 && std::find(iv.hyp.begin(), iv.hyp.end(), m) != iv.hyp.end()) ++correct;
    }
    c.total_ref += iv.duration_ms * nref;
    c.missed += iv.duration_ms * std::max<std::int64_t>(0, nref - nhyp);
    c.falsealarm += iv.duration_ms * std::max<std::int64_t>(0, nhyp - nref);
    c.confusion += iv.duration_ms * (std::min(nref, nhyp) - correct);
  }
  return c;
}

/// Optimal mapping maximizing jointly active scored time.
inline std::vector<int> optimal_mapping(const Timeline& tl) {
  std::vector<std::vector<std::int64_t>> overlap(tl.ref_speakers.size(),
                                                  std::vector<std::int64_t>(tl.hyp_speakers.size(), 0));
  for (const auto& iv : tl.intervals) {
    for (int r : iv.ref) {
      for (int h : iv.hyp) overlap[static_cast<std::size_t>(r)][static_cast<std::size_t>(h)] += iv.duration_ms;
    }
  }
  if (tl.hyp_speakers.empty()) return std::vector<int>(tl.ref_speakers.size(), -1);
  return max_weight_assignment(overlap);
}

/// Counts for one recording.
inline DerCounts score_recording(const std::vector<RttmSegment>& ref, const std::vector<RttmSegment>& hyp,
                                 double collar_s) {
  const Timeline tl = build_timeline(ref, hyp, collar_s);
  return count_errors(tl, optimal_mapping(tl));
}

/// Groups segments by file id, maps speakers per file and pools the error
/// time over all files.
inline DerBreakdown compute_der(const std::vector<RttmSegment>& ref, const std::vector<RttmSegment>& hyp,
                                double collar_s = 0.0) {
  std::map<std::string, std::pair<std::vector<RttmSegment>, std::vector<RttmSegment>>> files;
  for (const auto& s : ref) files[s.file_id].first.push_back(s);
  for (const auto& s : hyp) files[s.file_id].second.push_back(s);
  DerCounts total;
  for (const auto& [id, pair] : files) total += score_recording(pair.first, pair.second, collar_s);
  return total.breakdown();
}

}  // namespace eend
