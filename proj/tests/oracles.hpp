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

// Slow, obviously-correct reference implementations used only by tests.
// Nothing here calls into the library code they check.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace eend::oracles {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double bce(double p, double y) {
  const double q = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  return y > 0.5 ? -std::log(q) : -std::log(1.0 - q);
}

/// Mean BCE with prediction column s scored against label column perm[s].
inline double pit_cost(const Mat& post, const Mat& labels, const std::vector<int>& perm) {
  double total = 0.0;
  for (Eigen::Index t = 0; t < post.rows(); ++t) {
    for (Eigen::Index s = 0; s < post.cols(); ++s) total += bce(post(t, s), labels(t, perm[static_cast<std::size_t>(s)]));
  }
  return total / static_cast<double>(post.rows() * post.cols());
}

inline double mean_bce(const Mat& post, const Mat& labels) {
  std::vector<int> id(static_cast<std::size_t>(post.cols()));
  std::iota(id.begin(), id.end(), 0);
  return pit_cost(post, labels, id);
}

struct PitAnswer {
  double loss;
  std::vector<int> permutation;
};

/// Every permutation in lexicographic order; first strict minimum wins.
inline PitAnswer pit_bruteforce(const Mat& post, const Mat& labels) {
  std::vector<int> perm(static_cast<std::size_t>(post.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  PitAnswer best{std::numeric_limits<double>::infinity(), perm};
  do {
    const double c = pit_cost(post, labels, perm);
    if (c < best.loss) best = {c, perm};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct Seg {
  std::string file;
  double onset;
  double duration;
  std::string speaker;
};

struct DerAnswer {
  double missed_s = 0.0;
  double falsealarm_s = 0.0;
  double confusion_s = 0.0;
  double total_ref_s = 0.0;
  double der = 0.0;
};

namespace detail {

inline long long ms(double s) { return std::llround(s * 1000.0); }

struct Grid {
  long long origin = 0;
  long long length = 0;
  std::vector<std::string> names;
  std::vector<std::vector<char>> active;  // speaker x millisecond
};

inline Grid rasterize(const std::vector<Seg>& segs, long long origin, long long length) {
  Grid g{origin, length, {}, {}};
  std::map<std::string, int> ids;
  for (const auto& s : segs) {
    auto [it, fresh] = ids.emplace(s.speaker, static_cast<int>(g.names.size()));
    if (fresh) {
      g.names.push_back(s.speaker);
      g.active.emplace_back(static_cast<std::size_t>(length), 0);
    }
    const long long a = ms(s.onset), b = ms(s.onset + s.duration);
    for (long long t = a; t < b; ++t) g.active[static_cast<std::size_t>(it->second)][static_cast<std::size_t>(t - origin)] = 1;
  }
  return g;
}

// All injective maps from n refs into m hyps, -1 meaning unmapped.
inline void enumerate_maps(std::size_t i, int m, std::vector<int>& cur, std::vector<char>& used,
                           std::vector<std::vector<int>>& out) {
  if (i == cur.size()) {
    out.push_back(cur);
    return;
  }
  cur[i] = -1;
  enumerate_maps(i + 1, m, cur, used, out);
  for (int h = 0; h < m; ++h) {
    if (used[static_cast<std::size_t>(h)]) continue;
    used[static_cast<std::size_t>(h)] = 1;
    cur[i] = h;
    enumerate_maps(i + 1, m, cur, used, out);
    used[static_cast<std::size_t>(h)] = 0;
  }
}

}  // namespace detail

/// Millisecond raster of one recording; every speaker mapping is tried and
/// the one with the fewest errors is kept.
inline void score_file(const std::vector<Seg>& ref, const std::vector<Seg>& hyp, double collar, long long& missed,
                       long long& fa, long long& conf, long long& total) {
  long long lo = std::numeric_limits<long long>::max(), hi = std::numeric_limits<long long>::min();
  for (const auto* v : {&ref, &hyp}) {
    for (const auto& s : *v) {
      lo = std::min(lo, detail::ms(s.onset));
      hi = std::max(hi, detail::ms(s.onset + s.duration));
    }
  }
  if (lo >= hi) return;
  const long long len = hi - lo;
  const auto r = detail::rasterize(ref, lo, len);
  const auto h = detail::rasterize(hyp, lo, len);
  const long long half = std::llround(collar * 1000.0 / 2.0);
  std::vector<char> scored(static_cast<std::size_t>(len), 1);
  if (half > 0) {
    for (const auto& s : ref) {
      for (long long b : {detail::ms(s.onset), detail::ms(s.onset + s.duration)}) {
        for (long long t = b - half; t < b + half; ++t) {
          if (t >= lo && t < hi) scored[static_cast<std::size_t>(t - lo)] = 0;
        }
      }
    }
  }
  std::vector<std::vector<int>> maps;
  std::vector<int> cur(r.names.size(), -1);
  std::vector<char> used(h.names.size(), 0);
  detail::enumerate_maps(0, static_cast<int>(h.names.size()), cur, used, maps);
  long long best_conf = std::numeric_limits<long long>::max();
  long long m0 = 0, f0 = 0, t0 = 0;
  for (const auto& map : maps) {
    long long mi = 0, fi = 0, ci = 0, ti = 0;
    for (long long t = 0; t < len; ++t) {
      if (!scored[static_cast<std::size_t>(t)]) continue;
      long long nr = 0, nh = 0, correct = 0;
      for (std::size_t i = 0; i < r.names.size(); ++i) {
        if (!r.active[i][static_cast<std::size_t>(t)]) continue;
        ++nr;
        if (map[i] >= 0 && h.active[static_cast<std::size_t>(map[i])][static_cast<std::size_t>(t)]) ++correct;
      }
      for (const auto& col : h.active) nh += col[static_cast<std::size_t>(t)];
      ti += nr;
      mi += std::max(0LL, nr - nh);
      fi += std::max(0LL, nh - nr);
      ci += std::min(nr, nh) - correct;
    }
    if (ci < best_conf) {
      best_conf = ci;
      m0 = mi;
      f0 = fi;
      t0 = ti;
    }
  }
  missed += m0;
  fa += f0;
  conf += best_conf;
  total += t0;
}

inline DerAnswer der(const std::vector<Seg>& ref, const std::vector<Seg>& hyp, double collar) {
  std::map<std::string, std::pair<std::vector<Seg>, std::vector<Seg>>> files;
  for (const auto& s : ref) files[s.file].first.push_back(s);
  for (const auto& s : hyp) files[s.file].second.push_back(s);
  long long missed = 0, fa = 0, conf = 0, total = 0;
  for (const auto& [_, p] : files) score_file(p.first, p.second, collar, missed, fa, conf, total);
  DerAnswer a{missed / 1000.0, fa / 1000.0, conf / 1000.0, total / 1000.0, 0.0};
  const long long errors = missed + fa + conf;
  a.der = total > 0 ? static_cast<double>(errors) / static_cast<double>(total)
                    : (errors > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  return a;
}

}  // namespace eend::oracles
