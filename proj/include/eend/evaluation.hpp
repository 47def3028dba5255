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

// Adapter-choice x evaluation-domain DER grid.

#pragma once

#include "eend/corpus.hpp"

namespace eend {

struct DerGrid {
  std::vector<std::string> adapters;      // row labels, "none" for no adapter
  std::vector<std::string> eval_domains;  // column labels
  Matrix der;                             // adapters x eval_domains, pooled per cell
};

inline std::string route_label(const AdapterRoute& r) { return r ? *r : "none"; }

/// Pooled DER for one adapter choice over a set of recordings.
inline DerBreakdown score_with_route(const EendModel& model, const std::vector<Recording>& recordings,
                                     const AdapterRoute& route, InferenceConfig cfg) {
  cfg.adapter = route;
  std::vector<RttmSegment> ref, hyp;
  for (const auto& rec : recordings) {
    auto h = to_rttm(diarize(rec.features, model, cfg), rec.id);
    hyp.insert(hyp.end(), h.begin(), h.end());
    ref.insert(ref.end(), rec.reference.begin(), rec.reference.end());
  }
  return compute_der(ref, hyp, 0.0);
}

/// Rows: every trained domain's adapters, then none. Columns: evaluation
/// domains in map order.
inline DerGrid evaluation_grid(const EendModel& model, const std::map<std::string, std::vector<Recording>>& corpora,
                               const InferenceConfig& cfg) {
  DerGrid g;
  std::vector<AdapterRoute> routes;
  for (const auto& d : model.domains()) routes.emplace_back(d);
  routes.emplace_back(std::nullopt);
  for (const auto& r : routes) g.adapters.push_back(route_label(r));
  for (const auto& [name, recs] : corpora) g.eval_domains.push_back(name);
  g.der = Matrix::Zero(static_cast<Eigen::Index>(routes.size()), static_cast<Eigen::Index>(corpora.size()));
  Eigen::Index col = 0;
  for (const auto& [name, recs] : corpora) {
    for (std::size_t row = 0; row < routes.size(); ++row) {
      g.der(static_cast<Eigen::Index>(row), col) = score_with_route(model, recs, routes[row], cfg).der;
    }
    ++col;
  }
  return g;
}

/// Tab-separated table with a header row of evaluation domains.
inline std::string format_grid(const DerGrid& g) {
  std::string out = "adapter";
  for (const auto& d : g.eval_domains) out += "\t" + d;
  out += "\n";
  char buf[32];
  for (std::size_t r = 0; r < g.adapters.size(); ++r) {
    out += g.adapters[r];
    for (Eigen::Index c = 0; c < g.der.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "\t%.4f", g.der(static_cast<Eigen::Index>(r), c));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace eend
