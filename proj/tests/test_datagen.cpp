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

#include <filesystem>

namespace eend {
namespace {

DomainSpec spec_with(int lo, int hi, double overlap, const std::string& noise = "white") {
  DomainSpec s;
  s.name = "test";
  s.min_speakers = lo;
  s.max_speakers = hi;
  s.overlap_ratio = overlap;
  s.noise = {noise, 15.0};
  s.seed_namespace = 5;
  return s;
}

TEST(Simulate, SingleSpeaker) {
  Mixture m = simulate_mixture(spec_with(1, 1, 0.2), 1, 10.0, 7);
  EXPECT_EQ(m.speakers().size(), 1u);
  EXPECT_GE(m.segments.size(), 1u);
  EXPECT_EQ(m.waveform.size(), 80000u);
}

TEST(Simulate, ZeroOverlapGivesDisjointSpeakers) {
  Mixture m = simulate_mixture(spec_with(2, 2, 0.0), 2, 60.0, 1);
  for (const auto& a : m.segments) {
    for (const auto& b : m.segments) {
      if (a.speaker == b.speaker) continue;
      EXPECT_TRUE(a.end_s <= b.start_s || b.end_s <= a.start_s);
    }
  }
}

TEST(Simulate, RealizedOverlapTracksTarget) {
  Mixture m = simulate_mixture(spec_with(3, 3, 0.3), 3, 120.0, 3);
  const double r = overlap_fraction(m.segments);
  EXPECT_GE(r, 0.15);
  EXPECT_LE(r, 0.45);
  for (const double target : {0.1, 0.25, 0.4}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Mixture mm = simulate_mixture(spec_with(2, 4, target), 2 + static_cast<int>(seed % 3), 60.0, seed);
      EXPECT_NEAR(overlap_fraction(mm.segments), target, 0.15) << "seed " << seed;
    }
  }
}

TEST(Simulate, SegmentsStayInsideTheRecording) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Mixture m = simulate_mixture(spec_with(1, 4, 0.2), 4, 15.0, seed);
    for (const auto& s : m.segments) {
      EXPECT_GE(s.start_s, 0.0);
      EXPECT_LE(s.end_s, m.duration_s() + 1e-9);
      EXPECT_LT(s.start_s, s.end_s);
    }
    EXPECT_LE(m.speakers().size(), 4u);
  }
}

TEST(Simulate, DeterministicGivenSeed) {
  Mixture a = simulate_mixture(spec_with(2, 3, 0.2, "pink"), 3, 8.0, 42);
  Mixture b = simulate_mixture(spec_with(2, 3, 0.2, "pink"), 3, 8.0, 42);
  Mixture c = simulate_mixture(spec_with(2, 3, 0.2, "pink"), 3, 8.0, 43);
  EXPECT_EQ(a.waveform, b.waveform);
  EXPECT_NE(a.waveform, c.waveform);
}

TEST(Simulate, RejectsBadArguments) {
  EXPECT_THROW(simulate_mixture(spec_with(2, 3, 0.1), 1, 5.0, 0), std::invalid_argument);
  EXPECT_THROW(simulate_mixture(spec_with(2, 3, 0.1), 4, 5.0, 0), std::invalid_argument);
  EXPECT_THROW(simulate_mixture(spec_with(2, 3, 0.1), 2, 0.0, 0), std::invalid_argument);
  DomainSpec bad = spec_with(1, 2, 0.1, "purple");
  EXPECT_THROW(bad.validate(4), std::invalid_argument);
  EXPECT_THROW(spec_with(1, 5, 0.1).validate(4), std::invalid_argument);
  EXPECT_THROW(spec_with(1, 2, 1.5).validate(4), std::invalid_argument);
}

TEST(Features, FrameCountFromWindowAndHop) {
  std::vector<double> one_second(8000, 0.0);
  FrameFeatures f = extract_logmel(one_second, 8000, {});
  EXPECT_EQ(f.frames(), 98);
  EXPECT_EQ(f.values.cols(), 23);
  EXPECT_EQ(frame_count(8000, 8000, {}), 98);
}

TEST(Features, SilenceHitsTheLogFloor) {
  std::vector<double> zeros(4000, 0.0);
  FrameFeatures f = extract_logmel(zeros, 8000, {});
  EXPECT_TRUE((f.values.array() == std::log(1e-10)).all());
}

TEST(Features, WhiteNoiseIsFiniteWithVariance) {
  Rng rng(1);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<double> x(16000);
  for (auto& v : x) v = g(rng);
  FrameFeatures f = extract_logmel(x, 8000, {});
  EXPECT_TRUE(f.values.allFinite());
  for (Eigen::Index c = 0; c < f.values.cols(); ++c) {
    const double mean = f.values.col(c).mean();
    EXPECT_GT((f.values.col(c).array() - mean).square().sum(), 0.0);
  }
  EXPECT_THROW(extract_logmel(std::vector<double>{}, 8000, {}), std::invalid_argument);
}

TEST(Features, FilterbankRowsAreTriangles) {
  Matrix fb = mel_filterbank(23, 256, 8000);
  EXPECT_EQ(fb.rows(), 23);
  EXPECT_EQ(fb.cols(), 129);
  EXPECT_TRUE((fb.array() >= 0.0).all());
  for (Eigen::Index r = 0; r < fb.rows(); ++r) EXPECT_GT(fb.row(r).sum(), 0.0);
}

TEST(Labels, SegmentFillsColumn) {
  auto l = frames_to_labels({{"A", 0.0, 1.0}}, 0.01, 100, 4);
  ASSERT_EQ(l.num_speakers(), 1);
  EXPECT_EQ(l.values.col(0).sum(), 100.0);
  auto empty = frames_to_labels({}, 0.01, 50, 4);
  EXPECT_EQ(empty.num_speakers(), 0);
  EXPECT_EQ(empty.frames(), 50);
}

TEST(Labels, DominantSpeakersKept) {
  std::vector<Segment> segs = {{"a", 0.0, 5.0}, {"b", 0.0, 4.0}, {"c", 0.0, 0.5}, {"d", 0.0, 3.0}, {"e", 0.0, 2.0}};
  auto l = frames_to_labels(segs, 0.01, 600, 4);
  EXPECT_EQ(l.speakers, (std::vector<std::string>{"a", "b", "d", "e"}));
  std::vector<Segment> tie = {{"x", 0.0, 1.0}, {"y", 0.0, 1.0}, {"z", 2.0, 3.0}};
  EXPECT_EQ(frames_to_labels(tie, 0.01, 400, 2).speakers, (std::vector<std::string>{"x", "y"}));
}

TEST(Labels, AlignedWithFeatures) {
  Mixture m = simulate_mixture(spec_with(2, 2, 0.2), 2, 6.0, 9);
  FrameFeatures f = extract_logmel(m.waveform, m.sample_rate, {});
  auto l = frames_to_labels(m.segments, f.hop_s, f.frames(), 4);
  EXPECT_EQ(l.frames(), f.frames());
}

TEST(Crop, FullLengthIsIdentity) {
  Rng rng(2);
  FrameFeatures f{testing::random_matrix(30, 4, rng), 0.01, 0.025};
  auto l = frames_to_labels({{"a", 0.0, 0.1}, {"b", 0.2, 0.3}}, 0.01, 30, 4);
  auto [cf, cl] = crop_sample(f, l, 30, 5);
  EXPECT_EQ(cf.values, f.values);
  EXPECT_EQ(cl.values, l.values);
  EXPECT_THROW(crop_sample(f, l, 31, 5), std::invalid_argument);
}

TEST(Crop, SilentSpeakersDropped) {
  FrameFeatures f{Matrix::Zero(6000, 2), 0.01, 0.025};
  auto l = frames_to_labels({{"a", 0.0, 60.0}, {"b", 0.0, 0.5}}, 0.01, 6000, 4);
  bool dropped = false;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto [cf, cl] = crop_sample(f, l, 5000, seed);
    EXPECT_EQ(cf.frames(), 5000);
    EXPECT_EQ(cl.frames(), 5000);
    for (Eigen::Index s = 0; s < cl.num_speakers(); ++s) EXPECT_GT(cl.values.col(s).sum(), 0.0);
    if (cl.num_speakers() == 1) {
      dropped = true;
      EXPECT_EQ(cl.speakers.front(), "a");
    }
  }
  EXPECT_TRUE(dropped);
}

TEST(Wav, RoundTripWithin16BitPrecision) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::vector<double> x(1234);
  for (auto& v : x) v = u(rng);
  const auto path = std::filesystem::temp_directory_path() / "eend_wav_roundtrip.wav";
  write_wav(path.string(), x, 8000);
  WavData w = read_wav(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(w.sample_rate, 8000);
  ASSERT_EQ(w.samples.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(w.samples[i], x[i], 1.0 / 32767.0);
}

// A least-squares linear classifier on mean log-mel vectors, trained on half
// the samples of two domains and scored on the other half.
double pairwise_separability(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  const auto dim = a.front().size();
  const std::size_t half = a.size() / 2;
  Matrix x(static_cast<Eigen::Index>(2 * half), dim + 1);
  Vector y(2 * half);
  for (std::size_t i = 0; i < half; ++i) {
    x.row(static_cast<Eigen::Index>(2 * i)) << a[i].transpose(), 1.0;
    x.row(static_cast<Eigen::Index>(2 * i + 1)) << b[i].transpose(), 1.0;
    y(static_cast<Eigen::Index>(2 * i)) = 1.0;
    y(static_cast<Eigen::Index>(2 * i + 1)) = -1.0;
  }
  Matrix gram = x.transpose() * x + 1e-6 * Matrix::Identity(dim + 1, dim + 1);
  Vector w = gram.ldlt().solve(x.transpose() * y);
  int correct = 0, total = 0;
  for (std::size_t i = half; i < a.size(); ++i) {
    Vector za(dim + 1), zb(dim + 1);
    za << a[i], 1.0;
    zb << b[i], 1.0;
    correct += za.dot(w) > 0.0;
    correct += zb.dot(w) < 0.0;
    total += 2;
  }
  return static_cast<double>(correct) / total;
}

TEST(Domains, LinearlySeparableFromMeanLogMel) {
  const auto domains = default_domains();
  std::vector<std::vector<Vector>> means(domains.size());
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const auto& spec = domains[d].spec;
    for (int i = 0; i < 100; ++i) {
      const int n = spec.min_speakers + i % (spec.max_speakers - spec.min_speakers + 1);
      Mixture m = simulate_mixture(spec, n, 5.0, 1000 + static_cast<std::uint64_t>(i));
      FrameFeatures f = extract_logmel(m.waveform, m.sample_rate, {});
      means[d].push_back(f.values.colwise().mean().transpose());
    }
  }
  for (std::size_t a = 0; a < domains.size(); ++a) {
    for (std::size_t b = a + 1; b < domains.size(); ++b) {
      EXPECT_GE(pairwise_separability(means[a], means[b]), 0.9)
          << domains[a].spec.name << " vs " << domains[b].spec.name;
    }
  }
}

}  // namespace
}  // namespace eend
