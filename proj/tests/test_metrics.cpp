#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "chorus/metrics.hpp"
#include "chorus/rng.hpp"

using namespace chorus;
using namespace chorus::metrics;

namespace {

ActivationCurve curve_from(std::vector<float> values) {
  ActivationCurve c;
  c.frame_rate = 10.0;
  c.values = std::move(values);
  return c;
}

// O(n^2) oracle: count correctly ordered (positive, negative) pairs.
double brute_force_auc(const std::vector<float>& pred,
                       const std::vector<uint8_t>& ref) {
  double wins = 0.0;
  long pairs = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!ref[i]) continue;
    for (size_t j = 0; j < pred.size(); ++j) {
      if (ref[j]) continue;
      ++pairs;
      if (pred[i] > pred[j]) wins += 1.0;
      else if (pred[i] == pred[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// O(n^2) oracle for the pairwise scores over explicit frame labels.
PairwiseScores brute_force_pairwise(const std::vector<int>& ref,
                                    const std::vector<int>& est) {
  uint64_t agree = 0, pairs_ref = 0, pairs_est = 0;
  const size_t n = ref.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const bool same_ref = ref[i] == ref[j];
      const bool same_est = est[i] == est[j];
      pairs_ref += same_ref;
      pairs_est += same_est;
      agree += same_ref && same_est;
    }
  }
  PairwiseScores s;
  s.precision = pairs_est == 0 ? 1.0 : static_cast<double>(agree) / pairs_est;
  s.recall = pairs_ref == 0 ? 1.0 : static_cast<double>(agree) / pairs_ref;
  s.f1 = (s.precision + s.recall) > 0
             ? 2 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

// Builds a detection/reference pair at 10 fps from explicit frame labels.
SegmentList segments_from_labels(const std::vector<int>& labels) {
  SegmentList s;
  s.song_duration_sec = labels.size() / 10.0;
  size_t i = 0;
  while (i < labels.size()) {
    size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    if (labels[i] == 1) {
      s.segments.push_back({i / 10.0, j / 10.0, "chorus"});
    }
    i = j;
  }
  return s;
}

postprocess::DetectionResult detection_from_labels(const std::vector<int>& labels) {
  postprocess::DetectionResult det;
  det.segments = segments_from_labels(labels);
  return det;
}

}  // namespace

TEST_CASE("auc: separating, constant, and the worked 3/4 example") {
  CHECK(auc(curve_from({0.9f, 0.8f, 0.2f, 0.1f}), {1, 1, 0, 0}) == 1.0);
  CHECK(auc(curve_from({0.4f, 0.4f, 0.4f, 0.4f}), {1, 0, 1, 0}) == 0.5);
  CHECK(auc(curve_from({0.9f, 0.4f, 0.6f, 0.1f}), {1, 1, 0, 0}) == 0.75);
}

TEST_CASE("auc requires both classes") {
  CHECK_THROWS_AS(auc(curve_from({0.5f, 0.6f}), {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(auc(curve_from({0.5f, 0.6f}), {0, 0}), std::invalid_argument);
}

TEST_CASE("auc equals brute-force pair counting with ties") {
  SplitMix64 rng(31337);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_int(196));
    std::vector<float> pred(static_cast<size_t>(n));
    std::vector<uint8_t> ref(static_cast<size_t>(n));
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      pred[static_cast<size_t>(i)] =
          static_cast<float>(rng.uniform_int(12)) / 11.0f;  // forces ties
      ref[static_cast<size_t>(i)] = rng.uniform() < 0.4 ? 1 : 0;
      (ref[static_cast<size_t>(i)] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    CHECK(auc(curve_from(std::vector<float>(pred)), ref) ==
          brute_force_auc(pred, ref));
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  SplitMix64 rng(42);
  std::vector<float> pred(120);
  std::vector<uint8_t> ref(120);
  for (size_t i = 0; i < pred.size(); ++i) {
    pred[i] = static_cast<float>(rng.uniform());
    ref[i] = rng.uniform() < 0.5 ? 1 : 0;
  }
  ref[0] = 1;
  ref[1] = 0;
  const double base = auc(curve_from(std::vector<float>(pred)), ref);
  std::vector<float> squashed(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    squashed[i] = 1.0f / (1.0f + std::exp(-5.0f * pred[i]));
  }
  CHECK(auc(curve_from(std::move(squashed)), ref) == base);
}

TEST_CASE("pairwise f1: est equal to ref scores all ones") {
  const std::vector<int> labels{0, 1, 1, 0, 0, 1, 1, 1, 0, 0};
  const auto s = pairwise_f1(detection_from_labels(labels),
                             segments_from_labels(labels));
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 1.0);
  CHECK(s.f1 == 1.0);
}

TEST_CASE("pairwise f1 worked example: all-chorus estimate") {
  // 4 frames, ref [1,1,0,0], est [1,1,1,1].
  const auto s = pairwise_f1(detection_from_labels({1, 1, 1, 1}),
                             segments_from_labels({1, 1, 0, 0}));
  CHECK(s.precision == doctest::Approx(1.0 / 3.0));
  CHECK(s.recall == 1.0);
  CHECK(s.f1 == doctest::Approx(0.5));
}

TEST_CASE("pairwise agreement counts are label-permutation invariant") {
  // Flipping every estimate label leaves the agreement structure intact.
  const std::vector<int> ref{1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0};
  std::vector<int> est{1, 1, 0, 0, 0, 1, 1, 0, 0, 1, 1, 0};
  std::vector<int> flipped(est.size());
  for (size_t i = 0; i < est.size(); ++i) flipped[i] = 1 - est[i];
  const auto a = brute_force_pairwise(ref, est);
  const auto b = brute_force_pairwise(ref, flipped);
  CHECK(a.precision == b.precision);
  CHECK(a.recall == b.recall);
  CHECK(a.f1 == b.f1);

  const auto through_segments = pairwise_f1(detection_from_labels(est),
                                            segments_from_labels(ref));
  CHECK(through_segments.f1 == doctest::Approx(a.f1));
}

TEST_CASE("pairwise f1 equals brute-force enumeration on random labelings") {
  SplitMix64 rng(777);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 10 + static_cast<int>(rng.uniform_int(191));
    std::vector<int> ref(static_cast<size_t>(n)), est(static_cast<size_t>(n));
    // Blocky labelings, like real segmentations.
    int rv = 0, ev = 0;
    for (int i = 0; i < n; ++i) {
      if (rng.uniform() < 0.12) rv = 1 - rv;
      if (rng.uniform() < 0.12) ev = 1 - ev;
      ref[static_cast<size_t>(i)] = rv;
      est[static_cast<size_t>(i)] = ev;
    }
    const auto fast = pairwise_f1(detection_from_labels(est),
                                  segments_from_labels(ref));
    const auto brute = brute_force_pairwise(ref, est);
    CHECK(fast.precision == doctest::Approx(brute.precision).epsilon(1e-12));
    CHECK(fast.recall == doctest::Approx(brute.recall).epsilon(1e-12));
    CHECK(fast.f1 == doctest::Approx(brute.f1).epsilon(1e-12));
  }
}

TEST_CASE("scores stay in [0,1] with f1 below the larger component") {
  SplitMix64 rng(888);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 20 + static_cast<int>(rng.uniform_int(100));
    std::vector<int> ref(static_cast<size_t>(n)), est(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      ref[static_cast<size_t>(i)] = rng.uniform() < 0.5;
      est[static_cast<size_t>(i)] = rng.uniform() < 0.5;
    }
    const auto s = pairwise_f1(detection_from_labels(est),
                               segments_from_labels(ref));
    CHECK(s.precision >= 0.0);
    CHECK(s.precision <= 1.0);
    CHECK(s.recall >= 0.0);
    CHECK(s.recall <= 1.0);
    CHECK(s.f1 <= std::max(s.precision, s.recall) + 1e-12);
  }
}

TEST_CASE("pairwise f1 rejects a zero-duration song") {
  SegmentList empty;
  empty.song_duration_sec = 0.0;
  CHECK_THROWS_AS(pairwise_f1(postprocess::DetectionResult{}, empty),
                  std::invalid_argument);
}
