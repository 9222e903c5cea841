#include "chorus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace chorus::metrics {

double auc(const ActivationCurve& pred, const std::vector<uint8_t>& ref_binary) {
  const size_t n = pred.values.size();
  if (ref_binary.size() != n) throw std::invalid_argument("auc: length mismatch");
  size_t n_pos = 0;
  for (uint8_t r : ref_binary) n_pos += (r != 0);
  const size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("AUC undefined: reference has a single class");
  }

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return pred.values[a] < pred.values[b];
  });

  // Rank sum of positives with average ranks over tie groups.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && pred.values[order[j]] == pred.values[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k) {
      if (ref_binary[order[k]]) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

bool chorus_label_at(const SegmentList& segments, double t_sec) {
  for (const Segment& s : segments.segments) {
    if (t_sec >= s.start_sec && t_sec < s.end_sec && s.label == "chorus") {
      return true;
    }
  }
  return false;
}

namespace {

PairwiseScores scores_from_counts(const uint64_t n_ab[2][2]) {
  auto choose2 = [](uint64_t x) { return x * (x - 1) / 2; };
  const uint64_t ref0 = n_ab[0][0] + n_ab[0][1];
  const uint64_t ref1 = n_ab[1][0] + n_ab[1][1];
  const uint64_t est0 = n_ab[0][0] + n_ab[1][0];
  const uint64_t est1 = n_ab[0][1] + n_ab[1][1];
  const uint64_t agreements = choose2(n_ab[0][0]) + choose2(n_ab[0][1]) +
                              choose2(n_ab[1][0]) + choose2(n_ab[1][1]);
  const uint64_t pairs_ref = choose2(ref0) + choose2(ref1);
  const uint64_t pairs_est = choose2(est0) + choose2(est1);

  PairwiseScores s;
  s.precision = pairs_est == 0
                    ? 1.0
                    : static_cast<double>(agreements) / static_cast<double>(pairs_est);
  s.recall = pairs_ref == 0
                 ? 1.0
                 : static_cast<double>(agreements) / static_cast<double>(pairs_ref);
  s.f1 = (s.precision + s.recall) > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

}  // namespace

PairwiseScores pairwise_f1(const postprocess::DetectionResult& est,
                           const SegmentList& ref_normalized, double eval_rate) {
  const double duration = ref_normalized.song_duration_sec;
  if (duration <= 0.0) throw std::invalid_argument("pairwise_f1: zero-duration song");
  const int n = static_cast<int>(std::floor(duration * eval_rate + 1e-9));
  if (n <= 0) throw std::invalid_argument("pairwise_f1: song shorter than one sample");

  uint64_t counts[2][2] = {{0, 0}, {0, 0}};
  for (int k = 0; k < n; ++k) {
    const double t = (k + 0.5) / eval_rate;
    const int r = chorus_label_at(ref_normalized, t) ? 1 : 0;
    const int e = chorus_label_at(est.segments, t) ? 1 : 0;
    counts[r][e] += 1;
  }
  return scores_from_counts(counts);
}

}  // namespace chorus::metrics
