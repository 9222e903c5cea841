#pragma once

#include <cstdint>
#include <vector>

#include "chorus/postprocess.hpp"
#include "chorus/types.hpp"

namespace chorus::metrics {

// Rank-based (Mann-Whitney) AUC of the predicted curve against binary frame
// labels: the fraction of (positive, negative) pairs ranked correctly, ties
// counting one half. Throws if the reference holds a single class.
double auc(const ActivationCurve& pred, const std::vector<uint8_t>& ref_binary);

struct PairwiseScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Pairwise clustering F-measure between the detected chorus labeling and the
// reference, both sampled at eval_rate on frame centers. Agreements are
// counted with the contingency-table identity sum_ab C(n_ab, 2).
PairwiseScores pairwise_f1(const postprocess::DetectionResult& est,
                           const SegmentList& ref_normalized,
                           double eval_rate = 10.0);

// True when t falls inside a segment labeled "chorus".
bool chorus_label_at(const SegmentList& segments, double t_sec);

}  // namespace chorus::metrics
