#pragma once

#include <string>
#include <utility>
#include <vector>

#include "chorus/types.hpp"

namespace chorus::postprocess {

// Dataset prior: average number of chorus sections per 3 minutes, computed
// from training annotations only.
struct DatasetPrior {
  double theta = 0.0;
};

struct PeakCandidate {
  double time_sec = 0.0;
  double prob = 0.0;
  double score = 0.0;  // prob minus the local context mean
};

// Binary chorus/non-chorus partition of [0, duration]; adjacent segments
// never share a label.
struct DetectionResult {
  enum class Provenance { kModel, kOracle };
  SegmentList segments;
  Provenance provenance = Provenance::kModel;
};

// theta = 180 * (total normalized chorus segments) / (total duration sec).
DatasetPrior compute_theta(const std::vector<SegmentList>& training_annotations);

// R* = 2 * d * theta / 180, P* = 2.5 * R*; both rounded half-up and floored
// at 1. Returns {P, R}.
std::pair<int, int> compute_PR(double duration_sec, const DatasetPrior& prior);

// One candidate per non-overlapping 10-second window (the window's maximum,
// earliest frame on ties). score = prob - mean of the curve over
// [t - 10 s, t + 5 s] clipped to the song. Sorted by score descending,
// earlier time on ties.
std::vector<PeakCandidate> pick_boundary_peaks(const ActivationCurve& boundary);

// Three-phase decoding: top-P peaks partition the song, segments are ranked
// by mean chorus probability, the top R become choruses, and adjacent
// same-label segments merge.
DetectionResult binarize(const ActivationCurve& chorus,
                         const ActivationCurve& boundary, double duration_sec,
                         const DatasetPrior& prior);

// Reference decoder: partitions at the ground-truth boundaries and labels
// the true_count most chorus-like segments.
DetectionResult oracle_bound(const ActivationCurve& chorus,
                             const std::vector<double>& true_boundaries,
                             int true_count);

void write_detection_csv(const DetectionResult& det, const std::string& path);
void write_detection_json(const DetectionResult& det, const std::string& path);

// Parses a detection CSV (start_sec,end_sec,label with chorus/non-chorus
// labels) back into a DetectionResult.
DetectionResult read_detection_csv(const std::string& path, double duration_sec);

}  // namespace chorus::postprocess
