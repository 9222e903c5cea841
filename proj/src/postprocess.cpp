#include "chorus/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "chorus/annotations.hpp"
#include "chorus/ioutil.hpp"

namespace chorus::postprocess {

namespace {

constexpr double kPeakWindowSec = 10.0;
constexpr double kContextPastSec = 10.0;
constexpr double kContextFutureSec = 5.0;

int round_half_up_min1(double v) {
  return std::max(1, static_cast<int>(std::floor(v + 0.5)));
}

struct RawSegment {
  double start = 0.0, end = 0.0;
  double likelihood = 0.0;
  bool chorus = false;
};

// Mean chorus probability per segment; frames are assigned by center time,
// trailing frames fall into the last segment. Empty segments get -1 so they
// rank behind every real segment.
std::vector<RawSegment> segment_likelihoods(const ActivationCurve& c,
                                            const std::vector<double>& points) {
  std::vector<RawSegment> segs;
  for (size_t i = 0; i + 1 < points.size(); ++i) {
    segs.push_back({points[i], points[i + 1], 0.0, false});
  }
  std::vector<double> sum(segs.size(), 0.0);
  std::vector<int> count(segs.size(), 0);
  size_t cur = 0;
  for (int f = 0; f < c.size(); ++f) {
    const double t = c.frame_center_sec(f);
    while (cur + 1 < segs.size() && t >= segs[cur].end) ++cur;
    sum[cur] += c.values[static_cast<size_t>(f)];
    count[cur] += 1;
  }
  for (size_t i = 0; i < segs.size(); ++i) {
    segs[i].likelihood = count[i] > 0 ? sum[i] / count[i] : -1.0;
  }
  return segs;
}

// Labels the top-R segments chorus (ties to the earlier segment), merges
// adjacent same-label segments and returns the full partition.
DetectionResult finalize(std::vector<RawSegment> segs, int top_r,
                         double duration, DetectionResult::Provenance prov) {
  std::vector<size_t> order(segs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (segs[a].likelihood != segs[b].likelihood) {
      return segs[a].likelihood > segs[b].likelihood;
    }
    return segs[a].start < segs[b].start;
  });
  for (size_t r = 0; r < order.size() && r < static_cast<size_t>(top_r); ++r) {
    segs[order[r]].chorus = true;
  }

  DetectionResult det;
  det.provenance = prov;
  det.segments.song_duration_sec = duration;
  for (const RawSegment& s : segs) {
    const std::string label = s.chorus ? "chorus" : "non-chorus";
    if (!det.segments.segments.empty() &&
        det.segments.segments.back().label == label) {
      det.segments.segments.back().end_sec = s.end;
    } else {
      det.segments.segments.push_back({s.start, s.end, label});
    }
  }
  return det;
}

std::vector<double> partition_points(const std::vector<double>& cuts,
                                     double duration) {
  std::vector<double> points{0.0};
  for (double t : cuts) {
    if (t > 0.0 && t < duration) points.push_back(t);
  }
  points.push_back(duration);
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               points.end());
  return points;
}

}  // namespace

DatasetPrior compute_theta(const std::vector<SegmentList>& training_annotations) {
  if (training_annotations.empty()) {
    throw std::invalid_argument("compute_theta: no training annotations");
  }
  double total_choruses = 0.0;
  double total_duration = 0.0;
  for (const SegmentList& s : training_annotations) {
    total_choruses +=
        static_cast<double>(annotations::normalize_chorus_labels(s).segments.size());
    total_duration += s.song_duration_sec;
  }
  if (total_duration <= 0.0) {
    throw std::invalid_argument("compute_theta: zero total duration");
  }
  return {total_choruses / total_duration * 180.0};
}

std::pair<int, int> compute_PR(double duration_sec, const DatasetPrior& prior) {
  if (duration_sec <= 0.0) throw std::invalid_argument("compute_PR: duration must be positive");
  const double r_star = 2.0 * duration_sec * prior.theta / 180.0;
  const double p_star = 2.5 * r_star;
  return {round_half_up_min1(p_star), round_half_up_min1(r_star)};
}

std::vector<PeakCandidate> pick_boundary_peaks(const ActivationCurve& b) {
  std::vector<PeakCandidate> peaks;
  if (b.size() == 0) return peaks;

  // Window partition by frame center time; the last window may be shorter.
  int best_frame = 0;
  int window = 0;
  auto flush = [&](int frame) {
    PeakCandidate cand;
    cand.time_sec = b.frame_center_sec(frame);
    cand.prob = b.values[static_cast<size_t>(frame)];
    peaks.push_back(cand);
  };
  for (int f = 0; f < b.size(); ++f) {
    const int w = static_cast<int>(std::floor(b.frame_center_sec(f) / kPeakWindowSec));
    if (w != window) {
      flush(best_frame);
      window = w;
      best_frame = f;
    } else if (b.values[static_cast<size_t>(f)] >
               b.values[static_cast<size_t>(best_frame)]) {
      best_frame = f;
    }
  }
  flush(best_frame);

  // Boundary score: probability minus the pooled context mean over
  // [t - 10 s, t + 5 s], clipped to the song.
  for (PeakCandidate& cand : peaks) {
    const double lo = cand.time_sec - kContextPastSec;
    const double hi = cand.time_sec + kContextFutureSec;
    double sum = 0.0;
    int count = 0;
    for (int f = 0; f < b.size(); ++f) {
      const double t = b.frame_center_sec(f);
      if (t < lo || t > hi) continue;
      sum += b.values[static_cast<size_t>(f)];
      count += 1;
    }
    cand.score = cand.prob - (count > 0 ? sum / count : 0.0);
  }

  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const PeakCandidate& a, const PeakCandidate& b2) {
                     if (a.score != b2.score) return a.score > b2.score;
                     return a.time_sec < b2.time_sec;
                   });
  return peaks;
}

DetectionResult binarize(const ActivationCurve& chorus,
                         const ActivationCurve& boundary, double duration_sec,
                         const DatasetPrior& prior) {
  if (chorus.size() != boundary.size() ||
      chorus.frame_rate != boundary.frame_rate) {
    throw std::invalid_argument("binarize: curves must share one grid");
  }
  const auto [top_p, top_r] = compute_PR(duration_sec, prior);

  std::vector<PeakCandidate> peaks = pick_boundary_peaks(boundary);
  if (peaks.size() > static_cast<size_t>(top_p)) {
    peaks.resize(static_cast<size_t>(top_p));
  }
  std::vector<double> cuts;
  for (const PeakCandidate& p : peaks) cuts.push_back(p.time_sec);

  auto segs = segment_likelihoods(chorus, partition_points(cuts, duration_sec));
  return finalize(std::move(segs), top_r, duration_sec,
                  DetectionResult::Provenance::kModel);
}

DetectionResult oracle_bound(const ActivationCurve& chorus,
                             const std::vector<double>& true_boundaries,
                             int true_count) {
  const double duration = chorus.duration_sec();
  auto segs =
      segment_likelihoods(chorus, partition_points(true_boundaries, duration));
  return finalize(std::move(segs), true_count, duration,
                  DetectionResult::Provenance::kOracle);
}

void write_detection_csv(const DetectionResult& det, const std::string& path) {
  std::ostringstream out;
  out << "# start_sec,end_sec,label\n";
  char buf[96];
  for (const Segment& s : det.segments.segments) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%s\n", s.start_sec, s.end_sec,
                  s.label.c_str());
    out << buf;
  }
  atomic_write_file(path, out.str());
}

void write_detection_json(const DetectionResult& det, const std::string& path) {
  nlohmann::json j;
  j["duration_sec"] = det.segments.song_duration_sec;
  j["provenance"] =
      det.provenance == DetectionResult::Provenance::kOracle ? "oracle" : "model";
  j["segments"] = nlohmann::json::array();
  for (const Segment& s : det.segments.segments) {
    j["segments"].push_back(
        {{"start_sec", s.start_sec}, {"end_sec", s.end_sec}, {"label", s.label}});
  }
  atomic_write_file(path, j.dump(2) + "\n");
}

DetectionResult read_detection_csv(const std::string& path,
                                   double duration_sec) {
  const std::string text = read_text_file(path);
  const SegmentList parsed = annotations::parse_annotations(text, duration_sec);
  DetectionResult det;
  det.segments = annotations::normalize_chorus_labels(parsed);
  return det;
}

}  // namespace chorus::postprocess
