#include "chorus/annotations.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace chorus::annotations {

namespace {

constexpr double kRampSec = 1.0;      // half of a 2-second Hann window
constexpr double kPlateauSec = 0.5;   // boundary section width
constexpr double kMergeEps = 1e-9;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void parse_fail(int row, const std::string& what) {
  throw std::runtime_error("annotation parse error at row " +
                           std::to_string(row) + ": " + what);
}

double parse_number(const std::string& field, int row) {
  try {
    size_t used = 0;
    double v = std::stod(field, &used);
    if (used != field.size()) parse_fail(row, "bad number '" + field + "'");
    return v;
  } catch (const std::invalid_argument&) {
    parse_fail(row, "bad number '" + field + "'");
  } catch (const std::out_of_range&) {
    parse_fail(row, "number out of range '" + field + "'");
  }
}

// Rising half-Hann ramp, u in [0, 1].
inline double ramp(double u) { return 0.5 * (1.0 - std::cos(std::numbers::pi * u)); }

ActivationCurve sample_curve(const SegmentList& s, double frame_rate,
                             int num_frames,
                             double (*value_at)(const SegmentList&, double)) {
  if (frame_rate <= 0.0) throw std::invalid_argument("frame_rate must be positive");
  ActivationCurve curve;
  curve.frame_rate = frame_rate;
  curve.values.resize(static_cast<size_t>(std::max(0, num_frames)));
  for (int f = 0; f < num_frames; ++f) {
    curve.values[static_cast<size_t>(f)] =
        static_cast<float>(value_at(s, (f + 0.5) / frame_rate));
  }
  return curve;
}

int frames_for_duration(const SegmentList& s, double frame_rate) {
  // Small epsilon so an exact integer frame count is not lost to rounding.
  return static_cast<int>(std::floor(s.song_duration_sec * frame_rate + 1e-9));
}

}  // namespace

SegmentList parse_annotations(const std::string& text, double duration_sec) {
  SegmentList out;
  out.song_duration_sec = duration_sec;

  std::istringstream in(text);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;

    std::vector<std::string> fields;
    std::stringstream ls(t);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(trim(field));
    if (fields.size() != 3) parse_fail(row, "expected start_sec,end_sec,label");

    Segment seg;
    seg.start_sec = parse_number(fields[0], row);
    seg.end_sec = parse_number(fields[1], row);
    seg.label = fields[2];
    if (seg.label.empty()) parse_fail(row, "empty label");
    if (seg.start_sec < 0.0) parse_fail(row, "negative start time");
    if (seg.end_sec <= seg.start_sec) parse_fail(row, "end <= start");
    if (seg.end_sec > duration_sec + 1e-6) {
      parse_fail(row, "segment ends after the song");
    }
    seg.end_sec = std::min(seg.end_sec, duration_sec);
    out.segments.push_back(seg);
  }

  std::stable_sort(out.segments.begin(), out.segments.end(),
                   [](const Segment& a, const Segment& b) {
                     return a.start_sec < b.start_sec;
                   });
  for (size_t i = 1; i < out.segments.size(); ++i) {
    if (out.segments[i].start_sec < out.segments[i - 1].end_sec - kMergeEps) {
      throw std::runtime_error(
          "annotation parse error: overlapping segments at " +
          std::to_string(out.segments[i - 1].start_sec) + "s and " +
          std::to_string(out.segments[i].start_sec) + "s");
    }
  }
  return out;
}

SegmentList normalize_chorus_labels(const SegmentList& s) {
  SegmentList out;
  out.song_duration_sec = s.song_duration_sec;
  for (const Segment& seg : s.segments) {
    const std::string l = lower(seg.label);
    const bool chorus = (l == "chorus" || l == "post-chorus" || l == "postchorus");
    if (!chorus) continue;
    if (!out.segments.empty() &&
        seg.start_sec <= out.segments.back().end_sec + kMergeEps) {
      out.segments.back().end_sec =
          std::max(out.segments.back().end_sec, seg.end_sec);
    } else {
      out.segments.push_back({seg.start_sec, seg.end_sec, "chorus"});
    }
  }
  return out;
}

std::vector<double> boundary_instants(const SegmentList& normalized) {
  std::vector<double> b;
  for (const Segment& seg : normalized.segments) {
    b.push_back(seg.start_sec);
    b.push_back(seg.end_sec);
  }
  return b;
}

double chorus_value_at(const SegmentList& normalized, double t) {
  double v = 0.0;
  for (const Segment& seg : normalized.segments) {
    if (t >= seg.start_sec && t <= seg.end_sec) return 1.0;
    if (t >= seg.start_sec - kRampSec && t < seg.start_sec) {
      v = std::max(v, ramp((t - (seg.start_sec - kRampSec)) / kRampSec));
    } else if (t > seg.end_sec && t <= seg.end_sec + kRampSec) {
      v = std::max(v, ramp(((seg.end_sec + kRampSec) - t) / kRampSec));
    }
  }
  return v;
}

double boundary_value_at(const SegmentList& normalized, double t) {
  const double half = kPlateauSec / 2.0;
  double v = 0.0;
  for (double q : boundary_instants(normalized)) {
    const double d = std::abs(t - q);
    if (d <= half) return 1.0;
    if (d <= half + kRampSec) {
      v = std::max(v, ramp(((half + kRampSec) - d) / kRampSec));
    }
  }
  return v;
}

ActivationCurve chorus_curve(const SegmentList& s, double frame_rate) {
  return sample_curve(s, frame_rate, frames_for_duration(s, frame_rate),
                      &chorus_value_at);
}

ActivationCurve chorus_curve(const SegmentList& s, double frame_rate,
                             int num_frames) {
  return sample_curve(s, frame_rate, num_frames, &chorus_value_at);
}

ActivationCurve boundary_curve(const SegmentList& s, double frame_rate) {
  return sample_curve(s, frame_rate, frames_for_duration(s, frame_rate),
                      &boundary_value_at);
}

ActivationCurve boundary_curve(const SegmentList& s, double frame_rate,
                               int num_frames) {
  return sample_curve(s, frame_rate, num_frames, &boundary_value_at);
}

}  // namespace chorus::annotations
