#pragma once

#include <string>
#include <vector>

#include "chorus/types.hpp"

namespace chorus::annotations {

// Parses `start_sec,end_sec,label` rows ('.' decimal separator, '#' comment
// lines, blank lines ignored). Validates ordering, positive extent and the
// song duration bound; errors name the offending file row.
SegmentList parse_annotations(const std::string& text, double duration_sec);

// Case-insensitive label mapping: {chorus, post-chorus, postchorus} become
// chorus, everything else (pre-chorus included) becomes non-chorus. Only the
// chorus segments are kept, touching ones merged. Idempotent.
SegmentList normalize_chorus_labels(const SegmentList& s);

// Chorus onsets and offsets, in time order.
std::vector<double> boundary_instants(const SegmentList& normalized);

// Analytic target curves, exposed pointwise for tests. chorus_value_at is 1
// strictly inside a chorus with a 1-second half-Hann ramp on each side;
// boundary_value_at is a 2.5-second bump per boundary: a 0.5-second plateau
// of 1 centered on the instant plus the same 1-second ramps.
double chorus_value_at(const SegmentList& normalized, double t_sec);
double boundary_value_at(const SegmentList& normalized, double t_sec);

// Curves sampled at frame centers. The two-argument forms derive the frame
// count from the song duration; the pipeline passes num_frames explicitly so
// curves align with the mel grid exactly.
ActivationCurve chorus_curve(const SegmentList& normalized, double frame_rate);
ActivationCurve chorus_curve(const SegmentList& normalized, double frame_rate,
                             int num_frames);
ActivationCurve boundary_curve(const SegmentList& normalized,
                               double frame_rate);
ActivationCurve boundary_curve(const SegmentList& normalized,
                               double frame_rate, int num_frames);

}  // namespace chorus::annotations
