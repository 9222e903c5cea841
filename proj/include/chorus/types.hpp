#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace chorus {

// Row-major so one frame (matrix row) is contiguous and a chunk is a
// plain row block of the song matrix.
using MatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Mono audio buffer.
struct Waveform {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;

  double duration_sec() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

// Log-power mel spectrogram; rows are frames, columns are mel bands.
struct MelSpectrogram {
  MatrixF values;
  double frame_rate = 0.0;  // frames per second

  int num_frames() const { return static_cast<int>(values.rows()); }
  int bands() const { return static_cast<int>(values.cols()); }
};

struct Segment {
  double start_sec = 0.0;
  double end_sec = 0.0;
  std::string label;
};

// Ordered, non-overlapping labeled intervals; gaps are implicit non-chorus.
struct SegmentList {
  std::vector<Segment> segments;
  double song_duration_sec = 0.0;
};

// Per-frame values in [0, 1] on a declared frame grid. Frame f covers
// [f, f+1) / frame_rate and stores the curve sampled at the frame center.
struct ActivationCurve {
  std::vector<float> values;
  double frame_rate = 0.0;

  int size() const { return static_cast<int>(values.size()); }
  double frame_center_sec(int f) const { return (f + 0.5) / frame_rate; }
  double duration_sec() const {
    return frame_rate > 0.0 ? values.size() / frame_rate : 0.0;
  }
};

}  // namespace chorus
