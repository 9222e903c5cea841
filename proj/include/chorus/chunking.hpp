#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chorus/types.hpp"

namespace chorus::chunking {

inline constexpr int kChunkFrames = 600;   // N
inline constexpr int kChunkHop = 30;       // S
inline constexpr int kLabelPool = 6;

// One fixed-size training window. Labels are kept at full frame rate; the
// trainer median-pools them to the model's output grid. valid marks real
// frames (0 = right padding added when the song is shorter than N).
struct Chunk {
  MatrixF features;              // N x D
  std::vector<float> chorus;     // length N
  std::vector<float> boundary;   // length N
  std::vector<uint8_t> valid;    // length N
  std::string song_id;
  int offset_frames = 0;
};

// Chunk start offsets for a song of L frames: 0, S, 2S, ... while
// offset + N <= L, plus one tail chunk anchored at L - N when (L - N) is not
// a multiple of S. L <= N yields the single offset 0.
std::vector<int> chunk_offsets(int num_frames, int chunk_frames, int hop);

std::vector<Chunk> make_chunks(const MelSpectrogram& mel,
                               const ActivationCurve& chorus,
                               const ActivationCurve& boundary,
                               int chunk_frames = kChunkFrames,
                               int hop = kChunkHop);

// Median over non-overlapping groups of `pool`; even-count median is the
// mean of the two middle order statistics. Length must divide evenly.
std::vector<float> median_pool_labels(const std::vector<float>& v,
                                      int pool = kLabelPool);

// Pooled validity: a pooled index is valid only if all source frames are.
std::vector<uint8_t> pool_valid_mask(const std::vector<uint8_t>& valid,
                                     int pool = kLabelPool);

// Length of the pooled output grid for a song of num_frames frames.
inline int output_length(int num_frames, int pool = kLabelPool) {
  return (num_frames + pool - 1) / pool;
}

// Song frame count padded up so chunk offsets land on the pooled grid:
// the smallest multiple of `pool` that is >= num_frames and >= chunk_frames.
int padded_length(int num_frames, int chunk_frames = kChunkFrames,
                  int pool = kLabelPool);

// Right-pads a label curve with zeros to padded_length and median-pools it;
// this is the song-level label signal on the model output grid.
std::vector<float> pooled_song_labels(const ActivationCurve& curve,
                                      int chunk_frames = kChunkFrames,
                                      int pool = kLabelPool);

}  // namespace chorus::chunking
