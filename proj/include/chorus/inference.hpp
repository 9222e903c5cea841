#pragma once

#include <utility>
#include <vector>

#include "chorus/network.hpp"
#include "chorus/types.hpp"

namespace chorus::inference {

// Averages overlapping chunk predictions on the pooled output grid:
// y[t] = mean of all chunk outputs that cover t. Every index must receive
// at least one contribution (the tail-anchored chunking guarantees it);
// a gap or an out-of-range prediction index throws.
ActivationCurve merge_overlaps(
    const std::vector<std::pair<int, std::vector<float>>>& chunk_preds,
    int out_len, double frame_rate);

// Slides the temporal model across the song with hop S (input frames,
// divisible by the label pool) and merges overlapping window predictions.
// Output length = ceil(L / pool) at frame_rate / pool.
std::pair<ActivationCurve, ActivationCurve> predict_song(
    Model& model, const MelSpectrogram& mel, int hop = chunking::kChunkHop);

// Scalar variant: one chunk centered at every output-grid index (clamped at
// the song edges), its two outputs written directly at that index; no
// averaging. Same output grid as the temporal path.
std::pair<ActivationCurve, ActivationCurve> predict_song_scalar(
    Model& model, const MelSpectrogram& mel);

void write_activations_csv(const ActivationCurve& chorus,
                           const ActivationCurve& boundary,
                           const std::string& path);

}  // namespace chorus::inference
