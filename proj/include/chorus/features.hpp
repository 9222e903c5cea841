#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "chorus/types.hpp"

namespace chorus::features {

inline constexpr int kSampleRate = 32000;
inline constexpr int kFftSize = 2048;
inline constexpr int kHopSize = 1024;
inline constexpr int kMelBands = 96;
// Natural-log floor: cells are log(power + kLogFloor), so silence maps to
// log(kLogFloor) exactly. Pinned so checkpoints stay comparable across runs.
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kFrameRate =
    static_cast<double>(kSampleRate) / kHopSize;  // 31.25 fps

inline float log_floor_value() {
  return static_cast<float>(std::log(kLogFloor));
}

// Band-limited resampling with a Hann-windowed sinc kernel. Returns the
// input unchanged (bitwise) when it is already at target_rate.
Waveform resample(const Waveform& w, int target_rate);

// Triangular mel filterbank, rows ordered by ascending center frequency,
// covering 0 .. sample_rate/2 on the HTK mel scale. Shape:
// num_bands x (fft_size/2 + 1).
MatrixF mel_filterbank(int sample_rate, int fft_size, int num_bands);

// Center frequencies (Hz) of the num_bands triangular filters; exposed so
// tests can locate the band containing a given tone.
std::vector<double> mel_center_frequencies(int sample_rate, int fft_size,
                                           int num_bands);

// STFT (Hann window kFftSize, hop kHopSize, reflection padding at the tail)
// -> power spectrum -> mel projection -> log(power + kLogFloor).
// Requires w at kSampleRate; resample first otherwise.
MelSpectrogram log_mel(const Waveform& w);

// In-place iterative radix-2 FFT; re/im length must be a power of two.
// Also used by tests that need an independent spectrum view.
void fft(std::vector<double>& re, std::vector<double>& im);

// Feature dump: one row per frame, bands() comma-separated decimals.
void write_features_csv(const MelSpectrogram& mel, const std::string& path);

}  // namespace chorus::features
