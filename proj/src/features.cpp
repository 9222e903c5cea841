#include "chorus/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace chorus::features {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Precomputed bit-reversal table and twiddle factors for one FFT size.
struct FftPlan {
  int n;
  std::vector<int> rev;
  std::vector<double> wre, wim;

  explicit FftPlan(int size) : n(size) {
    if (!is_pow2(n)) throw std::invalid_argument("FFT size must be a power of two");
    rev.resize(n);
    int log2n = 0;
    while ((1 << log2n) < n) ++log2n;
    for (int i = 0; i < n; ++i) {
      int r = 0;
      for (int b = 0; b < log2n; ++b) r |= ((i >> b) & 1) << (log2n - 1 - b);
      rev[i] = r;
    }
    wre.resize(n / 2);
    wim.resize(n / 2);
    for (int k = 0; k < n / 2; ++k) {
      wre[k] = std::cos(-2.0 * kPi * k / n);
      wim[k] = std::sin(-2.0 * kPi * k / n);
    }
  }

  void run(double* re, double* im) const {
    for (int i = 0; i < n; ++i) {
      int r = rev[i];
      if (r > i) {
        std::swap(re[i], re[r]);
        std::swap(im[i], im[r]);
      }
    }
    for (int len = 2; len <= n; len <<= 1) {
      const int half = len >> 1;
      const int step = n / len;
      for (int start = 0; start < n; start += len) {
        for (int k = 0; k < half; ++k) {
          const double wr = wre[k * step];
          const double wi = wim[k * step];
          const int a = start + k;
          const int b = a + half;
          const double tr = re[b] * wr - im[b] * wi;
          const double ti = re[b] * wi + im[b] * wr;
          re[b] = re[a] - tr;
          im[b] = im[a] - ti;
          re[a] += tr;
          im[a] += ti;
        }
      }
    }
  }
};

// Folds an index into [0, len) by mirror reflection about the end sample,
// so any amount of tail padding is defined for len >= 2.
inline int reflect_index(long long i, int len) {
  const long long period = 2LL * len - 2;
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= len) m = period - m;
  return static_cast<int>(m);
}

}  // namespace

void fft(std::vector<double>& re, std::vector<double>& im) {
  if (re.size() != im.size()) throw std::invalid_argument("fft: size mismatch");
  FftPlan plan(static_cast<int>(re.size()));
  plan.run(re.data(), im.data());
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw std::invalid_argument("resample: target rate must be positive");
  if (w.samples.empty()) throw std::runtime_error("empty waveform");
  if (w.sample_rate <= 0) throw std::runtime_error("resample: invalid source rate");
  if (w.sample_rate == target_rate) return w;

  const double ratio = static_cast<double>(target_rate) / w.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // fraction of source Nyquist
  const int zero_crossings = 16;
  const double half_width = zero_crossings / cutoff;
  const long long in_len = static_cast<long long>(w.samples.size());
  const long long out_len =
      (in_len * target_rate + w.sample_rate / 2) / w.sample_rate;

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<size_t>(out_len));

#pragma omp parallel for schedule(static)
  for (long long n = 0; n < out_len; ++n) {
    const double center = static_cast<double>(n) / ratio;
    const long long j0 = std::max<long long>(
        0, static_cast<long long>(std::ceil(center - half_width)));
    const long long j1 = std::min<long long>(
        in_len - 1, static_cast<long long>(std::floor(center + half_width)));
    double acc = 0.0;
    for (long long j = j0; j <= j1; ++j) {
      const double x = j - center;
      const double xc = x * cutoff;
      double sinc = 1.0;
      if (xc != 0.0) sinc = std::sin(kPi * xc) / (kPi * xc);
      const double win = 0.5 * (1.0 + std::cos(kPi * x / half_width));
      acc += w.samples[j] * cutoff * sinc * win;
    }
    out.samples[static_cast<size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

std::vector<double> mel_center_frequencies(int sample_rate, int fft_size,
                                           int num_bands) {
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(num_bands);
  for (int b = 0; b < num_bands; ++b) {
    centers[b] = mel_to_hz(mel_max * (b + 1) / (num_bands + 1));
  }
  return centers;
}

MatrixF mel_filterbank(int sample_rate, int fft_size, int num_bands) {
  if (num_bands < 1) throw std::invalid_argument("mel_filterbank: need at least one band");
  if (!is_pow2(fft_size)) throw std::invalid_argument("mel_filterbank: fft_size must be a power of two");
  const int bins = fft_size / 2 + 1;
  if (num_bands > bins) {
    throw std::invalid_argument("mel_filterbank: more bands than FFT bins");
  }

  // Edge frequencies: num_bands + 2 points equally spaced on the mel axis
  // between 0 Hz and Nyquist; filter b spans edges [b, b+2].
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(num_bands + 2);
  for (int i = 0; i < num_bands + 2; ++i) {
    edges[i] = mel_to_hz(mel_max * i / (num_bands + 1));
  }

  MatrixF fb = MatrixF::Zero(num_bands, bins);
  for (int b = 0; b < num_bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double v = 0.0;
      if (f > lo && f < mid) {
        v = (f - lo) / (mid - lo);
      } else if (f == mid) {
        v = 1.0;
      } else if (f > mid && f < hi) {
        v = (hi - f) / (hi - mid);
      }
      fb(b, k) = static_cast<float>(v);
    }
  }
  return fb;
}

MelSpectrogram log_mel(const Waveform& w) {
  if (w.sample_rate != kSampleRate) {
    throw std::runtime_error("log_mel expects 32 kHz input; resample first");
  }
  const long long len = static_cast<long long>(w.samples.size());
  if (len < kHopSize) throw std::runtime_error("audio too short");

  const int num_frames = static_cast<int>(len / kHopSize);
  const int bins = kFftSize / 2 + 1;

  // Hann analysis window (periodic form).
  std::vector<double> window(kFftSize);
  for (int i = 0; i < kFftSize; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / kFftSize);
  }

  const FftPlan plan(kFftSize);
  MatrixF power(num_frames, bins);

#pragma omp parallel for schedule(static)
  for (int f = 0; f < num_frames; ++f) {
    std::vector<double> re(kFftSize), im(kFftSize, 0.0);
    const long long start = static_cast<long long>(f) * kHopSize;
    for (int i = 0; i < kFftSize; ++i) {
      const long long idx = start + i;
      const float s =
          idx < len ? w.samples[static_cast<size_t>(idx)]
                    : w.samples[static_cast<size_t>(reflect_index(idx, static_cast<int>(len)))];
      re[i] = s * window[i];
    }
    plan.run(re.data(), im.data());
    for (int k = 0; k < bins; ++k) {
      power(f, k) = static_cast<float>(re[k] * re[k] + im[k] * im[k]);
    }
  }

  static const MatrixF fb = mel_filterbank(kSampleRate, kFftSize, kMelBands);
  MatrixF mel = power * fb.transpose();  // num_frames x kMelBands

  MelSpectrogram out;
  out.frame_rate = kFrameRate;
  out.values.resize(num_frames, kMelBands);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < num_frames; ++f) {
    for (int b = 0; b < kMelBands; ++b) {
      out.values(f, b) = static_cast<float>(
          std::log(static_cast<double>(mel(f, b)) + kLogFloor));
    }
  }
  return out;
}

void write_features_csv(const MelSpectrogram& mel, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write features CSV: " + path);
  char buf[32];
  for (int f = 0; f < mel.num_frames(); ++f) {
    for (int b = 0; b < mel.bands(); ++b) {
      std::snprintf(buf, sizeof(buf), "%.6f", mel.values(f, b));
      out << (b ? "," : "") << buf;
    }
    out << "\n";
  }
}

}  // namespace chorus::features
