#include "chorus/chunking.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "chorus/features.hpp"

namespace chorus::chunking {

std::vector<int> chunk_offsets(int num_frames, int chunk_frames, int hop) {
  if (num_frames <= 0) throw std::invalid_argument("chunk_offsets: empty song");
  if (chunk_frames <= 0 || hop <= 0) {
    throw std::invalid_argument("chunk_offsets: chunk size and hop must be positive");
  }
  if (num_frames <= chunk_frames) return {0};

  std::vector<int> offsets;
  for (int o = 0; o + chunk_frames <= num_frames; o += hop) offsets.push_back(o);
  const int tail = num_frames - chunk_frames;
  if (offsets.back() != tail) offsets.push_back(tail);
  return offsets;
}

std::vector<Chunk> make_chunks(const MelSpectrogram& mel,
                               const ActivationCurve& chorus,
                               const ActivationCurve& boundary,
                               int chunk_frames, int hop) {
  const int L = mel.num_frames();
  if (L == 0) throw std::invalid_argument("make_chunks: empty song");
  if (chorus.size() != L || boundary.size() != L) {
    throw std::invalid_argument("make_chunks: label curves do not match the feature grid");
  }

  const float pad_value = features::log_floor_value();
  std::vector<Chunk> chunks;
  for (int offset : chunk_offsets(L, chunk_frames, hop)) {
    Chunk ch;
    ch.offset_frames = offset;
    ch.features.setConstant(chunk_frames, mel.bands(), pad_value);
    ch.chorus.assign(static_cast<size_t>(chunk_frames), 0.0f);
    ch.boundary.assign(static_cast<size_t>(chunk_frames), 0.0f);
    ch.valid.assign(static_cast<size_t>(chunk_frames), 0);

    const int copy = std::min(chunk_frames, L - offset);
    ch.features.topRows(copy) = mel.values.middleRows(offset, copy);
    for (int i = 0; i < copy; ++i) {
      ch.chorus[static_cast<size_t>(i)] = chorus.values[static_cast<size_t>(offset + i)];
      ch.boundary[static_cast<size_t>(i)] = boundary.values[static_cast<size_t>(offset + i)];
      ch.valid[static_cast<size_t>(i)] = 1;
    }
    chunks.push_back(std::move(ch));
  }
  return chunks;
}

std::vector<float> median_pool_labels(const std::vector<float>& v, int pool) {
  if (pool <= 0) throw std::invalid_argument("median_pool_labels: pool must be positive");
  if (v.size() % static_cast<size_t>(pool) != 0) {
    throw std::invalid_argument("median_pool_labels: length not divisible by pool");
  }
  const size_t out_len = v.size() / static_cast<size_t>(pool);
  std::vector<float> out(out_len);
  std::vector<float> buf(static_cast<size_t>(pool));
  for (size_t j = 0; j < out_len; ++j) {
    std::copy_n(v.begin() + static_cast<long>(j) * pool, pool, buf.begin());
    std::sort(buf.begin(), buf.end());
    if (pool % 2 == 1) {
      out[j] = buf[static_cast<size_t>(pool / 2)];
    } else {
      out[j] = 0.5f * (buf[static_cast<size_t>(pool / 2 - 1)] +
                       buf[static_cast<size_t>(pool / 2)]);
    }
  }
  return out;
}

std::vector<uint8_t> pool_valid_mask(const std::vector<uint8_t>& valid, int pool) {
  if (pool <= 0 || valid.size() % static_cast<size_t>(pool) != 0) {
    throw std::invalid_argument("pool_valid_mask: length not divisible by pool");
  }
  const size_t out_len = valid.size() / static_cast<size_t>(pool);
  std::vector<uint8_t> out(out_len, 1);
  for (size_t j = 0; j < out_len; ++j) {
    for (int k = 0; k < pool; ++k) {
      if (!valid[j * static_cast<size_t>(pool) + static_cast<size_t>(k)]) {
        out[j] = 0;
        break;
      }
    }
  }
  return out;
}

int padded_length(int num_frames, int chunk_frames, int pool) {
  int padded = ((num_frames + pool - 1) / pool) * pool;
  return std::max(padded, chunk_frames);
}

std::vector<float> pooled_song_labels(const ActivationCurve& curve,
                                      int chunk_frames, int pool) {
  std::vector<float> padded = curve.values;
  padded.resize(static_cast<size_t>(padded_length(curve.size(), chunk_frames, pool)),
                0.0f);
  return median_pool_labels(padded, pool);
}

}  // namespace chorus::chunking
