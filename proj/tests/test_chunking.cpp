#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "chorus/chunking.hpp"
#include "chorus/features.hpp"
#include "chorus/inference.hpp"
#include "chorus/rng.hpp"

using namespace chorus;
using namespace chorus::chunking;

namespace {

MelSpectrogram fake_mel(int frames, int bands = 4) {
  MelSpectrogram mel;
  mel.frame_rate = features::kFrameRate;
  mel.values.resize(frames, bands);
  for (int f = 0; f < frames; ++f) {
    for (int b = 0; b < bands; ++b) {
      mel.values(f, b) = static_cast<float>(f * 10 + b);
    }
  }
  return mel;
}

ActivationCurve ramp_curve(int frames) {
  ActivationCurve c;
  c.frame_rate = features::kFrameRate;
  c.values.resize(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    c.values[static_cast<size_t>(f)] = static_cast<float>(f % 100) / 100.0f;
  }
  return c;
}

}  // namespace

TEST_CASE("chunk offsets: exact fit, regular hop, tail anchor") {
  CHECK(chunk_offsets(600, 600, 30) == std::vector<int>{0});
  CHECK(chunk_offsets(630, 600, 30) == std::vector<int>{0, 30});
  CHECK(chunk_offsets(615, 600, 30) == std::vector<int>{0, 15});
  CHECK(chunk_offsets(100, 600, 30) == std::vector<int>{0});
  CHECK_THROWS_AS(chunk_offsets(0, 600, 30), std::invalid_argument);
}

TEST_CASE("chunk count follows floor((L - N) / S) + 1 plus the tail rule") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int l = 600 + static_cast<int>(rng.uniform_int(3000));
    const auto offsets = chunk_offsets(l, 600, 30);
    const int base = (l - 600) / 30 + 1;
    const int expected = base + ((l - 600) % 30 != 0 ? 1 : 0);
    CHECK(static_cast<int>(offsets.size()) == expected);
    CHECK(offsets.back() == l - 600);
    for (size_t i = 1; i < offsets.size(); ++i) {
      CHECK(offsets[i] > offsets[i - 1]);
    }
  }
}

TEST_CASE("chunks slice the song matrix exactly") {
  const MelSpectrogram mel = fake_mel(660);
  const ActivationCurve c = ramp_curve(660), b = ramp_curve(660);
  const auto chunks = make_chunks(mel, c, b, 600, 30);
  REQUIRE(chunks.size() == 3);  // 0, 30, 60(tail)
  for (const Chunk& ch : chunks) {
    CHECK(ch.features == mel.values.middleRows(ch.offset_frames, 600));
    for (int i = 0; i < 600; ++i) {
      CHECK(ch.chorus[static_cast<size_t>(i)] ==
            c.values[static_cast<size_t>(ch.offset_frames + i)]);
      CHECK(ch.valid[static_cast<size_t>(i)] == 1);
    }
  }
}

TEST_CASE("short song: one right-padded chunk with a validity mask") {
  const MelSpectrogram mel = fake_mel(100);
  const ActivationCurve c = ramp_curve(100), b = ramp_curve(100);
  const auto chunks = make_chunks(mel, c, b, 600, 30);
  REQUIRE(chunks.size() == 1);
  const Chunk& ch = chunks[0];
  CHECK(ch.features.rows() == 600);
  CHECK(ch.features.topRows(100) == mel.values);
  const float pad = features::log_floor_value();
  for (int f = 100; f < 600; ++f) {
    CHECK(ch.features(f, 0) == pad);
    CHECK(ch.chorus[static_cast<size_t>(f)] == 0.0f);
    CHECK(ch.valid[static_cast<size_t>(f)] == 0);
  }
  const auto pooled_mask = pool_valid_mask(ch.valid);
  for (int j = 0; j < 100; ++j) {
    CHECK(pooled_mask[static_cast<size_t>(j)] == (j < 16 ? 1 : 0));
  }
}

TEST_CASE("median pooling: even-count median is the middle-pair mean") {
  CHECK(median_pool_labels({0, 0, 0, 1, 1, 1}) == std::vector<float>{0.5f});
  CHECK(median_pool_labels({1, 1, 1, 1, 1, 1}) == std::vector<float>{1.0f});
  CHECK(median_pool_labels({0, 0, 1, 1, 1, 1}) == std::vector<float>{1.0f});
  CHECK(median_pool_labels({1, 0, 1, 0, 0, 1}) == std::vector<float>{0.5f});
  CHECK_THROWS_AS(median_pool_labels({1, 0, 1}), std::invalid_argument);
}

TEST_CASE("pooled labels stay within the window's value range") {
  SplitMix64 rng(11);
  std::vector<float> v(60);
  for (float& x : v) x = static_cast<float>(rng.uniform());
  const auto pooled = median_pool_labels(v);
  for (size_t j = 0; j < pooled.size(); ++j) {
    float lo = 1.0f, hi = 0.0f;
    for (size_t k = 0; k < 6; ++k) {
      lo = std::min(lo, v[j * 6 + k]);
      hi = std::max(hi, v[j * 6 + k]);
    }
    CHECK(pooled[j] >= lo);
    CHECK(pooled[j] <= hi);
  }
}

TEST_CASE("chunk/merge round trip reproduces pooled song labels exactly") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const int l = 700 + static_cast<int>(rng.uniform_int(2500));
    ActivationCurve c;
    c.frame_rate = features::kFrameRate;
    c.values.resize(static_cast<size_t>(l));
    for (float& x : c.values) x = static_cast<float>(rng.uniform());

    // Song-level pooled labels on the padded output grid.
    const std::vector<float> song_pooled = pooled_song_labels(c, 600, 6);

    // Chunk on the same padded grid, pool per chunk, merge with Eq. 1.
    const int padded = padded_length(l, 600, 6);
    std::vector<float> padded_vals = c.values;
    padded_vals.resize(static_cast<size_t>(padded), 0.0f);
    std::vector<std::pair<int, std::vector<float>>> preds;
    for (int off : chunk_offsets(padded, 600, 30)) {
      std::vector<float> slice(padded_vals.begin() + off,
                               padded_vals.begin() + off + 600);
      preds.emplace_back(off / 6, median_pool_labels(slice));
    }
    const ActivationCurve merged = inference::merge_overlaps(
        preds, static_cast<int>(song_pooled.size()), c.frame_rate / 6);

    REQUIRE(merged.size() == static_cast<int>(song_pooled.size()));
    for (size_t j = 0; j < song_pooled.size(); ++j) {
      CHECK(merged.values[j] == song_pooled[j]);
    }
  }
}
