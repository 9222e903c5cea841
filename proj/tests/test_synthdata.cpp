#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <set>

#include "chorus/annotations.hpp"
#include "chorus/features.hpp"
#include "chorus/postprocess.hpp"
#include "chorus/synthdata.hpp"
#include "chorus/ioutil.hpp"
#include "chorus/wav_io.hpp"

using namespace chorus;
using namespace chorus::synth;
namespace fs = std::filesystem;

TEST_CASE("same (seed, index) renders bitwise-identical songs") {
  SynthSpec spec;
  auto [w1, a1] = generate_song(spec, 3);
  auto [w2, a2] = generate_song(spec, 3);
  REQUIRE(w1.samples.size() == w2.samples.size());
  CHECK(std::memcmp(w1.samples.data(), w2.samples.data(),
                    w1.samples.size() * sizeof(float)) == 0);
  REQUIRE(a1.segments.size() == a2.segments.size());

  auto [w3, a3] = generate_song(spec, 4);
  CHECK(w3.samples.size() != w1.samples.size());
}

TEST_CASE("annotation-only generation matches the full render") {
  SynthSpec spec;
  for (int i = 0; i < 6; ++i) {
    auto [w, full] = generate_song(spec, i);
    const SegmentList quick = generate_song_annotations(spec, i);
    REQUIRE(full.segments.size() == quick.segments.size());
    for (size_t k = 0; k < full.segments.size(); ++k) {
      CHECK(full.segments[k].start_sec == quick.segments[k].start_sec);
      CHECK(full.segments[k].end_sec == quick.segments[k].end_sec);
      CHECK(full.segments[k].label == quick.segments[k].label);
    }
    CHECK(full.song_duration_sec == quick.song_duration_sec);
    CHECK(full.song_duration_sec ==
          doctest::Approx(w.duration_sec()).epsilon(1e-12));
  }
}

TEST_CASE("sections tile the duration exactly and include a chorus") {
  SynthSpec spec;
  for (int i = 0; i < 40; ++i) {
    const SegmentList ann = generate_song_annotations(spec, i);
    REQUIRE(!ann.segments.empty());
    CHECK(ann.segments.front().start_sec == 0.0);
    CHECK(ann.segments.back().end_sec == ann.song_duration_sec);
    int chorus_count = 0;
    for (size_t k = 0; k < ann.segments.size(); ++k) {
      if (k > 0) {
        CHECK(ann.segments[k].start_sec == ann.segments[k - 1].end_sec);
      }
      chorus_count += ann.segments[k].label == "chorus";
    }
    CHECK(chorus_count >= 1);
    CHECK(ann.song_duration_sec >= spec.min_duration_sec - 1e-6);
    CHECK(ann.song_duration_sec <= spec.max_duration_sec + 1e-6);
  }
}

TEST_CASE("song structure follows the section grammar") {
  SynthSpec spec;
  for (int i = 0; i < 40; ++i) {
    const SegmentList ann = generate_song_annotations(spec, i);
    const auto& segs = ann.segments;
    CHECK(segs.front().label == "intro");
    CHECK(segs.back().label == "outro");
    // Every chorus is preceded by verse, bridge, or another chorus.
    for (size_t k = 1; k + 1 < segs.size(); ++k) {
      if (segs[k].label == "chorus") {
        const std::string& prev = segs[k - 1].label;
        CHECK((prev == "verse" || prev == "bridge" || prev == "chorus" ||
               prev == "intro"));
      }
    }
  }
}

TEST_CASE("train-split theta lands in the expected band") {
  SynthSpec spec;
  std::vector<SegmentList> train;
  for (int i = 0; i < 140; ++i) {
    train.push_back(generate_song_annotations(spec, i));
  }
  const auto prior = postprocess::compute_theta(train);
  CAPTURE(prior.theta);
  CHECK(prior.theta >= 1.5);
  CHECK(prior.theta <= 4.5);
}

TEST_CASE("choruses carry more mel energy than verses, song by song") {
  SynthSpec spec;
  int songs_checked = 0;
  for (int i = 0; i < 12; ++i) {
    auto [w, ann] = generate_song(spec, i);
    const MelSpectrogram mel = features::log_mel(w);
    auto mean_energy = [&](const std::string& label) {
      double sum = 0.0;
      long count = 0;
      for (const Segment& s : ann.segments) {
        if (s.label != label) continue;
        const int f0 = static_cast<int>(s.start_sec * mel.frame_rate) + 1;
        const int f1 = static_cast<int>(s.end_sec * mel.frame_rate) - 1;
        for (int f = f0; f < f1 && f < mel.num_frames(); ++f) {
          sum += mel.values.row(f).mean();
          ++count;
        }
      }
      return count > 0 ? sum / count : -1e9;
    };
    const double chorus = mean_energy("chorus");
    const double verse = mean_energy("verse");
    REQUIRE(chorus > -1e8);
    REQUIRE(verse > -1e8);
    CHECK(chorus > verse);
    ++songs_checked;
  }
  CHECK(songs_checked == 12);
}

TEST_CASE("corpus generation: files, manifest, splits") {
  const std::string dir = "/tmp/chorus_test_corpus";
  fs::remove_all(dir);
  SynthSpec spec;
  spec.num_songs = 10;
  spec.seed = 7;
  const auto manifest = generate_corpus(spec, dir);
  REQUIRE(manifest.size() == 10);

  int train = 0, val = 0, test = 0;
  std::set<std::string> ids;
  for (const auto& e : manifest) {
    ids.insert(e.song_id);
    if (e.split == "train") ++train;
    if (e.split == "val") ++val;
    if (e.split == "test") ++test;
    CHECK(fs::exists(fs::path(dir) / e.path_wav));
    CHECK(fs::exists(fs::path(dir) / e.path_csv));
  }
  CHECK(ids.size() == 10);
  CHECK(train == 7);
  CHECK(val == 1);
  CHECK(test == 2);

  const auto back = read_manifest((fs::path(dir) / "manifest.csv").string());
  REQUIRE(back.size() == manifest.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].song_id == manifest[i].song_id);
    CHECK(back[i].split == manifest[i].split);
    CHECK(back[i].duration_sec == doctest::Approx(manifest[i].duration_sec));
  }

  // The written WAV round-trips through the reader at the same length.
  const Waveform w = read_wav((fs::path(dir) / manifest[0].path_wav).string());
  CHECK(w.sample_rate == 32000);
  CHECK(w.duration_sec() == doctest::Approx(manifest[0].duration_sec));

  // Annotations parse cleanly against the audio duration.
  const auto ann = annotations::parse_annotations(
      read_text_file((fs::path(dir) / manifest[0].path_csv).string()),
      w.duration_sec());
  CHECK(!ann.segments.empty());
  fs::remove_all(dir);
}

TEST_CASE("corpus generation fails on an unwritable target") {
  SynthSpec spec;
  spec.num_songs = 1;
  CHECK_THROWS_AS(generate_corpus(spec, "/proc/nope/corpus"), std::exception);
}
