#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "chorus/types.hpp"

namespace chorus::synth {

// Seeded generator parameters. Songs follow the grammar
//   intro (verse chorus)+ [bridge] (verse)? chorus outro
// with section timbres rendered by additive synthesis: choruses carry eight
// partials over a noise floor at +6 dB energy relative to verses (three
// partials); intro/outro and bridge use their own sparser profiles.
struct SynthSpec {
  int num_songs = 200;
  double min_duration_sec = 60.0;
  double max_duration_sec = 100.0;
  double min_section_sec = 8.0;
  double max_section_sec = 25.0;
  int sample_rate = 32000;
  uint64_t seed = 42;
};

// Deterministic in (spec.seed, index): same pair, bitwise-identical output.
std::pair<Waveform, SegmentList> generate_song(const SynthSpec& spec, int index);

// The annotations generate_song(spec, index) would produce, without
// rendering any audio.
SegmentList generate_song_annotations(const SynthSpec& spec, int index);

struct ManifestEntry {
  std::string song_id;
  std::string path_wav;
  std::string path_csv;
  double duration_sec = 0.0;
  std::string split;  // train / val / test
};

// Writes WAV + annotation CSV pairs plus manifest.csv into out_dir and
// returns the manifest. Songs split 70/10/20 by song index.
std::vector<ManifestEntry> generate_corpus(const SynthSpec& spec,
                                           const std::string& out_dir);

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path);

}  // namespace chorus::synth
