#include "chorus/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "chorus/ioutil.hpp"
#include "chorus/rng.hpp"
#include "chorus/wav_io.hpp"

namespace chorus::synth {

namespace {

constexpr double kPi = std::numbers::pi;

struct Timbre {
  int partials;
  double amplitude;   // level of the fundamental; partial j falls off as 1/j
  double root_mult;   // section root relative to the song root
  double noise;       // white-noise floor amplitude
};

// Chorus energy sits +6 dB (4x power) above the verse:
// sum(1/j^2, 8 partials) = 1.5274, 3 partials = 1.3611, and
// 0.2266^2 * 1.5274 ≈ 4 * 0.12^2 * 1.3611.
Timbre timbre_for(const std::string& label) {
  if (label == "chorus") return {8, 0.2266, 1.25, 0.004};
  if (label == "verse") return {3, 0.12, 1.0, 0.002};
  if (label == "bridge") return {5, 0.12, 1.5, 0.002};
  return {2, 0.072, 0.75, 0.001};  // intro / outro
}

uint64_t song_stream(uint64_t seed, int index) {
  return seed + 0x9e3779b97f4a7c15ull * static_cast<uint64_t>(index + 1);
}

std::vector<std::string> draw_structure(SplitMix64& rng, double duration) {
  const int pairs = duration >= 85.0 && rng.uniform() < 0.5 ? 2 : 1;
  const bool bridge = rng.uniform() < 0.35;
  const bool extra_verse = rng.uniform() < 0.35;
  std::vector<std::string> labels{"intro"};
  for (int i = 0; i < pairs; ++i) {
    labels.emplace_back("verse");
    labels.emplace_back("chorus");
  }
  if (bridge) labels.emplace_back("bridge");
  if (extra_verse) labels.emplace_back("verse");
  labels.emplace_back("chorus");
  labels.emplace_back("outro");
  return labels;
}

}  // namespace

namespace {

struct SongPlan {
  std::vector<std::string> labels;
  std::vector<long long> starts;  // labels.size() + 1 entries, in samples
  long long total_samples = 0;
  double song_root = 0.0;
};

// Draws everything the annotations depend on, in a fixed order, so the
// audio renderer and the annotation-only path agree exactly.
SongPlan plan_song(const SynthSpec& spec, SplitMix64& rng) {
  const double duration =
      rng.uniform(spec.min_duration_sec, spec.max_duration_sec);
  SongPlan plan;
  plan.labels = draw_structure(rng, duration);

  // Section weights drawn from the configured range, then scaled so the
  // sections tile the song duration exactly.
  std::vector<double> weights(plan.labels.size());
  double weight_sum = 0.0;
  for (double& w : weights) {
    w = rng.uniform(spec.min_section_sec, spec.max_section_sec);
    weight_sum += w;
  }
  const double scale = duration / weight_sum;

  const int sr = spec.sample_rate;
  plan.total_samples = std::llround(duration * sr);

  // Sample-quantized boundaries; annotations carry the same instants, so
  // rendered changes and annotated boundaries coincide exactly.
  plan.starts.resize(plan.labels.size() + 1);
  double t = 0.0;
  for (size_t i = 0; i < plan.labels.size(); ++i) {
    plan.starts[i] = std::llround(t * sr);
    t += weights[i] * scale;
  }
  plan.starts[plan.labels.size()] = plan.total_samples;
  plan.song_root = 110.0 * std::pow(2.0, rng.uniform());
  return plan;
}

SegmentList annotations_of(const SongPlan& plan, int sr) {
  SegmentList ann;
  ann.song_duration_sec = static_cast<double>(plan.total_samples) / sr;
  for (size_t i = 0; i < plan.labels.size(); ++i) {
    if (plan.starts[i + 1] <= plan.starts[i]) continue;
    ann.segments.push_back({static_cast<double>(plan.starts[i]) / sr,
                            static_cast<double>(plan.starts[i + 1]) / sr,
                            plan.labels[i]});
  }
  return ann;
}

}  // namespace

SegmentList generate_song_annotations(const SynthSpec& spec, int index) {
  SplitMix64 rng(song_stream(spec.seed, index));
  return annotations_of(plan_song(spec, rng), spec.sample_rate);
}

std::pair<Waveform, SegmentList> generate_song(const SynthSpec& spec, int index) {
  if (spec.num_songs <= 0 || spec.sample_rate <= 0) {
    throw std::invalid_argument("generate_song: invalid spec");
  }
  SplitMix64 rng(song_stream(spec.seed, index));
  const SongPlan plan = plan_song(spec, rng);
  const int sr = spec.sample_rate;
  const std::vector<std::string>& labels = plan.labels;
  const std::vector<long long>& starts = plan.starts;
  const double song_root = plan.song_root;

  Waveform w;
  w.sample_rate = sr;
  w.samples.assign(static_cast<size_t>(plan.total_samples), 0.0f);

  SegmentList ann = annotations_of(plan, sr);

  for (size_t sec = 0; sec < labels.size(); ++sec) {
    const long long s0 = starts[sec];
    const long long s1 = starts[sec + 1];
    if (s1 <= s0) continue;
    const Timbre timbre = timbre_for(labels[sec]);

    // Mild amplitude jitter: per-second gain nodes, linear interpolation.
    const long long section_len = s1 - s0;
    const int nodes = static_cast<int>(section_len / sr) + 2;
    std::vector<double> gain(static_cast<size_t>(nodes));
    for (double& g : gain) g = rng.uniform(0.85, 1.15);

    std::vector<double> rot_re(static_cast<size_t>(timbre.partials));
    std::vector<double> rot_im(static_cast<size_t>(timbre.partials));
    std::vector<double> cur_re(static_cast<size_t>(timbre.partials), 1.0);
    std::vector<double> cur_im(static_cast<size_t>(timbre.partials), 0.0);
    std::vector<double> amp(static_cast<size_t>(timbre.partials));
    for (int p = 0; p < timbre.partials; ++p) {
      const double freq = song_root * timbre.root_mult * (p + 1);
      const double step = 2.0 * kPi * freq / sr;
      rot_re[static_cast<size_t>(p)] = std::cos(step);
      rot_im[static_cast<size_t>(p)] = std::sin(step);
      amp[static_cast<size_t>(p)] = timbre.amplitude / (p + 1);
    }

    for (long long s = s0; s < s1; ++s) {
      const double pos = static_cast<double>(s - s0) / sr;
      const int node = static_cast<int>(pos);
      const double frac = pos - node;
      const double g = gain[static_cast<size_t>(node)] * (1.0 - frac) +
                       gain[static_cast<size_t>(node + 1)] * frac;
      double v = 0.0;
      for (int p = 0; p < timbre.partials; ++p) {
        v += amp[static_cast<size_t>(p)] * cur_im[static_cast<size_t>(p)];
        const double re = cur_re[static_cast<size_t>(p)] * rot_re[static_cast<size_t>(p)] -
                          cur_im[static_cast<size_t>(p)] * rot_im[static_cast<size_t>(p)];
        const double im = cur_re[static_cast<size_t>(p)] * rot_im[static_cast<size_t>(p)] +
                          cur_im[static_cast<size_t>(p)] * rot_re[static_cast<size_t>(p)];
        cur_re[static_cast<size_t>(p)] = re;
        cur_im[static_cast<size_t>(p)] = im;
      }
      v = v * g + rng.uniform(-timbre.noise, timbre.noise);
      w.samples[static_cast<size_t>(s)] = static_cast<float>(v);
    }
  }
  return {std::move(w), std::move(ann)};
}

std::vector<ManifestEntry> generate_corpus(const SynthSpec& spec,
                                           const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw std::runtime_error("cannot create corpus directory: " + out_dir);
  }

  const int n = spec.num_songs;
  const int n_train = n * 70 / 100;
  const int n_val = n * 10 / 100;

  std::vector<ManifestEntry> manifest(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    auto [w, ann] = generate_song(spec, i);
    char id[32];
    std::snprintf(id, sizeof(id), "song_%04d", i);
    ManifestEntry e;
    e.song_id = id;
    e.path_wav = std::string(id) + ".wav";
    e.path_csv = std::string(id) + ".csv";
    e.duration_sec = ann.song_duration_sec;
    e.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");

    write_wav((fs::path(out_dir) / e.path_wav).string(), w);
    std::ostringstream csv;
    csv << "# start_sec,end_sec,label\n";
    char row[96];
    for (const Segment& s : ann.segments) {
      std::snprintf(row, sizeof(row), "%.9f,%.9f,%s\n", s.start_sec, s.end_sec,
                    s.label.c_str());
      csv << row;
    }
    atomic_write_file((fs::path(out_dir) / e.path_csv).string(), csv.str());
    manifest[static_cast<size_t>(i)] = std::move(e);
  }

  write_manifest(manifest, (fs::path(out_dir) / "manifest.csv").string());
  return manifest;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path) {
  std::ostringstream out;
  out << "song_id,path_wav,path_csv,duration_sec,split\n";
  char buf[256];
  for (const ManifestEntry& e : entries) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.9f,%s\n", e.song_id.c_str(),
                  e.path_wav.c_str(), e.path_csv.c_str(), e.duration_sec,
                  e.split.c_str());
    out << buf;
  }
  atomic_write_file(path, out.str());
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty manifest: " + path);
  std::vector<ManifestEntry> entries;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ls(line);
    ManifestEntry e;
    std::string dur;
    if (!std::getline(ls, e.song_id, ',') || !std::getline(ls, e.path_wav, ',') ||
        !std::getline(ls, e.path_csv, ',') || !std::getline(ls, dur, ',') ||
        !std::getline(ls, e.split)) {
      throw std::runtime_error("malformed manifest row " + std::to_string(row) +
                               " in " + path);
    }
    e.duration_sec = std::stod(dur);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace chorus::synth
