#include "chorus/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "chorus/annotations.hpp"
#include "chorus/features.hpp"
#include "chorus/inference.hpp"
#include "chorus/ioutil.hpp"
#include "chorus/metrics.hpp"
#include "chorus/wav_io.hpp"

namespace chorus::corpus {

namespace fs = std::filesystem;

SongData load_song(const std::string& wav_path, const std::string& csv_path,
                   const std::string& id) {
  SongData song;
  song.id = id;

  Waveform w = read_wav(wav_path);
  if (w.sample_rate != features::kSampleRate) {
    w = features::resample(w, features::kSampleRate);
  }
  song.duration_sec = w.duration_sec();
  song.mel = features::log_mel(w);

  const SegmentList parsed = annotations::parse_annotations(
      read_text_file(csv_path), song.duration_sec);
  song.reference = annotations::normalize_chorus_labels(parsed);
  song.chorus_labels = annotations::chorus_curve(
      song.reference, song.mel.frame_rate, song.mel.num_frames());
  song.boundary_labels = annotations::boundary_curve(
      song.reference, song.mel.frame_rate, song.mel.num_frames());
  return song;
}

namespace {

std::vector<synth::ManifestEntry> entries_for_split(
    const std::string& manifest_path, const std::string& split) {
  std::vector<synth::ManifestEntry> all = synth::read_manifest(manifest_path);
  if (split == "all") return all;
  std::vector<synth::ManifestEntry> out;
  for (auto& e : all) {
    if (e.split == split) out.push_back(std::move(e));
  }
  return out;
}

std::string resolve(const std::string& manifest_path, const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute()) return p;
  return (fs::path(manifest_path).parent_path() / path).string();
}

}  // namespace

std::vector<SongData> load_split(const std::string& manifest_path,
                                 const std::string& split) {
  const auto entries = entries_for_split(manifest_path, split);
  std::vector<SongData> songs(entries.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(entries.size()); ++i) {
    const auto& e = entries[static_cast<size_t>(i)];
    songs[static_cast<size_t>(i)] =
        load_song(resolve(manifest_path, e.path_wav),
                  resolve(manifest_path, e.path_csv), e.song_id);
  }
  return songs;
}

std::vector<SegmentList> load_split_annotations(const std::string& manifest_path,
                                                const std::string& split) {
  std::vector<SegmentList> out;
  for (const auto& e : entries_for_split(manifest_path, split)) {
    out.push_back(annotations::parse_annotations(
        read_text_file(resolve(manifest_path, e.path_csv)), e.duration_sec));
  }
  return out;
}

TrainDataset make_song_dataset(const std::vector<SongData>& songs, int hop,
                               int n_frames) {
  struct Item {
    int song;
    int offset;
  };
  auto items = std::make_shared<std::vector<Item>>();
  for (size_t si = 0; si < songs.size(); ++si) {
    for (int off : chunking::chunk_offsets(songs[si].mel.num_frames(), n_frames, hop)) {
      items->push_back({static_cast<int>(si), off});
    }
  }

  TrainDataset ds;
  ds.size = static_cast<int>(items->size());
  ds.fill = [&songs, items, n_frames](int index, MatrixF& x,
                                      std::vector<float>& c,
                                      std::vector<float>& b,
                                      std::vector<uint8_t>& valid) {
    const Item it = items->at(static_cast<size_t>(index));
    const SongData& song = songs[static_cast<size_t>(it.song)];
    const int l = song.mel.num_frames();
    const int copy = std::min(n_frames, l - it.offset);

    x = MatrixF::Constant(n_frames, song.mel.bands(),
                          features::log_floor_value());
    x.topRows(copy) = song.mel.values.middleRows(it.offset, copy);
    c.assign(static_cast<size_t>(n_frames), 0.0f);
    b.assign(static_cast<size_t>(n_frames), 0.0f);
    valid.assign(static_cast<size_t>(n_frames), 0);
    for (int i = 0; i < copy; ++i) {
      c[static_cast<size_t>(i)] =
          song.chorus_labels.values[static_cast<size_t>(it.offset + i)];
      b[static_cast<size_t>(i)] =
          song.boundary_labels.values[static_cast<size_t>(it.offset + i)];
      valid[static_cast<size_t>(i)] = 1;
    }
  };
  return ds;
}

std::vector<uint8_t> pooled_reference(const SongData& song, int chunk_frames,
                                      int pool) {
  const std::vector<float> pooled =
      chunking::pooled_song_labels(song.chorus_labels, chunk_frames, pool);
  const int out_len = chunking::output_length(song.mel.num_frames(), pool);
  std::vector<uint8_t> ref(static_cast<size_t>(out_len));
  for (int i = 0; i < out_len; ++i) {
    ref[static_cast<size_t>(i)] = pooled[static_cast<size_t>(i)] >= 0.5f ? 1 : 0;
  }
  return ref;
}

EvalRow evaluate_song(Model& model, const SongData& song,
                      const postprocess::DatasetPrior& prior) {
  const auto [chorus, boundary] =
      model.cfg.variant == Variant::kTemporal
          ? inference::predict_song(model, song.mel)
          : inference::predict_song_scalar(model, song.mel);

  EvalRow row;
  row.song_id = song.id;
  row.auc = metrics::auc(
      chorus, pooled_reference(song, model.cfg.n_frames, model.cfg.arch.input_pool));
  const auto det =
      postprocess::binarize(chorus, boundary, song.duration_sec, prior);
  const auto scores = metrics::pairwise_f1(det, song.reference);
  row.precision = scores.precision;
  row.recall = scores.recall;
  row.f1 = scores.f1;
  return row;
}

EvalSummary evaluate_songs(Model& model, const std::vector<SongData>& songs,
                           const postprocess::DatasetPrior& prior) {
  std::vector<EvalRow> rows(songs.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(songs.size()); ++i) {
    rows[static_cast<size_t>(i)] =
        evaluate_song(model, songs[static_cast<size_t>(i)], prior);
  }
  return summarize(std::move(rows));
}

EvalSummary summarize(std::vector<EvalRow> rows) {
  EvalSummary s;
  s.mean.song_id = "mean";
  for (const EvalRow& r : rows) {
    s.mean.auc += r.auc;
    s.mean.precision += r.precision;
    s.mean.recall += r.recall;
    s.mean.f1 += r.f1;
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    s.mean.auc /= n;
    s.mean.precision /= n;
    s.mean.recall /= n;
    s.mean.f1 /= n;
  }
  s.rows = std::move(rows);
  return s;
}

void write_eval_csv(const EvalSummary& summary, const std::string& path) {
  std::ostringstream out;
  out << "song_id,auc,precision,recall,f1\n";
  char buf[160];
  auto emit = [&](const EvalRow& r) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n",
                  r.song_id.c_str(), r.auc, r.precision, r.recall, r.f1);
    out << buf;
  };
  for (const EvalRow& r : summary.rows) emit(r);
  emit(summary.mean);
  atomic_write_file(path, out.str());
}

}  // namespace chorus::corpus
