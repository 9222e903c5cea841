#pragma once

#include <string>
#include <vector>

#include "chorus/network.hpp"
#include "chorus/postprocess.hpp"
#include "chorus/synthdata.hpp"
#include "chorus/types.hpp"

namespace chorus::corpus {

// One song, fully prepared: features plus normalized reference and the
// aligned label curves on the feature grid.
struct SongData {
  std::string id;
  double duration_sec = 0.0;
  MelSpectrogram mel;
  SegmentList reference;  // normalized chorus segments
  ActivationCurve chorus_labels;
  ActivationCurve boundary_labels;
};

SongData load_song(const std::string& wav_path, const std::string& csv_path,
                   const std::string& id);

// Loads every manifest entry of the given split ("train"/"val"/"test", or
// "all"). Relative manifest paths resolve against the manifest directory.
std::vector<SongData> load_split(const std::string& manifest_path,
                                 const std::string& split);

// Annotations only (no audio decode); durations come from the manifest.
std::vector<SegmentList> load_split_annotations(const std::string& manifest_path,
                                                const std::string& split);

// Lazy chunk dataset over whole songs: items are (song, offset) slices
// following the same offset rule as make_chunks.
TrainDataset make_song_dataset(const std::vector<SongData>& songs, int hop,
                               int n_frames = chunking::kChunkFrames);

struct EvalRow {
  std::string song_id;
  double auc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  EvalRow mean;  // unweighted per-song average, song_id = "mean"
};

// Binary AUC reference on the model output grid: median-pooled chorus labels
// thresholded at 0.5 (ramp frames inherit their nearer hard label).
std::vector<uint8_t> pooled_reference(const SongData& song, int chunk_frames,
                                      int pool);

// Full per-song evaluation: predict (by variant), binarize with the prior,
// then frame AUC and pairwise F1 against the reference.
EvalRow evaluate_song(Model& model, const SongData& song,
                      const postprocess::DatasetPrior& prior);
EvalSummary evaluate_songs(Model& model, const std::vector<SongData>& songs,
                           const postprocess::DatasetPrior& prior);

EvalSummary summarize(std::vector<EvalRow> rows);
void write_eval_csv(const EvalSummary& summary, const std::string& path);

}  // namespace chorus::corpus
