// chorusdet: synthesize a corpus, train the chorus/boundary model, run
// inference and post-processing, and score detections.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chorus/annotations.hpp"
#include "chorus/corpus.hpp"
#include "chorus/features.hpp"
#include "chorus/inference.hpp"
#include "chorus/ioutil.hpp"
#include "chorus/metrics.hpp"
#include "chorus/network.hpp"
#include "chorus/postprocess.hpp"
#include "chorus/synthdata.hpp"
#include "chorus/wav_io.hpp"

namespace fs = std::filesystem;
using namespace chorus;

namespace {

struct CommonOpts {
  std::string manifest;
  std::string checkpoint;
  std::string out;
  std::string audio;
  std::string annotations_path;
  std::string variant = "temporal";
  std::string split;
  std::string format = "csv";
  std::string est_dir;
  std::string dump_features;
  std::string loss_log;
  double alpha = 0.1;
  std::optional<double> theta;
  uint64_t seed = 1;
  int64_t steps = 5000;
  int batch = 32;
  int hop = 0;  // 0 = variant default (30 temporal, 6 scalar)
  int num_songs = 200;
  double eval_rate = 10.0;
};

Variant parse_variant(const std::string& v) {
  if (v == "temporal") return Variant::kTemporal;
  if (v == "scalar") return Variant::kScalar;
  throw CLI::ValidationError("--variant must be temporal or scalar");
}

MelSpectrogram load_audio_features(const std::string& path) {
  Waveform w = read_wav(path);
  if (w.sample_rate != features::kSampleRate) {
    w = features::resample(w, features::kSampleRate);
  }
  return features::log_mel(w);
}

postprocess::DatasetPrior resolve_prior(const CommonOpts& opt) {
  if (opt.theta.has_value()) return {*opt.theta};
  if (!opt.manifest.empty()) {
    return postprocess::compute_theta(
        corpus::load_split_annotations(opt.manifest, "train"));
  }
  throw std::runtime_error(
      "need --theta or --manifest (to compute it from the training split)");
}

int cmd_synth(const CommonOpts& opt) {
  synth::SynthSpec spec;
  spec.num_songs = opt.num_songs;
  spec.seed = opt.seed;
  const auto manifest = synth::generate_corpus(spec, opt.out);
  std::printf("wrote %zu songs to %s\n", manifest.size(), opt.out.c_str());
  return 0;
}

int cmd_train(const CommonOpts& opt) {
  ModelConfig cfg;
  cfg.variant = parse_variant(opt.variant);
  cfg.alpha = opt.alpha;
  cfg.batch_size = opt.batch;
  cfg.seed = opt.seed;

  const auto songs = corpus::load_split(opt.manifest, "train");
  if (songs.empty()) throw std::runtime_error("manifest has no train songs");
  const int hop = opt.hop > 0
                      ? opt.hop
                      : (cfg.variant == Variant::kTemporal ? chunking::kChunkHop
                                                           : chunking::kLabelPool);

  Model model = init_model(cfg);
  const auto dataset = corpus::make_song_dataset(songs, hop, cfg.n_frames);
  std::printf("training %s model: %d songs, %d chunks, %lld steps\n",
              net::variant_name(cfg.variant), static_cast<int>(songs.size()),
              dataset.size, static_cast<long long>(opt.steps));
  const auto log = train(model, dataset, opt.steps);
  save_checkpoint_file(model, opt.out);
  if (!opt.loss_log.empty()) write_loss_log_csv(log, opt.loss_log);
  if (!log.empty()) {
    std::printf("final loss %.6f (lr %.6g)\n", log.back().loss, log.back().lr);
  }
  std::printf("checkpoint written to %s\n", opt.out.c_str());
  return 0;
}

int cmd_infer(const CommonOpts& opt) {
  Model model = load_checkpoint_file(opt.checkpoint);
  const MelSpectrogram mel = load_audio_features(opt.audio);
  if (!opt.dump_features.empty()) {
    features::write_features_csv(mel, opt.dump_features);
  }
  const auto [chorus, boundary] =
      model.cfg.variant == Variant::kTemporal
          ? inference::predict_song(model, mel)
          : inference::predict_song_scalar(model, mel);
  inference::write_activations_csv(chorus, boundary, opt.out);
  std::printf("wrote %d activation frames to %s\n", chorus.size(),
              opt.out.c_str());
  return 0;
}

int cmd_detect(const CommonOpts& opt) {
  Model model = load_checkpoint_file(opt.checkpoint);
  const postprocess::DatasetPrior prior = resolve_prior(opt);
  Waveform w = read_wav(opt.audio);
  if (w.sample_rate != features::kSampleRate) {
    w = features::resample(w, features::kSampleRate);
  }
  const double duration = w.duration_sec();
  const MelSpectrogram mel = features::log_mel(w);
  const auto [chorus, boundary] =
      model.cfg.variant == Variant::kTemporal
          ? inference::predict_song(model, mel)
          : inference::predict_song_scalar(model, mel);
  const auto det = postprocess::binarize(chorus, boundary, duration, prior);
  if (opt.format == "json") {
    postprocess::write_detection_json(det, opt.out);
  } else {
    postprocess::write_detection_csv(det, opt.out);
  }
  int n_chorus = 0;
  for (const auto& s : det.segments.segments) n_chorus += s.label == "chorus";
  std::printf("detected %d chorus segment(s); wrote %s\n", n_chorus,
              opt.out.c_str());
  return 0;
}

int cmd_eval(const CommonOpts& opt) {
  if (opt.est_dir.empty() && opt.checkpoint.empty()) {
    throw std::runtime_error("eval needs --checkpoint (model mode) or --est-dir (file mode)");
  }
  const std::string split = opt.split.empty() ? "test" : opt.split;
  const auto songs = corpus::load_split(opt.manifest, split);
  if (songs.empty()) throw std::runtime_error("manifest has no songs in split " + split);

  corpus::EvalSummary summary;
  if (!opt.est_dir.empty()) {
    // File mode: score detection CSVs named <song_id>.csv against the
    // references. The AUC is computed on the binarized estimate curve.
    std::vector<corpus::EvalRow> rows;
    for (const auto& song : songs) {
      const std::string est_path =
          (fs::path(opt.est_dir) / (song.id + ".csv")).string();
      const auto det = postprocess::read_detection_csv(est_path, song.duration_sec);
      corpus::EvalRow row;
      row.song_id = song.id;
      const int pool = chunking::kLabelPool;
      ActivationCurve est_curve;
      est_curve.frame_rate = song.mel.frame_rate / pool;
      const int out_len = chunking::output_length(song.mel.num_frames(), pool);
      est_curve.values.resize(static_cast<size_t>(out_len));
      for (int f = 0; f < out_len; ++f) {
        est_curve.values[static_cast<size_t>(f)] = metrics::chorus_label_at(
            det.segments, est_curve.frame_center_sec(f)) ? 1.0f : 0.0f;
      }
      row.auc = metrics::auc(
          est_curve,
          corpus::pooled_reference(song, chunking::kChunkFrames, pool));
      const auto scores = metrics::pairwise_f1(det, song.reference, opt.eval_rate);
      row.precision = scores.precision;
      row.recall = scores.recall;
      row.f1 = scores.f1;
      rows.push_back(row);
    }
    summary = corpus::summarize(std::move(rows));
  } else {
    Model model = load_checkpoint_file(opt.checkpoint);
    const postprocess::DatasetPrior prior = resolve_prior(opt);
    summary = corpus::evaluate_songs(model, songs, prior);
  }
  corpus::write_eval_csv(summary, opt.out);
  std::printf("%s: %zu songs, mean auc %.4f, mean f1 %.4f -> %s\n",
              split.c_str(), summary.rows.size(), summary.mean.auc,
              summary.mean.f1, opt.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised chorus detection toolkit"};
  app.require_subcommand(1);
  app.set_config("--config");

  CommonOpts opt;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth_cmd->add_option("--out", opt.out, "Output corpus directory")->required();
  synth_cmd->add_option("--num-songs", opt.num_songs, "Number of songs");
  synth_cmd->add_option("--seed", opt.seed, "Corpus seed");

  auto* train_cmd = app.add_subcommand("train", "Train a model on a corpus");
  train_cmd->add_option("--manifest", opt.manifest, "Corpus manifest CSV")->required();
  train_cmd->add_option("--out", opt.out, "Checkpoint output path")->required();
  train_cmd->add_option("--variant", opt.variant, "temporal|scalar");
  train_cmd->add_option("--alpha", opt.alpha, "Chorus-loss weight");
  train_cmd->add_option("--seed", opt.seed, "Init/shuffle seed");
  train_cmd->add_option("--steps", opt.steps, "Training steps");
  train_cmd->add_option("--batch", opt.batch, "Batch size");
  train_cmd->add_option("--hop", opt.hop, "Chunk hop in frames (0 = default)");
  train_cmd->add_option("--loss-log", opt.loss_log, "Per-step loss CSV");

  auto* infer_cmd = app.add_subcommand("infer", "Write activation curves for one song");
  infer_cmd->add_option("--audio", opt.audio, "Input WAV")->required();
  infer_cmd->add_option("--checkpoint", opt.checkpoint, "Model checkpoint")->required();
  infer_cmd->add_option("--out", opt.out, "Activation CSV path")->required();
  infer_cmd->add_option("--dump-features", opt.dump_features,
                        "Also dump the log-mel matrix to this CSV");

  auto* detect_cmd = app.add_subcommand("detect", "End-to-end chorus detection");
  detect_cmd->add_option("--audio", opt.audio, "Input WAV")->required();
  detect_cmd->add_option("--checkpoint", opt.checkpoint, "Model checkpoint")->required();
  detect_cmd->add_option("--out", opt.out, "Detection output path")->required();
  detect_cmd->add_option("--theta", opt.theta, "Dataset prior (choruses per 3 min)");
  detect_cmd->add_option("--manifest", opt.manifest,
                         "Manifest used to compute theta from its train split");
  detect_cmd->add_option("--format", opt.format, "csv|json");

  auto* eval_cmd = app.add_subcommand("eval", "Score a model or detection files");
  eval_cmd->add_option("--manifest", opt.manifest, "Corpus manifest CSV")->required();
  eval_cmd->add_option("--out", opt.out, "Report CSV path")->required();
  eval_cmd->add_option("--checkpoint", opt.checkpoint, "Model checkpoint");
  eval_cmd->add_option("--est-dir", opt.est_dir,
                       "Directory of detection CSVs (file mode)");
  eval_cmd->add_option("--theta", opt.theta, "Dataset prior override");
  eval_cmd->add_option("--split", opt.split, "train|val|test|all (default test)");
  eval_cmd->add_option("--eval-rate", opt.eval_rate, "Pairwise-F1 sampling rate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) return cmd_synth(opt);
    if (train_cmd->parsed()) return cmd_train(opt);
    if (infer_cmd->parsed()) return cmd_infer(opt);
    if (detect_cmd->parsed()) return cmd_detect(opt);
    if (eval_cmd->parsed()) return cmd_eval(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
