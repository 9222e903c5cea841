#include "chorus/inference.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "chorus/features.hpp"
#include "chorus/ioutil.hpp"

namespace chorus::inference {

namespace {

// Copies the song into a (padded_len x D) block, padding the tail with the
// log floor so padded frames look like digital silence.
MatrixF padded_features(const MelSpectrogram& mel, int padded_len) {
  MatrixF x = MatrixF::Constant(padded_len, mel.bands(),
                                features::log_floor_value());
  x.topRows(mel.num_frames()) = mel.values;
  return x;
}

// Runs eval-mode forwards over the given chunk starts, batched for speed.
// emit(i, chorus_row, boundary_row) receives each chunk's outputs in order.
template <class Emit>
void run_chunks(Model& model, const MatrixF& padded,
                const std::vector<int>& starts, Emit&& emit) {
  const int n = model.cfg.n_frames;
  const int batch_cap = std::max(1, model.cfg.batch_size);
  net::Mat<float> x(static_cast<Eigen::Index>(batch_cap) * n, padded.cols());
  for (size_t base = 0; base < starts.size(); base += static_cast<size_t>(batch_cap)) {
    const int batch =
        static_cast<int>(std::min(starts.size() - base, static_cast<size_t>(batch_cap)));
    for (int bi = 0; bi < batch; ++bi) {
      x.middleRows(static_cast<Eigen::Index>(bi) * n, n) =
          padded.middleRows(starts[base + static_cast<size_t>(bi)], n);
    }
    auto out = model.net.forward(x.topRows(static_cast<Eigen::Index>(batch) * n),
                                 batch, /*train=*/false);
    for (int bi = 0; bi < batch; ++bi) {
      emit(base + static_cast<size_t>(bi), out.chorus.row(bi),
           out.boundary.row(bi));
    }
  }
}

}  // namespace

ActivationCurve merge_overlaps(
    const std::vector<std::pair<int, std::vector<float>>>& chunk_preds,
    int out_len, double frame_rate) {
  if (out_len <= 0) throw std::invalid_argument("merge_overlaps: empty output grid");
  std::vector<double> sum(static_cast<size_t>(out_len), 0.0);
  std::vector<int> count(static_cast<size_t>(out_len), 0);
  for (const auto& [offset, values] : chunk_preds) {
    for (size_t j = 0; j < values.size(); ++j) {
      const long long g = static_cast<long long>(offset) + static_cast<long long>(j);
      if (g < 0 || g >= out_len) {
        throw std::invalid_argument("merge_overlaps: prediction index out of range");
      }
      sum[static_cast<size_t>(g)] += static_cast<double>(values[j]);
      count[static_cast<size_t>(g)] += 1;
    }
  }
  ActivationCurve merged;
  merged.frame_rate = frame_rate;
  merged.values.resize(static_cast<size_t>(out_len));
  for (int g = 0; g < out_len; ++g) {
    if (count[static_cast<size_t>(g)] == 0) {
      throw std::runtime_error("merge_overlaps: coverage gap at index " +
                               std::to_string(g));
    }
    merged.values[static_cast<size_t>(g)] =
        static_cast<float>(sum[static_cast<size_t>(g)] / count[static_cast<size_t>(g)]);
  }
  return merged;
}

std::pair<ActivationCurve, ActivationCurve> predict_song(
    Model& model, const MelSpectrogram& mel, int hop) {
  if (model.cfg.variant != Variant::kTemporal) {
    throw std::invalid_argument(
        "predict_song needs a temporal checkpoint; use the scalar path for "
        "scalar models");
  }
  const int pool = model.cfg.arch.input_pool;
  if (hop < pool || hop % pool != 0) {
    throw std::invalid_argument("predict_song: hop must be a positive multiple of the label pool");
  }
  const int n = model.cfg.n_frames;
  const int l_in = mel.num_frames();
  if (l_in <= 0) throw std::invalid_argument("predict_song: empty spectrogram");

  // Padding to the pooled grid keeps every chunk offset divisible by the
  // pool, so chunk outputs land exactly on output indices.
  const int padded_len = chunking::padded_length(l_in, n, pool);
  const int out_len = chunking::output_length(l_in, pool);
  const MatrixF padded = padded_features(mel, padded_len);
  const std::vector<int> starts = chunking::chunk_offsets(padded_len, n, hop);

  std::vector<std::pair<int, std::vector<float>>> pc, pb;
  pc.resize(starts.size());
  pb.resize(starts.size());
  run_chunks(model, padded, starts, [&](size_t i, auto c_row, auto b_row) {
    const int g0 = starts[i] / pool;
    // Outputs beyond the real song (possible only when L < N) are dropped.
    const int keep = std::min<int>(static_cast<int>(c_row.cols()), out_len - g0);
    pc[i] = {g0, std::vector<float>(c_row.data(), c_row.data() + keep)};
    pb[i] = {g0, std::vector<float>(b_row.data(), b_row.data() + keep)};
  });

  const double out_rate = mel.frame_rate / pool;
  return {merge_overlaps(pc, out_len, out_rate),
          merge_overlaps(pb, out_len, out_rate)};
}

std::pair<ActivationCurve, ActivationCurve> predict_song_scalar(
    Model& model, const MelSpectrogram& mel) {
  if (model.cfg.variant != Variant::kScalar) {
    throw std::invalid_argument(
        "predict_song_scalar needs a scalar checkpoint; use predict_song for "
        "temporal models");
  }
  const int pool = model.cfg.arch.input_pool;
  const int n = model.cfg.n_frames;
  const int l_in = mel.num_frames();
  if (l_in <= 0) throw std::invalid_argument("predict_song_scalar: empty spectrogram");

  const int padded_len = chunking::padded_length(l_in, n, pool);
  const int out_len = chunking::output_length(l_in, pool);
  const MatrixF padded = padded_features(mel, padded_len);

  std::vector<int> starts(static_cast<size_t>(out_len));
  for (int g = 0; g < out_len; ++g) {
    const int want = g * pool + pool / 2 - n / 2;
    starts[static_cast<size_t>(g)] = std::clamp(want, 0, padded_len - n);
  }

  ActivationCurve chorus, boundary;
  chorus.frame_rate = boundary.frame_rate = mel.frame_rate / pool;
  chorus.values.resize(static_cast<size_t>(out_len));
  boundary.values.resize(static_cast<size_t>(out_len));
  run_chunks(model, padded, starts, [&](size_t g, auto c_row, auto b_row) {
    chorus.values[g] = c_row(0);
    boundary.values[g] = b_row(0);
  });
  return {std::move(chorus), std::move(boundary)};
}

void write_activations_csv(const ActivationCurve& chorus,
                           const ActivationCurve& boundary,
                           const std::string& path) {
  if (chorus.size() != boundary.size()) {
    throw std::invalid_argument("activation curves differ in length");
  }
  std::ostringstream out;
  out << "time_sec,chorus_prob,boundary_prob\n";
  char buf[96];
  for (int f = 0; f < chorus.size(); ++f) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f\n",
                  chorus.frame_center_sec(f),
                  chorus.values[static_cast<size_t>(f)],
                  boundary.values[static_cast<size_t>(f)]);
    out << buf;
  }
  atomic_write_file(path, out.str());
}

}  // namespace chorus::inference
