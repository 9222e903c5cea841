#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "chorus/chunking.hpp"
#include "chorus/net/core.hpp"
#include "chorus/types.hpp"

namespace chorus {

using net::Variant;

struct ModelConfig {
  Variant variant = Variant::kTemporal;
  int n_frames = 600;
  int mel_bands = 96;
  double alpha = 0.1;
  int batch_size = 32;     // desk-scale default; the paper uses 256
  double lr0 = 0.0005;
  int lr_halving_steps = 15000;
  double bn_momentum = 0.9;
  uint64_t seed = 1;
  net::ArchSpec arch;      // derived defaults fit n_frames=600, mel_bands=96
};

struct Model {
  ModelConfig cfg;
  net::Network<float> net;
  int64_t training_step = 0;

  explicit Model(const ModelConfig& c)
      : cfg(c), net(c.arch, c.variant, c.n_frames, c.mel_bands) {
    net.bn_momentum = c.bn_momentum;
  }
};

// Deterministic seeded initialization.
Model init_model(const ModelConfig& cfg);

// Learning rate at a given step: lr0 halved every lr_halving_steps.
double learning_rate(const ModelConfig& cfg, int64_t step);

// Single-chunk convenience forms of the core ops (batch of one).
// forward returns sigmoid probabilities for both tasks.
std::pair<std::vector<float>, std::vector<float>> forward(
    Model& model, const MatrixF& chunk_features, bool train = false);

// Spec-facing loss on one chunk's pooled vectors; mask entries weight frames.
double multitask_loss(const std::vector<float>& c_hat,
                      const std::vector<float>& b_hat,
                      const std::vector<float>& c, const std::vector<float>& b,
                      const std::vector<uint8_t>& mask, double alpha);

// Training dataset abstraction: fill(i, ...) materializes item i as an
// unpooled chunk (features N x D plus labels/mask of length N). Lets callers
// feed either materialized chunks or lazy slices of whole songs.
struct TrainDataset {
  int size = 0;
  std::function<void(int index, MatrixF& x, std::vector<float>& c,
                     std::vector<float>& b, std::vector<uint8_t>& valid)>
      fill;
};

TrainDataset make_dataset(const std::vector<chunking::Chunk>& chunks);

struct TrainStepLog {
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) on the multitask loss, seeded
// epoch shuffling, batch-stat BN with running-stat updates. Labels are
// median-pooled to the output grid inside; padded frames get zero weight.
std::vector<TrainStepLog> train(Model& model, const TrainDataset& dataset,
                                int64_t steps);
std::vector<TrainStepLog> train(Model& model,
                                const std::vector<chunking::Chunk>& chunks,
                                int64_t steps);

// Checkpoint: text header (format version, variant, config fields, tensor
// manifest with shapes) followed by raw little-endian float32 in manifest
// order. Loading validates the header and never returns a partial model.
void save_checkpoint(const Model& model, std::ostream& out);
Model load_checkpoint(std::istream& in);
void save_checkpoint_file(const Model& model, const std::string& path);
Model load_checkpoint_file(const std::string& path);

void write_loss_log_csv(const std::vector<TrainStepLog>& log,
                        const std::string& path);

}  // namespace chorus
