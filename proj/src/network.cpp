#include "chorus/network.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "chorus/ioutil.hpp"
#include "chorus/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace chorus {

namespace {

constexpr const char* kMagic = "chorusnet";
constexpr int kFormatVersion = 1;
// Separate stream tag so weight init and batch shuffling never share draws.
constexpr uint64_t kShuffleStream = 0x5851f42d4c957f2dull;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Model init_model(const ModelConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
  if (cfg.batch_size <= 0 || cfg.lr_halving_steps <= 0) {
    throw std::invalid_argument("batch size and lr schedule must be positive");
  }
  Model model(cfg);
  model.net.init_params(cfg.seed);
  return model;
}

double learning_rate(const ModelConfig& cfg, int64_t step) {
  const int halvings = static_cast<int>(step / cfg.lr_halving_steps);
  return std::ldexp(cfg.lr0, -halvings);
}

std::pair<std::vector<float>, std::vector<float>> forward(
    Model& model, const MatrixF& chunk_features, bool train) {
  auto out = model.net.forward(chunk_features, 1, train);
  std::vector<float> c(out.chorus.data(), out.chorus.data() + out.chorus.cols());
  std::vector<float> b(out.boundary.data(),
                       out.boundary.data() + out.boundary.cols());
  return {std::move(c), std::move(b)};
}

double multitask_loss(const std::vector<float>& c_hat,
                      const std::vector<float>& b_hat,
                      const std::vector<float>& c, const std::vector<float>& b,
                      const std::vector<uint8_t>& mask, double alpha) {
  const auto n = c_hat.size();
  if (b_hat.size() != n || c.size() != n || b.size() != n || mask.size() != n) {
    throw std::invalid_argument("multitask_loss: length mismatch");
  }
  auto as_row = [](const std::vector<float>& v) {
    return Eigen::Map<const net::Mat<float>>(v.data(), 1,
                                             static_cast<Eigen::Index>(v.size()));
  };
  net::Mat<float> m(1, static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) m(0, static_cast<Eigen::Index>(i)) = mask[i];
  return net::multitask_loss<float>(as_row(c_hat), as_row(b_hat), as_row(c),
                                    as_row(b), m, alpha);
}

TrainDataset make_dataset(const std::vector<chunking::Chunk>& chunks) {
  TrainDataset ds;
  ds.size = static_cast<int>(chunks.size());
  ds.fill = [&chunks](int index, MatrixF& x, std::vector<float>& c,
                      std::vector<float>& b, std::vector<uint8_t>& valid) {
    const chunking::Chunk& ch = chunks.at(static_cast<size_t>(index));
    x = ch.features;
    c = ch.chorus;
    b = ch.boundary;
    valid = ch.valid;
  };
  return ds;
}

std::vector<TrainStepLog> train(Model& model, const TrainDataset& dataset,
                                int64_t steps) {
  if (dataset.size <= 0) throw std::invalid_argument("train: empty dataset");
  std::vector<TrainStepLog> log;
  if (steps <= 0) return log;

  const ModelConfig& cfg = model.cfg;
  const int batch = cfg.batch_size;
  const int n = cfg.n_frames;
  const int pool = cfg.arch.input_pool;
  const int t_out = model.net.out_len();
  const int t_full = model.net.time_steps();
  const int center = t_full / 2;

  // Adam state, zero-initialized; bias correction restarts per train() call.
  net::NetParams<float> m_state = model.net.params();
  net::NetParams<float> v_state = model.net.params();
  m_state.visit([](const std::string&, net::Mat<float>& m, bool) { m.setZero(); });
  v_state.visit([](const std::string&, net::Mat<float>& m, bool) { m.setZero(); });

  // Params, grads and Adam slots share the visit order; walk them in lockstep.
  std::vector<net::Mat<float>*> ps, gs, ms, vs;
  std::vector<uint8_t> trainable;
  auto collect = [](net::NetParams<float>& set,
                    std::vector<net::Mat<float>*>& out_v,
                    std::vector<uint8_t>* flags) {
    set.visit([&](const std::string&, net::Mat<float>& m, bool t) {
      out_v.push_back(&m);
      if (flags) flags->push_back(t ? 1 : 0);
    });
  };
  collect(model.net.params(), ps, &trainable);
  collect(model.net.grads(), gs, nullptr);
  collect(m_state, ms, nullptr);
  collect(v_state, vs, nullptr);

  SplitMix64 shuffle_rng(cfg.seed ^ kShuffleStream);
  std::vector<int> order(static_cast<size_t>(dataset.size));
  for (int i = 0; i < dataset.size; ++i) order[static_cast<size_t>(i)] = i;
  size_t pos = order.size();  // triggers a shuffle on first use

  net::Mat<float> x(static_cast<Eigen::Index>(batch) * n, cfg.mel_bands);
  net::Mat<float> tc(batch, t_out), tb(batch, t_out), mask(batch, t_out);
  MatrixF item_x;
  std::vector<float> item_c, item_b;
  std::vector<uint8_t> item_valid;

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  double b1t = 1.0, b2t = 1.0;

  log.reserve(static_cast<size_t>(steps));
  for (int64_t s = 0; s < steps; ++s) {
    for (int bi = 0; bi < batch; ++bi) {
      if (pos == order.size()) {
        shuffle_rng.shuffle(order);
        pos = 0;
      }
      const int idx = order[pos++];
      dataset.fill(idx, item_x, item_c, item_b, item_valid);
      if (item_x.rows() != n || item_x.cols() != cfg.mel_bands) {
        throw std::invalid_argument("train: chunk shape mismatch");
      }
      x.middleRows(static_cast<Eigen::Index>(bi) * n, n) = item_x;

      const std::vector<float> pc = chunking::median_pool_labels(item_c, pool);
      const std::vector<float> pb = chunking::median_pool_labels(item_b, pool);
      const std::vector<uint8_t> pv = chunking::pool_valid_mask(item_valid, pool);
      if (model.cfg.variant == Variant::kTemporal) {
        for (int j = 0; j < t_out; ++j) {
          tc(bi, j) = pc[static_cast<size_t>(j)];
          tb(bi, j) = pb[static_cast<size_t>(j)];
          mask(bi, j) = pv[static_cast<size_t>(j)];
        }
      } else {
        tc(bi, 0) = pc[static_cast<size_t>(center)];
        tb(bi, 0) = pb[static_cast<size_t>(center)];
        mask(bi, 0) = pv[static_cast<size_t>(center)];
      }
    }

    auto out = model.net.forward(x, batch, /*train=*/true);
    const double loss =
        net::multitask_loss(out.chorus, out.boundary, tc, tb, mask, cfg.alpha);
    net::Mat<float> d_c, d_b;
    net::multitask_loss_grad(out.chorus, out.boundary, tc, tb, mask, cfg.alpha,
                             d_c, d_b);
    model.net.backward(d_c, d_b);

    const double lr = learning_rate(cfg, model.training_step);
    b1t *= kBeta1;
    b2t *= kBeta2;
    const double m_corr = 1.0 / (1.0 - b1t);
    const double v_corr = 1.0 / (1.0 - b2t);

    for (size_t i = 0; i < ps.size(); ++i) {
      if (!trainable[i]) continue;
      auto& p = *ps[i];
      auto& g = *gs[i];
      auto& mm = *ms[i];
      auto& vv = *vs[i];
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double gk = g.data()[k];
        double mk = kBeta1 * mm.data()[k] + (1.0 - kBeta1) * gk;
        double vk = kBeta2 * vv.data()[k] + (1.0 - kBeta2) * gk * gk;
        mm.data()[k] = static_cast<float>(mk);
        vv.data()[k] = static_cast<float>(vk);
        p.data()[k] -= static_cast<float>(
            lr * (mk * m_corr) / (std::sqrt(vk * v_corr) + kAdamEps));
      }
    }

    model.training_step++;
    log.push_back({model.training_step, lr, loss});
  }
  model.net.release_training_buffers();
  return log;
}

std::vector<TrainStepLog> train(Model& model,
                                const std::vector<chunking::Chunk>& chunks,
                                int64_t steps) {
  return train(model, make_dataset(chunks), steps);
}

void save_checkpoint(const Model& model, std::ostream& out) {
  const ModelConfig& cfg = model.cfg;
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "variant " << net::variant_name(cfg.variant) << '\n';
  out << "n_frames " << cfg.n_frames << '\n';
  out << "mel_bands " << cfg.mel_bands << '\n';
  out << "alpha " << fmt_double(cfg.alpha) << '\n';
  out << "batch_size " << cfg.batch_size << '\n';
  out << "lr0 " << fmt_double(cfg.lr0) << '\n';
  out << "lr_halving_steps " << cfg.lr_halving_steps << '\n';
  out << "bn_momentum " << fmt_double(cfg.bn_momentum) << '\n';
  out << "seed " << cfg.seed << '\n';
  out << "input_pool " << cfg.arch.input_pool << '\n';
  out << "blocks";
  for (size_t i = 0; i < cfg.arch.blocks.size(); ++i) {
    out << (i ? "," : " ") << cfg.arch.blocks[i].channels << 'x'
        << cfg.arch.blocks[i].mel_pool;
  }
  out << '\n';
  out << "tconv " << cfg.arch.tconv_kernel << 'x' << cfg.arch.tconv_channels << '\n';
  out << "head " << cfg.arch.head_pool << ',' << cfg.arch.head_stride << ','
      << cfg.arch.head_windows << '\n';
  out << "training_step " << model.training_step << '\n';

  auto& params = const_cast<Model&>(model).net.params();
  int count = 0;
  params.visit([&](const std::string&, net::Mat<float>&, bool) { ++count; });
  out << "tensors " << count << '\n';
  params.visit([&](const std::string& name, net::Mat<float>& m, bool) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  });
  out << "end\n";
  params.visit([&](const std::string&, net::Mat<float>& m, bool) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(float) * m.size()));
  });
  if (!out) throw std::runtime_error("checkpoint write failed");
}

namespace {

[[noreturn]] void load_fail(const std::string& what) {
  throw std::runtime_error("checkpoint load failed: " + what);
}

std::pair<std::string, std::string> split_kv(const std::string& line) {
  const size_t sp = line.find(' ');
  if (sp == std::string::npos) load_fail("malformed header line '" + line + "'");
  return {line.substr(0, sp), line.substr(sp + 1)};
}

}  // namespace

Model load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) load_fail("empty stream");
  {
    std::istringstream head(line);
    std::string magic;
    int version = -1;
    head >> magic >> version;
    if (magic != kMagic) load_fail("bad magic");
    if (version != kFormatVersion) {
      load_fail("unsupported format version " + std::to_string(version));
    }
  }

  ModelConfig cfg;
  cfg.arch.blocks.clear();
  int64_t training_step = 0;
  int tensor_count = -1;
  std::vector<std::tuple<std::string, long, long>> manifest;

  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    auto [key, value] = split_kv(line);
    try {
      if (key == "variant") {
        if (value == "temporal") cfg.variant = Variant::kTemporal;
        else if (value == "scalar") cfg.variant = Variant::kScalar;
        else load_fail("unknown variant '" + value + "'");
      } else if (key == "n_frames") {
        cfg.n_frames = std::stoi(value);
      } else if (key == "mel_bands") {
        cfg.mel_bands = std::stoi(value);
      } else if (key == "alpha") {
        cfg.alpha = std::stod(value);
      } else if (key == "batch_size") {
        cfg.batch_size = std::stoi(value);
      } else if (key == "lr0") {
        cfg.lr0 = std::stod(value);
      } else if (key == "lr_halving_steps") {
        cfg.lr_halving_steps = std::stoi(value);
      } else if (key == "bn_momentum") {
        cfg.bn_momentum = std::stod(value);
      } else if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else if (key == "input_pool") {
        cfg.arch.input_pool = std::stoi(value);
      } else if (key == "blocks") {
        std::stringstream bs(value);
        std::string item;
        while (std::getline(bs, item, ',')) {
          const size_t x = item.find('x');
          if (x == std::string::npos) load_fail("bad blocks entry '" + item + "'");
          cfg.arch.blocks.push_back(
              {std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1))});
        }
      } else if (key == "tconv") {
        const size_t x = value.find('x');
        if (x == std::string::npos) load_fail("bad tconv entry");
        cfg.arch.tconv_kernel = std::stoi(value.substr(0, x));
        cfg.arch.tconv_channels = std::stoi(value.substr(x + 1));
      } else if (key == "head") {
        std::stringstream hs(value);
        char comma;
        if (!(hs >> cfg.arch.head_pool >> comma >> cfg.arch.head_stride >>
              comma >> cfg.arch.head_windows)) {
          load_fail("bad head entry");
        }
      } else if (key == "training_step") {
        training_step = std::stoll(value);
      } else if (key == "tensors") {
        tensor_count = std::stoi(value);
        for (int i = 0; i < tensor_count; ++i) {
          if (!std::getline(in, line)) load_fail("truncated tensor manifest");
          std::istringstream ts(line);
          std::string name;
          long rows = 0, cols = 0;
          if (!(ts >> name >> rows >> cols)) load_fail("bad manifest line '" + line + "'");
          manifest.emplace_back(name, rows, cols);
        }
      } else {
        load_fail("unknown header key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      load_fail("bad value for '" + key + "'");
    } catch (const std::out_of_range&) {
      load_fail("bad value for '" + key + "'");
    }
  }
  if (!saw_end) load_fail("missing end marker");
  if (tensor_count < 0) load_fail("missing tensor manifest");

  Model model(cfg);
  model.training_step = training_step;

  size_t cursor = 0;
  bool ok = true;
  std::string problem;
  model.net.params().visit([&](const std::string& name, net::Mat<float>& m, bool) {
    if (!ok) return;
    if (cursor >= manifest.size()) {
      ok = false;
      problem = "manifest shorter than architecture";
      return;
    }
    auto& [mname, rows, cols] = manifest[cursor++];
    if (mname != name || rows != m.rows() || cols != m.cols()) {
      ok = false;
      problem = "tensor mismatch at '" + name + "'";
      return;
    }
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * m.size())) {
      ok = false;
      problem = "truncated tensor data at '" + name + "'";
    }
  });
  if (!ok) load_fail(problem);
  if (cursor != manifest.size()) load_fail("manifest longer than architecture");
  return model;
}

void save_checkpoint_file(const Model& model, const std::string& path) {
  std::ostringstream buf(std::ios::binary);
  save_checkpoint(model, buf);
  atomic_write_file(path, buf.str());
}

Model load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

void write_loss_log_csv(const std::vector<TrainStepLog>& log,
                        const std::string& path) {
  std::ostringstream out;
  out << "step,lr,loss\n";
  char buf[96];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%" PRId64 ",%.9g,%.9g\n", e.step, e.lr,
                  e.loss);
    out << buf;
  }
  atomic_write_file(path, out.str());
}

}  // namespace chorus
