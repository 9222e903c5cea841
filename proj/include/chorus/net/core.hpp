#pragma once

// Scalar-templated network core. float is the production type; tests
// instantiate double so analytic gradients can be checked against central
// finite differences without float round-off in the way.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chorus/rng.hpp"

namespace chorus::net {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatI =
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Variant { kTemporal, kScalar };

inline const char* variant_name(Variant v) {
  return v == Variant::kTemporal ? "temporal" : "scalar";
}

struct ConvBlockSpec {
  int channels = 0;
  int mel_pool = 0;  // 0 = collapse all remaining mel bins

  bool operator==(const ConvBlockSpec&) const = default;
};

// Trunk and head layout. Defaults are the 600x96 model: input temporal
// max-pool 6 -> three 3x3 conv blocks with mel pooling down to one bin ->
// temporal conv (kernel 7, same padding) -> heads. The temporal head pools
// windows of 24 frames at stride 12 (mean and max concatenated), left-padded
// with zeros so exactly head_windows windows cover the sequence; the scalar
// head pools the whole sequence the same way.
struct ArchSpec {
  int input_pool = 6;
  std::vector<ConvBlockSpec> blocks{{32, 4}, {64, 4}, {64, 0}};
  int tconv_kernel = 7;
  int tconv_channels = 128;
  int head_pool = 24;
  int head_stride = 12;
  int head_windows = 8;

  bool operator==(const ArchSpec&) const = default;
};

template <class S>
struct BnParams {
  Mat<S> gamma, beta, run_mean, run_var;  // all 1 x C
};

template <class S>
struct ConvLayerParams {
  Mat<S> w;  // (kernel_h * kernel_w * c_in) x c_out
  Mat<S> b;  // 1 x c_out
  BnParams<S> bn;
};

template <class S>
struct NetParams {
  std::vector<ConvLayerParams<S>> conv;
  ConvLayerParams<S> tconv;
  Mat<S> head_w;  // flat_features x num_outputs
  Mat<S> head_b;  // 1 x num_outputs

  // Enumerates tensors in checkpoint-manifest order.
  template <class F>
  void visit(F&& f) {
    auto layer = [&](const std::string& prefix, ConvLayerParams<S>& l) {
      f(prefix + ".w", l.w, true);
      f(prefix + ".b", l.b, true);
      f(prefix + ".bn.gamma", l.bn.gamma, true);
      f(prefix + ".bn.beta", l.bn.beta, true);
      f(prefix + ".bn.run_mean", l.bn.run_mean, false);
      f(prefix + ".bn.run_var", l.bn.run_var, false);
    };
    for (size_t i = 0; i < conv.size(); ++i) {
      layer("conv" + std::to_string(i + 1), conv[i]);
    }
    layer("tconv", tconv);
    f("head.w", head_w, true);
    f("head.b", head_b, true);
  }
};

namespace detail {

inline constexpr double kBnEps = 1e-5;

// Column sums computed over fixed 4096-row blocks combined in block order,
// so results do not depend on the OpenMP thread count.
template <class S, class F>
Mat<S> blocked_colsum(Eigen::Index rows, Eigen::Index cols, F&& accumulate) {
  constexpr Eigen::Index kBlock = 4096;
  const Eigen::Index nblocks = rows == 0 ? 0 : (rows + kBlock - 1) / kBlock;
  Mat<S> partials = Mat<S>::Zero(std::max<Eigen::Index>(nblocks, 1), cols);
#pragma omp parallel for schedule(static)
  for (Eigen::Index blk = 0; blk < nblocks; ++blk) {
    const Eigen::Index r0 = blk * kBlock;
    const Eigen::Index r1 = std::min(rows, r0 + kBlock);
    for (Eigen::Index r = r0; r < r1; ++r) accumulate(r, partials.row(blk));
  }
  Mat<S> total = Mat<S>::Zero(1, cols);
  for (Eigen::Index blk = 0; blk < nblocks; ++blk) total += partials.row(blk);
  return total;
}

// Resize preserving the allocation when the shape already matches, so the
// training tape never reallocates after the first step.
template <class S>
void ensure_shape(Mat<S>& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() != rows || m.cols() != cols) m.resize(rows, cols);
}

// im2col for a (batch, T, M, C) tensor stored as (B*T*M) x C row-major,
// "same" zero padding. Output row r matches input position r; columns are
// the kh*kw kernel taps, C channels each.
template <class S>
void im2col(const Mat<S>& a, int batch, int t_len, int m_len, int kh, int kw,
            Mat<S>& p) {
  const int c = static_cast<int>(a.cols());
  const int ph = kh / 2, pw = kw / 2;
  const Eigen::Index rows = static_cast<Eigen::Index>(batch) * t_len * m_len;
  ensure_shape(p, rows, static_cast<Eigen::Index>(kh) * kw * c);
  const S* src_base = a.data();
  const Eigen::Index stride = p.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int m = static_cast<int>(r % m_len);
    const int t = static_cast<int>((r / m_len) % t_len);
    const Eigen::Index b = r / (static_cast<Eigen::Index>(m_len) * t_len);
    S* dst = p.data() + r * stride;
    for (int i = 0; i < kh; ++i) {
      const int ti = t + i - ph;
      for (int j = 0; j < kw; ++j) {
        S* slot = dst + static_cast<Eigen::Index>(i * kw + j) * c;
        const int mj = m + j - pw;
        if (ti < 0 || ti >= t_len || mj < 0 || mj >= m_len) {
          std::fill(slot, slot + c, S(0));
        } else {
          const S* src = src_base + ((b * t_len + ti) * m_len + mj) * c;
          std::copy(src, src + c, slot);
        }
      }
    }
  }
}

// Adjoint of im2col: gathers patch gradients back onto input positions.
template <class S>
void col2im(const Mat<S>& dp, int batch, int t_len, int m_len, int kh, int kw,
            Mat<S>& da) {
  const int c = static_cast<int>(da.cols());
  const int ph = kh / 2, pw = kw / 2;
  const Eigen::Index rows = static_cast<Eigen::Index>(batch) * t_len * m_len;
  const Eigen::Index stride = dp.cols();
  const S* src_base = dp.data();
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int m = static_cast<int>(r % m_len);
    const int t = static_cast<int>((r / m_len) % t_len);
    const Eigen::Index b = r / (static_cast<Eigen::Index>(m_len) * t_len);
    S* out = da.data() + r * c;
    std::fill(out, out + c, S(0));
    for (int i = 0; i < kh; ++i) {
      const int ti = t - (i - ph);
      if (ti < 0 || ti >= t_len) continue;
      for (int j = 0; j < kw; ++j) {
        const int mj = m - (j - pw);
        if (mj < 0 || mj >= m_len) continue;
        const S* src = src_base + ((b * t_len + ti) * m_len + mj) * stride +
                       static_cast<Eigen::Index>(i * kw + j) * c;
        for (int ch = 0; ch < c; ++ch) out[ch] += src[ch];
      }
    }
  }
}

}  // namespace detail

// The chorus/boundary CNN with hand-rolled forward and reverse passes.
// forward(train=true) keeps the activations needed by backward; backward
// fills grads() for everything trainable. No input gradient is produced:
// the spectrogram is data.
template <class S>
class Network {
 public:
  Network(ArchSpec arch, Variant variant, int n_frames, int mel_bands)
      : arch_(std::move(arch)),
        variant_(variant),
        n_frames_(n_frames),
        mel_bands_(mel_bands) {
    validate_shapes();
    allocate(p_);
    allocate(g_);
    p_.visit([](const std::string&, Mat<S>& m, bool) { m.setZero(); });
    reset_grads();
    auto reset_bn = [](ConvLayerParams<S>& l) {
      l.bn.gamma.setOnes();
      l.bn.run_var.setOnes();
    };
    for (auto& l : p_.conv) reset_bn(l);
    reset_bn(p_.tconv);
  }

  const ArchSpec& arch() const { return arch_; }
  Variant variant() const { return variant_; }
  int n_frames() const { return n_frames_; }
  int mel_bands() const { return mel_bands_; }
  int time_steps() const { return n_frames_ / arch_.input_pool; }
  int out_len() const {
    return variant_ == Variant::kTemporal ? time_steps() : 1;
  }

  NetParams<S>& params() { return p_; }
  const NetParams<S>& params() const { return p_; }
  NetParams<S>& grads() { return g_; }

  double bn_momentum = 0.9;

  // Fan-in-scaled uniform weights (limit sqrt(3/fan_in)), zero biases,
  // BN scale 1 / shift 0. One SplitMix64 stream consumed in visit order.
  void init_params(uint64_t seed) {
    SplitMix64 rng(seed);
    p_.visit([&](const std::string& name, Mat<S>& m, bool trainable) {
      if (!trainable) return;  // run_mean 0, run_var 1 from construction
      if (name.ends_with(".b") || name.ends_with(".bn.beta")) {
        m.setZero();
      } else if (name.ends_with(".bn.gamma")) {
        m.setOnes();
      } else {
        const double limit = std::sqrt(3.0 / static_cast<double>(m.rows()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = static_cast<S>(rng.uniform(-limit, limit));
          }
        }
      }
    });
  }

  void reset_grads() {
    g_.visit([](const std::string&, Mat<S>& m, bool) { m.setZero(); });
  }

  struct Outputs {
    Mat<S> chorus;    // batch x out_len, sigmoid probabilities
    Mat<S> boundary;  // batch x out_len
  };

  // x: (batch * n_frames) x mel_bands, samples stacked along rows.
  // In eval mode nothing is written to the network, so concurrent eval
  // forwards on one instance are safe.
  Outputs forward(const Mat<S>& x, int batch, bool train) {
    if (x.rows() != static_cast<Eigen::Index>(batch) * n_frames_ ||
        x.cols() != mel_bands_) {
      throw std::invalid_argument("Network::forward: input shape mismatch");
    }
    if (train) {
      tape_valid_ = true;
      batch_ = batch;
    }
    const int t_len = time_steps();

    // Input temporal max-pool [input_pool, 1]; no gradient needed.
    Mat<S> pooled(static_cast<Eigen::Index>(batch) * t_len, mel_bands_);
#pragma omp parallel for schedule(static)
    for (Eigen::Index r = 0; r < pooled.rows(); ++r) {
      const Eigen::Index b = r / t_len;
      const Eigen::Index t = r % t_len;
      const Eigen::Index src = b * n_frames_ + t * arch_.input_pool;
      auto row = pooled.row(r);
      row = x.row(src);
      for (int k = 1; k < arch_.input_pool; ++k) {
        row = row.cwiseMax(x.row(src + k));
      }
    }

    // Reinterpret (B*T) x D as (B*T*D) x 1: mel becomes the image width and
    // the channel count starts at 1 (row-major memory makes this a plain map).
    Mat<S> act0 = Eigen::Map<const Mat<S>>(
        pooled.data(), static_cast<Eigen::Index>(batch) * t_len * mel_bands_, 1);

    // Train mode reuses the member tape so no buffer reallocates step over
    // step; eval keeps everything local.
    std::vector<ConvTape> local_tapes;
    std::vector<ConvTape>& tapes = train ? conv_tapes_ : local_tapes;
    tapes.resize(arch_.blocks.size());
    Mat<S> local_tconv_relu;
    Mat<S>& tconv_relu = train ? tconv_relu_ : local_tconv_relu;
    Mat<S> local_tconv_patches, local_tconv_xhat, local_tconv_inv_std;

    const Mat<S>* cur = &act0;
    int m_len = mel_bands_;
    for (size_t i = 0; i < arch_.blocks.size(); ++i) {
      conv_block_forward(*cur, p_.conv[i], tapes[i], batch, t_len, m_len,
                         arch_.blocks[i].mel_pool, train);
      cur = &tapes[i].pooled;
      m_len = tapes[i].m_out;
    }
    // All mel bins are collapsed now: *cur is (B*T) x C.
    tconv_forward(*cur, batch, t_len, train,
                  train ? tconv_patches_ : local_tconv_patches,
                  train ? tconv_xhat_ : local_tconv_xhat,
                  train ? tconv_inv_std_ : local_tconv_inv_std, tconv_relu);

    MatI local_amax;
    MatI& amax = train ? head_amax_ : local_amax;
    Mat<S> head_in = variant_ == Variant::kTemporal
                         ? local_pool_forward(tconv_relu, batch, t_len, amax)
                         : global_pool_forward(tconv_relu, batch, t_len, amax);
    Mat<S> logits = head_in * p_.head_w;
    logits.rowwise() += p_.head_b.row(0);
    Mat<S> probs = logits.unaryExpr([](S z) {
      return static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(z))));
    });

    Outputs out;
    const int len = out_len();
    out.chorus = probs.leftCols(len);
    out.boundary = probs.rightCols(len);
    if (train) head_in_ = std::move(head_in);
    return out;
  }

  // d_c / d_b are gradients w.r.t. the chorus/boundary logits.
  void backward(const Mat<S>& d_c, const Mat<S>& d_b) {
    if (!tape_valid_) {
      throw std::logic_error("Network::backward requires a train-mode forward");
    }
    tape_valid_ = false;
    const int t_len = time_steps();
    const int len = out_len();
    Mat<S> dlogits(d_c.rows(), 2 * len);
    dlogits.leftCols(len) = d_c;
    dlogits.rightCols(len) = d_b;

    g_.head_w.noalias() = head_in_.transpose() * dlogits;
    g_.head_b = dlogits.colwise().sum();
    Mat<S> dhead_in = dlogits * p_.head_w.transpose();

    Mat<S> dact = variant_ == Variant::kTemporal
                      ? local_pool_backward(dhead_in, batch_, t_len)
                      : global_pool_backward(dhead_in, batch_, t_len);

    tconv_backward(dact, batch_, t_len);
    const Mat<S>* dcur = &tconv_dx_;
    for (size_t i = arch_.blocks.size(); i-- > 0;) {
      conv_block_backward(*dcur, p_.conv[i], g_.conv[i], conv_tapes_[i],
                          batch_, /*need_dx=*/i > 0);
      dcur = &conv_tapes_[i].dx;
    }
  }

  // Frees the training tape; the next train-mode forward re-allocates it.
  void release_training_buffers() {
    tape_valid_ = false;
    conv_tapes_.clear();
    conv_tapes_.shrink_to_fit();
    for (Mat<S>* m : {&tconv_patches_, &tconv_xhat_, &tconv_inv_std_,
                      &tconv_relu_, &tconv_dpatches_, &tconv_dx_, &head_in_}) {
      m->resize(0, 0);
    }
    head_amax_.resize(0, 0);
  }

 private:
  struct ConvTape {
    Mat<S> patches;   // im2col of the block input
    Mat<S> xhat;      // BN-normalized pre-activation
    Mat<S> inv_std;   // 1 x C
    Mat<S> relu_out;  // post-ReLU, pre-pool
    Mat<S> pooled;    // block output, the next block's input
    MatI pool_amax;   // (rows_out x C) winner offset within the pool group
    Mat<S> dz;        // backward scratch
    Mat<S> dpatches;
    Mat<S> dx;
    int t_len = 0, m_in = 0, m_out = 0, pool = 0;
  };

  void validate_shapes() const {
    if (n_frames_ <= 0 || mel_bands_ <= 0) {
      throw std::invalid_argument("network: invalid input shape");
    }
    if (arch_.input_pool <= 0 || n_frames_ % arch_.input_pool != 0) {
      throw std::invalid_argument("network: n_frames must divide by input_pool");
    }
    if (arch_.blocks.empty()) throw std::invalid_argument("network: no conv blocks");
    int m = mel_bands_;
    for (const auto& blk : arch_.blocks) {
      if (blk.channels <= 0) throw std::invalid_argument("network: bad channel count");
      const int pool = blk.mel_pool == 0 ? m : blk.mel_pool;
      if (pool <= 0 || m % pool != 0) {
        throw std::invalid_argument("network: mel bins must divide by mel_pool");
      }
      m /= pool;
    }
    if (m != 1) {
      throw std::invalid_argument("network: conv blocks must collapse mel bins to 1");
    }
    if (arch_.tconv_kernel <= 0 || arch_.tconv_channels <= 0) {
      throw std::invalid_argument("network: bad temporal conv spec");
    }
    if (variant_ == Variant::kTemporal) {
      const int t_len = n_frames_ / arch_.input_pool;
      const int span =
          (arch_.head_windows - 1) * arch_.head_stride + arch_.head_pool;
      const int pad = span - t_len;
      if (arch_.head_windows <= 0 || pad < 0 || pad >= arch_.head_pool) {
        throw std::invalid_argument(
            "network: head windows/stride/pool do not tile the sequence");
      }
    }
  }

  void allocate(NetParams<S>& p) const {
    p.conv.resize(arch_.blocks.size());
    int c_in = 1;
    for (size_t i = 0; i < arch_.blocks.size(); ++i) {
      const int c_out = arch_.blocks[i].channels;
      p.conv[i].w.resize(9 * c_in, c_out);
      p.conv[i].b.resize(1, c_out);
      for (Mat<S>* m : {&p.conv[i].bn.gamma, &p.conv[i].bn.beta,
                        &p.conv[i].bn.run_mean, &p.conv[i].bn.run_var}) {
        m->resize(1, c_out);
      }
      c_in = c_out;
    }
    p.tconv.w.resize(arch_.tconv_kernel * c_in, arch_.tconv_channels);
    p.tconv.b.resize(1, arch_.tconv_channels);
    for (Mat<S>* m : {&p.tconv.bn.gamma, &p.tconv.bn.beta, &p.tconv.bn.run_mean,
                      &p.tconv.bn.run_var}) {
      m->resize(1, arch_.tconv_channels);
    }
    const int t_len = n_frames_ / arch_.input_pool;
    const int flat = variant_ == Variant::kTemporal
                         ? arch_.head_windows * 2 * arch_.tconv_channels
                         : 2 * arch_.tconv_channels;
    const int outputs = variant_ == Variant::kTemporal ? 2 * t_len : 2;
    p.head_w.resize(flat, outputs);
    p.head_b.resize(1, outputs);
  }

  // BN over rows (batch and spatial positions) per channel column. z is
  // transformed in place; xhat and inv_std are kept for backward.
  void bn_forward(Mat<S>& z, BnParams<S>& bn, Mat<S>& xhat, Mat<S>& inv_std,
                  bool train) {
    const Eigen::Index rows = z.rows();
    const Eigen::Index cols = z.cols();
    Mat<S> mean(1, cols), var(1, cols);
    if (train) {
      mean = detail::blocked_colsum<S>(
                 rows, cols, [&](Eigen::Index r, auto acc) { acc += z.row(r); }) /
             static_cast<S>(rows);
      var = detail::blocked_colsum<S>(rows, cols,
                                      [&](Eigen::Index r, auto acc) {
                                        acc += (z.row(r) - mean.row(0))
                                                   .cwiseAbs2();
                                      }) /
            static_cast<S>(rows);
      const S m = static_cast<S>(bn_momentum);
      bn.run_mean = bn.run_mean * m + mean * (S(1) - m);
      bn.run_var = bn.run_var * m + var * (S(1) - m);
    } else {
      mean = bn.run_mean;
      var = bn.run_var;
    }
    inv_std.resize(1, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      inv_std(0, c) = S(1) / std::sqrt(var(0, c) + static_cast<S>(detail::kBnEps));
    }
    const Mat<S> scale = bn.gamma.cwiseProduct(inv_std);
    if (train) detail::ensure_shape(xhat, rows, cols);
#pragma omp parallel for schedule(static)
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (train) {
        xhat.row(r) = (z.row(r) - mean.row(0)).cwiseProduct(inv_std.row(0));
      }
      z.row(r) = (z.row(r) - mean.row(0)).cwiseProduct(scale.row(0)) + bn.beta.row(0);
    }
  }

  // Standard train-mode BN backward through the batch statistics; dy is
  // transformed into dx in place.
  void bn_backward_inplace(Mat<S>& dy, const Mat<S>& xhat,
                           const Mat<S>& inv_std, const Mat<S>& gamma,
                           Mat<S>& dgamma, Mat<S>& dbeta) {
    const Eigen::Index rows = dy.rows();
    const Eigen::Index cols = dy.cols();
    const S n = static_cast<S>(rows);
    dgamma = detail::blocked_colsum<S>(rows, cols, [&](Eigen::Index r, auto acc) {
      acc += dy.row(r).cwiseProduct(xhat.row(r));
    });
    dbeta = detail::blocked_colsum<S>(
        rows, cols, [&](Eigen::Index r, auto acc) { acc += dy.row(r); });

    const Mat<S> scale = gamma.cwiseProduct(inv_std);
    const Mat<S> mean_dy = dbeta / n;
    const Mat<S> mean_dyx = dgamma / n;
#pragma omp parallel for schedule(static)
    for (Eigen::Index r = 0; r < rows; ++r) {
      dy.row(r) = (dy.row(r) - mean_dy.row(0) -
                   xhat.row(r).cwiseProduct(mean_dyx.row(0)))
                      .cwiseProduct(scale.row(0));
    }
  }

  void conv_block_forward(const Mat<S>& input, ConvLayerParams<S>& layer,
                          ConvTape& tape, int batch, int t_len, int m_len,
                          int mel_pool, bool train) {
    tape.t_len = t_len;
    tape.m_in = m_len;
    tape.pool = mel_pool == 0 ? m_len : mel_pool;
    tape.m_out = m_len / tape.pool;

    detail::im2col(input, batch, t_len, m_len, 3, 3, tape.patches);
    const int c = static_cast<int>(layer.w.cols());
    detail::ensure_shape(tape.relu_out, tape.patches.rows(), c);
    tape.relu_out.noalias() = tape.patches * layer.w;
    tape.relu_out.rowwise() += layer.b.row(0);

    bn_forward(tape.relu_out, layer.bn, tape.xhat, tape.inv_std, train);
    tape.relu_out = tape.relu_out.cwiseMax(S(0));

    // Mel max-pool [1, pool]; groups are contiguous rows.
    const Eigen::Index out_rows =
        static_cast<Eigen::Index>(batch) * t_len * tape.m_out;
    detail::ensure_shape(tape.pooled, out_rows, c);
    if (tape.pool_amax.rows() != out_rows || tape.pool_amax.cols() != c) {
      tape.pool_amax.resize(out_rows, c);
    }
    const S* z = tape.relu_out.data();
#pragma omp parallel for schedule(static)
    for (Eigen::Index r = 0; r < out_rows; ++r) {
      S* o = tape.pooled.data() + r * c;
      int* am = tape.pool_amax.data() + r * c;
      const S* group = z + r * tape.pool * c;
      std::copy(group, group + c, o);
      std::fill(am, am + c, 0);
      for (int k = 1; k < tape.pool; ++k) {
        const S* cand = group + static_cast<Eigen::Index>(k) * c;
        for (int ch = 0; ch < c; ++ch) {
          if (cand[ch] > o[ch]) {
            o[ch] = cand[ch];
            am[ch] = k;
          }
        }
      }
    }
  }

  // Returns the gradient w.r.t. the block input in tape.dx (if requested).
  void conv_block_backward(const Mat<S>& dout, ConvLayerParams<S>& layer,
                           ConvLayerParams<S>& grad, ConvTape& tape,
                           int batch, bool need_dx) {
    const int c = static_cast<int>(dout.cols());
    detail::ensure_shape(tape.dz, tape.relu_out.rows(), c);
    tape.dz.setZero();
    const S* relu = tape.relu_out.data();
#pragma omp parallel for schedule(static)
    for (Eigen::Index r = 0; r < dout.rows(); ++r) {
      const S* dsrc = dout.data() + r * c;
      const int* am = tape.pool_amax.data() + r * c;
      for (int ch = 0; ch < c; ++ch) {
        // Route to the pool winner, gated by ReLU (winner value > 0).
        const Eigen::Index src = (r * tape.pool + am[ch]) * c + ch;
        if (relu[src] > S(0)) tape.dz.data()[src] = dsrc[ch];
      }
    }

    bn_backward_inplace(tape.dz, tape.xhat, tape.inv_std, layer.bn.gamma,
                        grad.bn.gamma, grad.bn.beta);
    grad.w.noalias() = tape.patches.transpose() * tape.dz;
    grad.b = tape.dz.colwise().sum();

    if (!need_dx) return;
    detail::ensure_shape(tape.dpatches, tape.dz.rows(), layer.w.rows());
    tape.dpatches.noalias() = tape.dz * layer.w.transpose();
    detail::ensure_shape(
        tape.dx, static_cast<Eigen::Index>(batch) * tape.t_len * tape.m_in,
        static_cast<Eigen::Index>(layer.w.rows() / 9));
    detail::col2im(tape.dpatches, batch, tape.t_len, tape.m_in, 3, 3, tape.dx);
  }

  void tconv_forward(const Mat<S>& input, int batch, int t_len, bool train,
                     Mat<S>& patches, Mat<S>& xhat, Mat<S>& inv_std,
                     Mat<S>& relu) {
    detail::im2col(input, batch, t_len, 1, arch_.tconv_kernel, 1, patches);
    detail::ensure_shape(relu, patches.rows(), p_.tconv.w.cols());
    relu.noalias() = patches * p_.tconv.w;
    relu.rowwise() += p_.tconv.b.row(0);
    bn_forward(relu, p_.tconv.bn, xhat, inv_std, train);
    relu = relu.cwiseMax(S(0));
  }

  // Consumes dout in place; returns the input gradient in tconv_dx_.
  void tconv_backward(Mat<S>& dz, int batch, int t_len) {
    const S* relu = tconv_relu_.data();
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < dz.size(); ++i) {
      if (!(relu[i] > S(0))) dz.data()[i] = S(0);
    }
    bn_backward_inplace(dz, tconv_xhat_, tconv_inv_std_, p_.tconv.bn.gamma,
                        g_.tconv.bn.gamma, g_.tconv.bn.beta);
    g_.tconv.w.noalias() = tconv_patches_.transpose() * dz;
    g_.tconv.b = dz.colwise().sum();
    detail::ensure_shape(tconv_dpatches_, dz.rows(), p_.tconv.w.rows());
    tconv_dpatches_.noalias() = dz * p_.tconv.w.transpose();
    detail::ensure_shape(
        tconv_dx_, static_cast<Eigen::Index>(batch) * t_len,
        static_cast<Eigen::Index>(p_.tconv.w.rows() / arch_.tconv_kernel));
    detail::col2im(tconv_dpatches_, batch, t_len, 1, arch_.tconv_kernel, 1,
                   tconv_dx_);
  }

  // Temporal head: mean+max over head_pool frames at head_stride with zero
  // left-padding, flattened to one row per sample.
  Mat<S> local_pool_forward(const Mat<S>& h, int batch, int t_len,
                            MatI& amax) const {
    const int c = static_cast<int>(h.cols());
    const int w_count = arch_.head_windows;
    const int pad = (w_count - 1) * arch_.head_stride + arch_.head_pool - t_len;
    amax = MatI::Constant(static_cast<Eigen::Index>(batch) * w_count, c, -1);
    Mat<S> flat(batch, w_count * 2 * c);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
      for (int w = 0; w < w_count; ++w) {
        const int t0 = w * arch_.head_stride - pad;
        Mat<S> mean = Mat<S>::Zero(1, c);
        Mat<S> mx = Mat<S>::Zero(1, c);  // zero padding participates in max
        for (int k = 0; k < arch_.head_pool; ++k) {
          const int t = t0 + k;
          if (t < 0 || t >= t_len) continue;
          const auto row = h.row(static_cast<Eigen::Index>(b) * t_len + t);
          mean.row(0) += row;
          for (int ch = 0; ch < c; ++ch) {
            if (row(ch) > mx(0, ch)) {
              mx(0, ch) = row(ch);
              amax(static_cast<Eigen::Index>(b) * w_count + w, ch) = t;
            }
          }
        }
        mean /= static_cast<S>(arch_.head_pool);
        flat.block(b, w * 2 * c, 1, c) = mean;
        flat.block(b, w * 2 * c + c, 1, c) = mx;
      }
    }
    return flat;
  }

  Mat<S> local_pool_backward(const Mat<S>& dflat, int batch, int t_len) {
    const int c = arch_.tconv_channels;
    const int w_count = arch_.head_windows;
    const int pad = (w_count - 1) * arch_.head_stride + arch_.head_pool - t_len;
    Mat<S> dh = Mat<S>::Zero(static_cast<Eigen::Index>(batch) * t_len, c);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
      for (int w = 0; w < w_count; ++w) {
        const auto dmean = dflat.block(b, w * 2 * c, 1, c);
        const auto dmax = dflat.block(b, w * 2 * c + c, 1, c);
        const int t0 = w * arch_.head_stride - pad;
        for (int k = 0; k < arch_.head_pool; ++k) {
          const int t = t0 + k;
          if (t < 0 || t >= t_len) continue;
          dh.row(static_cast<Eigen::Index>(b) * t_len + t) +=
              dmean / static_cast<S>(arch_.head_pool);
        }
        for (int ch = 0; ch < c; ++ch) {
          const int t = head_amax_(static_cast<Eigen::Index>(b) * w_count + w, ch);
          if (t >= 0) {
            dh(static_cast<Eigen::Index>(b) * t_len + t, ch) += dmax(0, ch);
          }
        }
      }
    }
    return dh;
  }

  // Scalar head: global mean+max over the sequence.
  Mat<S> global_pool_forward(const Mat<S>& h, int batch, int t_len,
                             MatI& amax) const {
    const int c = static_cast<int>(h.cols());
    amax = MatI::Zero(batch, c);
    Mat<S> flat(batch, 2 * c);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
      const auto block = h.middleRows(static_cast<Eigen::Index>(b) * t_len, t_len);
      flat.block(b, 0, 1, c) = block.colwise().mean();
      for (int ch = 0; ch < c; ++ch) {
        Eigen::Index arg = 0;
        block.col(ch).maxCoeff(&arg);
        amax(b, ch) = static_cast<int>(arg);
        flat(b, c + ch) = block(arg, ch);
      }
    }
    return flat;
  }

  Mat<S> global_pool_backward(const Mat<S>& dflat, int batch, int t_len) {
    const int c = arch_.tconv_channels;
    Mat<S> dh = Mat<S>::Zero(static_cast<Eigen::Index>(batch) * t_len, c);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
      const auto dmean = dflat.block(b, 0, 1, c);
      for (int t = 0; t < t_len; ++t) {
        dh.row(static_cast<Eigen::Index>(b) * t_len + t) +=
            dmean / static_cast<S>(t_len);
      }
      for (int ch = 0; ch < c; ++ch) {
        dh(static_cast<Eigen::Index>(b) * t_len + head_amax_(b, ch), ch) +=
            dflat(b, c + ch);
      }
    }
    return dh;
  }

  ArchSpec arch_;
  Variant variant_;
  int n_frames_;
  int mel_bands_;
  NetParams<S> p_, g_;

  // Training tape; populated only by train-mode forwards and reused across
  // steps so buffers allocate once per training run.
  bool tape_valid_ = false;
  int batch_ = 0;
  std::vector<ConvTape> conv_tapes_;
  Mat<S> tconv_patches_, tconv_xhat_, tconv_inv_std_, tconv_relu_;
  Mat<S> tconv_dpatches_, tconv_dx_;
  MatI head_amax_;
  Mat<S> head_in_;
};

inline constexpr double kProbClip = 1e-7;

// Weighted two-task BCE on probabilities. Probabilities are clipped to
// [1e-7, 1-1e-7]; each task is averaged over the entries with positive mask
// weight, and the tasks combine as alpha * chorus + (1 - alpha) * boundary.
template <class S>
double multitask_loss(const Mat<S>& pc, const Mat<S>& pb, const Mat<S>& tc,
                      const Mat<S>& tb, const Mat<S>& mask, double alpha) {
  auto task = [&](const Mat<S>& p, const Mat<S>& t) {
    double sum = 0.0, count = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double w = static_cast<double>(mask(i, j));
        if (w <= 0.0) continue;
        const double pv = std::min(1.0 - kProbClip,
                                   std::max(kProbClip, static_cast<double>(p(i, j))));
        const double tv = static_cast<double>(t(i, j));
        sum += w * -(tv * std::log(pv) + (1.0 - tv) * std::log(1.0 - pv));
        count += w;
      }
    }
    return count > 0.0 ? sum / count : 0.0;
  };
  return alpha * task(pc, tc) + (1.0 - alpha) * task(pb, tb);
}

// Gradient of multitask_loss w.r.t. the logits feeding the sigmoids.
// Clipped probabilities contribute zero gradient, matching the loss exactly.
template <class S>
void multitask_loss_grad(const Mat<S>& pc, const Mat<S>& pb, const Mat<S>& tc,
                         const Mat<S>& tb, const Mat<S>& mask, double alpha,
                         Mat<S>& d_c, Mat<S>& d_b) {
  auto task = [&](const Mat<S>& p, const Mat<S>& t, double weight, Mat<S>& d) {
    d = Mat<S>::Zero(p.rows(), p.cols());
    double count = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        if (static_cast<double>(mask(i, j)) > 0.0) {
          count += static_cast<double>(mask(i, j));
        }
      }
    }
    if (count <= 0.0) return;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double w = static_cast<double>(mask(i, j));
        if (w <= 0.0) continue;
        const double pv = static_cast<double>(p(i, j));
        if (pv <= kProbClip || pv >= 1.0 - kProbClip) continue;
        d(i, j) = static_cast<S>(
            weight * w * (pv - static_cast<double>(t(i, j))) / count);
      }
    }
  };
  task(pc, tc, alpha, d_c);
  task(pb, tb, 1.0 - alpha, d_b);
}

}  // namespace chorus::net
