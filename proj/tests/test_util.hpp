#pragma once

// Shared test helpers: the miniature model configuration used by the
// gradient oracle and a finite-difference gradient checker that works on
// any scalar instantiation of the network.

#include <cmath>
#include <string>
#include <vector>

#include "chorus/net/core.hpp"
#include "chorus/network.hpp"
#include "chorus/rng.hpp"

namespace testutil {

// Miniature config: N = 36 input frames, D = 8 mel bands, two spectral conv
// blocks, small temporal conv and head. Big enough to exercise every layer
// type, small enough for elementwise finite differences.
inline chorus::ModelConfig mini_config(chorus::Variant variant,
                                       uint64_t seed = 1) {
  chorus::ModelConfig cfg;
  cfg.variant = variant;
  cfg.n_frames = 36;
  cfg.mel_bands = 8;
  cfg.batch_size = 4;
  cfg.seed = seed;
  cfg.arch.input_pool = 6;
  cfg.arch.blocks = {{4, 4}, {6, 0}};
  cfg.arch.tconv_kernel = 3;
  cfg.arch.tconv_channels = 8;
  cfg.arch.head_pool = 4;
  cfg.arch.head_stride = 2;
  cfg.arch.head_windows = 3;
  return cfg;
}

// Moves every BN shift away from the ReLU hinge. Used to condition the
// gradient-check point: batch statistics renormalize pre-activations onto
// the hinge, and an h-interval containing a hinge has no valid central
// difference. The shift leaves a few percent of units on the dead branch,
// so both ReLU paths stay exercised.
template <class S>
void shift_bn_beta(chorus::net::Network<S>& net, double delta) {
  net.params().visit(
      [&](const std::string& name, chorus::net::Mat<S>& m, bool) {
        if (name.ends_with(".bn.beta")) m.array() += static_cast<S>(delta);
      });
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int checked = 0;
  int skipped = 0;  // elements whose FD interval straddles a ReLU/max hinge

  double valid_fraction() const {
    const int total = checked + skipped;
    return total > 0 ? static_cast<double>(checked) / total : 0.0;
  }
};

// Central finite differences against the analytic gradients for every
// trainable parameter, rel = |ga - gn| / max(|ga|, |gn|, 1e-6) < 1e-3 at
// h = 1e-4. Batch-norm keeps pre-activations centered on the ReLU hinge, so
// a few FD intervals inevitably contain a hinge crossing; there the central
// difference is not a derivative estimate at all (it averages two slopes).
// Those elements are detected by comparing against the half-step estimate
// (they agree to O(h^2) on smooth stretches) and reported as skipped; the
// caller asserts the skip fraction stays negligible.
template <class S>
GradCheckResult gradient_check(chorus::net::Network<S>& net, double alpha,
                               int batch, uint64_t data_seed,
                               double h = 1e-4) {
  using Mat = chorus::net::Mat<S>;
  chorus::SplitMix64 rng(data_seed);

  const int n = net.n_frames();
  const int d = net.mel_bands();
  const int out = net.out_len();
  Mat x(batch * n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x.data()[i] = static_cast<S>(rng.uniform(-2.0, 2.0));
  }
  Mat tc(batch, out), tb(batch, out), mask(batch, out);
  for (Eigen::Index i = 0; i < tc.size(); ++i) {
    tc.data()[i] = static_cast<S>(rng.uniform());
    tb.data()[i] = static_cast<S>(rng.uniform());
    // A sprinkling of zero-weight entries exercises the mask path.
    mask.data()[i] = static_cast<S>(rng.uniform() < 0.15 ? 0.0 : 1.0);
  }

  auto loss_at = [&]() {
    auto fwd = net.forward(x, batch, /*train=*/true);
    return chorus::net::multitask_loss(fwd.chorus, fwd.boundary, tc, tb, mask,
                                       alpha);
  };

  // Analytic pass.
  auto fwd = net.forward(x, batch, /*train=*/true);
  Mat d_c, d_b;
  chorus::net::multitask_loss_grad(fwd.chorus, fwd.boundary, tc, tb, mask,
                                   alpha, d_c, d_b);
  net.backward(d_c, d_b);

  std::vector<Mat*> param_mats, grad_mats;
  std::vector<std::string> names;
  std::vector<uint8_t> trainable;
  net.params().visit([&](const std::string& name, Mat& m, bool t) {
    param_mats.push_back(&m);
    names.push_back(name);
    trainable.push_back(t ? 1 : 0);
  });
  net.grads().visit(
      [&](const std::string&, Mat& m, bool) { grad_mats.push_back(&m); });

  GradCheckResult result;
  for (size_t p = 0; p < param_mats.size(); ++p) {
    if (!trainable[p]) continue;
    Mat& theta = *param_mats[p];
    const Mat analytic = *grad_mats[p];  // copied: later backwards overwrite
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const S saved = theta.data()[k];
      auto fd = [&](double step) {
        theta.data()[k] = saved + static_cast<S>(step);
        const double up = loss_at();
        theta.data()[k] = saved - static_cast<S>(step);
        const double down = loss_at();
        theta.data()[k] = saved;
        return (up - down) / (2.0 * step);
      };
      const double numeric = fd(h);
      const double half_step = fd(h / 2.0);
      const double consistency =
          std::abs(numeric - half_step) /
          std::max({std::abs(numeric), std::abs(half_step), 1e-6});
      if (consistency > 1e-4) {
        ++result.skipped;
        continue;
      }

      const double ga = static_cast<double>(analytic.data()[k]);
      const double rel = std::abs(ga - numeric) /
                         std::max({std::abs(ga), std::abs(numeric), 1e-6});
      ++result.checked;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = names[p] + "[" + std::to_string(k) + "]";
      }
    }
  }
  return result;
}

}  // namespace testutil
