#pragma once

// Randomized gradient checks of the focal, L1 and attention losses at smooth
// points (no clamping, no zero residuals).

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mono3d/losses.hpp"

namespace mono3d {

struct GradcheckSuiteConfig {
  int trials = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 11;
  /// Test hook: flips the sign of one analytic gradient coordinate.
  bool inject_sign_error = false;
};

struct LossGradcheck {
  std::string loss;
  int trials = 0;
  double max_rel_error = 0.0;
  int worst_trial = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = false;
};

namespace detail {

// Residuals at least `margin` away from the L1 kink.
inline LossBatch smooth_batch(std::mt19937_64& rng, std::size_t n, double margin) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LossBatch b;
  b.pred = Matrix(n, RegressionTuple::kSize);
  b.target = Matrix(n, RegressionTuple::kSize);
  for (double& x : b.target.data()) x = g(rng);
  for (std::size_t i = 0; i < b.pred.data().size(); ++i) {
    const double d = g(rng);
    b.pred.data()[i] = b.target.data()[i] + (d >= 0.0 ? 1.0 : -1.0) * (margin + std::abs(d));
  }
  for (std::size_t i = 0; i < n; ++i) {
    b.scores.push_back(u(rng));
    b.ious.push_back(u(rng));
  }
  return b;
}

inline void flip_first(LossValue& v) {
  if (!v.grad.empty()) v.grad[0] = v.grad[0] == 0.0 ? 1.0 : -v.grad[0];
}

inline void record(LossGradcheck& acc, const GradcheckResult& r, int trial) {
  if (trial == 0 || r.max_rel_error > acc.max_rel_error) {
    acc.max_rel_error = r.max_rel_error;
    acc.worst_trial = trial;
    acc.worst_index = r.worst_index;
    acc.analytic = r.analytic;
    acc.numeric = r.numeric;
  }
}

}  // namespace detail

inline std::vector<LossGradcheck> run_gradcheck_suite(const GradcheckSuiteConfig& cfg) {
  if (cfg.trials < 1) throw Error("gradcheck: trials must be at least 1");
  if (!(cfg.step > 0.0)) throw Error("gradcheck: step must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> n_dist(1, 16);
  const double margin = 100.0 * cfg.step;

  LossGradcheck focal{"focal"}, l1{"l1"}, attn{"attention"};
  for (int t = 0; t < cfg.trials; ++t) {
    // Focal: 48 pixels, a few exact peaks, predictions inside (0.02, 0.98).
    std::vector<double> gt(48), pred(48);
    std::size_t peaks = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const bool peak = u(rng) < 0.1;
      gt[i] = peak ? 1.0 : 0.95 * u(rng);
      peaks += peak ? 1 : 0;
      pred[i] = 0.02 + 0.96 * u(rng);
    }
    const auto focal_fn = [&](std::span<const double> p) {
      LossValue v = focal_loss(p, gt, {}, std::max<std::size_t>(peaks, 1));
      if (cfg.inject_sign_error) detail::flip_first(v);
      return v;
    };
    detail::record(focal, gradcheck(focal_fn, pred, cfg.step), t);

    const LossBatch b = detail::smooth_batch(rng, n_dist(rng), margin);
    const auto l1_fn = [&](std::span<const double> x) {
      LossBatch c = b;
      std::copy(x.begin(), x.end(), c.pred.data().begin());
      return l1_reg_loss(c);
    };
    detail::record(l1, gradcheck(l1_fn, b.pred.data(), cfg.step), t);

    // Weights are evaluated once and held constant, as in training.
    const auto w = attention_weights(b, {0.5 + 2.0 * u(rng)});
    const auto attn_fn = [&](std::span<const double> x) {
      LossBatch c = b;
      std::copy(x.begin(), x.end(), c.pred.data().begin());
      return attention_loss(c, w);
    };
    detail::record(attn, gradcheck(attn_fn, b.pred.data(), cfg.step), t);
  }
  std::vector<LossGradcheck> out{focal, l1, attn};
  for (auto& r : out) {
    r.trials = cfg.trials;
    r.passed = r.max_rel_error < cfg.tolerance;
  }
  return out;
}

}  // namespace mono3d
