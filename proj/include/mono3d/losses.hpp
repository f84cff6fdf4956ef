#pragma once

// Training losses with analytic gradients:
//   focal keypoint loss, L1 regression loss, score/IoU attention weights,
//   attention-weighted regression loss, total loss, and a central-difference
//   gradient checker.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mono3d/core.hpp"
#include "mono3d/geometry.hpp"
#include "mono3d/heatmap.hpp"

namespace mono3d {

struct FocalParams {
  double alpha = 2.0;
  double beta = 4.0;
  /// Predictions are clamped to [eps, 1 - eps] before taking logs.
  double eps = 1e-7;
};

struct AttentionParams {
  double beta = 0.5;
};

struct LossWeights {
  double lambda = 1.0;
};

/// Scalar loss with its gradient w.r.t. the differentiated input.
struct LossValue {
  double value = 0.0;
  std::vector<double> grad;
};

/// Per-keypoint quantities for the regression losses. Rows of `pred` and
/// `target` are regression tuples; `scores` and `ious` feed the attention weights.
struct LossBatch {
  Matrix pred;
  Matrix target;
  std::vector<double> scores;
  std::vector<double> ious;

  std::size_t size() const { return pred.rows(); }

  void validate() const {
    if (pred.rows() < 1) throw Error("LossBatch: at least one keypoint required");
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
      throw Error("LossBatch: prediction and target shapes differ");
    }
  }

  void validate_attention_inputs() const {
    validate();
    if (scores.size() != size() || ious.size() != size()) throw Error("LossBatch: scores/ious length mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
      if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw Error("LossBatch: score outside [0, 1]");
      if (!(ious[i] >= 0.0 && ious[i] <= 1.0)) throw Error("LossBatch: IoU outside [0, 1]");
    }
  }
};

/// Focal keypoint loss over flat heatmap values; the gradient is w.r.t. `pred`.
inline LossValue focal_loss(std::span<const double> pred, std::span<const double> gt, const FocalParams& params,
                            std::size_t n_keypoints) {
  if (pred.size() != gt.size()) throw Error("focal_loss: shape mismatch");
  if (n_keypoints < 1) throw Error("focal_loss: N must be at least 1");
  const double lo = params.eps;
  const double hi = 1.0 - params.eps;
  const double inv_n = 1.0 / static_cast<double>(n_keypoints);
  const double a = params.alpha;

  LossValue out;
  out.grad.assign(pred.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, lo, hi);
    const bool clamped = raw < lo || raw > hi;
    double term = 0.0;
    double dterm = 0.0;
    if (gt[i] == 1.0) {
      const double q = 1.0 - p;
      term = std::pow(q, a) * std::log(p);
      dterm = -a * std::pow(q, a - 1.0) * std::log(p) + std::pow(q, a) / p;
    } else {
      const double neg = std::pow(1.0 - gt[i], params.beta);
      const double lq = std::log(1.0 - p);
      term = neg * std::pow(p, a) * lq;
      dterm = neg * (a * std::pow(p, a - 1.0) * lq - std::pow(p, a) / (1.0 - p));
    }
    sum += term;
    out.grad[i] = clamped ? 0.0 : -dterm * inv_n;
  }
  out.value = -sum * inv_n;
  return out;
}

inline LossValue focal_loss(const Heatmap& pred, const Heatmap& gt, const FocalParams& params,
                            std::size_t n_keypoints) {
  if (!(pred.shape() == gt.shape())) throw Error("focal_loss: shape mismatch");
  return focal_loss(pred.values(), gt.values(), params, n_keypoints);
}

/// L1 norm of each row residual.
inline std::vector<double> per_keypoint_l1(const LossBatch& batch) {
  batch.validate();
  std::vector<double> out(batch.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double s = 0.0;
    for (std::size_t r = 0; r < batch.pred.cols(); ++r) s += std::abs(batch.pred(i, r) - batch.target(i, r));
    out[i] = s;
  }
  return out;
}

namespace detail {

// (1/N) sum_i w_i * l_i and its gradient w.r.t. pred, row-major.
inline LossValue weighted_l1(const LossBatch& batch, std::span<const double> weights) {
  batch.validate();
  if (weights.size() != batch.size()) throw Error("attention_loss: weights length does not match batch");
  const double n = static_cast<double>(batch.size());
  const auto l = per_keypoint_l1(batch);
  LossValue out;
  out.grad.assign(batch.pred.data().size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    sum += weights[i] * l[i];
    for (std::size_t r = 0; r < batch.pred.cols(); ++r) {
      const double res = batch.pred(i, r) - batch.target(i, r);
      const double sign = res > 0.0 ? 1.0 : (res < 0.0 ? -1.0 : 0.0);
      out.grad[i * batch.pred.cols() + r] = weights[i] * sign / n;
    }
  }
  out.value = sum / n;
  return out;
}

}  // namespace detail

inline LossValue l1_reg_loss(const LossBatch& batch) {
  const std::vector<double> ones(batch.size(), 1.0);
  return detail::weighted_l1(batch, ones);
}

/// w_i = N * softmax_i(P_i + beta * (1 - IoU_i)).
inline std::vector<double> attention_weights(const LossBatch& batch, const AttentionParams& params) {
  batch.validate_attention_inputs();
  if (!(params.beta >= 0.0)) throw Error("attention_weights: beta must be non-negative");
  const std::size_t n = batch.size();
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = batch.scores[i] + params.beta * (1.0 - batch.ious[i]);
  const double m = *std::max_element(e.begin(), e.end());
  double sum = 0.0;
  for (auto& x : e) {
    x = std::exp(x - m);
    sum += x;
  }
  const double scale = static_cast<double>(n);
  for (auto& x : e) x = (x * scale) / sum;
  return e;
}

/// (1/N) sum_i w_i * l_reg_i, with the weights held constant.
inline LossValue attention_loss(const LossBatch& batch, std::span<const double> weights) {
  return detail::weighted_l1(batch, weights);
}

inline double total_loss(double keypoint_loss, double regression_loss, const LossWeights& weights) {
  if (!(weights.lambda >= 0.0)) throw Error("total_loss: lambda must be non-negative");
  return keypoint_loss + weights.lambda * regression_loss;
}

/// 3D IoU between the box decoded from each predicted tuple (at its ground
/// truth keypoint) and the ground-truth box. Decoded dims are clamped to
/// [0.1, 40] m; a non-positive decoded depth scores IoU 0.
inline std::vector<double> localization_ious(const Matrix& pred, const std::vector<Pixel>& keypoints,
                                             const std::vector<int>& class_ids, const std::vector<Box3D>& gt_boxes,
                                             const CameraCalib& calib, const DecodeStats& stats) {
  const std::size_t n = pred.rows();
  if (keypoints.size() != n || class_ids.size() != n || gt_boxes.size() != n) {
    throw Error("localization_ious: length mismatch");
  }
  if (pred.cols() != RegressionTuple::kSize) throw Error("localization_ious: expected 8-value tuples");
  constexpr double kMinDim = 0.1;
  constexpr double kMaxDim = 40.0;
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    RegressionTuple tau = RegressionTuple::from_span(pred.row(i));
    const Dims& mean = stats.mean_dims(class_ids[i]);
    const std::array<double, 3> means{mean.h, mean.w, mean.l};
    for (std::size_t k = 0; k < 3; ++k) {
      auto& t = tau[RegressionTuple::kLogH + k];
      t = std::clamp(t, std::log(kMinDim / means[k]), std::log(kMaxDim / means[k]));
    }
    if (!(stats.depth_mean + tau[RegressionTuple::kDepth] * stats.depth_std > 0.0)) continue;
    const Box3D box = clamp_dims(decode_box(tau, keypoints[i], class_ids[i], calib, stats), kMinDim, kMaxDim);
    out[i] = iou_3d(box, gt_boxes[i]);
  }
  return out;
}

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using DifferentiableFn = std::function<LossValue(std::span<const double>)>;

/// Compares the analytic gradient at `point` with central differences of step h.
/// Relative error per coordinate is |g_fd - g| / max(1, |g|).
inline GradcheckResult gradcheck(const DifferentiableFn& fn, std::span<const double> point, double h) {
  if (!(h > 0.0)) throw Error("gradcheck: step must be positive");
  const LossValue at = fn(point);
  if (!std::isfinite(at.value)) throw Error("gradcheck: non-finite loss at the probe point");
  if (at.grad.size() != point.size()) throw Error("gradcheck: gradient length does not match parameter count");
  std::vector<double> x(point.begin(), point.end());
  GradcheckResult res;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = fn(x).value;
    x[i] = x0 - h;
    const double fm = fn(x).value;
    x[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error("gradcheck: non-finite loss at probe of coordinate " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::abs(numeric - at.grad[i]) / std::max(1.0, std::abs(at.grad[i]));
    if (i == 0 || err > res.max_rel_error) res = {err, i, at.grad[i], numeric};
  }
  return res;
}

}  // namespace mono3d
