#pragma once

// KITTI-protocol evaluation: difficulty strata, greedy score-ordered matching
// and interpolated average precision at 11 or 40 recall points.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mono3d/core.hpp"
#include "mono3d/geometry.hpp"

namespace mono3d {

enum class Difficulty { kEasy = 0, kModerate = 1, kHard = 2, kIgnored = 3 };

inline const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kModerate: return "moderate";
    case Difficulty::kHard: return "hard";
    case Difficulty::kIgnored: return "ignored";
  }
  return "ignored";
}

struct Detection {
  Box3D box;
  std::string cls = "Car";
  double score = 0.0;
  int frame = 0;
};

struct GroundTruth {
  Box3D box;
  std::string cls = "Car";
  double bbox_height = 0.0;  // 2D box height in pixels
  int occlusion = 0;
  double truncation = 0.0;
  int frame = 0;
  bool dont_care = false;
};

/// Strictest level whose thresholds the object satisfies.
inline Difficulty difficulty_of(const GroundTruth& gt) {
  struct Level {
    double min_height;
    int max_occlusion;
    double max_truncation;
  };
  static constexpr Level kLevels[] = {{40.0, 0, 0.15}, {25.0, 1, 0.30}, {25.0, 2, 0.50}};
  if (gt.dont_care) return Difficulty::kIgnored;
  for (int i = 0; i < 3; ++i) {
    const Level& l = kLevels[i];
    if (gt.bbox_height >= l.min_height && gt.occlusion >= 0 && gt.occlusion <= l.max_occlusion &&
        gt.truncation <= l.max_truncation) {
      return static_cast<Difficulty>(i);
    }
  }
  return Difficulty::kIgnored;
}

/// Which ground truths count in an evaluation. An empty stratum counts every
/// non-DontCare object; otherwise objects at or below the given level count
/// (moderate includes easy, hard includes both).
using Stratum = std::optional<Difficulty>;

inline bool counts_in(const GroundTruth& gt, const Stratum& stratum) {
  if (gt.dont_care) return false;
  if (!stratum) return true;
  const Difficulty d = difficulty_of(gt);
  return d != Difficulty::kIgnored && static_cast<int>(d) <= static_cast<int>(*stratum);
}

enum class DetOutcome { kTruePositive, kFalsePositive, kIgnored };
enum class GtOutcome { kMatched, kMissed, kIgnored };

/// Per-frame match result; outcome vectors follow the input order.
struct FrameMatch {
  std::vector<DetOutcome> detections;
  std::vector<double> scores;
  std::vector<GtOutcome> ground_truths;
  std::size_t counted_gt = 0;
};

/// Detections are visited by descending score (lower index first on ties);
/// each takes the highest-IoU unmatched ground truth at or above the
/// threshold. A match to a ground truth outside the stratum is ignored.
inline FrameMatch match_frame(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                              IouCriterion criterion, double threshold, const Stratum& stratum = std::nullopt) {
  FrameMatch out;
  out.detections.assign(dets.size(), DetOutcome::kFalsePositive);
  out.scores.reserve(dets.size());
  for (const auto& d : dets) out.scores.push_back(d.score);

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<bool> used(gts.size(), false);
  for (const std::size_t i : order) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j] || gts[j].dont_care) continue;
      const double iou = box_iou(dets[i].box, gts[j].box, criterion);
      if (iou >= threshold && iou > best_iou) {
        best = j;
        best_iou = iou;
      }
    }
    if (!best) continue;
    used[*best] = true;
    out.detections[i] = counts_in(gts[*best], stratum) ? DetOutcome::kTruePositive : DetOutcome::kIgnored;
  }

  out.ground_truths.reserve(gts.size());
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (!counts_in(gts[j], stratum)) {
      out.ground_truths.push_back(GtOutcome::kIgnored);
    } else {
      ++out.counted_gt;
      out.ground_truths.push_back(used[j] ? GtOutcome::kMatched : GtOutcome::kMissed);
    }
  }
  return out;
}

enum class ApMode { kR11, kR40 };

inline const char* to_string(ApMode m) { return m == ApMode::kR11 ? "R11" : "R40"; }

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
};

/// One point per distinct detection score, in decreasing score order.
using PrCurve = std::vector<PrPoint>;

struct ApResult {
  double ap = 0.0;  // percent
  PrCurve curve;
  std::size_t n_gt = 0;
  std::size_t n_tp = 0;
  std::size_t n_fp = 0;
};

inline PrCurve pr_curve(std::span<const FrameMatch> frames, std::size_t* n_gt_out = nullptr) {
  std::vector<std::pair<double, bool>> scored;  // (score, is_tp)
  std::size_t n_gt = 0;
  for (const auto& f : frames) {
    n_gt += f.counted_gt;
    for (std::size_t i = 0; i < f.detections.size(); ++i) {
      if (f.detections[i] == DetOutcome::kIgnored) continue;
      scored.emplace_back(f.scores[i], f.detections[i] == DetOutcome::kTruePositive);
    }
  }
  if (n_gt_out) *n_gt_out = n_gt;
  if (n_gt == 0) throw Error("empty stratum");
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  PrCurve curve;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    (scored[i].second ? tp : fp) += 1;
    const bool last_at_threshold = i + 1 == scored.size() || scored[i + 1].first != scored[i].first;
    if (!last_at_threshold) continue;
    curve.push_back({static_cast<double>(tp) / static_cast<double>(n_gt),
                     static_cast<double>(tp) / static_cast<double>(tp + fp), scored[i].first});
  }
  return curve;
}

/// Interpolated precision: the best precision at any recall >= r.
inline double interpolated_precision(const PrCurve& curve, double r) {
  double best = 0.0;
  for (const auto& p : curve) {
    if (p.recall >= r) best = std::max(best, p.precision);
  }
  return best;
}

/// R11 samples recall 0.0, 0.1, ..., 1.0; R40 samples 1/40, ..., 40/40.
inline std::vector<double> recall_samples(ApMode mode) {
  std::vector<double> out;
  if (mode == ApMode::kR11) {
    for (int i = 0; i <= 10; ++i) out.push_back(i / 10.0);
  } else {
    for (int i = 1; i <= 40; ++i) out.push_back(i / 40.0);
  }
  return out;
}

inline ApResult average_precision(std::span<const FrameMatch> frames, ApMode mode) {
  ApResult res;
  res.curve = pr_curve(frames, &res.n_gt);
  for (const auto& f : frames) {
    res.n_tp += static_cast<std::size_t>(std::count(f.detections.begin(), f.detections.end(), DetOutcome::kTruePositive));
    res.n_fp += static_cast<std::size_t>(std::count(f.detections.begin(), f.detections.end(), DetOutcome::kFalsePositive));
  }
  const auto samples = recall_samples(mode);
  double sum = 0.0;
  for (double r : samples) sum += interpolated_precision(res.curve, r);
  res.ap = 100.0 * sum / static_cast<double>(samples.size());
  return res;
}

}  // namespace mono3d
