#pragma once

// Lite-FPN: sparse multi-scale feature fusion at candidate keypoints.
//
// Candidate keypoints found on the 1/4 grid are mapped onto the 1/8 and
// 1/16 grids, the D-channel feature vectors at the three mapped positions
// are concatenated into a K x 3D embedding, and a single linear head turns
// each row into a regression tuple. A 1x1 convolution evaluated at K
// positions is exactly this row-wise linear map.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mono3d/core.hpp"
#include "mono3d/heatmap.hpp"

namespace mono3d {

enum class PyramidLevel : int { kQuarter = 0, kEighth = 1, kSixteenth = 2 };

inline constexpr std::array<PyramidLevel, 3> kPyramidLevels{PyramidLevel::kQuarter, PyramidLevel::kEighth,
                                                           PyramidLevel::kSixteenth};

/// Downsampling factor of a level relative to the 1/4 grid.
inline constexpr int level_factor(PyramidLevel level) { return 1 << static_cast<int>(level); }

enum class IndexRounding { kFloor, kNearest };

/// H x W grid of D-channel feature vectors, pixel-major.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    if (height < 1 || width < 1 || channels < 1) throw Error("FeatureGrid: extents must be positive");
    data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * static_cast<std::size_t>(channels),
                 fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool contains(Pixel p) const { return p.u >= 0 && p.u < width_ && p.v >= 0 && p.v < height_; }

  std::span<double> at(Pixel p) {
    return {data_.data() + offset(p), static_cast<std::size_t>(channels_)};
  }
  std::span<const double> at(Pixel p) const {
    return {data_.data() + offset(p), static_cast<std::size_t>(channels_)};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t offset(Pixel p) const {
    return (static_cast<std::size_t>(p.v) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(p.u)) *
           static_cast<std::size_t>(channels_);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Three feature grids at 1/4, 1/8 and 1/16 of the input resolution.
class FeaturePyramid {
 public:
  FeaturePyramid() = default;
  explicit FeaturePyramid(std::array<FeatureGrid, 3> levels) : levels_(std::move(levels)) {
    const auto& base = levels_[0];
    for (std::size_t i = 1; i < 3; ++i) {
      const int f = 1 << i;
      if (levels_[i].height() != base.height() / f || levels_[i].width() != base.width() / f) {
        throw Error("FeaturePyramid: level " + std::to_string(i) + " shape is not the 1/4 shape divided by " +
                    std::to_string(f));
      }
      if (levels_[i].channels() != base.channels()) throw Error("FeaturePyramid: channel count differs between levels");
    }
  }

  /// Zero-filled pyramid for a 1/4 grid of the given size.
  static FeaturePyramid zeros(int height, int width, int channels) {
    return FeaturePyramid({FeatureGrid(height, width, channels), FeatureGrid(height / 2, width / 2, channels),
                           FeatureGrid(height / 4, width / 4, channels)});
  }

  const FeatureGrid& level(PyramidLevel l) const { return levels_[static_cast<std::size_t>(l)]; }
  FeatureGrid& level(PyramidLevel l) { return levels_[static_cast<std::size_t>(l)]; }
  int channels() const { return levels_[0].channels(); }

 private:
  std::array<FeatureGrid, 3> levels_;
};

/// Position on `level` of a pixel of the 1/4 grid.
inline Pixel map_index(Pixel p, PyramidLevel level, IndexRounding rounding = IndexRounding::kFloor) {
  const int f = level_factor(level);
  if (rounding == IndexRounding::kFloor) return {p.u / f, p.v / f};
  return {(p.u + f / 2) / f, (p.v + f / 2) / f};
}

inline std::vector<Pixel> map_indices(const std::vector<Pixel>& pixels, PyramidLevel level,
                                      IndexRounding rounding = IndexRounding::kFloor) {
  std::vector<Pixel> out;
  out.reserve(pixels.size());
  for (const auto& p : pixels) {
    if (p.u < 0 || p.v < 0) throw Error("map_indices: negative pixel index");
    out.push_back(map_index(p, level, rounding));
  }
  return out;
}

/// Linear regression head shared by every keypoint: out = x W + b.
struct RegressionHead {
  Matrix weights;  // inputs x outputs
  std::vector<double> bias;

  RegressionHead() = default;
  RegressionHead(Matrix w, std::vector<double> b) : weights(std::move(w)), bias(std::move(b)) { validate(); }

  std::size_t inputs() const { return weights.rows(); }
  std::size_t outputs() const { return weights.cols(); }

  void validate() const {
    if (bias.size() != weights.cols()) throw Error("RegressionHead: bias length does not match output count");
    for (double x : weights.data()) {
      if (!std::isfinite(x)) throw Error("RegressionHead: non-finite weight");
    }
    for (double x : bias) {
      if (!std::isfinite(x)) throw Error("RegressionHead: non-finite bias");
    }
  }
};

/// Evaluates the head on one feature vector. Both the sparse and the dense
/// paths go through here, so they agree bitwise.
inline void apply_head(std::span<const double> features, const RegressionHead& head, std::span<double> out) {
  const std::size_t n_out = head.outputs();
  for (std::size_t r = 0; r < n_out; ++r) out[r] = head.bias[r];
  for (std::size_t j = 0; j < features.size(); ++j) {
    const double x = features[j];
    const auto w = head.weights.row(j);
    for (std::size_t r = 0; r < n_out; ++r) out[r] += x * w[r];
  }
}

/// K x 3D matrix of concatenated per-level features (finest level first).
using Embedding = Matrix;

inline Embedding gather_fuse(const FeaturePyramid& pyramid, const KeypointSet& keypoints,
                             IndexRounding rounding = IndexRounding::kFloor) {
  const auto d = static_cast<std::size_t>(pyramid.channels());
  Embedding emb(keypoints.size(), 3 * d);
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const Pixel base = keypoints[i].pixel;
    if (!pyramid.level(PyramidLevel::kQuarter).contains(base)) {
      throw Error("gather_fuse: keypoint outside the 1/4 grid");
    }
    auto row = emb.row(i);
    for (const PyramidLevel level : kPyramidLevels) {
      const FeatureGrid& grid = pyramid.level(level);
      Pixel p = map_index(base, level, rounding);
      if (rounding == IndexRounding::kNearest) {
        p.u = std::min(p.u, grid.width() - 1);
        p.v = std::min(p.v, grid.height() - 1);
      }
      if (!grid.contains(p)) throw Error("gather_fuse: mapped index out of bounds");
      const auto feat = grid.at(p);
      std::copy(feat.begin(), feat.end(), row.begin() + static_cast<std::ptrdiff_t>(d * static_cast<std::size_t>(level)));
    }
  }
  return emb;
}

/// K x D matrix of one grid's feature vectors at the keypoints.
inline Matrix gather_level(const FeatureGrid& grid, const KeypointSet& keypoints) {
  const auto d = static_cast<std::size_t>(grid.channels());
  Matrix out(keypoints.size(), d);
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    if (!grid.contains(keypoints[i].pixel)) throw Error("gather_level: keypoint outside grid");
    const auto feat = grid.at(keypoints[i].pixel);
    std::copy(feat.begin(), feat.end(), out.row(i).begin());
  }
  return out;
}

inline Matrix regress(const Embedding& embedding, const RegressionHead& head) {
  if (embedding.cols() != head.inputs()) {
    throw Error("regress: embedding has " + std::to_string(embedding.cols()) + " columns, head expects " +
                std::to_string(head.inputs()));
  }
  Matrix out(embedding.rows(), head.outputs());
  for (std::size_t i = 0; i < embedding.rows(); ++i) apply_head(embedding.row(i), head, out.row(i));
  return out;
}

/// Dense 1x1 convolution: the head applied at every pixel of the grid.
inline FeatureGrid dense_regress(const FeatureGrid& grid, const RegressionHead& head) {
  if (static_cast<std::size_t>(grid.channels()) != head.inputs()) throw Error("dense_regress: channel mismatch");
  FeatureGrid out(grid.height(), grid.width(), static_cast<int>(head.outputs()));
  for (int v = 0; v < grid.height(); ++v) {
    for (int u = 0; u < grid.width(); ++u) apply_head(grid.at({u, v}), head, out.at({u, v}));
  }
  return out;
}

/// Baseline path: dense regression map, then sampled at the keypoints.
inline Matrix dense_regress_then_gather(const FeatureGrid& grid, const RegressionHead& head,
                                        const KeypointSet& keypoints) {
  return gather_level(dense_regress(grid, head), keypoints);
}

}  // namespace mono3d
