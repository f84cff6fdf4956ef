#pragma once

// Keypoint heatmaps: Gaussian ground-truth splatting and top-K extraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mono3d/core.hpp"

namespace mono3d {

struct HeatmapShape {
  int height = 0;
  int width = 0;
  int classes = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * static_cast<std::size_t>(classes);
  }
  bool contains(int c, Pixel p) const {
    return c >= 0 && c < classes && p.u >= 0 && p.u < width && p.v >= 0 && p.v < height;
  }
  void validate() const {
    if (height < 1 || width < 1 || classes < 1) throw Error("HeatmapShape: all extents must be positive");
  }

  friend bool operator==(const HeatmapShape&, const HeatmapShape&) = default;
};

/// Per-class probability grid, stored channel-major: index c*H*W + v*W + u.
class Heatmap {
 public:
  Heatmap() = default;
  explicit Heatmap(HeatmapShape shape, double fill = 0.0) : shape_(shape) {
    shape_.validate();
    if (!(fill >= 0.0 && fill <= 1.0)) throw Error("Heatmap: values must lie in [0, 1]");
    values_.assign(shape_.size(), fill);
  }
  Heatmap(HeatmapShape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
    shape_.validate();
    if (values_.size() != shape_.size()) throw Error("Heatmap: value count does not match shape");
    for (double x : values_) {
      if (!(x >= 0.0 && x <= 1.0)) throw Error("Heatmap: values must lie in [0, 1]");
    }
  }

  const HeatmapShape& shape() const { return shape_; }

  std::size_t flat_index(int c, Pixel p) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(shape_.height) + static_cast<std::size_t>(p.v)) *
               static_cast<std::size_t>(shape_.width) +
           static_cast<std::size_t>(p.u);
  }

  double at(int c, Pixel p) const { return values_[flat_index(c, p)]; }
  void set(int c, Pixel p, double value) {
    if (!(value >= 0.0 && value <= 1.0)) throw Error("Heatmap: values must lie in [0, 1]");
    values_[flat_index(c, p)] = value;
  }

  const std::vector<double>& values() const { return values_; }

 private:
  HeatmapShape shape_{};
  std::vector<double> values_;
};

struct GaussianSpec {
  Pixel center;
  double sigma = 1.0;
  int class_id = 0;
};

struct Keypoint {
  int class_id = 0;
  Pixel pixel;
  double score = 0.0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

/// Candidates in descending score order.
using KeypointSet = std::vector<Keypoint>;

/// Largest radius r such that a box shifted by r still has IoU >= min_overlap
/// with the original (minimum over the three corner configurations).
inline double gaussian_radius(double height, double width, double min_overlap = 0.7) {
  if (!(height > 0.0 && width > 0.0)) throw Error("gaussian_radius: box size must be positive");
  if (!(min_overlap > 0.0 && min_overlap < 1.0)) throw Error("gaussian_radius: min_overlap must be in (0, 1)");
  const double o = min_overlap;
  const double sum = height + width;
  const double area = height * width;

  // One corner inside, one outside: r^2 - (h+w) r + wh(1-o)/(1+o) = 0, smaller root.
  const double c1 = area * (1.0 - o) / (1.0 + o);
  const double r1 = (sum - std::sqrt(sum * sum - 4.0 * c1)) / 2.0;

  // Both corners inside: 4 r^2 - 2 (h+w) r + (1-o) wh = 0, smaller root.
  const double b2 = 2.0 * sum;
  const double c2 = (1.0 - o) * area;
  const double r2 = (b2 - std::sqrt(b2 * b2 - 16.0 * c2)) / 8.0;

  // Both corners outside: 4o r^2 + 2o (h+w) r + (o-1) wh = 0, positive root.
  const double a3 = 4.0 * o;
  const double b3 = 2.0 * o * sum;
  const double c3 = (o - 1.0) * area;
  const double r3 = (-b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / (2.0 * a3);

  return std::max(0.0, std::min({r1, r2, r3}));
}

/// Standard deviation of the splat for a given radius: (2 floor(r) + 1) / 6.
inline double sigma_from_radius(double radius) { return (2.0 * std::floor(radius) + 1.0) / 6.0; }

/// Max-composed Gaussian splats, one channel per class.
inline Heatmap encode_heatmap(const std::vector<GaussianSpec>& keypoints, HeatmapShape shape) {
  Heatmap hm(shape);
  std::vector<double> values(shape.size(), 0.0);
  for (const auto& k : keypoints) {
    if (!shape.contains(k.class_id, k.center)) throw Error("encode_heatmap: keypoint outside grid");
    if (!(k.sigma > 0.0)) throw Error("encode_heatmap: sigma must be positive");
    const double denom = 2.0 * k.sigma * k.sigma;
    for (int v = 0; v < shape.height; ++v) {
      const double dy = v - k.center.v;
      for (int u = 0; u < shape.width; ++u) {
        const double dx = u - k.center.u;
        double& cell = values[hm.flat_index(k.class_id, {u, v})];
        cell = std::max(cell, std::exp(-(dx * dx + dy * dy) / denom));
      }
    }
  }
  return Heatmap(shape, std::move(values));
}

/// True when the pixel is >= each of its (up to 8) neighbors in the same channel.
inline bool is_local_max(const Heatmap& hm, int c, Pixel p) {
  const auto& s = hm.shape();
  const double x = hm.at(c, p);
  for (int dv = -1; dv <= 1; ++dv) {
    for (int du = -1; du <= 1; ++du) {
      if (du == 0 && dv == 0) continue;
      const Pixel n{p.u + du, p.v + dv};
      if (n.u < 0 || n.u >= s.width || n.v < 0 || n.v >= s.height) continue;
      if (hm.at(c, n) > x) return false;
    }
  }
  return true;
}

/// 3x3 local-maximum suppression, then the K best survivors across all classes.
/// Equal scores are ordered by lower flat index.
inline KeypointSet topk(const Heatmap& hm, std::size_t k) {
  const auto& s = hm.shape();
  struct Candidate {
    double score;
    std::size_t flat;
    Keypoint kp;
  };
  std::vector<Candidate> survivors;
  for (int c = 0; c < s.classes; ++c) {
    for (int v = 0; v < s.height; ++v) {
      for (int u = 0; u < s.width; ++u) {
        const Pixel p{u, v};
        if (is_local_max(hm, c, p)) survivors.push_back({hm.at(c, p), hm.flat_index(c, p), {c, p, hm.at(c, p)}});
      }
    }
  }
  const auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.flat < b.flat;
  };
  const std::size_t n = std::min(k, survivors.size());
  std::partial_sort(survivors.begin(), survivors.begin() + static_cast<std::ptrdiff_t>(n), survivors.end(), better);
  KeypointSet out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(survivors[i].kp);
  return out;
}

struct ClassPixel {
  int class_id = 0;
  Pixel pixel;
};

inline std::vector<double> sample_scores(const Heatmap& hm, const std::vector<ClassPixel>& indices) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (const auto& i : indices) {
    if (!hm.shape().contains(i.class_id, i.pixel)) {
      throw Error("sample_scores: index (" + std::to_string(i.class_id) + ", " + std::to_string(i.pixel.u) + ", " +
                  std::to_string(i.pixel.v) + ") out of bounds");
    }
    out.push_back(hm.at(i.class_id, i.pixel));
  }
  return out;
}

}  // namespace mono3d
