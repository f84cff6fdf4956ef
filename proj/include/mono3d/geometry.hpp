#pragma once

// Oriented 3D boxes in the camera frame, KITTI-style camera projection,
// the 8-value regression tuple codec and rotated-box IoU (BEV and 3D).
//
// Camera frame: x right, y down, z forward. Box dimensions are stored as
// (h, w, l) and yaw rotates about the camera y axis; at yaw 0 the length
// runs along +x.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <tuple>
#include <vector>

#include "mono3d/core.hpp"

namespace mono3d {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Box extent in meters, in KITTI order (height, width, length).
struct Dims {
  double h = 0.0;
  double w = 0.0;
  double l = 0.0;

  friend bool operator==(const Dims&, const Dims&) = default;
};

struct ImagePoint {
  double u = 0.0;
  double v = 0.0;
};

/// Maps an angle to (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::remainder(a, kTwoPi);
  if (r <= -std::numbers::pi) r += kTwoPi;
  if (r > std::numbers::pi) r -= kTwoPi;
  return r;
}

/// Oriented 3D box; `center` is the geometric center (not KITTI's bottom center).
///
/// Zero extents are accepted and make the box degenerate; IoU treats a
/// degenerate box as overlapping nothing except an identical copy of itself.
class Box3D {
 public:
  Box3D() = default;
  Box3D(Vec3 center, Dims dims, double yaw) : center_(center), dims_(dims), yaw_(normalize_angle(yaw)) {
    const bool finite = std::isfinite(center.x) && std::isfinite(center.y) && std::isfinite(center.z) &&
                        std::isfinite(dims.h) && std::isfinite(dims.w) && std::isfinite(dims.l) &&
                        std::isfinite(yaw);
    if (!finite) throw Error("Box3D: non-finite field");
    if (dims.h < 0.0 || dims.w < 0.0 || dims.l < 0.0) throw Error("Box3D: negative dimension");
  }

  const Vec3& center() const { return center_; }
  const Dims& dims() const { return dims_; }
  double yaw() const { return yaw_; }

  double bev_area() const { return dims_.w * dims_.l; }
  double volume() const { return dims_.h * dims_.w * dims_.l; }
  bool is_degenerate() const { return !(dims_.h > 0.0 && dims_.w > 0.0 && dims_.l > 0.0); }

  friend bool operator==(const Box3D&, const Box3D&) = default;

 private:
  Vec3 center_{};
  Dims dims_{1.0, 1.0, 1.0};
  double yaw_ = 0.0;
};

/// 3x4 projection matrix with KITTI P2 semantics: [u v 1]^T ~ P [x y z 1]^T.
class CameraCalib {
 public:
  CameraCalib() : CameraCalib(std::array<double, 12>{700, 0, 600, 0, 0, 700, 180, 0, 0, 0, 1, 0}) {}

  explicit CameraCalib(const std::array<double, 12>& p) : p_(p) {
    for (double x : p_) {
      if (!std::isfinite(x)) throw Error("CameraCalib: non-finite entry");
    }
    if (p_[8] != 0.0 || p_[9] != 0.0 || p_[10] != 1.0) {
      throw Error("CameraCalib: intrinsic bottom row must be (0, 0, 1)");
    }
    if (!(fu() > 0.0) || !(fv() > 0.0)) throw Error("CameraCalib: focal lengths must be positive");
  }

  static CameraCalib from_intrinsics(double fu, double fv, double cu, double cv) {
    return CameraCalib({fu, 0, cu, 0, 0, fv, cv, 0, 0, 0, 1, 0});
  }

  double operator()(int r, int c) const { return p_[static_cast<std::size_t>(r * 4 + c)]; }
  const std::array<double, 12>& matrix() const { return p_; }

  double fu() const { return p_[0]; }
  double fv() const { return p_[5]; }
  double cu() const { return p_[2]; }
  double cv() const { return p_[6]; }

  friend bool operator==(const CameraCalib&, const CameraCalib&) = default;

 private:
  std::array<double, 12> p_;
};

inline ImagePoint project_to_image(const Vec3& point, const CameraCalib& calib) {
  if (!(point.z > 0.0)) throw Error("point behind camera");
  const auto& P = calib;
  const double u = P(0, 0) * point.x + P(0, 1) * point.y + P(0, 2) * point.z + P(0, 3);
  const double v = P(1, 0) * point.x + P(1, 1) * point.y + P(1, 2) * point.z + P(1, 3);
  const double w = point.z + P(2, 3);
  if (!(w > 0.0)) throw Error("point behind camera");
  return {u / w, v / w};
}

/// Inverse of project_to_image for a known depth z.
inline Vec3 back_project(const ImagePoint& pixel, double z, const CameraCalib& calib) {
  const auto& P = calib;
  const double w = z + P(2, 3);
  const double a11 = P(0, 0), a12 = P(0, 1), a21 = P(1, 0), a22 = P(1, 1);
  const double r1 = pixel.u * w - P(0, 2) * z - P(0, 3);
  const double r2 = pixel.v * w - P(1, 2) * z - P(1, 3);
  const double det = a11 * a22 - a12 * a21;
  if (det == 0.0) throw Error("back_project: singular projection");
  return {(r1 * a22 - a12 * r2) / det, (a11 * r2 - a21 * r1) / det, z};
}

/// Encoded 3D parameters attached to one keypoint.
struct RegressionTuple {
  enum Index : std::size_t { kDepth = 0, kOffsetU, kOffsetV, kLogH, kLogW, kLogL, kSinAlpha, kCosAlpha };
  static constexpr std::size_t kSize = 8;

  std::array<double, kSize> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  static RegressionTuple from_span(std::span<const double> v) {
    if (v.size() != kSize) throw Error("RegressionTuple: expected 8 values");
    RegressionTuple t;
    std::copy(v.begin(), v.end(), t.values.begin());
    return t;
  }

  friend bool operator==(const RegressionTuple&, const RegressionTuple&) = default;
};

/// Constants of the regression encoding.
struct DecodeStats {
  double depth_mean = 28.01;
  double depth_std = 16.32;
  int downsample = 4;
  /// Mean dimensions per class id.
  std::vector<Dims> class_mean_dims{{1.63, 1.53, 3.88}};

  void validate() const {
    if (!(depth_std > 0.0)) throw Error("DecodeStats: depth_std must be positive");
    if (downsample < 1) throw Error("DecodeStats: downsample must be a positive integer");
    if (class_mean_dims.empty()) throw Error("DecodeStats: no class mean dims");
    for (const auto& d : class_mean_dims) {
      if (!(d.h > 0.0 && d.w > 0.0 && d.l > 0.0)) throw Error("DecodeStats: mean dims must be positive");
    }
  }

  const Dims& mean_dims(int class_id) const {
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= class_mean_dims.size()) {
      throw Error("DecodeStats: unknown class id " + std::to_string(class_id));
    }
    return class_mean_dims[static_cast<std::size_t>(class_id)];
  }
};

/// Observation angle from global yaw: alpha = yaw - atan2(x, z).
inline double observation_angle(const Box3D& box) {
  return normalize_angle(box.yaw() - std::atan2(box.center().x, box.center().z));
}

inline Box3D decode_box(const RegressionTuple& tau, Pixel keypoint, int class_id, const CameraCalib& calib,
                        const DecodeStats& stats) {
  if (keypoint.u < 0 || keypoint.v < 0) throw Error("decode_box: keypoint outside grid");
  using I = RegressionTuple;
  const double z = stats.depth_mean + tau[I::kDepth] * stats.depth_std;
  if (!(z > 0.0)) throw Error("non-positive decoded depth");
  const double s = stats.downsample;
  const ImagePoint pixel{s * (keypoint.u + tau[I::kOffsetU]), s * (keypoint.v + tau[I::kOffsetV])};
  const Vec3 center = back_project(pixel, z, calib);
  const Dims& mean = stats.mean_dims(class_id);
  const Dims dims{mean.h * std::exp(tau[I::kLogH]), mean.w * std::exp(tau[I::kLogW]),
                  mean.l * std::exp(tau[I::kLogL])};
  const double alpha = std::atan2(tau[I::kSinAlpha], tau[I::kCosAlpha]);
  return Box3D(center, dims, alpha + std::atan2(center.x, center.z));
}

struct EncodedBox {
  Pixel keypoint;
  RegressionTuple tau;
};

/// Exact inverse of decode_box.
inline EncodedBox encode_box(const Box3D& box, int class_id, const CameraCalib& calib, const DecodeStats& stats) {
  using I = RegressionTuple;
  const ImagePoint p = project_to_image(box.center(), calib);
  const double s = stats.downsample;
  const double gu = p.u / s;
  const double gv = p.v / s;
  if (gu < 0.0 || gv < 0.0) throw Error("encode_box: projected center outside image");
  EncodedBox out;
  out.keypoint = {static_cast<int>(std::floor(gu)), static_cast<int>(std::floor(gv))};
  const Dims& mean = stats.mean_dims(class_id);
  if (box.is_degenerate()) throw Error("encode_box: degenerate box");
  const double alpha = observation_angle(box);
  out.tau[I::kDepth] = (box.center().z - stats.depth_mean) / stats.depth_std;
  out.tau[I::kOffsetU] = gu - out.keypoint.u;
  out.tau[I::kOffsetV] = gv - out.keypoint.v;
  out.tau[I::kLogH] = std::log(box.dims().h / mean.h);
  out.tau[I::kLogW] = std::log(box.dims().w / mean.w);
  out.tau[I::kLogL] = std::log(box.dims().l / mean.l);
  out.tau[I::kSinAlpha] = std::sin(alpha);
  out.tau[I::kCosAlpha] = std::cos(alpha);
  return out;
}

/// Clamps every dimension into [lo, hi]; used before IoU on predicted boxes.
inline Box3D clamp_dims(const Box3D& box, double lo = 0.1, double hi = 40.0) {
  const Dims& d = box.dims();
  return Box3D(box.center(), {std::clamp(d.h, lo, hi), std::clamp(d.w, lo, hi), std::clamp(d.l, lo, hi)}, box.yaw());
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

using Polygon = std::vector<Point2>;

/// BEV footprint in the (x, z) plane, counter-clockwise.
inline std::array<Point2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw());
  const double s = std::sin(box.yaw());
  const double hl = box.dims().l / 2.0;
  const double hw = box.dims().w / 2.0;
  const std::array<Point2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Point2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {box.center().x + local[i].x * c + local[i].y * s, box.center().z - local[i].x * s + local[i].y * c};
  }
  return out;
}

inline double polygon_area(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) / 2.0;
}

/// Sutherland-Hodgman clipping of `subject` against the convex CCW polygon `clip`.
inline Polygon clip_convex(Polygon subject, std::span<const Point2> clip, double eps = 1e-9) {
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !subject.empty(); ++e) {
    const Point2 a = clip[e];
    const Point2 b = clip[(e + 1) % m];
    const double ex = b.x - a.x;
    const double ey = b.y - a.y;
    auto side = [&](const Point2& p) { return ex * (p.y - a.y) - ey * (p.x - a.x); };

    Polygon out;
    out.reserve(subject.size() + 2);
    const std::size_t n = subject.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2& cur = subject[i];
      const Point2& nxt = subject[(i + 1) % n];
      const double sc = side(cur);
      const double sn = side(nxt);
      const bool cur_in = sc >= -eps;
      const bool nxt_in = sn >= -eps;
      if (cur_in) out.push_back(cur);
      if (cur_in != nxt_in) {
        const double t = sc / (sc - sn);
        out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
      }
    }
    subject = std::move(out);
  }
  return subject;
}

namespace detail {

inline auto box_key(const Box3D& b) {
  return std::make_tuple(b.center().x, b.center().y, b.center().z, b.dims().h, b.dims().w, b.dims().l, b.yaw());
}

// Orders the pair so that (a, b) and (b, a) run the same arithmetic.
inline std::pair<const Box3D*, const Box3D*> canonical(const Box3D& a, const Box3D& b) {
  if (box_key(b) < box_key(a)) return {&b, &a};
  return {&a, &b};
}

}  // namespace detail

/// Area of the intersection of the two BEV footprints.
inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto [p, q] = detail::canonical(a, b);
  const auto pc = bev_corners(*p);
  const auto qc = bev_corners(*q);
  return polygon_area(clip_convex(Polygon(pc.begin(), pc.end()), qc));
}

inline double iou_bev(const Box3D& a, const Box3D& b) {
  if (a == b) return 1.0;
  const double area_a = a.bev_area();
  const double area_b = b.bev_area();
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  const double inter = bev_intersection_area(a, b);
  const double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Overlap of the vertical extents [y - h/2, y + h/2].
inline double vertical_overlap(const Box3D& a, const Box3D& b) {
  const double top = std::max(a.center().y - a.dims().h / 2.0, b.center().y - b.dims().h / 2.0);
  const double bottom = std::min(a.center().y + a.dims().h / 2.0, b.center().y + b.dims().h / 2.0);
  return std::max(0.0, bottom - top);
}

inline double iou_3d(const Box3D& a, const Box3D& b) {
  if (a == b) return 1.0;
  const double vol_a = a.volume();
  const double vol_b = b.volume();
  if (!(vol_a > 0.0) || !(vol_b > 0.0)) return 0.0;
  const double dy = vertical_overlap(a, b);
  if (!(dy > 0.0)) return 0.0;
  const double inter = bev_intersection_area(a, b) * dy;
  const double uni = vol_a + vol_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

enum class IouCriterion { k3d, kBev };

inline double box_iou(const Box3D& a, const Box3D& b, IouCriterion criterion) {
  return criterion == IouCriterion::k3d ? iou_3d(a, b) : iou_bev(a, b);
}

/// The 8 corners in camera coordinates (bottom face first).
inline std::array<Vec3, 8> box_corners(const Box3D& box) {
  const auto bev = bev_corners(box);
  const double y_bottom = box.center().y + box.dims().h / 2.0;
  const double y_top = box.center().y - box.dims().h / 2.0;
  std::array<Vec3, 8> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {bev[i].x, y_bottom, bev[i].y};
    out[i + 4] = {bev[i].x, y_top, bev[i].y};
  }
  return out;
}

}  // namespace mono3d
