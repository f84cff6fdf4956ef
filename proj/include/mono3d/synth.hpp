#pragma once

// Synthetic scenes and an oracle feature backbone.
//
// The oracle writes each object's regression tuple into the feature
// pyramid at the object's keypoint, so that the planted linear head read
// through gather_fuse reproduces the tuple exactly. Component r of the tuple
// lives on level r % 3, channel r / 3; every level therefore carries part of
// the answer and a wrong index mapping on any level corrupts the decode.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mono3d/eval.hpp"
#include "mono3d/geometry.hpp"
#include "mono3d/heatmap.hpp"
#include "mono3d/kitti_io.hpp"
#include "mono3d/litefpn.hpp"
#include "mono3d/losses.hpp"

namespace mono3d {

/// Left color camera projection of KITTI frame 000000.
inline CameraCalib kitti_reference_calib() {
  return CameraCalib({7.215377e+02, 0.0, 6.095593e+02, 4.485728e+01, 0.0, 7.215377e+02, 1.728540e+02, 2.163791e-01, 0.0,
                      0.0, 1.0, 2.745884e-03});
}

/// splitmix64 finalizer; derives independent stream seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct SceneSpec {
  std::uint64_t seed = 0;
  int n_objects = 6;
  double depth_min = 8.0;
  double depth_max = 45.0;
  double lateral_min = -12.0;
  double lateral_max = 12.0;
  /// Relative jitter of each dimension around the class mean.
  double dims_jitter = 0.1;
  double camera_height = 1.65;
  int image_height = 384;
  int image_width = 1280;
  CameraCalib calib = kitti_reference_calib();
  /// Projected centers of two objects never share a cell of this many pixels.
  int min_cell = 16;
  std::vector<Dims> class_mean_dims{{1.63, 1.53, 3.88}};

  void validate() const {
    if (n_objects < 0) throw Error("SceneSpec: n_objects must be non-negative");
    if (!(depth_min > 0.0 && depth_max > depth_min)) throw Error("SceneSpec: empty depth range");
    if (!(lateral_max > lateral_min)) throw Error("SceneSpec: empty lateral range");
    if (!(dims_jitter >= 0.0 && dims_jitter < 1.0)) throw Error("SceneSpec: dims_jitter must be in [0, 1)");
    if (image_height < 16 || image_width < 16) throw Error("SceneSpec: image too small");
    if (min_cell < 1) throw Error("SceneSpec: min_cell must be positive");
    if (class_mean_dims.empty()) throw Error("SceneSpec: no classes");
  }
};

struct SceneObject {
  Box3D box;
  int class_id = 0;
};

struct Scene {
  std::uint64_t seed = 0;
  std::vector<SceneObject> objects;
  CameraCalib calib;
  int image_height = 0;
  int image_width = 0;
};

inline constexpr int kMaxPlacementAttempts = 1000;

/// Deterministic in the seed. Every projected center lies in the image,
/// no two centers share a `min_cell` cell and no two BEV footprints overlap.
inline Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(mix_seed(spec.seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Scene scene{spec.seed, {}, spec.calib, spec.image_height, spec.image_width};
  std::vector<std::pair<long, long>> cells;
  for (int i = 0; i < spec.n_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
      const int cls = static_cast<int>(std::floor(uniform(0.0, static_cast<double>(spec.class_mean_dims.size()))));
      const Dims& mean = spec.class_mean_dims[static_cast<std::size_t>(
          std::min<int>(cls, static_cast<int>(spec.class_mean_dims.size()) - 1))];
      const double j = spec.dims_jitter;
      const Dims dims{mean.h * uniform(1.0 - j, 1.0 + j), mean.w * uniform(1.0 - j, 1.0 + j),
                      mean.l * uniform(1.0 - j, 1.0 + j)};
      const double z = uniform(spec.depth_min, spec.depth_max);
      const double x = uniform(spec.lateral_min, spec.lateral_max);
      const double bottom = spec.camera_height + uniform(-0.1, 0.1);
      const double yaw = uniform(-std::numbers::pi, std::numbers::pi);
      const Box3D box({x, bottom - dims.h / 2.0, z}, dims, yaw);

      const ImagePoint p = project_to_image(box.center(), spec.calib);
      if (!(p.u >= 0.0 && p.u < spec.image_width && p.v >= 0.0 && p.v < spec.image_height)) continue;
      const std::pair<long, long> cell{static_cast<long>(std::floor(p.u / spec.min_cell)),
                                       static_cast<long>(std::floor(p.v / spec.min_cell))};
      if (std::find(cells.begin(), cells.end(), cell) != cells.end()) continue;
      const bool overlaps = std::any_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
        return bev_intersection_area(o.box, box) > 0.0;
      });
      if (overlaps) continue;
      cells.push_back(cell);
      scene.objects.push_back({box, cls});
      placed = true;
    }
    if (!placed) {
      throw Error("generate_scene: could not place object " + std::to_string(i) + " after " +
                  std::to_string(kMaxPlacementAttempts) + " attempts");
    }
  }
  return scene;
}

struct OracleModel {
  /// Channels per pyramid level; at least 3.
  int channels = 4;
  /// Standard deviation of the Gaussian noise added to every feature.
  double feature_noise = 0.0;
  /// Predicted score = clamp(1 - score_slope * |tau noise|_1 + score_jitter * eps, 0, 1).
  double score_slope = 0.5;
  double score_jitter = 0.0;
  double min_overlap = 0.7;
  DecodeStats stats;

  void validate() const {
    if (channels < 3) throw Error("OracleModel: at least 3 channels per level are needed");
    if (!(feature_noise >= 0.0)) throw Error("OracleModel: feature noise must be non-negative");
    stats.validate();
  }
};

inline std::size_t planted_level(std::size_t component) { return component % 3; }
inline std::size_t planted_channel(std::size_t component) { return component / 3; }

/// Head that reads each tuple component from its planted feature; zero bias.
inline RegressionHead planted_head(int channels) {
  if (channels < 3) throw Error("planted_head: at least 3 channels per level are needed");
  const auto d = static_cast<std::size_t>(channels);
  Matrix w(3 * d, RegressionTuple::kSize, 0.0);
  for (std::size_t r = 0; r < RegressionTuple::kSize; ++r) w(planted_level(r) * d + planted_channel(r), r) = 1.0;
  return RegressionHead(std::move(w), std::vector<double>(RegressionTuple::kSize, 0.0));
}

/// A ground-truth object that received a keypoint.
struct GtKeypoint {
  std::size_t object = 0;
  int class_id = 0;
  Pixel pixel;
  RegressionTuple tau;
};

struct OracleOutput {
  Heatmap gt_heatmap;
  Heatmap pred_heatmap;
  FeaturePyramid pyramid;
  std::vector<GtKeypoint> keypoints;  // ordered by object index
  std::vector<std::string> warnings;
};

inline HeatmapShape heatmap_shape_for(const Scene& scene, const DecodeStats& stats, int classes) {
  return {scene.image_height / stats.downsample, scene.image_width / stats.downsample, classes};
}

/// Ground-truth heatmap, score-perturbed predicted heatmap and the planted
/// feature pyramid for a scene. When two objects claim the same cell on any
/// level, the nearer one is kept and a warning is recorded.
inline OracleOutput oracle_pyramid(const Scene& scene, const OracleModel& model) {
  model.validate();
  const DecodeStats& stats = model.stats;
  const int classes = static_cast<int>(stats.class_mean_dims.size());
  const HeatmapShape shape = heatmap_shape_for(scene, stats, classes);
  shape.validate();

  OracleOutput out;
  out.pyramid = FeaturePyramid::zeros(shape.height, shape.width, model.channels);

  // Nearer objects claim cells first.
  std::vector<std::size_t> order(scene.objects.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scene.objects[a].box.center().z < scene.objects[b].box.center().z;
  });

  std::array<std::map<std::pair<int, int>, std::size_t>, 3> claimed;
  std::vector<GtKeypoint> kept;
  std::vector<GaussianSpec> splats;
  for (const std::size_t idx : order) {
    const SceneObject& obj = scene.objects[idx];
    const EncodedBox enc = encode_box(obj.box, obj.class_id, scene.calib, stats);
    if (!shape.contains(obj.class_id, enc.keypoint)) {
      out.warnings.push_back("object " + std::to_string(idx) + " has no keypoint inside the heatmap; skipped");
      continue;
    }
    std::optional<std::size_t> clash;
    for (const PyramidLevel level : kPyramidLevels) {
      const Pixel p = map_index(enc.keypoint, level);
      const auto it = claimed[static_cast<std::size_t>(level)].find({p.u, p.v});
      if (it != claimed[static_cast<std::size_t>(level)].end()) {
        clash = it->second;
        break;
      }
    }
    if (clash) {
      out.warnings.push_back("keypoint collision: object " + std::to_string(idx) + " dropped, nearer object " +
                             std::to_string(*clash) + " kept");
      continue;
    }
    for (const PyramidLevel level : kPyramidLevels) {
      const Pixel p = map_index(enc.keypoint, level);
      claimed[static_cast<std::size_t>(level)][{p.u, p.v}] = idx;
      auto feat = out.pyramid.level(level).at(p);
      for (std::size_t r = 0; r < RegressionTuple::kSize; ++r) {
        if (planted_level(r) == static_cast<std::size_t>(level)) feat[planted_channel(r)] = enc.tau[r];
      }
    }
    const auto bb = project_bbox(obj.box, scene.calib, std::make_pair(scene.image_height, scene.image_width));
    const double bh = std::max(bb[3] - bb[1], 1.0) / stats.downsample;
    const double bw = std::max(bb[2] - bb[0], 1.0) / stats.downsample;
    splats.push_back({enc.keypoint, sigma_from_radius(gaussian_radius(bh, bw, model.min_overlap)), obj.class_id});
    kept.push_back({idx, obj.class_id, enc.keypoint, enc.tau});
  }
  std::sort(kept.begin(), kept.end(), [](const GtKeypoint& a, const GtKeypoint& b) { return a.object < b.object; });
  out.keypoints = std::move(kept);
  out.gt_heatmap = encode_heatmap(splats, shape);

  // Same standard normals for every noise level, so noise scales linearly.
  std::mt19937_64 noise_rng(mix_seed(scene.seed ^ 0xF3A7ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const PyramidLevel level : kPyramidLevels) {
    for (double& x : out.pyramid.level(level).data()) x += model.feature_noise * normal(noise_rng);
  }

  std::mt19937_64 score_rng(mix_seed(scene.seed ^ 0x5C0BEULL));
  std::vector<double> pred = out.gt_heatmap.values();
  if (!out.keypoints.empty()) {
    KeypointSet kps;
    for (const auto& k : out.keypoints) kps.push_back({k.class_id, k.pixel, 1.0});
    const Matrix readout = regress(gather_fuse(out.pyramid, kps), planted_head(model.channels));
    for (std::size_t i = 0; i < out.keypoints.size(); ++i) {
      double err = 0.0;
      for (std::size_t r = 0; r < RegressionTuple::kSize; ++r) err += std::abs(readout(i, r) - out.keypoints[i].tau[r]);
      const double eps = normal(score_rng);
      const double score = std::clamp(1.0 - model.score_slope * err + model.score_jitter * eps, 0.0, 1.0);
      pred[out.gt_heatmap.flat_index(out.keypoints[i].class_id, out.keypoints[i].pixel)] = score;
    }
  }
  out.pred_heatmap = Heatmap(shape, std::move(pred));
  return out;
}

inline std::vector<GroundTruth> scene_ground_truths(const Scene& scene, const std::vector<std::string>& class_names,
                                                    int frame) {
  std::vector<GroundTruth> gts;
  for (const auto& obj : scene.objects) {
    GroundTruth gt;
    gt.box = obj.box;
    gt.cls = class_names.at(static_cast<std::size_t>(obj.class_id));
    const auto bb = project_bbox(obj.box, scene.calib, std::make_pair(scene.image_height, scene.image_width));
    gt.bbox_height = bb[3] - bb[1];
    gt.frame = frame;
    gts.push_back(std::move(gt));
  }
  return gts;
}

struct PipelineConfig {
  std::size_t k = 100;
  DecodeStats stats;
  IouCriterion criterion = IouCriterion::k3d;
  double iou_threshold = 0.7;
  /// Candidates scoring at or below this are dropped after top-K.
  double score_threshold = 0.0;
  IndexRounding rounding = IndexRounding::kFloor;
  std::vector<std::string> class_names{"Car"};
  Stratum stratum = std::nullopt;
};

struct PipelineResult {
  KeypointSet keypoints;
  Matrix regression;
  std::vector<Detection> detections;
  std::vector<GroundTruth> ground_truths;
  FrameMatch match;
};

/// topk -> map_indices -> gather_fuse -> regress -> decode_box -> match.
inline PipelineResult run_pipeline(const Scene& scene, const OracleOutput& oracle, const RegressionHead& head,
                                   const PipelineConfig& cfg, int frame = 0) {
  PipelineResult res;
  for (const auto& kp : topk(oracle.pred_heatmap, cfg.k)) {
    if (kp.score > cfg.score_threshold) res.keypoints.push_back(kp);
  }
  res.regression = regress(gather_fuse(oracle.pyramid, res.keypoints, cfg.rounding), head);
  for (std::size_t i = 0; i < res.keypoints.size(); ++i) {
    const auto& kp = res.keypoints[i];
    const RegressionTuple tau = RegressionTuple::from_span(res.regression.row(i));
    try {
      res.detections.push_back({decode_box(tau, kp.pixel, kp.class_id, scene.calib, cfg.stats),
                                cfg.class_names.at(static_cast<std::size_t>(kp.class_id)), kp.score, frame});
    } catch (const Error&) {
      // Boxes that cannot be decoded (non-positive depth, overflowing dims) are not emitted.
    }
  }
  res.ground_truths = scene_ground_truths(scene, cfg.class_names, frame);
  res.match = match_frame(res.detections, res.ground_truths, cfg.criterion, cfg.iou_threshold, cfg.stratum);
  return res;
}

enum class RegressionLossKind { kL1, kAttention };

struct TrainConfig {
  RegressionLossKind loss = RegressionLossKind::kL1;
  int epochs = 200;
  double step_size = 0.5;
  /// Step size is multiplied by this after every epoch.
  double step_decay = 0.95;
  AttentionParams attention;
  DecodeStats stats;
};

struct TrainingScene {
  Scene scene;
  OracleOutput oracle;
};

struct TrainResult {
  RegressionHead head;
  std::vector<double> loss_trace;  // mean batch loss per epoch
};

struct HeadGradient {
  double loss = 0.0;
  Matrix weights;
  std::vector<double> bias;
};

/// Loss and gradient w.r.t. the head for one scene's ground-truth keypoints.
inline HeadGradient head_gradient(const TrainingScene& ts, const RegressionHead& head, const TrainConfig& cfg) {
  const auto& kps = ts.oracle.keypoints;
  KeypointSet set;
  for (const auto& k : kps) set.push_back({k.class_id, k.pixel, 1.0});
  const Embedding emb = gather_fuse(ts.oracle.pyramid, set);

  LossBatch batch;
  batch.pred = regress(emb, head);
  batch.target = Matrix(kps.size(), RegressionTuple::kSize);
  for (std::size_t i = 0; i < kps.size(); ++i) {
    std::copy(kps[i].tau.values.begin(), kps[i].tau.values.end(), batch.target.row(i).begin());
  }

  LossValue lv;
  if (cfg.loss == RegressionLossKind::kL1) {
    lv = l1_reg_loss(batch);
  } else {
    std::vector<ClassPixel> idx;
    std::vector<Pixel> pixels;
    std::vector<int> classes;
    std::vector<Box3D> boxes;
    for (const auto& k : kps) {
      idx.push_back({k.class_id, k.pixel});
      pixels.push_back(k.pixel);
      classes.push_back(k.class_id);
      boxes.push_back(ts.scene.objects[k.object].box);
    }
    batch.scores = sample_scores(ts.oracle.pred_heatmap, idx);
    batch.ious = localization_ious(batch.pred, pixels, classes, boxes, ts.scene.calib, cfg.stats);
    lv = attention_loss(batch, attention_weights(batch, cfg.attention));
  }

  HeadGradient g{lv.value, Matrix(head.inputs(), head.outputs(), 0.0), std::vector<double>(head.outputs(), 0.0)};
  const std::size_t n_out = head.outputs();
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const auto e = emb.row(i);
    for (std::size_t r = 0; r < n_out; ++r) {
      const double gr = lv.grad[i * n_out + r];
      if (gr == 0.0) continue;
      g.bias[r] += gr;
      for (std::size_t j = 0; j < e.size(); ++j) g.weights(j, r) += e[j] * gr;
    }
  }
  return g;
}

/// Full-batch-per-scene gradient descent on the head only; features stay fixed.
inline TrainResult toy_train(const std::vector<TrainingScene>& scenes, const RegressionHead& init,
                             const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw Error("toy_train: epochs must be non-negative");
  if (!(cfg.step_size > 0.0)) throw Error("toy_train: step size must be positive");
  TrainResult res{init, {}};
  double step = cfg.step_size;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    std::size_t batches = 0;
    for (const auto& ts : scenes) {
      if (ts.oracle.keypoints.empty()) continue;
      const HeadGradient g = head_gradient(ts, res.head, cfg);
      if (!std::isfinite(g.loss) || g.loss > 1e6) throw Error("step size too large");
      auto& w = res.head.weights.data();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= step * g.weights.data()[j];
      for (std::size_t r = 0; r < res.head.bias.size(); ++r) res.head.bias[r] -= step * g.bias[r];
      total += g.loss;
      ++batches;
    }
    res.loss_trace.push_back(batches ? total / static_cast<double>(batches) : 0.0);
    step *= cfg.step_decay;
  }
  return res;
}

}  // namespace mono3d
