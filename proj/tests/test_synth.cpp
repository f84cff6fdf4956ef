#include <gtest/gtest.h>

#include <cmath>

#include "mono3d/synth.hpp"

namespace mono3d {
namespace {

SceneSpec spec_for(std::uint64_t seed, int n = 6) {
  SceneSpec s;
  s.seed = seed;
  s.n_objects = n;
  return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

TEST(GenerateScene, Deterministic) {
  const Scene a = generate_scene(spec_for(17));
  const Scene b = generate_scene(spec_for(17));
  ASSERT_EQ(a.objects.size(), b.objects.size());
  for (std::size_t i = 0; i < a.objects.size(); ++i) EXPECT_EQ(a.objects[i].box, b.objects[i].box);
  const Scene c = generate_scene(spec_for(18));
  EXPECT_FALSE(c.objects[0].box == a.objects[0].box);
}

TEST(GenerateScene, EmptyScene) { EXPECT_TRUE(generate_scene(spec_for(1, 0)).objects.empty()); }

TEST(GenerateScene, CentersInsideImageAndSeparated) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Scene s = generate_scene(spec_for(seed, 8));
    ASSERT_EQ(s.objects.size(), 8u);
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const auto& box = s.objects[i].box;
      const ImagePoint p = project_to_image(box.center(), s.calib);
      ASSERT_GE(p.u, 0.0);
      ASSERT_LT(p.u, s.image_width);
      ASSERT_GE(p.v, 0.0);
      ASSERT_LT(p.v, s.image_height);
      ASSERT_GE(box.center().z, 8.0);
      ASSERT_LE(box.center().z, 45.0);
      for (std::size_t j = 0; j < i; ++j) ASSERT_EQ(iou_bev(box, s.objects[j].box), 0.0);
    }
  }
}

TEST(GenerateScene, ImpossiblePlacementIsAnError) {
  SceneSpec s = spec_for(3, 40);
  s.lateral_min = -0.5;
  s.lateral_max = 0.5;
  s.depth_min = 10.0;
  s.depth_max = 10.5;
  EXPECT_THROW(generate_scene(s), Error);
}

TEST(OraclePyramid, PlantedHeadReproducesTuples) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = generate_scene(spec_for(seed, 8));
    const OracleOutput o = oracle_pyramid(s, {});
    EXPECT_TRUE(o.warnings.empty());
    ASSERT_EQ(o.keypoints.size(), s.objects.size());
    KeypointSet kps;
    Matrix target(o.keypoints.size(), RegressionTuple::kSize);
    for (std::size_t i = 0; i < o.keypoints.size(); ++i) {
      kps.push_back({o.keypoints[i].class_id, o.keypoints[i].pixel, 1.0});
      std::copy(o.keypoints[i].tau.values.begin(), o.keypoints[i].tau.values.end(), target.row(i).begin());
    }
    const Matrix out = regress(gather_fuse(o.pyramid, kps), planted_head(4));
    EXPECT_LE(max_abs_diff(out, target), 1e-9);
  }
}

TEST(OraclePyramid, GroundTruthHeatmapPeaksAtKeypoints) {
  const Scene s = generate_scene(spec_for(5));
  const OracleOutput o = oracle_pyramid(s, {});
  for (const auto& k : o.keypoints) {
    EXPECT_EQ(o.gt_heatmap.at(k.class_id, k.pixel), 1.0);
    EXPECT_EQ(o.pred_heatmap.at(k.class_id, k.pixel), 1.0);
  }
}

TEST(OraclePyramid, EmptyScene) {
  const OracleOutput o = oracle_pyramid(generate_scene(spec_for(2, 0)), {});
  for (double x : o.gt_heatmap.values()) EXPECT_EQ(x, 0.0);
  for (const auto l : kPyramidLevels) {
    for (double x : o.pyramid.level(l).data()) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(OraclePyramid, CollisionKeepsNearerObject) {
  Scene s = generate_scene(spec_for(9, 1));
  const Box3D near = s.objects[0].box;
  // Same line of sight, twice as far: projects to the same keypoint.
  const Vec3 c = near.center();
  s.objects.push_back({Box3D({2 * c.x, 2 * c.y, 2 * c.z}, near.dims(), near.yaw()), 0});
  std::swap(s.objects[0], s.objects[1]);
  const OracleOutput o = oracle_pyramid(s, {});
  ASSERT_EQ(o.keypoints.size(), 1u);
  EXPECT_EQ(o.keypoints[0].object, 1u);
  ASSERT_EQ(o.warnings.size(), 1u);
  EXPECT_NE(o.warnings[0].find("collision"), std::string::npos);
}

double mean_readout_error(double noise) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scene s = generate_scene(spec_for(seed));
    OracleModel m;
    m.feature_noise = noise;
    const OracleOutput o = oracle_pyramid(s, m);
    KeypointSet kps;
    for (const auto& k : o.keypoints) kps.push_back({k.class_id, k.pixel, 1.0});
    const Matrix out = regress(gather_fuse(o.pyramid, kps), planted_head(m.channels));
    for (std::size_t i = 0; i < o.keypoints.size(); ++i) {
      for (std::size_t r = 0; r < RegressionTuple::kSize; ++r) total += std::abs(out(i, r) - o.keypoints[i].tau[r]);
      n += RegressionTuple::kSize;
    }
  }
  return total / static_cast<double>(n);
}

TEST(OraclePyramid, NoiseDegradesMonotonically) {
  const double a = mean_readout_error(0.05);
  const double b = mean_readout_error(0.1);
  const double c = mean_readout_error(0.2);
  EXPECT_EQ(mean_readout_error(0.0), 0.0);
  EXPECT_GE(b, a);
  EXPECT_GE(c, b);
}

TEST(OraclePyramid, NoiseLowersPredictedScores) {
  const Scene s = generate_scene(spec_for(4));
  OracleModel m;
  m.feature_noise = 0.1;
  const OracleOutput o = oracle_pyramid(s, m);
  for (const auto& k : o.keypoints) {
    const double p = o.pred_heatmap.at(k.class_id, k.pixel);
    EXPECT_LT(p, 1.0);
    EXPECT_GE(p, 0.0);
  }
}

TEST(RunPipeline, ZeroNoiseIsExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(spec_for(seed, 8));
    const OracleOutput o = oracle_pyramid(s, {});
    const auto r = run_pipeline(s, o, planted_head(4), {});
    ASSERT_EQ(r.detections.size(), s.objects.size());
    const std::vector<FrameMatch> frames{r.match};
    EXPECT_EQ(average_precision(frames, ApMode::kR11).ap, 100.0);
    EXPECT_EQ(average_precision(frames, ApMode::kR40).ap, 100.0);
    for (const auto& k : o.keypoints) {
      const Box3D& truth = s.objects[k.object].box;
      const auto it = std::find_if(r.keypoints.begin(), r.keypoints.end(),
                                   [&](const Keypoint& kp) { return kp.pixel == k.pixel; });
      ASSERT_NE(it, r.keypoints.end());
      const Box3D& d = r.detections[static_cast<std::size_t>(it - r.keypoints.begin())].box;
      EXPECT_NEAR(d.center().x, truth.center().x, 1e-6);
      EXPECT_NEAR(d.center().y, truth.center().y, 1e-6);
      EXPECT_NEAR(d.center().z, truth.center().z, 1e-6);
      EXPECT_NEAR(d.dims().h / truth.dims().h, 1.0, 1e-6);
      EXPECT_NEAR(d.dims().l / truth.dims().l, 1.0, 1e-6);
      EXPECT_NEAR(normalize_angle(d.yaw() - truth.yaw()), 0.0, 1e-9);
    }
  }
}

TEST(RunPipeline, KZeroGivesNoDetections) {
  const Scene s = generate_scene(spec_for(3));
  const OracleOutput o = oracle_pyramid(s, {});
  PipelineConfig cfg;
  cfg.k = 0;
  const auto r = run_pipeline(s, o, planted_head(4), cfg);
  EXPECT_TRUE(r.detections.empty());
  const std::vector<FrameMatch> frames{r.match};
  EXPECT_EQ(average_precision(frames, ApMode::kR11).ap, 0.0);
}

TEST(RunPipeline, Deterministic) {
  const Scene s = generate_scene(spec_for(8));
  OracleModel m;
  m.feature_noise = 0.3;
  const auto r1 = run_pipeline(s, oracle_pyramid(s, m), planted_head(4), {});
  const auto r2 = run_pipeline(s, oracle_pyramid(s, m), planted_head(4), {});
  EXPECT_EQ(r1.regression, r2.regression);
  EXPECT_EQ(r1.keypoints, r2.keypoints);
}

double mean_ap(double noise) {
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = generate_scene(spec_for(seed));
    OracleModel m;
    m.feature_noise = noise;
    const auto r = run_pipeline(s, oracle_pyramid(s, m), planted_head(4), {});
    const std::vector<FrameMatch> frames{r.match};
    sum += average_precision(frames, ApMode::kR11).ap;
  }
  return sum / 50.0;
}

TEST(RunPipeline, ApDegradesWithNoise) {
  double prev = 101.0;
  for (double noise : {0.0, 0.1, 0.5, 1.0}) {
    const double ap = mean_ap(noise);
    EXPECT_LE(ap, prev) << noise;
    prev = ap;
  }
}

std::vector<TrainingScene> training_set(int n, double noise, double score_slope = 0.5) {
  std::vector<TrainingScene> out;
  OracleModel m;
  m.feature_noise = noise;
  m.score_slope = score_slope;
  for (int i = 0; i < n; ++i) {
    Scene s = generate_scene(spec_for(static_cast<std::uint64_t>(1000 + i)));
    OracleOutput o = oracle_pyramid(s, m);
    out.push_back({std::move(s), std::move(o)});
  }
  return out;
}

RegressionHead zero_head(int channels) {
  return RegressionHead(Matrix(3 * static_cast<std::size_t>(channels), RegressionTuple::kSize, 0.0),
                        std::vector<double>(RegressionTuple::kSize, 0.0));
}

TEST(ToyTrain, PlantedHeadIsStationary) {
  const auto scenes = training_set(5, 0.0);
  for (const auto& ts : scenes) {
    const auto g = head_gradient(ts, planted_head(4), {});
    EXPECT_EQ(g.loss, 0.0);
    double norm = 0.0;
    for (double x : g.weights.data()) norm += x * x;
    for (double x : g.bias) norm += x * x;
    EXPECT_LT(std::sqrt(norm), 1e-6);
  }
}

TEST(ToyTrain, L1ConvergesToPlantedHead) {
  const auto scenes = training_set(20, 0.0);
  const TrainResult r = toy_train(scenes, zero_head(4), {});
  const RegressionHead target = planted_head(4);
  double err = 0.0;
  for (std::size_t i = 0; i < target.weights.data().size(); ++i) {
    err = std::max(err, std::abs(r.head.weights.data()[i] - target.weights.data()[i]));
  }
  EXPECT_LT(err, 1e-3);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
}

TEST(ToyTrain, UniformAttentionWeightsReproduceL1Trajectory) {
  // Zero score slope keeps every score equal; beta 0 then makes all weights 1.
  const auto scenes = training_set(4, 0.05, 0.0);
  TrainConfig l1;
  l1.epochs = 15;
  TrainConfig att = l1;
  att.loss = RegressionLossKind::kAttention;
  att.attention.beta = 0.0;
  const auto a = toy_train(scenes, zero_head(4), l1);
  const auto b = toy_train(scenes, zero_head(4), att);
  EXPECT_EQ(a.head.weights, b.head.weights);
  EXPECT_EQ(a.head.bias, b.head.bias);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(ToyTrain, DivergenceIsReported) {
  const auto scenes = training_set(2, 0.0);
  TrainConfig cfg;
  cfg.step_size = 1e9;
  cfg.epochs = 5;
  try {
    toy_train(scenes, zero_head(4), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "step size too large");
  }
}

}  // namespace
}  // namespace mono3d
