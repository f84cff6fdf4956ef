#include <gtest/gtest.h>

#include <random>

#include "mono3d/eval.hpp"
#include "oracles.hpp"

namespace mono3d {
namespace {

GroundTruth gt_at(double x, double z, double height = 60.0, int occ = 0, double trunc = 0.0) {
  GroundTruth g;
  g.box = Box3D({x, 1.0, z}, {1.5, 1.6, 4.0}, 0.0);
  g.bbox_height = height;
  g.occlusion = occ;
  g.truncation = trunc;
  return g;
}

Detection det_at(const Box3D& b, double score) { return Detection{b, "Car", score, 0}; }

Box3D shifted(const Box3D& b, double dx) {
  return Box3D({b.center().x + dx, b.center().y, b.center().z}, b.dims(), b.yaw());
}

TEST(Difficulty, Examples) {
  EXPECT_EQ(difficulty_of(gt_at(0, 20, 50, 0, 0.0)), Difficulty::kEasy);
  EXPECT_EQ(difficulty_of(gt_at(0, 20, 30, 1, 0.2)), Difficulty::kModerate);
  EXPECT_EQ(difficulty_of(gt_at(0, 20, 10, 0, 0.0)), Difficulty::kIgnored);
  EXPECT_EQ(difficulty_of(gt_at(0, 20, 30, 2, 0.4)), Difficulty::kHard);
  EXPECT_EQ(difficulty_of(gt_at(0, 20, 30, 3, 0.0)), Difficulty::kIgnored);
  EXPECT_EQ(difficulty_of(gt_at(0, 20, 30, 0, 0.6)), Difficulty::kIgnored);
  EXPECT_EQ(difficulty_of(gt_at(0, 20, 40, 0, 0.15)), Difficulty::kEasy);  // thresholds are inclusive
}

TEST(Difficulty, StrataAreCumulative) {
  const auto easy = gt_at(0, 20, 50);
  const auto hard = gt_at(0, 20, 30, 2, 0.4);
  EXPECT_TRUE(counts_in(easy, Difficulty::kModerate));
  EXPECT_TRUE(counts_in(easy, Difficulty::kHard));
  EXPECT_FALSE(counts_in(hard, Difficulty::kModerate));
  EXPECT_TRUE(counts_in(hard, std::nullopt));
  auto dc = easy;
  dc.dont_care = true;
  EXPECT_FALSE(counts_in(dc, std::nullopt));
}

TEST(MatchFrame, SingleExactMatch) {
  const auto g = gt_at(0, 20);
  const std::vector<Detection> dets{det_at(g.box, 0.9)};
  const std::vector<GroundTruth> gts{g};
  const auto m = match_frame(dets, gts, IouCriterion::k3d, 0.7);
  EXPECT_EQ(m.detections[0], DetOutcome::kTruePositive);
  EXPECT_EQ(m.ground_truths[0], GtOutcome::kMatched);
  EXPECT_EQ(m.counted_gt, 1u);
}

TEST(MatchFrame, DuplicateDetectionsHigherScoreWins) {
  const auto g = gt_at(0, 20);
  const std::vector<Detection> dets{det_at(shifted(g.box, 0.05), 0.6), det_at(g.box, 0.8)};
  const std::vector<GroundTruth> gts{g};
  const auto m = match_frame(dets, gts, IouCriterion::k3d, 0.7);
  EXPECT_EQ(m.detections[1], DetOutcome::kTruePositive);
  EXPECT_EQ(m.detections[0], DetOutcome::kFalsePositive);
}

TEST(MatchFrame, LowIouIsFalsePositive) {
  const auto g = gt_at(0, 20);
  // Shift of l/3 along x gives IoU 0.5 exactly.
  const Box3D b = shifted(g.box, 4.0 / 3.0);
  ASSERT_NEAR(iou_3d(b, g.box), 0.5, 1e-12);
  const std::vector<Detection> dets{det_at(b, 0.9)};
  const std::vector<GroundTruth> gts{g};
  const auto m = match_frame(dets, gts, IouCriterion::k3d, 0.7);
  EXPECT_EQ(m.detections[0], DetOutcome::kFalsePositive);
  EXPECT_EQ(m.ground_truths[0], GtOutcome::kMissed);
}

TEST(MatchFrame, MatchToOutOfStratumObjectIsIgnored) {
  const auto hard = gt_at(0, 20, 30, 2, 0.4);
  const std::vector<Detection> dets{det_at(hard.box, 0.9)};
  const std::vector<GroundTruth> gts{hard, gt_at(10, 30)};
  const auto m = match_frame(dets, gts, IouCriterion::k3d, 0.7, Difficulty::kModerate);
  EXPECT_EQ(m.detections[0], DetOutcome::kIgnored);
  EXPECT_EQ(m.ground_truths[0], GtOutcome::kIgnored);
  EXPECT_EQ(m.ground_truths[1], GtOutcome::kMissed);
  EXPECT_EQ(m.counted_gt, 1u);
}

TEST(MatchFrame, DontCareNeverMatches) {
  auto g = gt_at(0, 20);
  g.dont_care = true;
  const std::vector<Detection> dets{det_at(g.box, 0.9)};
  const std::vector<GroundTruth> gts{g};
  const auto m = match_frame(dets, gts, IouCriterion::k3d, 0.7);
  EXPECT_EQ(m.detections[0], DetOutcome::kFalsePositive);
  EXPECT_EQ(m.counted_gt, 0u);
}

TEST(MatchFrame, BevCriterionIgnoresHeight) {
  const auto g = gt_at(0, 20);
  const Box3D raised({0, -5.0, 20}, g.box.dims(), 0.0);
  const std::vector<Detection> dets{det_at(raised, 0.9)};
  const std::vector<GroundTruth> gts{g};
  EXPECT_EQ(match_frame(dets, gts, IouCriterion::kBev, 0.7).detections[0], DetOutcome::kTruePositive);
  EXPECT_EQ(match_frame(dets, gts, IouCriterion::k3d, 0.7).detections[0], DetOutcome::kFalsePositive);
}

FrameMatch fp_then_tp() {
  const auto g = gt_at(0, 20);
  const std::vector<Detection> dets{det_at(shifted(g.box, 10.0), 0.9), det_at(g.box, 0.8)};
  const std::vector<GroundTruth> gts{g};
  return match_frame(dets, gts, IouCriterion::k3d, 0.7);
}

TEST(AveragePrecision, FalsePositiveThenTruePositive) {
  const std::vector<FrameMatch> frames{fp_then_tp()};
  const auto r11 = average_precision(frames, ApMode::kR11);
  EXPECT_EQ(r11.ap, 50.0);
  EXPECT_EQ(r11.n_tp, 1u);
  EXPECT_EQ(r11.n_fp, 1u);
  EXPECT_EQ(average_precision(frames, ApMode::kR40).ap, 50.0);
}

TEST(AveragePrecision, PerfectDetection) {
  const auto g1 = gt_at(0, 20), g2 = gt_at(5, 30);
  const std::vector<Detection> dets{det_at(g1.box, 0.7), det_at(g2.box, 0.4)};
  const std::vector<GroundTruth> gts{g1, g2};
  const std::vector<FrameMatch> frames{match_frame(dets, gts, IouCriterion::k3d, 0.7)};
  EXPECT_EQ(average_precision(frames, ApMode::kR11).ap, 100.0);
  EXPECT_EQ(average_precision(frames, ApMode::kR40).ap, 100.0);
}

TEST(AveragePrecision, NoTruePositives) {
  const auto g = gt_at(0, 20);
  const std::vector<Detection> dets{det_at(shifted(g.box, 10.0), 0.9)};
  const std::vector<GroundTruth> gts{g};
  const std::vector<FrameMatch> frames{match_frame(dets, gts, IouCriterion::k3d, 0.7)};
  EXPECT_EQ(average_precision(frames, ApMode::kR11).ap, 0.0);
  const std::vector<FrameMatch> none{match_frame({}, gts, IouCriterion::k3d, 0.7)};
  EXPECT_EQ(average_precision(none, ApMode::kR40).ap, 0.0);
}

TEST(AveragePrecision, EmptyStratumIsAnError) {
  const std::vector<FrameMatch> frames{match_frame({}, {}, IouCriterion::k3d, 0.7)};
  EXPECT_THROW(average_precision(frames, ApMode::kR11), Error);
}

TEST(AveragePrecision, R11AndR40DifferOnPartialRecall) {
  // Two GTs, one TP at top score: recall 0.5 at precision 1.
  const auto g1 = gt_at(0, 20), g2 = gt_at(5, 30);
  const std::vector<Detection> dets{det_at(g1.box, 0.9)};
  const std::vector<GroundTruth> gts{g1, g2};
  const std::vector<FrameMatch> frames{match_frame(dets, gts, IouCriterion::k3d, 0.7)};
  EXPECT_NEAR(average_precision(frames, ApMode::kR11).ap, 100.0 * 6.0 / 11.0, 1e-12);
  EXPECT_NEAR(average_precision(frames, ApMode::kR40).ap, 100.0 * 20.0 / 40.0, 1e-12);
}

TEST(AveragePrecision, TiedScoresFormOneThreshold) {
  const auto g = gt_at(0, 20);
  const std::vector<Detection> dets{det_at(shifted(g.box, 10.0), 0.5), det_at(g.box, 0.5)};
  const std::vector<GroundTruth> gts{g};
  const std::vector<FrameMatch> frames{match_frame(dets, gts, IouCriterion::k3d, 0.7)};
  const auto r = average_precision(frames, ApMode::kR11);
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_EQ(r.curve[0].precision, 0.5);
  EXPECT_EQ(r.ap, 50.0);
}

TEST(AveragePrecision, MatchesBruteForceOracle) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> n_dets(1, 20), n_gts(1, 8), coin(0, 1);
  std::uniform_int_distribution<int> score_bucket(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const int ng = n_gts(rng);
    const int nd = n_dets(rng);
    std::vector<std::pair<double, bool>> dets;
    int tps = 0;
    FrameMatch f;
    for (int i = 0; i < nd; ++i) {
      const bool tp = coin(rng) && tps < ng;
      tps += tp;
      const double s = score_bucket(rng) / 6.0;  // coarse scores force ties
      dets.emplace_back(s, tp);
      f.detections.push_back(tp ? DetOutcome::kTruePositive : DetOutcome::kFalsePositive);
      f.scores.push_back(s);
    }
    f.counted_gt = static_cast<std::size_t>(ng);
    const std::vector<FrameMatch> frames{f};
    EXPECT_EQ(average_precision(frames, ApMode::kR11).ap, testing::brute_force_ap_r11(dets, ng)) << trial;
  }
}

TEST(RecallSamples, Grids) {
  const auto r11 = recall_samples(ApMode::kR11);
  ASSERT_EQ(r11.size(), 11u);
  EXPECT_EQ(r11.front(), 0.0);
  EXPECT_EQ(r11.back(), 1.0);
  const auto r40 = recall_samples(ApMode::kR40);
  ASSERT_EQ(r40.size(), 40u);
  EXPECT_EQ(r40.front(), 0.025);
  EXPECT_EQ(r40.back(), 1.0);
}

}  // namespace
}  // namespace mono3d
