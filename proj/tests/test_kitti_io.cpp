#include <gtest/gtest.h>

#include <filesystem>

#include "mono3d/kitti_io.hpp"

namespace mono3d {
namespace {

namespace fs = std::filesystem;

const fs::path kData = MONO3D_TEST_DATA;
const fs::path kSplit = MONO3D_SPLIT_DIR;

constexpr const char* kCarLine = "Car 0.00 0 -1.57 100.0 120.0 200.0 180.0 1.50 1.60 3.80 -2.0 1.7 30.0 -1.64";

std::string parse_error_message(std::string_view line) {
  try {
    parse_label_line(line, 7);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(ParseLabelLine, PositionalFields) {
  const auto l = parse_label_line(kCarLine);
  EXPECT_EQ(l.type, "Car");
  EXPECT_EQ(l.location, (std::array<double, 3>{-2.0, 1.7, 30.0}));
  EXPECT_EQ(l.rotation_y, -1.64);
  EXPECT_EQ(l.dimensions, (std::array<double, 3>{1.5, 1.6, 3.8}));
  EXPECT_EQ(l.bbox, (std::array<double, 4>{100, 120, 200, 180}));
  EXPECT_EQ(l.alpha, -1.57);
  EXPECT_FALSE(l.score.has_value());
}

TEST(ParseLabelLine, ScoreField) {
  const auto l = parse_label_line(std::string(kCarLine) + " 0.95");
  ASSERT_TRUE(l.score.has_value());
  EXPECT_EQ(*l.score, 0.95);
}

TEST(ParseLabelLine, FieldCountErrors) {
  EXPECT_EQ(parse_error_message("Car 0 0 0 1 2 3 4 1 1 1 0 0 10"), "line 7: expected 15 or 16 fields, got 14");
  EXPECT_EQ(parse_error_message(std::string(kCarLine) + " 0.5 0.5"), "line 7: expected 15 or 16 fields, got 17");
}

TEST(ParseLabelLine, NonNumericField) {
  EXPECT_EQ(parse_error_message("Car 0.00 0 -1.57 100.0 abc 200.0 180.0 1.50 1.60 3.80 -2.0 1.7 30.0 -1.64"),
            "line 7: field 'bbox_top' is not a number: 'abc'");
  EXPECT_EQ(parse_error_message("Car 0.00 0.5 -1.57 100.0 120.0 200.0 180.0 1.50 1.60 3.80 -2.0 1.7 30.0 -1.64"),
            "line 7: field 'occluded' is not an integer: '0.5'");
  EXPECT_EQ(parse_error_message("Car 0.00 0 nan 100.0 120.0 200.0 180.0 1.50 1.60 3.80 -2.0 1.7 30.0 -1.64"),
            "line 7: field 'alpha' is not a number: 'nan'");
}

TEST(ParseLabelFile, SkipsBlankLinesAndReportsLineNumbers) {
  const std::string text = std::string(kCarLine) + "\n\n   \n" + kCarLine + "\r\n";
  EXPECT_EQ(parse_label_file(text).size(), 2u);
  try {
    parse_label_file(std::string(kCarLine) + "\n\nCar 1 2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_STREQ(e.what(), "line 3: expected 15 or 16 fields, got 3");
  }
  EXPECT_TRUE(parse_label_file("").empty());
}

TEST(SerializeLabel, TwoDecimalsAndScoreSix) {
  auto l = parse_label_line(kCarLine);
  EXPECT_EQ(serialize_label(l), "Car 0.00 0 -1.57 100.00 120.00 200.00 180.00 1.50 1.60 3.80 -2.00 1.70 30.00 -1.64");
  l.score = 0.953125;
  EXPECT_TRUE(serialize_label(l).ends_with(" 0.953125"));
}

TEST(SerializeDetection, RoundTripWithinFormattingPrecision) {
  const Detection d{Box3D({1.2345, 0.987, 23.456}, {1.531, 1.642, 3.913}, 0.4321), "Tram", 0.953125, 3};
  const auto line = serialize_detection(d, CameraCalib{});
  const auto back = detection_from_label(parse_label_line(line), 3);
  EXPECT_EQ(back.cls, "Tram");
  EXPECT_EQ(back.score, 0.953125);
  EXPECT_NEAR(back.box.center().x, d.box.center().x, 0.005);
  EXPECT_NEAR(back.box.center().z, d.box.center().z, 0.005);
  // The bottom-center y and the height are each rounded; the center is off by at most 0.005 + 0.0025.
  EXPECT_NEAR(back.box.center().y, d.box.center().y, 0.0075);
  EXPECT_NEAR(back.box.dims().h, d.box.dims().h, 0.005);
  EXPECT_NEAR(back.box.dims().l, d.box.dims().l, 0.005);
  EXPECT_NEAR(back.box.yaw(), d.box.yaw(), 0.005);
  const auto l = parse_label_line(line);
  EXPECT_EQ(l.truncated, -1.0);
  EXPECT_EQ(l.occluded, -1);
}

TEST(DetectionFromLabel, RequiresScore) { EXPECT_THROW(detection_from_label(parse_label_line(kCarLine), 0), ParseError); }

TEST(BoxFromLabel, LocationIsBottomCenter) {
  const auto b = box_from_label(parse_label_line(kCarLine));
  EXPECT_DOUBLE_EQ(b.center().y, 1.7 - 0.75);
  const auto l = label_from_box(b, "Car");
  EXPECT_NEAR(l.location[1], 1.7, 1e-15);
  EXPECT_NEAR(l.alpha, normalize_angle(-1.64 - std::atan2(-2.0, 30.0)), 1e-15);
}

TEST(BoxFromLabel, DontCareIsDegenerate) {
  const auto l = parse_label_line("DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10");
  EXPECT_TRUE(l.is_dont_care());
  const auto g = ground_truth_from_label(l, 4);
  EXPECT_TRUE(g.dont_care);
  EXPECT_TRUE(g.box.is_degenerate());
  EXPECT_EQ(g.frame, 4);
}

TEST(ProjectBbox, ContainsProjectedCenter) {
  const CameraCalib calib = CameraCalib::from_intrinsics(700, 700, 600, 180);
  const Box3D b({2, 1, 10}, {1.5, 1.6, 3.9}, 0.3);
  const auto bb = project_bbox(b, calib);
  EXPECT_LT(bb[0], 740.0);
  EXPECT_GT(bb[2], 740.0);
  EXPECT_LT(bb[1], 250.0);
  EXPECT_GT(bb[3], 250.0);
  const auto clipped = project_bbox(Box3D({30, 1, 5}, {1.5, 1.6, 3.9}, 0.0), calib, std::make_pair(375, 1242));
  EXPECT_LE(clipped[2], 1241.0);
}

TEST(ParseCalib, SelectsP2) {
  const auto c = parse_calib("P2: 700 0 600 0 0 700 180 0 0 0 1 0\n");
  EXPECT_EQ(c.fu(), 700);
  EXPECT_EQ(c.cu(), 600);
  EXPECT_EQ(c.cv(), 180);
  const auto d = parse_calib(
      "P0: 1 0 0 0 0 1 0 0 0 0 1 0\nP1: 2 0 0 0 0 2 0 0 0 0 1 0\n"
      "P2: 721.5 0 609.5 44.8 0 721.5 172.8 0.21 0 0 1 0.0027\nP3: 3 0 0 0 0 3 0 0 0 0 1 0\n"
      "R0_rect: 1 0 0 0 1 0 0 0 1\n");
  EXPECT_EQ(d.fu(), 721.5);
  EXPECT_EQ(d(0, 3), 44.8);
}

TEST(ParseCalib, Errors) {
  try {
    parse_calib("");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_STREQ(e.what(), "calib: missing P2 line");
  }
  try {
    parse_calib("P2: 1 2 3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_STREQ(e.what(), "line 1: P2: expected 12 values, got 3");
  }
  EXPECT_THROW(parse_calib("P2: 700 0 600 0 0 700 180 0 0 1 1 0\n"), ParseError);
}

TEST(ParseCalib, SerializeRoundTrip) {
  const CameraCalib c({721.5377, 0, 609.5593, 44.85728, 0, 721.5377, 172.854, 0.2163791, 0, 0, 1, 0.002745884});
  EXPECT_EQ(parse_calib(serialize_calib(c)), c);
}

TEST(Split, ShippedListsValidate) {
  const auto s = load_split(kSplit / "train.txt", kSplit / "val.txt");
  EXPECT_EQ(s.train.size(), 3712u);
  EXPECT_EQ(s.val.size(), 3769u);
}

TEST(Split, RejectsWrongSizesAndOverlap) {
  auto s = load_split(kSplit / "train.txt", kSplit / "val.txt");
  auto bad = s;
  bad.train.pop_back();
  EXPECT_THROW(bad.validate(), ParseError);
  bad = s;
  bad.val[0] = bad.train[0];
  EXPECT_THROW(bad.validate(), ParseError);
  EXPECT_THROW(parse_split("000001\nabc\n"), ParseError);
  EXPECT_THROW(load_split(kSplit / "missing.txt", kSplit / "val.txt"), MissingInputError);
}

TEST(LabelDir, LoadsCorpusInFrameOrder) {
  const auto labels = load_label_dir(kData / "label_corpus");
  ASSERT_EQ(labels.size(), 200u);
  EXPECT_EQ(labels.begin()->first, 0);
  EXPECT_EQ(labels.rbegin()->first, 199);
  EXPECT_THROW(load_label_dir(kData / "no_such_dir"), MissingInputError);
}

TEST(LabelDir, CorpusRoundTripIsIdempotent) {
  for (const auto& [frame, labels] : load_label_dir(kData / "label_corpus")) {
    const std::string once = serialize_label_file(labels);
    const auto reparsed = parse_label_file(once);
    EXPECT_EQ(reparsed, labels) << frame;
    EXPECT_EQ(serialize_label_file(reparsed), once) << frame;
  }
}

TEST(FrameId, OnlyNumericTxtFiles) {
  EXPECT_EQ(frame_id_of("a/000123.txt"), 123);
  EXPECT_FALSE(frame_id_of("a/000123.png").has_value());
  EXPECT_FALSE(frame_id_of("a/readme.txt").has_value());
  EXPECT_EQ(frame_name(42), "000042");
}

}  // namespace
}  // namespace mono3d
