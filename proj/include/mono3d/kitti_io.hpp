#pragma once

// KITTI object label, calibration and split files.
//
// Label line (15 fields, plus an optional 16th score for detections):
//   type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]
// `location` (x, y, z) is the bottom center of the box in camera coordinates.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mono3d/core.hpp"
#include "mono3d/eval.hpp"
#include "mono3d/geometry.hpp"
#include "mono3d/io.hpp"

namespace mono3d {

struct KittiLabel {
  std::string type;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  std::array<double, 4> bbox{};        // left, top, right, bottom
  std::array<double, 3> dimensions{};  // h, w, l
  std::array<double, 3> location{};    // x, y, z (bottom center)
  double rotation_y = 0.0;
  std::optional<double> score;

  bool is_dont_care() const { return type == "DontCare"; }

  friend bool operator==(const KittiLabel&, const KittiLabel&) = default;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string where(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

inline double parse_number(std::string_view tok, std::string_view field, std::size_t line_no) {
  double x = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || !std::isfinite(x)) {
    throw ParseError(where(line_no) + "field '" + std::string(field) + "' is not a number: '" + std::string(tok) +
                     "'");
  }
  return x;
}

inline int parse_integer(std::string_view tok, std::string_view field, std::size_t line_no) {
  const double x = parse_number(tok, field, line_no);
  if (x != std::floor(x) || std::abs(x) > 1e6) {
    throw ParseError(where(line_no) + "field '" + std::string(field) + "' is not an integer: '" + std::string(tok) +
                     "'");
  }
  return static_cast<int>(x);
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    fn(text.substr(pos, end - pos), line_no);
    if (end == text.size()) break;
    pos = end + 1;
  }
}

inline bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace detail

inline KittiLabel parse_label_line(std::string_view line, std::size_t line_no = 1) {
  using detail::parse_number;
  const auto f = detail::split_fields(line);
  if (f.size() != 15 && f.size() != 16) {
    throw ParseError(detail::where(line_no) + "expected 15 or 16 fields, got " + std::to_string(f.size()));
  }
  KittiLabel l;
  l.type = std::string(f[0]);
  l.truncated = parse_number(f[1], "truncated", line_no);
  l.occluded = detail::parse_integer(f[2], "occluded", line_no);
  l.alpha = parse_number(f[3], "alpha", line_no);
  static constexpr std::string_view kBbox[] = {"bbox_left", "bbox_top", "bbox_right", "bbox_bottom"};
  for (std::size_t i = 0; i < 4; ++i) l.bbox[i] = parse_number(f[4 + i], kBbox[i], line_no);
  static constexpr std::string_view kDims[] = {"height", "width", "length"};
  for (std::size_t i = 0; i < 3; ++i) l.dimensions[i] = parse_number(f[8 + i], kDims[i], line_no);
  static constexpr std::string_view kLoc[] = {"location_x", "location_y", "location_z"};
  for (std::size_t i = 0; i < 3; ++i) l.location[i] = parse_number(f[11 + i], kLoc[i], line_no);
  l.rotation_y = parse_number(f[14], "rotation_y", line_no);
  if (f.size() == 16) l.score = parse_number(f[15], "score", line_no);
  return l;
}

/// Parses every non-blank line.
inline std::vector<KittiLabel> parse_label_file(std::string_view text) {
  std::vector<KittiLabel> out;
  detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (!detail::is_blank(line)) out.push_back(parse_label_line(line, no));
  });
  return out;
}

/// 2 decimals for every real field except the score, which gets 6.
inline std::string serialize_label(const KittiLabel& l) {
  std::string s = l.type;
  auto put = [&](double x, int prec) {
    s += ' ';
    s += format_fixed(x, prec);
  };
  put(l.truncated, 2);
  s += ' ';
  s += std::to_string(l.occluded);
  put(l.alpha, 2);
  for (double x : l.bbox) put(x, 2);
  for (double x : l.dimensions) put(x, 2);
  for (double x : l.location) put(x, 2);
  put(l.rotation_y, 2);
  if (l.score) put(*l.score, 6);
  return s;
}

inline std::string serialize_label_file(const std::vector<KittiLabel>& labels) {
  std::string out;
  for (const auto& l : labels) {
    out += serialize_label(l);
    out += '\n';
  }
  return out;
}

/// Box from a label; the center sits h/2 above the bottom-center location.
/// DontCare entries (negative dims) give a degenerate box.
inline Box3D box_from_label(const KittiLabel& l) {
  const double h = std::max(0.0, l.dimensions[0]);
  const double w = std::max(0.0, l.dimensions[1]);
  const double len = std::max(0.0, l.dimensions[2]);
  return Box3D({l.location[0], l.location[1] - h / 2.0, l.location[2]}, {h, w, len}, l.rotation_y);
}

inline GroundTruth ground_truth_from_label(const KittiLabel& l, int frame) {
  GroundTruth gt;
  gt.box = box_from_label(l);
  gt.cls = l.type;
  gt.bbox_height = l.bbox[3] - l.bbox[1];
  gt.occlusion = l.occluded;
  gt.truncation = l.truncated;
  gt.frame = frame;
  gt.dont_care = l.is_dont_care();
  return gt;
}

inline Detection detection_from_label(const KittiLabel& l, int frame) {
  if (!l.score) throw ParseError("detection label for frame " + frame_name(frame) + " has no score field");
  return Detection{box_from_label(l), l.type, *l.score, frame};
}

/// Image-plane bounding rectangle of the projected corners (corners behind
/// the camera are skipped), optionally clipped to the image.
inline std::array<double, 4> project_bbox(const Box3D& box, const CameraCalib& calib,
                                          std::optional<std::pair<int, int>> image_hw = std::nullopt) {
  std::array<double, 4> bb{1e300, 1e300, -1e300, -1e300};
  bool any = false;
  for (const Vec3& c : box_corners(box)) {
    if (!(c.z > 0.0)) continue;
    const ImagePoint p = project_to_image(c, calib);
    bb[0] = std::min(bb[0], p.u);
    bb[1] = std::min(bb[1], p.v);
    bb[2] = std::max(bb[2], p.u);
    bb[3] = std::max(bb[3], p.v);
    any = true;
  }
  if (!any) return {0.0, 0.0, 0.0, 0.0};
  if (image_hw) {
    const double w = image_hw->second - 1;
    const double h = image_hw->first - 1;
    bb = {std::clamp(bb[0], 0.0, w), std::clamp(bb[1], 0.0, h), std::clamp(bb[2], 0.0, w), std::clamp(bb[3], 0.0, h)};
  }
  return bb;
}

/// Label-style fields for a box: observation angle, bottom-center location
/// and (when a calibration is given) the projected 2D rectangle.
inline KittiLabel label_from_box(const Box3D& box, const std::string& type,
                                 const std::optional<CameraCalib>& calib = std::nullopt,
                                 std::optional<std::pair<int, int>> image_hw = std::nullopt) {
  KittiLabel l;
  l.type = type;
  l.alpha = observation_angle(box);
  if (calib) l.bbox = project_bbox(box, *calib, image_hw);
  l.dimensions = {box.dims().h, box.dims().w, box.dims().l};
  l.location = {box.center().x, box.center().y + box.dims().h / 2.0, box.center().z};
  l.rotation_y = box.yaw();
  return l;
}

/// Detection in the 16-field result format (truncated and occluded are -1).
inline KittiLabel label_from_detection(const Detection& det, const std::optional<CameraCalib>& calib = std::nullopt,
                                       std::optional<std::pair<int, int>> image_hw = std::nullopt) {
  KittiLabel l = label_from_box(det.box, det.cls, calib, image_hw);
  l.truncated = -1.0;
  l.occluded = -1;
  l.score = det.score;
  return l;
}

inline std::string serialize_detection(const Detection& det, const std::optional<CameraCalib>& calib = std::nullopt,
                                       std::optional<std::pair<int, int>> image_hw = std::nullopt) {
  return serialize_label(label_from_detection(det, calib, image_hw));
}

/// Reads the P2 projection matrix out of a KITTI calib file.
inline CameraCalib parse_calib(std::string_view text) {
  std::optional<CameraCalib> found;
  detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) return;
    const auto key = detail::split_fields(line.substr(0, colon));
    if (key.size() != 1 || key[0] != "P2") return;
    const auto vals = detail::split_fields(line.substr(colon + 1));
    if (vals.size() != 12) {
      throw ParseError(detail::where(no) + "P2: expected 12 values, got " + std::to_string(vals.size()));
    }
    std::array<double, 12> p{};
    for (std::size_t i = 0; i < 12; ++i) p[i] = detail::parse_number(vals[i], "P2", no);
    try {
      found = CameraCalib(p);
    } catch (const Error& e) {
      throw ParseError(detail::where(no) + e.what());
    }
  });
  if (!found) throw ParseError("calib: missing P2 line");
  return *found;
}

inline std::string serialize_calib(const CameraCalib& calib) {
  std::string s = "P2:";
  for (double x : calib.matrix()) {
    s += ' ';
    s += format_shortest(x);
  }
  s += '\n';
  return s;
}

/// Frame ids, one zero-padded id per line.
inline std::vector<int> parse_split(std::string_view text) {
  std::vector<int> ids;
  detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (detail::is_blank(line)) return;
    const auto f = detail::split_fields(line);
    if (f.size() != 1) throw ParseError(detail::where(no) + "expected one frame id");
    int id = 0;
    const auto res = std::from_chars(f[0].data(), f[0].data() + f[0].size(), id);
    if (res.ec != std::errc{} || res.ptr != f[0].data() + f[0].size() || id < 0) {
      throw ParseError(detail::where(no) + "invalid frame id '" + std::string(f[0]) + "'");
    }
    ids.push_back(id);
  });
  return ids;
}

struct SplitSpec {
  std::vector<int> train;
  std::vector<int> val;

  static constexpr std::size_t kTrainSize = 3712;
  static constexpr std::size_t kValSize = 3769;
  static constexpr int kFrameCount = 7481;

  /// Checks the published sizes, disjointness and that together they cover
  /// every training frame.
  void validate() const {
    if (train.size() != kTrainSize) {
      throw ParseError("split: expected " + std::to_string(kTrainSize) + " train ids, got " +
                       std::to_string(train.size()));
    }
    if (val.size() != kValSize) {
      throw ParseError("split: expected " + std::to_string(kValSize) + " val ids, got " + std::to_string(val.size()));
    }
    std::set<int> all(train.begin(), train.end());
    if (all.size() != train.size()) throw ParseError("split: duplicate train id");
    for (int id : val) {
      if (!all.insert(id).second) throw ParseError("split: id " + frame_name(id) + " is duplicated or in both sets");
    }
    if (all.size() != static_cast<std::size_t>(kFrameCount) || *all.begin() != 0 || *all.rbegin() != kFrameCount - 1) {
      throw ParseError("split: ids do not cover frames 000000..007480");
    }
  }
};

inline SplitSpec load_split(const std::filesystem::path& train_file, const std::filesystem::path& val_file) {
  SplitSpec s{parse_split(read_text_file(train_file)), parse_split(read_text_file(val_file))};
  s.validate();
  return s;
}

/// Frame id of a "NNNNNN.txt" file name, if it is one.
inline std::optional<int> frame_id_of(const std::filesystem::path& p) {
  if (p.extension() != ".txt") return std::nullopt;
  const std::string stem = p.stem().string();
  if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  int id = 0;
  std::from_chars(stem.data(), stem.data() + stem.size(), id);
  return id;
}

/// All label files of a directory, keyed (and hence ordered) by frame id.
inline std::map<int, std::vector<KittiLabel>> load_label_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw MissingInputError("not a directory: " + dir.string());
  std::map<int, std::vector<KittiLabel>> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto id = frame_id_of(entry.path());
    if (!id) continue;
    try {
      out[*id] = parse_label_file(read_text_file(entry.path()));
    } catch (const ParseError& e) {
      throw ParseError(entry.path().string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mono3d
