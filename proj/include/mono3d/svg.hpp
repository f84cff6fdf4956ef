#pragma once

// Bird's-eye-view plot of ground truth and detections in the x-z plane.

#include <algorithm>
#include <string>
#include <vector>

#include "mono3d/eval.hpp"
#include "mono3d/geometry.hpp"
#include "mono3d/io.hpp"

namespace mono3d {

struct BevPlotOptions {
  double x_min = -20.0;
  double x_max = 20.0;
  double z_min = 0.0;
  double z_max = 60.0;
  double pixels_per_meter = 10.0;
  std::string title;
};

/// Ground truth is drawn solid green, detections dashed red with their score.
/// Forward (+z) points up.
inline std::string bev_svg(const std::vector<GroundTruth>& gts, const std::vector<Detection>& dets,
                           const BevPlotOptions& opt = {}) {
  const double ppm = opt.pixels_per_meter;
  const double width = (opt.x_max - opt.x_min) * ppm;
  const double height = (opt.z_max - opt.z_min) * ppm;
  auto px = [&](double x) { return format_fixed((x - opt.x_min) * ppm, 2); };
  auto pz = [&](double z) { return format_fixed((opt.z_max - z) * ppm, 2); };
  auto polygon = [&](const Box3D& b) {
    std::string pts;
    for (const auto& c : bev_corners(b)) {
      if (!pts.empty()) pts += ' ';
      pts += px(c.x) + "," + pz(c.y);
    }
    return pts;
  };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_fixed(width, 0) + "\" height=\"" +
       format_fixed(height + 40.0, 0) + "\" viewBox=\"0 0 " + format_fixed(width, 0) + " " +
       format_fixed(height + 40.0, 0) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + format_fixed(width, 0) + "\" height=\"" + format_fixed(height, 0) +
       "\" fill=\"white\" stroke=\"black\"/>\n";
  // Range rings every 10 m and the camera position.
  for (double z = 10.0; z < opt.z_max; z += 10.0) {
    if (z <= opt.z_min) continue;
    s += "<line x1=\"0\" y1=\"" + pz(z) + "\" x2=\"" + format_fixed(width, 0) + "\" y2=\"" + pz(z) +
         "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"2\" y=\"" + pz(z) + "\" font-size=\"10\" fill=\"#888888\">" + format_fixed(z, 0) + " m</text>\n";
  }
  s += "<circle cx=\"" + px(0.0) + "\" cy=\"" + pz(0.0) + "\" r=\"4\" fill=\"black\"/>\n";
  for (const auto& g : gts) {
    if (g.dont_care) continue;
    s += "<polygon points=\"" + polygon(g.box) + "\" fill=\"none\" stroke=\"#1a9641\" stroke-width=\"2\"/>\n";
  }
  for (const auto& d : dets) {
    s += "<polygon points=\"" + polygon(d.box) +
         "\" fill=\"none\" stroke=\"#d7191c\" stroke-width=\"1.5\" stroke-dasharray=\"4,2\"/>\n";
    s += "<text x=\"" + px(d.box.center().x) + "\" y=\"" + pz(d.box.center().z) +
         "\" font-size=\"9\" fill=\"#d7191c\">" + format_fixed(d.score, 2) + "</text>\n";
  }
  const std::string ly = format_fixed(height + 25.0, 0);
  s += "<line x1=\"10\" y1=\"" + ly + "\" x2=\"40\" y2=\"" + ly + "\" stroke=\"#1a9641\" stroke-width=\"2\"/>\n";
  s += "<text x=\"45\" y=\"" + ly + "\" font-size=\"12\" dominant-baseline=\"middle\">ground truth</text>\n";
  s += "<line x1=\"150\" y1=\"" + ly + "\" x2=\"180\" y2=\"" + ly +
       "\" stroke=\"#d7191c\" stroke-width=\"1.5\" stroke-dasharray=\"4,2\"/>\n";
  s += "<text x=\"185\" y=\"" + ly + "\" font-size=\"12\" dominant-baseline=\"middle\">detection</text>\n";
  if (!opt.title.empty()) {
    s += "<text x=\"290\" y=\"" + ly + "\" font-size=\"12\" dominant-baseline=\"middle\">" + opt.title + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace mono3d
