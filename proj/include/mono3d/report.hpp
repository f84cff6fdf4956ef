#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "mono3d/eval.hpp"
#include "mono3d/io.hpp"

namespace mono3d {

struct EvalRequest {
  std::string cls = "Car";
  Stratum difficulty = Difficulty::kModerate;
  IouCriterion criterion = IouCriterion::k3d;
  double iou_threshold = 0.7;
  ApMode mode = ApMode::kR11;
};

inline const char* to_string(IouCriterion c) { return c == IouCriterion::k3d ? "3d" : "bev"; }

inline std::string difficulty_name(const Stratum& s) { return s ? to_string(*s) : "all"; }

/// {class, difficulty, criterion, iou_threshold, mode, ap, pr_curve}
inline nlohmann::json eval_report_json(const EvalRequest& req, const ApResult& res) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : res.curve) curve.push_back({{"recall", p.recall}, {"precision", p.precision}, {"score", p.threshold}});
  return {{"class", req.cls},
          {"difficulty", difficulty_name(req.difficulty)},
          {"criterion", to_string(req.criterion)},
          {"iou_threshold", req.iou_threshold},
          {"mode", to_string(req.mode)},
          {"ap", res.ap},
          {"num_gt", res.n_gt},
          {"num_tp", res.n_tp},
          {"num_fp", res.n_fp},
          {"pr_curve", std::move(curve)}};
}

inline std::string pr_curve_csv(const PrCurve& curve) {
  std::string s = "score,recall,precision\n";
  for (const auto& p : curve) {
    s += format_shortest(p.threshold) + "," + format_shortest(p.recall) + "," + format_shortest(p.precision) + "\n";
  }
  return s;
}

}  // namespace mono3d
