// mono3d: evaluation, benchmarking, synthetic demo and gradient checks.

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mono3d/gradcheck.hpp"
#include "mono3d/mono3d.hpp"

namespace fs = std::filesystem;
using namespace mono3d;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kMissingInput = 2,
  kParseFailure = 3,
  kBenchGate = 4,
  kGradcheckFailure = 5,
  kUsage = 64,
};

// Relative input paths resolve against $MONO3D_FIXTURE_ROOT when it is set.
fs::path input_path(const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("MONO3D_FIXTURE_ROOT"); root && *root) return fs::path(root) / path;
  return path;
}

std::optional<Difficulty> parse_stratum(const std::string& s) {
  if (s == "easy") return Difficulty::kEasy;
  if (s == "moderate") return Difficulty::kModerate;
  if (s == "hard") return Difficulty::kHard;
  return std::nullopt;  // "all"
}

// ---- eval ----------------------------------------------------------------

struct EvalOptions {
  std::string gt_dir;
  std::string det_dir;
  std::string criterion = "3d";
  double iou = 0.7;
  std::string mode = "r11";
  std::string cls = "Car";
  std::string difficulty = "moderate";
  std::string out;
  std::string csv;
};

int cmd_eval(const EvalOptions& o) {
  EvalRequest req;
  req.cls = o.cls;
  req.difficulty = parse_stratum(o.difficulty);
  req.criterion = o.criterion == "bev" ? IouCriterion::kBev : IouCriterion::k3d;
  req.iou_threshold = o.iou;
  req.mode = o.mode == "r40" ? ApMode::kR40 : ApMode::kR11;

  const auto gt = load_label_dir(input_path(o.gt_dir));
  const auto det = load_label_dir(input_path(o.det_dir));
  if (gt.empty()) throw MissingInputError("no label files in " + o.gt_dir);
  std::vector<std::string> missing;
  for (const auto& [frame, _] : gt) {
    if (!det.contains(frame)) missing.push_back(frame_name(frame));
  }
  for (const auto& [frame, _] : det) {
    if (!gt.contains(frame)) missing.push_back(frame_name(frame) + " (no ground truth)");
  }
  if (!missing.empty()) {
    std::string msg = "frames missing from one side:";
    for (const auto& m : missing) msg += " " + m;
    throw MissingInputError(msg);
  }

  std::vector<FrameMatch> frames;
  for (const auto& [frame, labels] : gt) {
    std::vector<GroundTruth> gts;
    for (const auto& l : labels) {
      if (l.is_dont_care() || l.type == req.cls) gts.push_back(ground_truth_from_label(l, frame));
    }
    std::vector<Detection> dets;
    for (const auto& l : det.at(frame)) {
      if (l.type == req.cls) dets.push_back(detection_from_label(l, frame));
    }
    frames.push_back(match_frame(dets, gts, req.criterion, req.iou_threshold, req.difficulty));
  }
  const ApResult res = average_precision(frames, req.mode);
  const auto report = eval_report_json(req, res);
  if (!o.out.empty()) write_file_atomic(o.out, report.dump(2) + "\n");
  if (!o.csv.empty()) write_file_atomic(o.csv, pr_curve_csv(res.curve));
  std::cout << "AP_" << to_string(req.criterion) << " " << req.cls << " " << difficulty_name(req.difficulty) << " @"
            << format_shortest(req.iou_threshold) << " " << to_string(req.mode) << ": " << format_fixed(res.ap, 2)
            << " (gt " << res.n_gt << ", tp " << res.n_tp << ", fp " << res.n_fp << ")\n";
  return kOk;
}

// ---- bench ---------------------------------------------------------------

struct BenchOptions {
  BenchConfig cfg;
  std::string out;
  bool no_assert = false;
  double min_speedup = 10.0;
};

int cmd_bench(const BenchOptions& o) {
  BenchReport rep;
  try {
    rep = time_compare(o.cfg);
  } catch (const BenchGateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBenchGate;
  }
  const std::string csv = bench_csv_header() + bench_csv_row(rep);
  if (!o.out.empty()) write_file_atomic(o.out, csv);
  std::cout << csv << "\n" << bench_summary(rep);
  if (!o.no_assert && o.cfg.k > 0 && rep.speedup < o.min_speedup) {
    std::cerr << "error: measured speedup " << format_fixed(rep.speedup, 2) << "x is below "
              << format_shortest(o.min_speedup) << "x\n";
    return kBenchGate;
  }
  return kOk;
}

// ---- demo ----------------------------------------------------------------

struct DemoOptions {
  std::uint64_t seed = 0;
  int scenes = 20;
  int objects = 6;
  double noise = 0.0;
  std::string loss = "l1";
  double beta_attn = 0.5;
  int epochs = 200;
  std::string out_dir;
};

int cmd_demo(const DemoOptions& o) {
  if (o.scenes < 1) throw Error("demo: --scenes must be at least 1");
  const fs::path out(o.out_dir);
  OracleModel model;
  model.feature_noise = o.noise;
  model.validate();

  std::vector<TrainingScene> data;
  for (int i = 0; i < o.scenes; ++i) {
    SceneSpec spec;
    spec.seed = mix_seed(o.seed * 1000003ULL + static_cast<std::uint64_t>(i));
    spec.n_objects = o.objects;
    spec.validate();
    Scene scene = generate_scene(spec);
    OracleOutput oracle = oracle_pyramid(scene, model);
    for (const auto& w : oracle.warnings) std::cerr << "warning: scene " << i << ": " << w << "\n";
    data.push_back({std::move(scene), std::move(oracle)});
  }

  TrainConfig tc;
  tc.loss = o.loss == "attention" ? RegressionLossKind::kAttention : RegressionLossKind::kL1;
  tc.attention.beta = o.beta_attn;
  tc.epochs = o.epochs;
  const auto d = static_cast<std::size_t>(model.channels);
  const TrainResult trained =
      toy_train(data, RegressionHead(Matrix(3 * d, RegressionTuple::kSize, 0.0),
                                     std::vector<double>(RegressionTuple::kSize, 0.0)),
                tc);

  const EvalRequest req{"Car", std::nullopt, IouCriterion::k3d, 0.7, ApMode::kR11};
  PipelineConfig pc;
  std::vector<FrameMatch> frames;
  double max_center_error = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int frame = static_cast<int>(i);
    const PipelineResult r = run_pipeline(data[i].scene, data[i].oracle, trained.head, pc, frame);
    frames.push_back(r.match);
    for (const auto& det : r.detections) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& g : r.ground_truths) {
        const Vec3 a = det.box.center(), c = g.box.center();
        best = std::min(best, std::hypot(a.x - c.x, a.y - c.y, a.z - c.z));
      }
      if (std::isfinite(best)) max_center_error = std::max(max_center_error, best);
    }

    std::string det_text, gt_text;
    for (const auto& det : r.detections) det_text += serialize_detection(det, data[i].scene.calib) + "\n";
    for (const auto& obj : data[i].scene.objects) {
      KittiLabel l = label_from_box(obj.box, "Car");
      l.bbox = project_bbox(obj.box, data[i].scene.calib,
                            std::make_pair(data[i].scene.image_height, data[i].scene.image_width));
      gt_text += serialize_label(l) + "\n";
    }
    write_file_atomic(out / "det" / (frame_name(frame) + ".txt"), det_text);
    write_file_atomic(out / "gt" / (frame_name(frame) + ".txt"), gt_text);
    write_file_atomic(out / "calib" / (frame_name(frame) + ".txt"), serialize_calib(data[i].scene.calib));
    BevPlotOptions plot;
    plot.title = "frame " + frame_name(frame);
    write_file_atomic(out / "bev" / (frame_name(frame) + ".svg"), bev_svg(r.ground_truths, r.detections, plot));
  }

  const ApResult res = average_precision(frames, req.mode);
  nlohmann::json report = eval_report_json(req, res);
  report["demo"] = {{"seed", o.seed},
                    {"scenes", o.scenes},
                    {"objects", o.objects},
                    {"noise", o.noise},
                    {"loss", o.loss},
                    {"beta_attn", o.beta_attn},
                    {"epochs", o.epochs},
                    {"final_train_loss", trained.loss_trace.empty() ? 0.0 : trained.loss_trace.back()},
                    {"max_center_error_m", max_center_error}};
  write_file_atomic(out / "report.json", report.dump(2) + "\n");
  std::cout << "scenes " << o.scenes << ", loss " << o.loss << ", final train loss "
            << format_shortest(trained.loss_trace.empty() ? 0.0 : trained.loss_trace.back()) << "\n"
            << "AP_3d Car all @0.7 R11: " << format_fixed(res.ap, 2) << "\n"
            << "outputs written to " << out.string() << "\n";
  return kOk;
}

// ---- gradcheck -----------------------------------------------------------

struct GradcheckOptions {
  int trials = 100;
  std::string step = "1e-5";
  std::uint64_t seed = 11;
  bool inject_sign_error = false;
};

int cmd_gradcheck(const GradcheckOptions& o) {
  GradcheckSuiteConfig cfg;
  const auto res = std::from_chars(o.step.data(), o.step.data() + o.step.size(), cfg.step);
  if (res.ec != std::errc{} || res.ptr != o.step.data() + o.step.size()) {
    throw ParseError("--step: not a number: '" + o.step + "'");
  }
  cfg.trials = o.trials;
  cfg.seed = o.seed;
  cfg.inject_sign_error = o.inject_sign_error;
  std::cout << "gradcheck: trials=" << o.trials << " step=" << o.step << " tolerance=1e-4\n";
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(cfg)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.loss << ": max relative error "
              << format_shortest(r.max_rel_error);
    if (!r.passed) {
      std::cout << " at trial " << r.worst_trial << " coordinate " << r.worst_index << " (analytic "
                << format_shortest(r.analytic) << ", numeric " << format_shortest(r.numeric) << ")";
    }
    std::cout << "\n";
    ok = ok && r.passed;
  }
  return ok ? kOk : kGradcheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mono3d: keypoint-based monocular 3D detection head toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "KITTI-protocol AP of a detection directory against ground truth");
  e->add_option("--gt-dir", eval.gt_dir, "Directory of ground-truth label files")->required();
  e->add_option("--det-dir", eval.det_dir, "Directory of detection label files (with score)")->required();
  e->add_option("--criterion", eval.criterion, "IoU criterion")->check(CLI::IsMember({"3d", "bev"}))->capture_default_str();
  e->add_option("--iou", eval.iou, "IoU threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  e->add_option("--mode", eval.mode, "Recall sampling")->check(CLI::IsMember({"r11", "r40"}))->capture_default_str();
  e->add_option("--class", eval.cls, "Object class")->capture_default_str();
  e->add_option("--difficulty", eval.difficulty, "Difficulty stratum")
      ->check(CLI::IsMember({"easy", "moderate", "hard", "all"}))
      ->capture_default_str();
  e->add_option("--out", eval.out, "Write the JSON report here");
  e->add_option("--csv", eval.csv, "Write the PR curve as CSV here");

  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "Sparse (top-K) vs dense regression head cost and timing");
  b->add_option("--height", bench.cfg.height, "Image height")->capture_default_str();
  b->add_option("--width", bench.cfg.width, "Image width")->capture_default_str();
  b->add_option("--channels", bench.cfg.channels, "Feature channels D")->capture_default_str();
  b->add_option("--outputs", bench.cfg.outputs, "Regression outputs R")->capture_default_str();
  b->add_option("--k", bench.cfg.k, "Keypoints K")->capture_default_str();
  b->add_option("--reps", bench.cfg.repetitions, "Timed repetitions")->capture_default_str();
  b->add_option("--warmup", bench.cfg.warmup, "Warm-up runs")->capture_default_str();
  b->add_option("--seed", bench.cfg.seed, "Random seed")->capture_default_str();
  b->add_option("--min-speedup", bench.min_speedup, "Required dense/sparse median ratio")->capture_default_str();
  b->add_option("--out", bench.out, "Write the CSV report here");
  b->add_flag("--no-assert", bench.no_assert, "Do not fail on a low measured speedup");
  b->add_flag("--fault-gate", bench.cfg.corrupt_sparse_for_testing)->group("");

  DemoOptions demo;
  auto* d = app.add_subcommand("demo", "Train the toy head on synthetic scenes, detect, evaluate and plot");
  d->add_option("--seed", demo.seed, "Scene seed")->capture_default_str();
  d->add_option("--scenes", demo.scenes, "Number of scenes")->capture_default_str();
  d->add_option("--objects", demo.objects, "Objects per scene")->check(CLI::Range(0, 8))->capture_default_str();
  d->add_option("--noise", demo.noise, "Feature noise standard deviation")->capture_default_str();
  d->add_option("--loss", demo.loss, "Regression loss")->check(CLI::IsMember({"l1", "attention"}))->capture_default_str();
  d->add_option("--beta-attn", demo.beta_attn, "Attention temperature on 1 - IoU")->capture_default_str();
  d->add_option("--epochs", demo.epochs, "Training epochs")->capture_default_str();
  d->add_option("--out-dir", demo.out_dir, "Output directory")->required();

  GradcheckOptions grad;
  auto* g = app.add_subcommand("gradcheck", "Analytic vs central-difference gradients of the losses");
  g->add_option("--trials", grad.trials, "Random points per loss")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--step", grad.step, "Finite-difference step")->capture_default_str();
  g->add_option("--seed", grad.seed, "Random seed")->capture_default_str();
  g->add_flag("--inject-sign-error", grad.inject_sign_error)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kUsage;
  }

  try {
    if (*e) return cmd_eval(eval);
    if (*b) return cmd_bench(bench);
    if (*d) return cmd_demo(demo);
    if (*g) return cmd_gradcheck(grad);
  } catch (const MissingInputError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kMissingInput;
  } catch (const ParseError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kParseFailure;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
