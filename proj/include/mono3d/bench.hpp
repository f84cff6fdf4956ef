#pragma once

// Dense per-pixel regression vs. sparse top-K gather + linear regression:
// closed-form FLOP counts and single-threaded wall-time measurements.
//
// FLOPs count one multiply plus one add as two operations.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#if defined(__linux__)
#include <sched.h>
#endif

#include "mono3d/io.hpp"
#include "mono3d/litefpn.hpp"

namespace mono3d {

struct BenchConfig {
  int height = 384;
  int width = 1280;
  int channels = 64;
  int outputs = 8;
  int k = 100;
  int repetitions = 50;
  int warmup = 5;
  std::uint64_t seed = 7;
  /// Test hook: perturbs the sparse path so the correctness gate must fire.
  bool corrupt_sparse_for_testing = false;

  int grid_height() const { return height / 4; }
  int grid_width() const { return width / 4; }

  void validate() const {
    if (height < 4 || width < 4 || channels < 1 || outputs < 1) throw Error("BenchConfig: sizes must be positive");
    if (k < 0) throw Error("BenchConfig: K must be non-negative");
    if (static_cast<long long>(k) > static_cast<long long>(grid_height()) * grid_width()) {
      throw Error("BenchConfig: K exceeds the number of 1/4-grid pixels");
    }
    if (repetitions < 10) throw Error("BenchConfig: at least 10 repetitions are required");
    if (warmup < 0) throw Error("BenchConfig: warmup must be non-negative");
  }
};

/// 1x1 convolution D -> R over the whole 1/4 grid.
inline std::uint64_t flops_dense(const BenchConfig& c) {
  return 2ULL * static_cast<std::uint64_t>(c.grid_height()) * static_cast<std::uint64_t>(c.grid_width()) *
         static_cast<std::uint64_t>(c.channels) * static_cast<std::uint64_t>(c.outputs);
}

/// Linear 3D -> R head on K embedding rows; gathering is not counted.
inline std::uint64_t flops_sparse(const BenchConfig& c) {
  return 2ULL * static_cast<std::uint64_t>(c.k) * 3ULL * static_cast<std::uint64_t>(c.channels) *
         static_cast<std::uint64_t>(c.outputs);
}

/// Feature values read by the gather (K x 3D).
inline std::uint64_t gather_touches(const BenchConfig& c) {
  return static_cast<std::uint64_t>(c.k) * 3ULL * static_cast<std::uint64_t>(c.channels);
}

inline double flop_ratio(const BenchConfig& c) {
  const auto s = flops_sparse(c);
  if (s == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(flops_dense(c)) / static_cast<double>(s);
}

class BenchGateError : public Error {
 public:
  using Error::Error;
};

struct TimingStats {
  double median_us = 0.0;
  double p10_us = 0.0;
  double p90_us = 0.0;
};

struct BenchReport {
  BenchConfig config;
  std::uint64_t flops_dense = 0;
  std::uint64_t flops_sparse = 0;
  double flop_ratio = 0.0;
  std::uint64_t gather_touches = 0;
  double gate_max_abs_diff = 0.0;
  TimingStats dense;
  TimingStats sparse;
  double speedup = 0.0;
};

/// Nearest-rank percentile of an ascending sample.
inline double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

inline TimingStats summarize(std::vector<double> samples_us) {
  std::sort(samples_us.begin(), samples_us.end());
  return {percentile(samples_us, 0.5), percentile(samples_us, 0.1), percentile(samples_us, 0.9)};
}

/// Restricts the calling thread to the CPU it is running on (Linux only).
inline bool pin_to_current_cpu() {
#if defined(__linux__)
  const int cpu = sched_getcpu();
  if (cpu < 0) return false;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return sched_setaffinity(0, sizeof(set), &set) == 0;
#else
  return false;
#endif
}

namespace detail {

inline RegressionHead random_head(std::size_t inputs, std::size_t outputs, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.1);
  Matrix w(inputs, outputs);
  for (double& x : w.data()) x = n(rng);
  std::vector<double> b(outputs);
  for (double& x : b) x = n(rng);
  return RegressionHead(std::move(w), std::move(b));
}

inline void fill_random(FeatureGrid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& x : g.data()) x = n(rng);
}

inline double checksum(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x;
  return s;
}

template <typename Fn>
std::vector<double> time_runs(Fn&& fn, int warmup, int reps, double& sink) {
  for (int i = 0; i < warmup; ++i) sink += fn();
  std::vector<double> us;
  us.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink += fn();
    const auto t1 = std::chrono::steady_clock::now();
    const double dt = std::chrono::duration<double, std::micro>(t1 - t0).count();
    us.push_back(std::max(dt, 1e-3));
  }
  return us;
}

}  // namespace detail

/// Random pyramid, heads and keypoints; checks that the sparse 1/4-level path
/// equals dense-then-gather, then times both full paths.
inline BenchReport time_compare(const BenchConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int gh = cfg.grid_height();
  const int gw = cfg.grid_width();
  FeaturePyramid pyramid = FeaturePyramid::zeros(gh, gw, cfg.channels);
  for (const PyramidLevel l : kPyramidLevels) detail::fill_random(pyramid.level(l), rng);
  const auto d = static_cast<std::size_t>(cfg.channels);
  const auto r = static_cast<std::size_t>(cfg.outputs);
  const RegressionHead single = detail::random_head(d, r, rng);
  const RegressionHead fused = detail::random_head(3 * d, r, rng);

  KeypointSet kps;
  std::set<std::pair<int, int>> seen;
  std::uniform_int_distribution<int> du(0, gw - 1);
  std::uniform_int_distribution<int> dv(0, gh - 1);
  while (kps.size() < static_cast<std::size_t>(cfg.k)) {
    const Pixel p{du(rng), dv(rng)};
    if (seen.insert({p.u, p.v}).second) kps.push_back({0, p, 1.0});
  }

  BenchReport rep;
  rep.config = cfg;
  rep.flops_dense = flops_dense(cfg);
  rep.flops_sparse = flops_sparse(cfg);
  rep.flop_ratio = flop_ratio(cfg);
  rep.gather_touches = gather_touches(cfg);

  const FeatureGrid& base = pyramid.level(PyramidLevel::kQuarter);
  const Matrix dense = dense_regress_then_gather(base, single, kps);
  Matrix sparse = regress(gather_level(base, kps), single);
  if (cfg.corrupt_sparse_for_testing && sparse.rows() > 0) sparse(0, 0) += 1e-6;
  double diff = 0.0;
  for (std::size_t i = 0; i < dense.data().size(); ++i) {
    diff = std::max(diff, std::abs(dense.data()[i] - sparse.data()[i]));
  }
  rep.gate_max_abs_diff = diff;
  if (cfg.corrupt_sparse_for_testing && kps.empty()) diff = 1.0;
  if (!(diff <= 1e-12)) {
    throw BenchGateError("correctness gate failed: sparse and dense paths differ by " + format_shortest(diff));
  }

  pin_to_current_cpu();
  double sink = 0.0;
  rep.dense = summarize(detail::time_runs(
      [&] { return detail::checksum(dense_regress_then_gather(base, single, kps)); }, cfg.warmup, cfg.repetitions,
      sink));
  rep.sparse = summarize(detail::time_runs(
      [&] { return detail::checksum(regress(gather_fuse(pyramid, kps), fused)); }, cfg.warmup, cfg.repetitions, sink));
  rep.speedup = rep.dense.median_us / rep.sparse.median_us;
  volatile double keep = sink;
  (void)keep;
  return rep;
}

inline std::string bench_csv_header() {
  return "H,W,D,R,K,flops_dense,flops_sparse,flop_ratio,gather_touches,dense_median_us,dense_p10_us,dense_p90_us,"
         "sparse_median_us,sparse_p10_us,sparse_p90_us,speedup\n";
}

inline std::string bench_csv_row(const BenchReport& r) {
  const auto& c = r.config;
  std::string s;
  s += std::to_string(c.height) + "," + std::to_string(c.width) + "," + std::to_string(c.channels) + "," +
       std::to_string(c.outputs) + "," + std::to_string(c.k) + ",";
  s += std::to_string(r.flops_dense) + "," + std::to_string(r.flops_sparse) + ",";
  s += (std::isfinite(r.flop_ratio) ? format_shortest(r.flop_ratio) : std::string("inf")) + ",";
  s += std::to_string(r.gather_touches) + ",";
  for (const TimingStats* t : {&r.dense, &r.sparse}) {
    s += format_fixed(t->median_us, 3) + "," + format_fixed(t->p10_us, 3) + "," + format_fixed(t->p90_us, 3) + ",";
  }
  s += format_fixed(r.speedup, 3) + "\n";
  return s;
}

inline std::string bench_summary(const BenchReport& r) {
  const auto& c = r.config;
  std::string s;
  s += "config: H=" + std::to_string(c.height) + " W=" + std::to_string(c.width) + " D=" + std::to_string(c.channels) +
       " R=" + std::to_string(c.outputs) + " K=" + std::to_string(c.k) + "\n";
  s += "flops dense:  " + std::to_string(r.flops_dense) + "\n";
  s += "flops sparse: " + std::to_string(r.flops_sparse) + " (+" + std::to_string(r.gather_touches) +
       " gathered values)\n";
  s += "flop ratio:   " + (std::isfinite(r.flop_ratio) ? format_shortest(r.flop_ratio) : std::string("inf")) + "\n";
  s += "dense  median " + format_fixed(r.dense.median_us, 2) + " us (p10 " + format_fixed(r.dense.p10_us, 2) +
       ", p90 " + format_fixed(r.dense.p90_us, 2) + ")\n";
  s += "sparse median " + format_fixed(r.sparse.median_us, 2) + " us (p10 " + format_fixed(r.sparse.p10_us, 2) +
       ", p90 " + format_fixed(r.sparse.p90_us, 2) + ")\n";
  s += "measured speedup: " + format_fixed(r.speedup, 2) + "x\n";
  return s;
}

}  // namespace mono3d
