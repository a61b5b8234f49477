#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "horcrux/error.hpp"

namespace horcrux {

inline constexpr double kDefaultBeatTolerance = 0.15;  // s

struct MetricReport {
  double rmse = 0.0;             // mV
  double pcc = 0.0;              // [-1, 1]
  double heartbeat_error = 0.0;  // ms
  double mdr = 0.0;              // [0, 1]

  static constexpr std::size_t size = 4;

  std::array<double, size> as_array() const { return {rmse, pcc, heartbeat_error, mdr}; }
};

enum class Better { lower, higher };

struct MetricDirections {
  std::array<Better, MetricReport::size> dirs{Better::lower, Better::higher, Better::lower,
                                              Better::lower};
};

inline constexpr std::array<std::string_view, MetricReport::size> kMetricNames{
    "rmse", "pcc", "heartbeat_error", "mdr"};

inline double rmse(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::invalid_input, "rmse: length mismatch");
  require(!x.empty(), ErrorKind::invalid_input, "rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double pcc(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::invalid_input, "pcc: length mismatch");
  require(x.size() >= 2, ErrorKind::invalid_input, "pcc: need at least two samples");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::undefined_correlation,
          "pcc: zero variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct BeatMatch {
  std::size_t matches = 0;
  std::size_t misses = 0;
  double mean_abs_error_ms = 0.0;
  double mdr = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (truth idx, detected idx)
};

/// One-to-one matching within +-tol. Truth beats are visited in ascending
/// order; each takes the earliest unused detection inside its window. For
/// 1-D tolerance windows this yields a maximum-cardinality matching, so MDR
/// is the minimum achievable.
inline BeatMatch match_beats(std::span<const double> detected, std::span<const double> truth,
                             double tol = kDefaultBeatTolerance) {
  require(!truth.empty(), ErrorKind::invalid_input, "match_beats: empty truth list (MDR undefined)");
  require(tol >= 0.0, ErrorKind::invalid_parameter, "match_beats: negative tolerance");
  for (std::size_t i = 1; i < truth.size(); ++i)
    require(truth[i] >= truth[i - 1], ErrorKind::invalid_input, "truth beats must be sorted");
  for (std::size_t i = 1; i < detected.size(); ++i)
    require(detected[i] >= detected[i - 1], ErrorKind::invalid_input,
            "detected beats must be sorted");

  // absorbs representation error in tolerance comparisons such as 1.25 - 1.1
  const double eps = 1e-9;
  BeatMatch out;
  std::vector<bool> used(detected.size(), false);
  std::size_t start = 0;
  double err_sum = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    while (start < detected.size() && detected[start] < truth[t] - tol - eps) ++start;
    for (std::size_t d = start; d < detected.size(); ++d) {
      if (detected[d] > truth[t] + tol + eps) break;
      if (used[d]) continue;
      used[d] = true;
      out.pairs.emplace_back(t, d);
      err_sum += std::abs(detected[d] - truth[t]);
      break;
    }
  }
  out.matches = out.pairs.size();
  out.misses = truth.size() - out.matches;
  out.mdr = static_cast<double>(out.misses) / static_cast<double>(truth.size());
  out.mean_abs_error_ms = out.matches ? 1000.0 * err_sum / static_cast<double>(out.matches) : 0.0;
  return out;
}

/// Mean signed relative improvement over the baseline, in percent. Lower-better
/// metrics score (M_b - M_m) / M_b, higher-better ones (M_m - M_b) / M_b.
inline double delta_m(const MetricReport& method, const MetricReport& baseline,
                      const MetricDirections& dirs = {}) {
  const auto m = method.as_array();
  const auto b = baseline.as_array();
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    require(b[i] != 0.0, ErrorKind::division_by_zero,
            std::string("delta_m: baseline ") + std::string(kMetricNames[i]) + " is zero");
    const double rel = (m[i] - b[i]) / b[i];
    acc += dirs.dirs[i] == Better::higher ? rel : -rel;
  }
  return 100.0 * acc / static_cast<double>(m.size());
}

/// Full report for one reconstruction against its reference.
inline MetricReport evaluate(std::span<const double> reference, std::span<const double> reconstruction,
                             std::span<const double> truth_beats,
                             std::span<const double> detected_beats,
                             double tol = kDefaultBeatTolerance) {
  MetricReport r;
  r.rmse = rmse(reconstruction, reference);
  r.pcc = pcc(reconstruction, reference);
  const BeatMatch bm = match_beats(detected_beats, truth_beats, tol);
  r.heartbeat_error = bm.mean_abs_error_ms;
  r.mdr = bm.mdr;
  return r;
}

}  // namespace horcrux
