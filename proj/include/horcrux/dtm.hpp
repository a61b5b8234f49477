#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "horcrux/box_bfgs.hpp"
#include "horcrux/error.hpp"
#include "horcrux/parallel.hpp"
#include "horcrux/seeds.hpp"
#include "horcrux/signal_model.hpp"

namespace horcrux {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x, double slack = 0.0) const { return x >= lo - slack && x <= hi + slack; }
  double width() const { return hi - lo; }
};

/// Dynamic template matching settings. Only T1, T2, f1, f2 are fitted; the
/// amplitudes and widths stay fixed at the reference cycle values.
struct DtmConfig {
  double tau = kDefaultTau;  // T2 - T1 < tau
  double delta_min = 0.1;    // T2 - T1 >= delta_min
  double a1 = 0.5;
  double a2 = 0.1;
  double b1 = 0.05;
  double b2 = 0.03;
  std::optional<Range> t1;  // unset: [0, duration - tau]
  Range f1{5.0, 18.0};
  Range f2{15.0, 30.0};
  std::size_t n_starts = 24;
  std::size_t max_iters = 200;
  double tol = 1e-12;
  double degenerate_ratio = 0.95;

  void validate() const {
    require(tau > 0.0, ErrorKind::invalid_parameter, "tau must be > 0");
    require(delta_min > 0.0 && delta_min < tau, ErrorKind::invalid_parameter,
            "delta bounds must lie inside (0, tau)");
    require(a1 > 0.0 && a2 >= 0.0 && b1 > 0.0 && b2 > 0.0, ErrorKind::invalid_parameter,
            "template amplitudes and widths must be positive");
    require(f1.lo > 0.0 && f1.hi >= f1.lo && f2.lo > 0.0 && f2.hi >= f2.lo,
            ErrorKind::invalid_parameter, "frequency bounds must be non-empty and positive");
    if (t1) {
      require(t1->lo >= 0.0 && t1->hi >= t1->lo, ErrorKind::invalid_parameter,
              "T1 bounds must be non-empty and non-negative");
    }
    require(n_starts >= 1 && max_iters >= 1, ErrorKind::invalid_parameter,
            "n_starts and max_iters must be >= 1");
  }

  Range t1_range(double duration) const {
    if (t1) return *t1;
    return {0.0, std::max(0.0, duration - tau)};
  }

  /// Admissible T2 - T1. The open upper end is closed a hair below tau.
  Range delta_range() const { return {delta_min, tau * (1.0 - 1e-9)}; }
};

struct Theta {
  double t1 = 0.0;
  double t2 = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;

  friend bool operator==(const Theta&, const Theta&) = default;
};

struct FittedTheta {
  double t1 = 0.0;
  double t2 = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
  double residual_norm = 0.0;  // on the normalized segment
  double signal_norm = 0.0;    // norm of the normalized segment
  bool converged = false;
  bool degenerate = false;  // residual_norm >= degenerate_ratio * signal_norm
  std::size_t n_evals = 0;

  Theta theta() const { return {t1, t2, f1, f2}; }

  friend bool operator==(const FittedTheta&, const FittedTheta&) = default;
};

/// Residual norm and its gradient with respect to (T1, T2, f1, f2).
struct DtmEvaluation {
  double residual_norm = 0.0;
  std::array<double, 4> gradient{};
};

/// One-cycle template for theta with the fixed amplitudes and widths.
inline CycleParams template_cycle(const Theta& th, const DtmConfig& cfg) {
  return {{cfg.a1, th.f1, th.t1, cfg.b1}, {cfg.a2, th.f2, th.t2, cfg.b2}};
}

/// Scales a segment so its peak magnitude equals the v1 template amplitude.
inline std::vector<double> normalize_for_matching(const Segment& s, const DtmConfig& cfg) {
  double peak = 0.0;
  for (double v : s.samples) peak = std::max(peak, std::abs(v));
  require(peak > 0.0 && std::isfinite(peak), ErrorKind::no_signal,
          "segment has no signal to match");
  std::vector<double> y(s.samples.size());
  const double gain = cfg.a1 / peak;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = s.samples[i] * gain;
  return y;
}

namespace detail {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Least-squares objective for one normalized segment.
class TemplateObjective {
 public:
  TemplateObjective(std::vector<double> y, double fs, const DtmConfig& cfg)
      : y_(std::move(y)), fs_(fs), cfg_(cfg) {
    for (double v : y_) y_norm2_ += v * v;
  }

  std::size_t size() const { return y_.size(); }
  double fs() const { return fs_; }
  double signal_norm() const { return std::sqrt(y_norm2_); }
  std::span<const double> y() const { return y_; }

  /// 0.5 * ||y - d(theta)||^2 and its gradient over (T1, T2, f1, f2).
  double half_sq(const Theta& th, std::array<double, 4>& grad) const {
    grad.fill(0.0);
    const Burst b1{cfg_.a1, th.f1, th.t1, cfg_.b1, window(th.t1, cfg_.b1)};
    const Burst b2{cfg_.a2, th.f2, th.t2, cfg_.b2, window(th.t2, cfg_.b2)};
    double acc = 0.0;
    for (std::size_t i = 0; i < y_.size(); ++i) {
      const double t = static_cast<double>(i) / fs_;
      double d = 0.0;
      std::array<double, 4> dd{};
      if (b1.covers(i)) d += b1.eval(t, dd[0], dd[2]);
      if (b2.covers(i)) d += b2.eval(t, dd[1], dd[3]);
      const double r = y_[i] - d;
      acc += r * r;
      for (std::size_t k = 0; k < 4; ++k) grad[k] -= r * dd[k];
    }
    return 0.5 * acc;
  }

  /// Phase-insensitive best gain of adding one burst (amplitude a, width b)
  /// centered at t0 with carrier f: 2a|<y, g e^{j2pi f t}>| - a^2 * 0.5 * sum g^2.
  struct Scan {
    double start = 0.0;
    double step = 0.0;
    std::vector<double> gain;  // best over frequency, per time step
    std::vector<double> freq;  // argmax frequency
  };

  Scan scan(double amplitude, double width, Range times, Range freqs, double dt,
            double df) const {
    Scan out;
    out.start = times.lo;
    out.step = dt;
    const auto n_t = static_cast<std::size_t>(std::floor(times.width() / dt + 1e-9)) + 1;
    const auto n_f = static_cast<std::size_t>(std::floor(freqs.width() / df + 1e-9)) + 1;
    std::vector<double> fgrid(n_f);
    for (std::size_t k = 0; k < n_f; ++k) fgrid[k] = freqs.lo + static_cast<double>(k) * df;
    if (fgrid.back() < freqs.hi - 1e-9) fgrid.push_back(freqs.hi);

    std::vector<double> cs(fgrid.size() * y_.size()), sn(fgrid.size() * y_.size());
    for (std::size_t k = 0; k < fgrid.size(); ++k) {
      for (std::size_t i = 0; i < y_.size(); ++i) {
        const double ph = kTwoPi * fgrid[k] * static_cast<double>(i) / fs_;
        cs[k * y_.size() + i] = y_[i] * std::cos(ph);
        sn[k * y_.size() + i] = y_[i] * std::sin(ph);
      }
    }

    out.gain.assign(n_t, -std::numeric_limits<double>::infinity());
    out.freq.assign(n_t, fgrid.front());
    std::vector<double> g;
    for (std::size_t m = 0; m < n_t; ++m) {
      const double t0 = times.lo + static_cast<double>(m) * dt;
      const auto [first, last] = sample_window(t0, width, 4.0);
      if (first > last) continue;
      g.resize(last - first + 1);
      double energy = 0.0;
      for (std::size_t i = first; i <= last; ++i) {
        const double u = (static_cast<double>(i) / fs_ - t0) / width;
        g[i - first] = std::exp(-u * u);
        energy += 0.5 * g[i - first] * g[i - first];
      }
      for (std::size_t k = 0; k < fgrid.size(); ++k) {
        const double* c = cs.data() + k * y_.size();
        const double* s = sn.data() + k * y_.size();
        double re = 0.0, im = 0.0;
        for (std::size_t i = first; i <= last; ++i) {
          re += c[i] * g[i - first];
          im += s[i] * g[i - first];
        }
        const double gain = 2.0 * amplitude * std::hypot(re, im) - amplitude * amplitude * energy;
        if (gain > out.gain[m]) {
          out.gain[m] = gain;
          out.freq[m] = fgrid[k];
        }
      }
    }
    return out;
  }

  /// Phase-sensitive gain 2a<y,u> - a^2||u||^2 of one burst, for carrier
  /// refinement at a fixed center.
  double burst_gain(double amplitude, double width, double t0, double f) const {
    const auto [first, last] = sample_window(t0, width, 8.0);
    double dot = 0.0, energy = 0.0;
    for (std::size_t i = first; i <= last && i < y_.size(); ++i) {
      const double t = static_cast<double>(i) / fs_;
      const double u = (t - t0) / width;
      const double v = std::cos(kTwoPi * f * t) * std::exp(-u * u);
      dot += y_[i] * v;
      energy += v * v;
    }
    return 2.0 * amplitude * dot - amplitude * amplitude * energy;
  }

  std::pair<std::size_t, std::size_t> sample_window(double t0, double width,
                                                    double reach) const {
    const double lo = std::ceil((t0 - reach * width) * fs_);
    const double hi = std::floor((t0 + reach * width) * fs_);
    const double last = static_cast<double>(y_.size()) - 1.0;
    const auto first = static_cast<std::size_t>(std::clamp(lo, 0.0, last + 1.0));
    if (hi < 0.0) return {1, 0};
    return {first, static_cast<std::size_t>(std::min(hi, last))};
  }

 private:
  struct Burst {
    double a, f, t0, b;
    std::pair<std::size_t, std::size_t> win;

    bool covers(std::size_t i) const { return i >= win.first && i <= win.second; }

    // Returns the burst value; adds d/dT into dt0 and d/df into dfreq.
    double eval(double t, double& dt0, double& dfreq) const {
      const double u = (t - t0) / b;
      const double env = std::exp(-u * u);
      const double ph = kTwoPi * f * t;
      const double c = std::cos(ph);
      const double v = a * c * env;
      dt0 = v * 2.0 * (t - t0) / (b * b);
      dfreq = -a * kTwoPi * t * std::sin(ph) * env;
      return v;
    }
  };

  std::pair<std::size_t, std::size_t> window(double t0, double width) const {
    return sample_window(t0, width, 8.0);
  }

  std::vector<double> y_;
  double fs_;
  DtmConfig cfg_;
  double y_norm2_ = 0.0;
};

inline void check_bounds(const Theta& th, const DtmConfig& cfg, double duration) {
  constexpr double slack = 1e-12;
  const Range t1 = cfg.t1_range(duration);
  const Range dr = cfg.delta_range();
  require(t1.contains(th.t1, slack), ErrorKind::out_of_range, "T1 outside its bounds");
  require(dr.contains(th.t2 - th.t1, slack) && th.t2 - th.t1 < cfg.tau,
          ErrorKind::out_of_range, "T2 - T1 outside (delta_min, tau)");
  require(cfg.f1.contains(th.f1, slack), ErrorKind::out_of_range, "f1 outside its bounds");
  require(cfg.f2.contains(th.f2, slack), ErrorKind::out_of_range, "f2 outside its bounds");
}

/// Local maxima of burst_gain over carrier frequency near `center`, best first.
inline std::vector<double> carrier_fringes(const TemplateObjective& obj, double amplitude,
                                           double width, double t0, double center,
                                           Range bounds, std::size_t keep) {
  constexpr double half_span = 0.75;
  constexpr double step = 0.01;
  const double lo = std::max(bounds.lo, center - half_span);
  const double hi = std::min(bounds.hi, center + half_span);
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> f(n), gain(n);
  for (std::size_t k = 0; k < n; ++k) {
    f[k] = std::min(hi, lo + static_cast<double>(k) * step);
    gain[k] = obj.burst_gain(amplitude, width, t0, f[k]);
  }
  std::vector<std::size_t> peaks;
  for (std::size_t k = 0; k < n; ++k) {
    const bool left = k == 0 || gain[k] >= gain[k - 1];
    const bool right = k + 1 == n || gain[k] > gain[k + 1];
    if (left && right) peaks.push_back(k);
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [&](std::size_t a, std::size_t b) { return gain[a] > gain[b]; });
  std::vector<double> out;
  for (std::size_t k = 0; k < peaks.size() && out.size() < keep; ++k) out.push_back(f[peaks[k]]);
  if (out.empty()) out.push_back(std::clamp(center, bounds.lo, bounds.hi));
  return out;
}

/// Multi-start initial points: a coarse correlation scan ranks T1 candidates
/// (with the best admissible T2 for each), then each candidate gets up to
/// three carrier-frequency pairs taken from neighbouring phase fringes.
inline std::vector<Theta> initial_points(const TemplateObjective& obj, const DtmConfig& cfg,
                                         double duration, std::uint64_t seed) {
  constexpr double dt = 0.01;
  constexpr double df = 0.25;
  constexpr std::size_t pairs_per_t1 = 3;
  const Range t1r = cfg.t1_range(duration);
  const Range dr = cfg.delta_range();

  const auto s1 = obj.scan(cfg.a1, cfg.b1, t1r, cfg.f1, dt, df);
  const Range t2r{t1r.lo + dr.lo, t1r.hi + dr.hi};
  const auto s2 = obj.scan(cfg.a2, cfg.b2, t2r, cfg.f2, dt, df);
  const auto n_delta = static_cast<std::size_t>(std::floor(dr.width() / dt + 1e-9)) + 1;

  struct Cand {
    double score;
    std::size_t t1_idx;
    std::size_t t2_idx;
  };
  std::vector<Cand> cands;
  cands.reserve(s1.gain.size());
  for (std::size_t i = 0; i < s1.gain.size(); ++i) {
    std::size_t best_j = i;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_delta && i + j < s2.gain.size(); ++j) {
      if (s2.gain[i + j] > best) {
        best = s2.gain[i + j];
        best_j = i + j;
      }
    }
    cands.push_back({s1.gain[i] + best, i, best_j});
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Cand& a, const Cand& b) { return a.score > b.score; });

  const std::size_t n_t1 = (cfg.n_starts + pairs_per_t1 - 1) / pairs_per_t1;
  constexpr std::size_t min_sep = 5;  // grid steps between T1 candidates
  std::vector<Cand> picked;
  for (const auto& c : cands) {
    if (picked.size() >= n_t1) break;
    const bool close = std::any_of(picked.begin(), picked.end(), [&](const Cand& p) {
      const auto d = p.t1_idx > c.t1_idx ? p.t1_idx - c.t1_idx : c.t1_idx - p.t1_idx;
      return d < min_sep;
    });
    if (!close) picked.push_back(c);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.5 * dt, 0.5 * dt);
  std::vector<Theta> starts;
  for (const auto& c : picked) {
    double t1 = std::clamp(s1.start + static_cast<double>(c.t1_idx) * dt + jitter(rng), t1r.lo,
                           t1r.hi);
    double delta = std::clamp(
        s2.start + static_cast<double>(c.t2_idx) * dt - (s1.start + static_cast<double>(c.t1_idx) * dt) +
            jitter(rng),
        dr.lo, dr.hi);
    const double t2 = t1 + delta;
    const auto f1s = carrier_fringes(obj, cfg.a1, cfg.b1, t1, s1.freq[c.t1_idx], cfg.f1,
                                     pairs_per_t1);
    const auto f2s = carrier_fringes(obj, cfg.a2, cfg.b2, t2, s2.freq[c.t2_idx], cfg.f2,
                                     pairs_per_t1);
    for (std::size_t k = 0; k < pairs_per_t1 && starts.size() < cfg.n_starts; ++k) {
      starts.push_back({t1, t2, f1s[std::min(k, f1s.size() - 1)],
                        f2s[std::min(k, f2s.size() - 1)]});
    }
  }
  return starts;
}

}  // namespace detail

/// Residual norm ||y - d(theta)|| on the normalized segment, with its
/// analytic gradient over (T1, T2, f1, f2).
inline DtmEvaluation dtm_residual(const Theta& th, const Segment& s, const DtmConfig& cfg = {}) {
  cfg.validate();
  detail::check_bounds(th, cfg, s.duration());
  const detail::TemplateObjective obj(normalize_for_matching(s, cfg), s.fs, cfg);
  DtmEvaluation ev;
  const double half = obj.half_sq(th, ev.gradient);
  ev.residual_norm = std::sqrt(2.0 * half);
  for (double& g : ev.gradient) g = ev.residual_norm > 0.0 ? g / ev.residual_norm : 0.0;
  return ev;
}

/// Fits T1 < T2 < T1 + tau and the two carrier frequencies by multi-start
/// projected quasi-Newton on the box (T1, T2 - T1, f1, f2).
inline FittedTheta dtm_fit(const Segment& s, const DtmConfig& cfg = {}, std::uint64_t seed = 0) {
  cfg.validate();
  const double duration = s.duration();
  require(duration >= cfg.tau, ErrorKind::insufficient_data,
          "segment shorter than the matching window tau");
  const detail::TemplateObjective obj(normalize_for_matching(s, cfg), s.fs, cfg);

  const Range t1r = cfg.t1_range(duration);
  const Range dr = cfg.delta_range();
  const std::array<double, 4> lo{t1r.lo, dr.lo, cfg.f1.lo, cfg.f2.lo};
  const std::array<double, 4> hi{t1r.hi, dr.hi, cfg.f1.hi, cfg.f2.hi};
  const std::array<double, 4> scale{0.01, 0.01, 0.05, 0.05};

  const std::function<double(const std::array<double, 4>&, std::array<double, 4>&)> fn =
      [&](const std::array<double, 4>& x, std::array<double, 4>& g) {
        std::array<double, 4> gt;
        const double v = obj.half_sq({x[0], x[0] + x[1], x[2], x[3]}, gt);
        g = {gt[0] + gt[1], gt[1], gt[2], gt[3]};
        return v;
      };

  optim::BoxOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.ftol = cfg.tol;

  FittedTheta best;
  double best_value = std::numeric_limits<double>::infinity();
  std::size_t evals = 0;
  for (const Theta& start : detail::initial_points(obj, cfg, duration, seed)) {
    const auto r = optim::minimize_box<4>(
        fn, {start.t1, start.t2 - start.t1, start.f1, start.f2}, lo, hi, scale, opt);
    evals += r.evaluations;
    if (r.value < best_value) {
      best_value = r.value;
      best.t1 = r.x[0];
      best.t2 = r.x[0] + r.x[1];
      best.f1 = r.x[2];
      best.f2 = r.x[3];
      best.converged = r.converged && std::isfinite(r.value);
    }
  }
  best.n_evals = evals;
  best.signal_norm = obj.signal_norm();
  best.residual_norm = std::isfinite(best_value) ? std::sqrt(2.0 * best_value)
                                                 : std::numeric_limits<double>::infinity();
  best.degenerate = !best.converged || best.residual_norm >= cfg.degenerate_ratio * best.signal_norm;
  return best;
}

/// Draws a cycle with theta uniform inside the matching bounds and the fixed
/// template amplitudes and widths.
template <class Rng>
CycleParams random_feasible_cycle(Rng& rng, const DtmConfig& cfg, double duration) {
  const Range t1r = cfg.t1_range(duration);
  const Range dr = cfg.delta_range();
  std::uniform_real_distribution<double> ut1(t1r.lo, t1r.hi);
  std::uniform_real_distribution<double> ud(dr.lo, dr.hi);
  std::uniform_real_distribution<double> uf1(cfg.f1.lo, cfg.f1.hi);
  std::uniform_real_distribution<double> uf2(cfg.f2.lo, cfg.f2.hi);
  Theta th;
  th.t1 = ut1(rng);
  th.t2 = th.t1 + ud(rng);
  th.f1 = uf1(rng);
  th.f2 = uf2(rng);
  return template_cycle(th, cfg);
}

struct BenchRow {
  double snr_db = 0.0;
  double rate_v1 = 0.0;
  double rate_v2 = 0.0;
  std::size_t n_trials = 0;
  std::size_t n_converged = 0;
};

struct BenchSettings {
  double fs = kDefaultSampleRate;
  double duration = kDefaultDuration;
  double tolerance = 0.15;  // s, for counting an identification
  std::size_t workers = 1;
};

/// Identification rates of v1 and v2 over synthetic one-cycle segments.
/// Trial k uses the same theta and the same unit noise draw at every SNR.
inline std::vector<BenchRow> dtm_benchmark(std::span<const double> snr_grid, std::size_t n_trials,
                                           std::uint64_t seed, const DtmConfig& cfg = {},
                                           const BenchSettings& bench = {}) {
  require(n_trials >= 1, ErrorKind::invalid_parameter, "n_trials must be >= 1");
  cfg.validate();
  struct Trial {
    bool hit1 = false, hit2 = false, converged = false;
  };
  std::vector<BenchRow> rows;
  for (double snr : snr_grid) {
    std::vector<Trial> trials(n_trials);
    parallel_for(n_trials, bench.workers, [&](std::size_t k) {
      std::mt19937_64 rng(derive_seed(seed, 1, k));
      const CycleParams cycle = random_feasible_cycle(rng, cfg, bench.duration);
      const std::array<CycleParams, 1> one{cycle};
      Segment seg = synthesize_segment(one, bench.fs, bench.duration, cfg.tau);
      seg = add_noise(seg, snr, derive_seed(seed, 2, k));
      const FittedTheta fit = dtm_fit(seg, cfg, derive_seed(seed, 3, k));
      trials[k].converged = fit.converged;
      trials[k].hit1 = std::abs(fit.t1 - cycle.v1.time_index) <= bench.tolerance;
      trials[k].hit2 = std::abs(fit.t2 - cycle.v2.time_index) <= bench.tolerance;
    });
    BenchRow row;
    row.snr_db = snr;
    row.n_trials = n_trials;
    for (const auto& t : trials) {
      row.rate_v1 += t.hit1 ? 1.0 : 0.0;
      row.rate_v2 += t.hit2 ? 1.0 : 0.0;
      row.n_converged += t.converged ? 1 : 0;
    }
    row.rate_v1 /= static_cast<double>(n_trials);
    row.rate_v2 /= static_cast<double>(n_trials);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace horcrux
