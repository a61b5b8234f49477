// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Usage: acceptance [work_dir]
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "horcrux/horcrux.hpp"

using namespace horcrux;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::printf("criterion %d %s  %s: %s [%.2f s, budget %.0f s%s]\n", id, ok ? "PASS" : "FAIL",
              name, o.detail.c_str(), secs, budget_s, in_time ? "" : ", over budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---- 1: hpss algebra ----

Outcome hpss_algebra() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::size_t> rows(1, 200), cols(1, 128);
  std::exponential_distribution<double> mag(1.0);
  std::bernoulli_distribution zero(0.2);
  double worst_mask = 0.0, worst_rec = 0.0;
  for (int k = 0; k < 100; ++k) {
    Spectrogram y;
    y.values = Matrix(rows(rng), cols(rng));
    y.frame_rate = 50.0;
    y.freq_resolution = 0.78125;
    for (double& v : y.values.values()) v = zero(rng) ? 0.0 : mag(rng);
    const HpssResult hp = hpss_decompose(y);
    const auto yv = y.values.values();
    for (std::size_t i = 0; i < yv.size(); ++i) {
      worst_mask = std::max(worst_mask,
                            std::abs(hp.mask_h.values()[i] + hp.mask_p.values()[i] - 1.0));
      const double rec = hp.harmonic.values.values()[i] + hp.percussive.values.values()[i];
      const double rel = yv[i] > 0.0 ? std::abs(rec - yv[i]) / yv[i] : std::abs(rec);
      worst_rec = std::max(worst_rec, rel);
    }
  }
  return {worst_mask <= 1e-12 && worst_rec <= 1e-9,
          fmt("max|Mh+Mp-1| = %.2e, max rel reconstruction error = %.2e", worst_mask, worst_rec)};
}

// ---- 2: median filter vs sort oracle ----

std::size_t mirror(long long i, long long n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return static_cast<std::size_t>(i);
}

std::vector<double> sort_median(const std::vector<double>& x, std::size_t k) {
  const auto n = static_cast<long long>(x.size());
  const auto h = static_cast<long long>(k / 2);
  std::vector<double> out(x.size());
  for (long long i = 0; i < n; ++i) {
    std::vector<double> w;
    for (long long j = i - h; j <= i + h; ++j) w.push_back(x[mirror(j, n)]);
    std::sort(w.begin(), w.end());
    out[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(h)];
  }
  return out;
}

Outcome median_oracle() {
  std::mt19937_64 rng(1002);
  std::uniform_int_distribution<std::size_t> len(2, 200), other(1, 4), pick(0, 2);
  std::normal_distribution<double> n;
  const std::size_t ks[] = {3, 5, 17};
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = ks[pick(rng)];
    const bool along_time = trial % 2 == 0;
    const std::size_t length = len(rng), lines = other(rng);
    Matrix m = along_time ? Matrix(length, lines) : Matrix(lines, length);
    for (double& v : m.values()) v = std::round(n(rng) * 4.0);  // ties are common
    const Matrix out = median_filter_axis(m, k, along_time ? Axis::time : Axis::frequency);
    for (std::size_t l = 0; l < lines; ++l) {
      std::vector<double> x(length);
      for (std::size_t i = 0; i < length; ++i) x[i] = along_time ? m(i, l) : m(l, i);
      const auto ref = sort_median(x, k);
      for (std::size_t i = 0; i < length; ++i)
        mismatches += (along_time ? out(i, l) : out(l, i)) != ref[i] ? 1 : 0;
    }
  }
  return {mismatches == 0, fmt("1000 random rows/columns, k in {3,5,17}: %.0f mismatches",
                               static_cast<double>(mismatches))};
}

// ---- 3: noiseless dtm recovery ----

Outcome dtm_recovery() {
  const DtmConfig cfg;
  const std::size_t trials = 200;
  std::vector<char> hit(trials, 0);
  parallel_for(trials, default_workers(), [&](std::size_t k) {
    std::mt19937_64 rng(derive_seed(1003, 0, k));
    const std::array<CycleParams, 1> one{random_feasible_cycle(rng, cfg, 4.0)};
    const Segment s = synthesize_segment(one, 200.0, 4.0);
    const FittedTheta fit = dtm_fit(s, cfg, k);
    hit[k] = std::abs(fit.t1 - one[0].v1.time_index) <= 0.15 &&
             std::abs(fit.t2 - one[0].v2.time_index) <= 0.15;
  });
  const auto hits = static_cast<double>(std::count(hit.begin(), hit.end(), 1));
  const double rate = hits / static_cast<double>(trials);
  return {rate >= 0.99, fmt("%.0f/200 within 0.15 s on T1 and T2 (%.1f%%)", hits, 100.0 * rate)};
}

// ---- 4: gradient ----

Outcome gradient_check() {
  const DtmConfig cfg;
  const std::array<CycleParams, 1> one{reference_cycle()};
  const Segment s = add_noise(synthesize_segment(one, 200.0, 4.0), 5.0, 1004);
  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<double> ut1(0.01, 3.49), ud(0.101, 0.499), uf1(5.01, 17.99),
      uf2(15.01, 29.99);
  constexpr double h = 1e-6;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Theta th{ut1(rng), 0.0, uf1(rng), uf2(rng)};
    th.t2 = th.t1 + ud(rng);
    const auto ev = dtm_residual(th, s, cfg);
    double scale = 0.0, err = 0.0;
    for (int i = 0; i < 4; ++i) {
      Theta a = th, b = th;
      double* pa[] = {&a.t1, &a.t2, &a.f1, &a.f2};
      double* pb[] = {&b.t1, &b.t2, &b.f1, &b.f2};
      *pa[i] += h;
      *pb[i] -= h;
      const double fd =
          (dtm_residual(a, s, cfg).residual_norm - dtm_residual(b, s, cfg).residual_norm) / (2 * h);
      scale = std::max(scale, std::abs(fd));
      err = std::max(err, std::abs(fd - ev.gradient[i]));
    }
    worst = std::max(worst, err / std::max(scale, 1e-12));
  }
  return {worst <= 1e-5, fmt("max relative error %.2e over 100 points (h = 1e-6)", worst)};
}

// ---- 5: augmentation locality ----

Outcome augment_locality() {
  const DtmConfig dcfg;
  std::mt19937_64 rng(1005);
  std::size_t bad_outside = 0, bad_inside = 0, bad_count = 0, fits = 0;
  for (int k = 0; k < 50; ++k) {
    const std::array<CycleParams, 1> one{random_feasible_cycle(rng, dcfg, 4.0)};
    const Segment s = add_noise(synthesize_segment(one, 200.0, 4.0), 10.0, 1005 + k);
    const Spectrogram y = spectrogram(s);
    const HpssResult hp = hpss_decompose(y);
    AugPolicy policy;
    policy.domain = static_cast<MaskDomain>(k % 3);
    policy.placement = k % 2 == 0 ? MaskPlacement::dtm : MaskPlacement::random;
    std::optional<FittedTheta> theta;
    if (policy.placement == MaskPlacement::dtm) {
      theta = dtm_fit(s, dcfg, static_cast<std::uint64_t>(k));
      ++fits;
    }
    const MaskSpec m = build_mask(theta, y, policy, rng);
    const Spectrogram out = augment_spectrogram(y, hp, m);
    const Band tb = time_band(m, y.frames()), fb = frequency_band(m, y.bins());
    std::size_t masked = 0;
    for (std::size_t r = 0; r < y.frames(); ++r)
      for (std::size_t c = 0; c < y.bins(); ++c) {
        const bool in_t = m.uses_time() && tb.contains(r);
        const bool in_f = m.uses_frequency() && fb.contains(c);
        if (in_t || in_f) {
          ++masked;
          if (in_t && out.values(r, c) != hp.percussive.values(r, c)) ++bad_inside;
        } else if (std::abs(out.values(r, c) - y.values(r, c)) >
                   1e-9 * std::max(std::abs(y.values(r, c)), 1e-300)) {
          ++bad_outside;
        }
      }
    const std::size_t wt = m.uses_time() ? tb.size() : 0, wf = m.uses_frequency() ? fb.size() : 0;
    const std::size_t expect = wt * y.bins() + wf * y.frames() - wt * wf;
    if (masked != expect || masked_cell_count(m, y.frames(), y.bins()) != expect) ++bad_count;
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "50 segments (%zu template fits): %zu cells off outside bands, %zu time-band cells "
                "differ from percussive, %zu count mismatches",
                fits, bad_outside, bad_inside, bad_count);
  return {bad_outside == 0 && bad_inside == 0 && bad_count == 0, buf};
}

// ---- 6: delta-m on published rows ----

Outcome delta_m_rows() {
  const MetricReport base{0.096, 0.8265, 8.82, 0.0673};
  struct Row {
    const char* name;
    MetricReport m;
    double published, tol;
  };
  const Row rows[] = {{"Horcrux (20%)", {0.086, 0.8541, 6.21, 0.0530}, 16.20, 0.25},
                      {"C-Mixup", {0.088, 0.8225, 7.55, 0.0614}, 7.80, 0.25},
                      {"RC-Mixup", {0.089, 0.8336, 7.72, 0.0579}, 8.69, 0.35}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const double got = delta_m(r.m, base);
    ok = ok && std::abs(got - r.published) <= r.tol;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s%s %.3f%% (published %.2f%%)", detail.empty() ? "" : "; ",
                  r.name, got, r.published);
    detail += buf;
  }
  return {ok, detail};
}

// ---- 7: run determinism ----

Outcome run_determinism(const fs::path& work) {
  RunConfig cfg;
  cfg.seed = 1007;
  cfg.synth.n_segments = 20;
  cfg.synth.snr_db = 10.0;
  cfg.aug.proportion = 0.2;
  cfg.bench.trials = 5;
  cfg.workers = default_workers();
  cfg.out_dir = work / "run_a";
  fs::remove_all(cfg.out_dir);
  const RunReport a = run_pipeline(cfg);
  cfg.out_dir = work / "run_b";
  fs::remove_all(cfg.out_dir);
  const RunReport b = run_pipeline(cfg);
  return {a.manifest_hash == b.manifest_hash && !a.manifest_hash.empty(),
          "20 segments, two runs: " + a.manifest_hash.substr(0, 16) + " vs " +
              b.manifest_hash.substr(0, 16)};
}

// ---- 8: beat matching vs optimal assignment ----

struct Optimal {
  std::size_t matches = 0;
  double err = 0.0;  // minimum total |error| among maximum matchings
};

Optimal optimal_assignment(const std::vector<double>& det, const std::vector<double>& truth,
                           double tol) {
  Optimal best;
  std::vector<bool> used(det.size(), false);
  std::function<void(std::size_t, std::size_t, double)> go = [&](std::size_t t, std::size_t n,
                                                                  double err) {
    if (t == truth.size()) {
      if (n > best.matches || (n == best.matches && err < best.err)) best = {n, err};
      return;
    }
    go(t + 1, n, err);
    for (std::size_t d = 0; d < det.size(); ++d) {
      const double e = std::abs(det[d] - truth[t]);
      if (used[d] || e > tol + 1e-9) continue;
      used[d] = true;
      go(t + 1, n + 1, err + e);
      used[d] = false;
    }
  };
  best.err = std::numeric_limits<double>::infinity();
  go(0, 0, 0.0);
  return best;
}

Outcome beat_oracle() {
  constexpr double tol = kDefaultBeatTolerance;
  std::mt19937_64 rng(1008);
  std::uniform_int_distribution<std::size_t> len_t(1, 6), len_d(0, 6), slot(0, 30);
  std::size_t mdr_mismatch = 0, he_differs = 0;
  double he_gap_max = 0.0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> truth(len_t(rng)), det(len_d(rng));
    for (double& t : truth) t = 0.1 * static_cast<double>(slot(rng));
    for (double& t : det) t = 0.1 * static_cast<double>(slot(rng));
    std::sort(truth.begin(), truth.end());
    std::sort(det.begin(), det.end());
    const BeatMatch g = match_beats(det, truth, tol);
    const Optimal o = optimal_assignment(det, truth, tol);
    const double opt_mdr =
        static_cast<double>(truth.size() - o.matches) / static_cast<double>(truth.size());
    if (g.mdr != opt_mdr) ++mdr_mismatch;
    if (o.matches > 0) {
      const double opt_he = 1000.0 * o.err / static_cast<double>(o.matches);
      const double gap = std::abs(g.mean_abs_error_ms - opt_he);
      if (gap > 1e-6) ++he_differs;
      he_gap_max = std::max(he_gap_max, gap);
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "1000 cases: %zu MDR mismatches; H.E. differs from optimal in %zu cases, max gap "
                "%.1f ms (limit %.0f ms)",
                mdr_mismatch, he_differs, he_gap_max, 1000.0 * tol);
  return {mdr_mismatch == 0 && he_gap_max <= 1000.0 * tol, buf};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "horcrux_acceptance";
  fs::create_directories(work);

  criterion(1, "HPSS mask algebra", 5.0, hpss_algebra);
  criterion(2, "median filter oracle", 5.0, median_oracle);
  criterion(3, "template fit noiseless recovery", 120.0, dtm_recovery);
  criterion(4, "template gradient check", 10.0, gradient_check);
  criterion(5, "augmentation locality", 10.0, augment_locality);
  criterion(6, "delta-m on published rows", 1.0, delta_m_rows);
  criterion(7, "run determinism", 600.0, [&] { return run_determinism(work); });
  criterion(8, "beat matching oracle", 10.0, beat_oracle);

  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
