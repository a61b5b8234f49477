#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "horcrux/metrics.hpp"

using namespace horcrux;

namespace {

// Largest one-to-one matching within tol, by exhaustive search.
std::size_t best_cardinality(const std::vector<double>& det, const std::vector<double>& truth,
                             double tol) {
  std::vector<bool> used(det.size(), false);
  std::function<std::size_t(std::size_t)> go = [&](std::size_t t) -> std::size_t {
    if (t == truth.size()) return 0;
    std::size_t best = go(t + 1);
    for (std::size_t d = 0; d < det.size(); ++d) {
      if (used[d] || std::abs(det[d] - truth[t]) > tol + 1e-9) continue;
      used[d] = true;
      best = std::max(best, 1 + go(t + 1));
      used[d] = false;
    }
    return best;
  };
  return go(0);
}

std::vector<double> grid_times(std::mt19937_64& rng, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(0, max_len), slot(0, 30);
  std::vector<double> v(len(rng));
  for (double& t : v) t = 0.1 * static_cast<double>(slot(rng));
  std::sort(v.begin(), v.end());
  return v;
}

const MetricReport kBaseline{0.096, 0.8265, 8.82, 0.0673};

}  // namespace

TEST(Rmse, Examples) {
  const std::vector<double> x{0, 0}, y{1, 1}, z{0, 2};
  EXPECT_EQ(rmse(x, x), 0.0);
  EXPECT_DOUBLE_EQ(rmse(x, y), 1.0);
  EXPECT_NEAR(rmse(z, x), 1.41421356, 1e-8);
}

TEST(Rmse, SymmetryAndTriangle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int k = 0; k < 200; ++k) {
    std::vector<double> x(50), y(50), z(50);
    for (std::size_t i = 0; i < 50; ++i) {
      x[i] = n(rng);
      y[i] = n(rng);
      z[i] = n(rng);
    }
    ASSERT_DOUBLE_EQ(rmse(x, y), rmse(y, x));
    ASSERT_LE(rmse(x, z), rmse(x, y) + rmse(y, z) + 1e-12);
  }
}

TEST(Rmse, Errors) {
  const std::vector<double> a{1, 2}, b{1};
  EXPECT_THROW(rmse(a, b), Error);
  EXPECT_THROW(rmse(std::span<const double>{}, std::span<const double>{}), Error);
}

TEST(Pcc, Examples) {
  const std::vector<double> x{1, 2, 3}, y{3, 2, 1};
  EXPECT_DOUBLE_EQ(pcc(x, x), 1.0);
  EXPECT_DOUBLE_EQ(pcc(x, y), -1.0);
}

TEST(Pcc, AffineInvariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> x(40), y(40);
    for (std::size_t i = 0; i < 40; ++i) {
      x[i] = n(rng);
      y[i] = 0.5 * x[i] + n(rng);
    }
    double a = coef(rng), c = coef(rng);
    if (std::abs(a) < 0.1 || std::abs(c) < 0.1) continue;
    const double b = coef(rng), d = coef(rng);
    std::vector<double> ax(40), cy(40);
    for (std::size_t i = 0; i < 40; ++i) {
      ax[i] = a * x[i] + b;
      cy[i] = c * y[i] + d;
    }
    const double s = (a * c > 0) ? 1.0 : -1.0;
    ASSERT_NEAR(pcc(ax, cy), s * pcc(x, y), 1e-12);
    const double r = pcc(x, y);
    ASSERT_GE(r, -1.0);
    ASSERT_LE(r, 1.0);
  }
}

TEST(Pcc, ZeroVarianceIsUndefined) {
  const std::vector<double> x{1, 1, 1}, y{1, 2, 3};
  try {
    pcc(x, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::undefined_correlation);
  }
  const std::vector<double> one{1};
  EXPECT_THROW(pcc(one, one), Error);
}

TEST(MatchBeats, IdenticalLists) {
  const std::vector<double> t{0.5, 1.4, 2.2, 3.1};
  const BeatMatch m = match_beats(t, t);
  EXPECT_EQ(m.mdr, 0.0);
  EXPECT_EQ(m.mean_abs_error_ms, 0.0);
  EXPECT_EQ(m.matches, 4u);
}

TEST(MatchBeats, NineOfTen) {
  std::vector<double> truth, det;
  for (int i = 0; i < 10; ++i) truth.push_back(0.8 * i);
  det = truth;
  det.erase(det.begin() + 4);
  EXPECT_DOUBLE_EQ(match_beats(det, truth).mdr, 0.1);
}

TEST(MatchBeats, HandComputedError) {
  const std::vector<double> truth{1.0, 2.0}, det{1.05, 2.10};
  const BeatMatch m = match_beats(det, truth, 0.15);
  EXPECT_NEAR(m.mean_abs_error_ms, 75.0, 1e-9);
  EXPECT_EQ(m.mdr, 0.0);
}

TEST(MatchBeats, NearestFirstWouldMissOne) {
  // Nearest-first pairs 1.1 with 1.1 and leaves 1.2 unmatched.
  const std::vector<double> truth{1.1, 1.2}, det{1.0, 1.1};
  const BeatMatch m = match_beats(det, truth, 0.15);
  EXPECT_EQ(m.matches, 2u);
  EXPECT_EQ(m.mdr, 0.0);
}

TEST(MatchBeats, AgreesWithExhaustiveOracle) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 300; ++k) {
    auto truth = grid_times(rng, 6);
    if (truth.empty()) truth.push_back(1.0);
    const auto det = grid_times(rng, 6);
    const BeatMatch m = match_beats(det, truth, 0.15);
    ASSERT_EQ(m.matches, best_cardinality(det, truth, 0.15));
  }
}

TEST(MatchBeats, MdrMonotoneInTolerance) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 200; ++k) {
    auto truth = grid_times(rng, 6);
    if (truth.empty()) continue;
    const auto det = grid_times(rng, 6);
    double prev = 1.0;
    for (double tol : {0.0, 0.05, 0.1, 0.15, 0.3, 1.0}) {
      const double mdr = match_beats(det, truth, tol).mdr;
      ASSERT_GE(mdr, 0.0);
      ASSERT_LE(mdr, prev + 1e-15);
      prev = mdr;
    }
  }
}

TEST(MatchBeats, Errors) {
  const std::vector<double> none, some{1.0};
  EXPECT_THROW(match_beats(some, none), Error);
  const std::vector<double> unsorted{2.0, 1.0};
  EXPECT_THROW(match_beats(unsorted, some), Error);
  EXPECT_THROW(match_beats(some, some, -0.1), Error);
}

TEST(DeltaM, BaselineAgainstItself) { EXPECT_EQ(delta_m(kBaseline, kBaseline), 0.0); }

TEST(DeltaM, PublishedRows) {
  EXPECT_NEAR(delta_m({0.086, 0.8541, 6.21, 0.0530}, kBaseline), 16.20, 0.25);
  EXPECT_NEAR(delta_m({0.088, 0.8225, 7.55, 0.0614}, kBaseline), 7.80, 0.25);
  EXPECT_NEAR(delta_m({0.089, 0.8336, 7.72, 0.0579}, kBaseline), 8.69, 0.35);
}

TEST(DeltaM, StrictImprovementIncreasesScore) {
  const MetricReport m{0.09, 0.83, 8.0, 0.06};
  const double base = delta_m(m, kBaseline);
  MetricReport r = m;
  r.rmse = 0.08;
  EXPECT_GT(delta_m(r, kBaseline), base);
  r = m;
  r.pcc = 0.9;
  EXPECT_GT(delta_m(r, kBaseline), base);
  r = m;
  r.heartbeat_error = 7.0;
  EXPECT_GT(delta_m(r, kBaseline), base);
  r = m;
  r.mdr = 0.05;
  EXPECT_GT(delta_m(r, kBaseline), base);
}

TEST(DeltaM, ZeroBaselineMetric) {
  MetricReport b = kBaseline;
  b.mdr = 0.0;
  try {
    delta_m(kBaseline, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::division_by_zero);
  }
}

TEST(Evaluate, CombinesMetrics) {
  const std::vector<double> ref{0, 1, 0, -1, 0}, rec{0, 0.9, 0.1, -1, 0};
  const std::vector<double> truth{1.0, 2.0}, det{1.05, 2.10};
  const MetricReport r = evaluate(ref, rec, truth, det);
  EXPECT_DOUBLE_EQ(r.rmse, rmse(rec, ref));
  EXPECT_DOUBLE_EQ(r.pcc, pcc(rec, ref));
  EXPECT_NEAR(r.heartbeat_error, 75.0, 1e-9);
  EXPECT_EQ(r.mdr, 0.0);
}
