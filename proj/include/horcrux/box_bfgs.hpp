#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>

namespace horcrux::optim {

/// Result of a bound-constrained minimization.
template <std::size_t N>
struct BoxResult {
  std::array<double, N> x{};
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
};

struct BoxOptions {
  std::size_t max_iters = 200;
  double ftol = 1e-12;  // relative objective decrease treated as stagnation
  double gtol = 1e-10;  // projected-gradient infinity norm, scaled coordinates
};

/// Projected BFGS on a box. The inverse-Hessian approximation is applied to
/// the free variables only; variables pinned at a bound with the gradient
/// pointing outward are held fixed for the step. Step length by Armijo
/// backtracking along the projected path.
///
/// `fn(x, grad)` returns the objective and writes its gradient. `scale` maps
/// the problem into roughly unit-sized coordinates (x = scale * z).
template <std::size_t N>
BoxResult<N> minimize_box(
    const std::function<double(const std::array<double, N>&, std::array<double, N>&)>& fn,
    std::array<double, N> x0, const std::array<double, N>& lo, const std::array<double, N>& hi,
    const std::array<double, N>& scale, const BoxOptions& opt = {}) {
  using Vec = std::array<double, N>;
  BoxResult<N> res;

  Vec zlo, zhi, z;
  for (std::size_t i = 0; i < N; ++i) {
    zlo[i] = lo[i] / scale[i];
    zhi[i] = hi[i] / scale[i];
    z[i] = std::clamp(x0[i] / scale[i], zlo[i], zhi[i]);
  }
  const auto eval = [&](const Vec& zz, Vec& gz) {
    Vec xx, gx;
    for (std::size_t i = 0; i < N; ++i) xx[i] = zz[i] * scale[i];
    const double f = fn(xx, gx);
    for (std::size_t i = 0; i < N; ++i) gz[i] = gx[i] * scale[i];
    ++res.evaluations;
    return f;
  };
  const auto project = [&](Vec v) {
    for (std::size_t i = 0; i < N; ++i) v[i] = std::clamp(v[i], zlo[i], zhi[i]);
    return v;
  };

  std::array<std::array<double, N>, N> h{};
  const auto reset_h = [&] {
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) h[i][j] = i == j ? 1.0 : 0.0;
  };
  reset_h();

  Vec g;
  double f = eval(z, g);
  int stalls = 0;

  for (; res.iterations < opt.max_iters; ++res.iterations) {
    std::array<bool, N> free{};
    double pg_norm = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double eps = 1e-12 * (1.0 + std::abs(z[i]));
      const bool at_lo = z[i] <= zlo[i] + eps && g[i] > 0.0;
      const bool at_hi = z[i] >= zhi[i] - eps && g[i] < 0.0;
      free[i] = !(at_lo || at_hi);
      if (free[i]) pg_norm = std::max(pg_norm, std::abs(g[i]));
    }
    if (pg_norm <= opt.gtol * (1.0 + std::abs(f))) {
      res.converged = true;
      break;
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Vec p{};
      double slope = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        if (!free[i]) continue;
        for (std::size_t j = 0; j < N; ++j)
          if (free[j]) p[i] -= h[i][j] * g[j];
        slope += p[i] * g[i];
      }
      if (!(slope < 0.0)) {
        reset_h();
        for (std::size_t i = 0; i < N; ++i) p[i] = free[i] ? -g[i] : 0.0;
      }

      double alpha = 1.0;
      for (int k = 0; k < 60; ++k, alpha *= 0.5) {
        Vec zn;
        for (std::size_t i = 0; i < N; ++i) zn[i] = z[i] + alpha * p[i];
        zn = project(zn);
        double dec = 0.0;
        bool moved = false;
        for (std::size_t i = 0; i < N; ++i) {
          dec += g[i] * (zn[i] - z[i]);
          moved = moved || zn[i] != z[i];
        }
        if (!moved) break;
        Vec gn;
        const double fn_val = eval(zn, gn);
        if (fn_val <= f + 1e-4 * dec) {
          Vec s, yv;
          double sy = 0.0, ss = 0.0, yy = 0.0;
          for (std::size_t i = 0; i < N; ++i) {
            s[i] = zn[i] - z[i];
            yv[i] = gn[i] - g[i];
            sy += s[i] * yv[i];
            ss += s[i] * s[i];
            yy += yv[i] * yv[i];
          }
          if (sy > 1e-12 * std::sqrt(ss * yy)) {
            // H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            const double rho = 1.0 / sy;
            Vec hy{};
            for (std::size_t i = 0; i < N; ++i)
              for (std::size_t j = 0; j < N; ++j) hy[i] += h[i][j] * yv[j];
            double yhy = 0.0;
            for (std::size_t i = 0; i < N; ++i) yhy += yv[i] * hy[i];
            for (std::size_t i = 0; i < N; ++i)
              for (std::size_t j = 0; j < N; ++j)
                h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) +
                           (rho * rho * yhy + rho) * s[i] * s[j];
          }
          const double drop = f - fn_val;
          stalls = drop <= opt.ftol * (1.0 + std::abs(f)) ? stalls + 1 : 0;
          z = zn;
          g = gn;
          f = fn_val;
          accepted = true;
          break;
        }
      }
      if (!accepted) reset_h();
    }
    if (!accepted) {
      // No descent along the steepest projected direction: numerical optimum.
      res.converged = true;
      break;
    }
    if (stalls >= 2) {
      res.converged = true;
      ++res.iterations;
      break;
    }
  }

  for (std::size_t i = 0; i < N; ++i) res.x[i] = z[i] * scale[i];
  res.value = f;
  return res;
}

}  // namespace horcrux::optim
