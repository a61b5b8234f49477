#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "horcrux/error.hpp"
#include "horcrux/matrix.hpp"
#include "horcrux/tfr.hpp"

namespace horcrux {

enum class Axis { time, frequency };

/// Mirror an out-of-range index back into [0, n) without repeating the edge
/// sample: for n = 5, index -2 maps to 2 and index 6 maps to 2. Repeats with
/// period 2(n-1) so any window length is accepted.
inline std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * (static_cast<long long>(n) - 1);
  long long r = i % period;
  if (r < 0) r += period;
  if (r >= static_cast<long long>(n)) r = period - r;
  return static_cast<std::size_t>(r);
}

/// Sliding median of odd length k along one axis, reflect-padded.
/// Axis::time filters down each column (across frames), Axis::frequency
/// along each row (across bins).
inline Matrix median_filter_axis(const Matrix& values, std::size_t k, Axis axis) {
  require(k >= 1 && k % 2 == 1, ErrorKind::invalid_parameter,
          "median filter length must be odd and >= 1");
  Matrix out(values.rows(), values.cols());
  if (values.empty()) return out;

  const std::size_t lines = axis == Axis::time ? values.cols() : values.rows();
  const std::size_t len = axis == Axis::time ? values.rows() : values.cols();
  const auto at = [&](std::size_t line, std::size_t pos) {
    return axis == Axis::time ? values(pos, line) : values(line, pos);
  };
  const long long half = static_cast<long long>(k / 2);

  std::vector<double> window(k);
  for (std::size_t line = 0; line < lines; ++line) {
    for (std::size_t pos = 0; pos < len; ++pos) {
      for (std::size_t j = 0; j < k; ++j) {
        const long long src = static_cast<long long>(pos) - half + static_cast<long long>(j);
        window[j] = at(line, reflect_index(src, len));
      }
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(k / 2);
      std::nth_element(window.begin(), mid, window.end());
      if (axis == Axis::time) {
        out(pos, line) = *mid;
      } else {
        out(line, pos) = *mid;
      }
    }
  }
  return out;
}

struct HpssSettings {
  std::size_t kh = 17;  // frames
  std::size_t kp = 17;  // bins
};

struct HpssResult {
  Spectrogram harmonic;    // M_h * Y
  Spectrogram percussive;  // M_p * Y
  Matrix mask_h;
  Matrix mask_p;
  Matrix enhanced_h;  // time-axis median of Y
  Matrix enhanced_p;  // frequency-axis median of Y

  Matrix recombined() const {
    Matrix out = harmonic.values;
    auto o = out.values();
    auto p = percussive.values.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += p[i];
    return out;
  }
};

/// Median-filter harmonic/percussive split with Wiener soft masks. Cells where
/// both enhanced spectrograms vanish get M_h = M_p = 0.5.
inline HpssResult hpss_decompose(const Spectrogram& y, const HpssSettings& cfg = {}) {
  y.validate();
  HpssResult r;
  r.enhanced_h = median_filter_axis(y.values, cfg.kh, Axis::time);
  r.enhanced_p = median_filter_axis(y.values, cfg.kp, Axis::frequency);
  r.mask_h = Matrix(y.frames(), y.bins());
  r.mask_p = Matrix(y.frames(), y.bins());
  Matrix h(y.frames(), y.bins()), p(y.frames(), y.bins());

  const auto yv = y.values.values();
  const auto eh = r.enhanced_h.values();
  const auto ep = r.enhanced_p.values();
  auto mh = r.mask_h.values();
  auto mp = r.mask_p.values();
  auto hv = h.values();
  auto pv = p.values();
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double denom = eh[i] + ep[i];
    if (denom > 0.0) {
      mh[i] = eh[i] / denom;
      mp[i] = ep[i] / denom;
    } else {
      mh[i] = 0.5;
      mp[i] = 0.5;
    }
    hv[i] = mh[i] * yv[i];
    pv[i] = mp[i] * yv[i];
  }
  r.harmonic = y.with_values(std::move(h));
  r.percussive = y.with_values(std::move(p));
  return r;
}

}  // namespace horcrux
