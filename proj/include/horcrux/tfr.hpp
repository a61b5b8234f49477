#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "horcrux/error.hpp"
#include "horcrux/matrix.hpp"
#include "horcrux/signal_model.hpp"

namespace horcrux {

/// Magnitude spectrogram Y(m, n): rows are frames m, columns are bins n.
/// Frame m is centered at origin_time + m / frame_rate, bin n sits at
/// origin_freq + n * freq_resolution.
struct Spectrogram {
  Matrix values;
  double frame_rate = 1.0;
  double freq_resolution = 1.0;
  double origin_time = 0.0;
  double origin_freq = 0.0;

  std::size_t frames() const noexcept { return values.rows(); }
  std::size_t bins() const noexcept { return values.cols(); }

  void validate() const {
    require(frames() >= 1 && bins() >= 1, ErrorKind::invalid_input,
            "spectrogram must have at least one frame and one bin");
    require(frame_rate > 0.0 && freq_resolution > 0.0, ErrorKind::invalid_input,
            "spectrogram axis calibration must be positive");
    for (double v : values.values()) {
      require(v >= 0.0, ErrorKind::invalid_input, "spectrogram values must be non-negative");
    }
  }

  Spectrogram with_values(Matrix v) const {
    Spectrogram s = *this;
    s.values = std::move(v);
    return s;
  }
};

struct TfrSettings {
  std::size_t win_len = 64;
  std::size_t hop = 4;
  std::size_t nfft = 256;
  double freq_max = 50.0;
};

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

inline std::size_t frame_count(std::size_t len, std::size_t win_len, std::size_t hop) {
  return (len - win_len) / hop + 1;
}

/// Hann-windowed STFT magnitude, cropped to [0, freq_max]. Only the kept bins
/// are evaluated, as a direct DFT of the zero-padded frame.
inline Spectrogram spectrogram(const Segment& s, const TfrSettings& cfg = {}) {
  require(cfg.hop > 0 && cfg.hop <= cfg.win_len && cfg.win_len <= cfg.nfft,
          ErrorKind::invalid_parameter, "need 0 < hop <= win_len <= nfft");
  require(s.fs > 0.0, ErrorKind::invalid_parameter, "sample rate must be > 0");
  require(cfg.freq_max > 0.0, ErrorKind::invalid_parameter, "freq_max must be > 0");
  require(s.samples.size() >= cfg.win_len && s.samples.size() >= cfg.nfft,
          ErrorKind::insufficient_data,
          "segment of " + std::to_string(s.samples.size()) +
              " samples is shorter than one analysis window");

  const double df = s.fs / static_cast<double>(cfg.nfft);
  const std::size_t max_bin = std::min(
      cfg.nfft / 2, static_cast<std::size_t>(std::floor(cfg.freq_max / df + 1e-9)));
  const std::size_t n_bins = max_bin + 1;
  const std::size_t n_frames = frame_count(s.samples.size(), cfg.win_len, cfg.hop);

  const auto window = hann_window(cfg.win_len);
  // kernel(k, i) = w[i] * exp(-2*pi*j*k*i/nfft)
  std::vector<double> kc(n_bins * cfg.win_len), ks(n_bins * cfg.win_len);
  for (std::size_t k = 0; k < n_bins; ++k) {
    for (std::size_t i = 0; i < cfg.win_len; ++i) {
      const double ph = 2.0 * std::numbers::pi * static_cast<double>((k * i) % cfg.nfft) /
                        static_cast<double>(cfg.nfft);
      kc[k * cfg.win_len + i] = window[i] * std::cos(ph);
      ks[k * cfg.win_len + i] = -window[i] * std::sin(ph);
    }
  }

  Spectrogram out;
  out.values = Matrix(n_frames, n_bins);
  out.frame_rate = s.fs / static_cast<double>(cfg.hop);
  out.freq_resolution = df;
  out.origin_time = static_cast<double>(cfg.win_len) / (2.0 * s.fs);
  out.origin_freq = 0.0;

  for (std::size_t m = 0; m < n_frames; ++m) {
    const double* frame = s.samples.data() + m * cfg.hop;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double* c = kc.data() + k * cfg.win_len;
      const double* sn = ks.data() + k * cfg.win_len;
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < cfg.win_len; ++i) {
        re += frame[i] * c[i];
        im += frame[i] * sn[i];
      }
      out.values(m, k) = std::hypot(re, im);
    }
  }
  return out;
}

inline double frame_to_time(const Spectrogram& s, std::size_t frame) {
  return s.origin_time + static_cast<double>(frame) / s.frame_rate;
}

inline double bin_to_freq(const Spectrogram& s, std::size_t bin) {
  return s.origin_freq + static_cast<double>(bin) * s.freq_resolution;
}

namespace detail {
inline std::size_t nearest_index(double pos, std::size_t count, const char* what) {
  require(std::isfinite(pos) && pos >= -0.5 && pos < static_cast<double>(count) - 0.5 + 1e-9,
          ErrorKind::out_of_range, std::string(what) + " outside spectrogram coverage");
  const auto idx = static_cast<long long>(std::floor(pos + 0.5));
  return static_cast<std::size_t>(std::clamp<long long>(idx, 0, static_cast<long long>(count) - 1));
}
}  // namespace detail

/// Nearest frame. Throws out_of_range beyond half a frame from either end.
inline std::size_t time_to_frame(const Spectrogram& s, double t) {
  return detail::nearest_index((t - s.origin_time) * s.frame_rate, s.frames(), "time");
}

inline std::size_t freq_to_bin(const Spectrogram& s, double f) {
  return detail::nearest_index((f - s.origin_freq) / s.freq_resolution, s.bins(), "frequency");
}

}  // namespace horcrux
