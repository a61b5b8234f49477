#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "horcrux/error.hpp"

namespace horcrux {

/// One Gaussian-enveloped cosine burst:
///   v(t) = a * cos(2*pi*f*t) * exp(-(t - T)^2 / b^2)
/// The carrier phase is anchored at t = 0, not at T.
struct VibrationParams {
  double amplitude = 0.0;    // a
  double center_freq = 0.0;  // f, Hz
  double time_index = 0.0;   // T, s
  double width = 0.0;        // b, s

  void validate() const {
    require(amplitude >= 0.0 && std::isfinite(amplitude), ErrorKind::invalid_parameter,
            "vibration amplitude must be finite and >= 0");
    require(center_freq > 0.0 && std::isfinite(center_freq), ErrorKind::invalid_parameter,
            "vibration center frequency must be > 0");
    require(width > 0.0 && std::isfinite(width), ErrorKind::invalid_parameter,
            "vibration width must be > 0");
    require(time_index >= 0.0 && std::isfinite(time_index), ErrorKind::invalid_parameter,
            "vibration time index must be >= 0");
  }

  double operator()(double t) const {
    const double u = (t - time_index) / width;
    return amplitude * std::cos(2.0 * std::numbers::pi * center_freq * t) * std::exp(-u * u);
  }

  friend bool operator==(const VibrationParams&, const VibrationParams&) = default;
};

/// AO (v1) and AC (v2) vibrations of one cardiac cycle.
struct CycleParams {
  VibrationParams v1;
  VibrationParams v2;

  friend bool operator==(const CycleParams&, const CycleParams&) = default;
};

inline constexpr double kDefaultTau = 0.5;
inline constexpr double kDefaultSampleRate = 200.0;
inline constexpr double kDefaultDuration = 4.0;

/// Reference cycle: T1=0.4, T2=0.85, f1=10, f2=23, a1=0.5, a2=0.1, b1=0.05, b2=0.03.
inline CycleParams reference_cycle() {
  return {{0.5, 10.0, 0.4, 0.05}, {0.1, 23.0, 0.85, 0.03}};
}

/// A uniformly sampled displacement record.
struct Segment {
  std::vector<double> samples;
  double fs = kDefaultSampleRate;
  std::optional<std::vector<double>> beat_times;
  std::vector<CycleParams> cycles;  // generating parameters, when synthetic

  double duration() const { return static_cast<double>(samples.size()) / fs; }

  double time_at(std::size_t i) const { return static_cast<double>(i) / fs; }

  std::vector<double> time_grid() const {
    std::vector<double> t(samples.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = time_at(i);
    return t;
  }
};

inline std::vector<double> synthesize_vibration(const VibrationParams& p,
                                                std::span<const double> time_grid) {
  p.validate();
  for (std::size_t i = 1; i < time_grid.size(); ++i) {
    require(time_grid[i] > time_grid[i - 1], ErrorKind::invalid_parameter,
            "time grid must be strictly increasing");
  }
  std::vector<double> out(time_grid.size());
  std::transform(time_grid.begin(), time_grid.end(), out.begin(),
                 [&](double t) { return p(t); });
  return out;
}

inline void validate_cycle(const CycleParams& c, double duration, double tau = kDefaultTau) {
  c.v1.validate();
  c.v2.validate();
  require(c.v1.time_index < duration && c.v2.time_index < duration,
          ErrorKind::invalid_parameter, "cycle time index outside the segment");
  require(c.v2.time_index > c.v1.time_index, ErrorKind::invalid_parameter,
          "v2 must follow v1");
  require(c.v2.time_index - c.v1.time_index < tau, ErrorKind::invalid_parameter,
          "v2 must follow v1 within tau");
}

inline std::size_t sample_count(double fs, double duration) {
  return static_cast<std::size_t>(std::llround(fs * duration));
}

/// Sum of all cycles' vibrations on the grid t_i = i / fs.
/// beat_times are the v1 time indices, sorted.
inline Segment synthesize_segment(std::span<const CycleParams> cycles, double fs,
                                  double duration, double tau = kDefaultTau) {
  require(fs > 0.0 && std::isfinite(fs), ErrorKind::invalid_parameter, "fs must be > 0");
  require(duration > 0.0 && std::isfinite(duration), ErrorKind::invalid_parameter,
          "duration must be > 0");
  for (const auto& c : cycles) validate_cycle(c, duration, tau);

  Segment s;
  s.fs = fs;
  s.samples.assign(sample_count(fs, duration), 0.0);
  s.cycles.assign(cycles.begin(), cycles.end());
  std::vector<double> beats;
  for (const auto& c : cycles) {
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
      const double t = s.time_at(i);
      s.samples[i] += c.v1(t) + c.v2(t);
    }
    beats.push_back(c.v1.time_index);
  }
  std::sort(beats.begin(), beats.end());
  s.beat_times = std::move(beats);
  return s;
}

inline double mean_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

/// Constant interfering tone: amplitude * cos(2*pi*freq*t).
struct Tone {
  double freq = 0.0;
  double amplitude = 0.0;
};

/// Additive white Gaussian noise at an exact empirical SNR (the drawn noise is
/// rescaled so its mean power is P_signal / 10^(snr/10)), plus an optional tone.
/// snr_db = +inf adds no Gaussian noise.
inline Segment add_noise(const Segment& s, double snr_db, std::uint64_t seed,
                         std::optional<Tone> tone = std::nullopt) {
  require(!std::isnan(snr_db) && snr_db != -std::numeric_limits<double>::infinity(),
          ErrorKind::invalid_parameter, "snr_db must be a number or +inf");
  Segment out = s;
  if (std::isfinite(snr_db)) {
    const double p_signal = mean_power(s.samples);
    require(p_signal > 0.0, ErrorKind::undefined_snr,
            "signal has zero power; SNR is undefined");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> noise(s.samples.size());
    for (double& v : noise) v = normal(rng);
    const double p_drawn = mean_power(noise);
    const double p_target = p_signal / std::pow(10.0, snr_db / 10.0);
    const double gain = p_drawn > 0.0 ? std::sqrt(p_target / p_drawn) : 0.0;
    for (std::size_t i = 0; i < noise.size(); ++i) out.samples[i] += gain * noise[i];
  }
  if (tone) {
    require(tone->freq > 0.0, ErrorKind::invalid_parameter, "tone frequency must be > 0");
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      out.samples[i] +=
          tone->amplitude * std::cos(2.0 * std::numbers::pi * tone->freq * out.time_at(i));
    }
  }
  return out;
}

}  // namespace horcrux
