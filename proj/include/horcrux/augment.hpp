#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "horcrux/dtm.hpp"
#include "horcrux/error.hpp"
#include "horcrux/hpss.hpp"
#include "horcrux/parallel.hpp"
#include "horcrux/tfr.hpp"

namespace horcrux {

enum class MaskDomain { time, frequency, both };
enum class MaskPlacement { dtm, random };
enum class Vibration { v1, v2 };

/// Zero-mask placement on the harmonic spectrogram. Time bands span w_t frames
/// centered on center_frame; frequency bands span w_f bins centered on
/// center_bin. A width of 0 is an empty band.
struct MaskSpec {
  MaskDomain domain = MaskDomain::both;
  MaskPlacement placement = MaskPlacement::dtm;
  Vibration target = Vibration::v1;
  std::optional<std::size_t> center_frame;
  std::optional<std::size_t> center_bin;
  std::size_t w_t = 24;
  std::size_t w_f = 12;
  bool fell_back = false;  // dtm placement requested, random used

  bool uses_time() const { return domain != MaskDomain::frequency; }
  bool uses_frequency() const { return domain != MaskDomain::time; }

  friend bool operator==(const MaskSpec&, const MaskSpec&) = default;
};

struct AugPolicy {
  double proportion = 0.2;
  MaskDomain domain = MaskDomain::both;
  MaskPlacement placement = MaskPlacement::dtm;
  std::uint64_t seed = 0;
  std::size_t w_t = 24;
  std::size_t w_f = 12;

  void validate() const {
    require(proportion >= 0.0 && proportion <= 1.0, ErrorKind::invalid_parameter,
            "augmentation proportion must lie in [0, 1]");
    require(w_t >= 1 && w_f >= 1, ErrorKind::invalid_parameter, "mask widths must be >= 1");
  }
};

/// Inclusive index range; empty when first > last.
struct Band {
  std::size_t first = 1;
  std::size_t last = 0;

  bool empty() const { return first > last; }
  bool contains(std::size_t i) const { return i >= first && i <= last; }
  std::size_t size() const { return empty() ? 0 : last - first + 1; }
};

/// [center - width/2, center - width/2 + width - 1], clipped to [0, count).
inline Band centered_band(std::size_t center, std::size_t width, std::size_t count) {
  if (width == 0 || count == 0) return {};
  const long long start = static_cast<long long>(center) - static_cast<long long>(width / 2);
  const long long end = start + static_cast<long long>(width) - 1;
  const long long lo = std::max<long long>(start, 0);
  const long long hi = std::min<long long>(end, static_cast<long long>(count) - 1);
  if (lo > hi) return {};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

inline Band time_band(const MaskSpec& m, std::size_t frames) {
  if (!m.uses_time() || !m.center_frame) return {};
  return centered_band(*m.center_frame, m.w_t, frames);
}

inline Band frequency_band(const MaskSpec& m, std::size_t bins) {
  if (!m.uses_frequency() || !m.center_bin) return {};
  return centered_band(*m.center_bin, m.w_f, bins);
}

inline bool is_masked(const MaskSpec& m, const Band& tb, const Band& fb, std::size_t frame,
                      std::size_t bin) {
  return (m.uses_time() && tb.contains(frame)) || (m.uses_frequency() && fb.contains(bin));
}

inline std::size_t masked_cell_count(const MaskSpec& m, std::size_t frames, std::size_t bins) {
  const Band tb = time_band(m, frames);
  const Band fb = frequency_band(m, bins);
  std::size_t n = 0;
  for (std::size_t r = 0; r < frames; ++r)
    for (std::size_t c = 0; c < bins; ++c) n += is_masked(m, tb, fb, r, c) ? 1 : 0;
  return n;
}

namespace detail {
inline std::size_t clamped_index(double pos, std::size_t count) {
  const double r = std::floor(pos + 0.5);
  return static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(count) - 1.0));
}
}  // namespace detail

using Notice = std::function<void(const std::string&)>;

/// Picks v1 or v2 uniformly, then centers the bands on that vibration's
/// (T, f) from the fit, or uniformly at random for random placement. A
/// missing, non-converged or degenerate fit falls back to random placement.
template <class Rng>
MaskSpec build_mask(const std::optional<FittedTheta>& theta, const Spectrogram& spec,
                    const AugPolicy& policy, Rng& rng, const Notice& notice = {}) {
  policy.validate();
  spec.validate();
  MaskSpec m;
  m.domain = policy.domain;
  m.placement = policy.placement;
  m.w_t = policy.w_t;
  m.w_f = policy.w_f;
  m.target = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? Vibration::v1 : Vibration::v2;

  bool random_place = policy.placement == MaskPlacement::random;
  if (!random_place && (!theta || !theta->converged || theta->degenerate)) {
    random_place = true;
    m.fell_back = true;
    if (notice) notice("template fit unusable; falling back to random mask placement");
  }

  if (random_place) {
    std::uniform_int_distribution<std::size_t> frame(0, spec.frames() - 1);
    std::uniform_int_distribution<std::size_t> bin(0, spec.bins() - 1);
    const std::size_t cf = frame(rng);
    const std::size_t cb = bin(rng);
    if (m.uses_time()) m.center_frame = cf;
    if (m.uses_frequency()) m.center_bin = cb;
    return m;
  }

  const bool first = m.target == Vibration::v1;
  const double t = first ? theta->t1 : theta->t2;
  const double f = first ? theta->f1 : theta->f2;
  if (m.uses_time())
    m.center_frame = detail::clamped_index((t - spec.origin_time) * spec.frame_rate, spec.frames());
  if (m.uses_frequency())
    m.center_bin =
        detail::clamped_index((f - spec.origin_freq) / spec.freq_resolution, spec.bins());
  return m;
}

/// Zeroes the masked cells of the harmonic component and adds the percussive
/// component back.
inline Spectrogram augment_spectrogram(const Spectrogram& y, const HpssResult& hp,
                                       const MaskSpec& mask) {
  require(y.values.same_shape(hp.harmonic.values) && y.values.same_shape(hp.percussive.values),
          ErrorKind::invalid_input, "spectrogram and decomposition shapes differ");
  const Band tb = time_band(mask, y.frames());
  const Band fb = frequency_band(mask, y.bins());
  Matrix out(y.frames(), y.bins());
  for (std::size_t r = 0; r < y.frames(); ++r) {
    for (std::size_t c = 0; c < y.bins(); ++c) {
      const double h = is_masked(mask, tb, fb, r, c) ? 0.0 : hp.harmonic.values(r, c);
      out(r, c) = h + hp.percussive.values(r, c);
    }
  }
  return y.with_values(std::move(out));
}

/// floor(p * n) indices drawn uniformly without replacement, ascending.
inline std::vector<std::size_t> select_for_augmentation(std::size_t n, double proportion,
                                                        std::uint64_t seed) {
  require(proportion >= 0.0 && proportion <= 1.0, ErrorKind::invalid_parameter,
          "augmentation proportion must lie in [0, 1]");
  // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
  const auto k = std::min(
      n, static_cast<std::size_t>(std::floor(proportion * static_cast<double>(n) + 1e-9)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct AugmentSettings {
  TfrSettings tfr;
  HpssSettings hpss;
  DtmConfig dtm;
  AugPolicy policy;
  std::size_t workers = 1;
};

struct AugmentRecord {
  std::size_t index = 0;
  bool augmented = false;
  std::optional<MaskSpec> mask;
  std::optional<FittedTheta> theta;
  std::vector<std::string> notices;
};

struct AugmentedDataset {
  std::vector<Spectrogram> outputs;  // masked-harmonic + percussive, per segment
  std::vector<AugmentRecord> records;
};

/// Seed for per-segment randomness: policy seed xor segment index.
inline std::uint64_t segment_seed(std::uint64_t policy_seed, std::size_t index) {
  return policy_seed ^ static_cast<std::uint64_t>(index);
}

/// Augments one segment. The template fit only runs for dtm placement.
inline AugmentRecord augment_one(const Segment& seg, std::size_t index, const Spectrogram& y,
                                 const HpssResult& hp, const AugmentSettings& cfg,
                                 Spectrogram& out) {
  AugmentRecord rec;
  rec.index = index;
  rec.augmented = true;
  const std::uint64_t seed = segment_seed(cfg.policy.seed, index);
  std::optional<FittedTheta> theta;
  if (cfg.policy.placement == MaskPlacement::dtm) {
    try {
      theta = dtm_fit(seg, cfg.dtm, seed);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::no_signal && e.kind() != ErrorKind::insufficient_data) throw;
      rec.notices.push_back(std::string("template fit skipped: ") + e.what());
    }
  }
  std::mt19937_64 rng(seed);
  rec.mask = build_mask(theta, y, cfg.policy, rng,
                        [&](const std::string& msg) { rec.notices.push_back(msg); });
  rec.theta = theta;
  out = augment_spectrogram(y, hp, *rec.mask);
  return rec;
}

/// Spectrogram, decomposition and (for the selected floor(p * N) segments)
/// masking of every segment. Unselected segments yield the plain
/// harmonic + percussive recombination.
inline AugmentedDataset augment_dataset(std::span<const Segment> segments,
                                        const AugmentSettings& cfg) {
  require(!segments.empty(), ErrorKind::invalid_input, "no segments to augment");
  cfg.policy.validate();
  const auto chosen = select_for_augmentation(segments.size(), cfg.policy.proportion,
                                              cfg.policy.seed);
  std::vector<bool> selected(segments.size(), false);
  for (auto i : chosen) selected[i] = true;

  AugmentedDataset ds;
  ds.outputs.resize(segments.size());
  ds.records.resize(segments.size());
  parallel_for(segments.size(), cfg.workers, [&](std::size_t i) {
    const Spectrogram y = spectrogram(segments[i], cfg.tfr);
    const HpssResult hp = hpss_decompose(y, cfg.hpss);
    if (selected[i]) {
      ds.records[i] = augment_one(segments[i], i, y, hp, cfg, ds.outputs[i]);
    } else {
      ds.records[i].index = i;
      ds.outputs[i] = y.with_values(hp.recombined());
    }
  });
  return ds;
}

}  // namespace horcrux
