#pragma once

#include <openssl/evp.h>
#include <zlib.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "horcrux/augment.hpp"
#include "horcrux/dtm.hpp"
#include "horcrux/error.hpp"
#include "horcrux/metrics.hpp"
#include "horcrux/npy.hpp"
#include "horcrux/signal_model.hpp"
#include "horcrux/tfr.hpp"

namespace horcrux {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// JSON has no infinity; non-finite numbers are written as strings.
inline json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  fail(ErrorKind::invalid_input, "expected a number, got " + j.dump());
}

// ---- vibration / cycle ----

inline json to_json(const VibrationParams& v) {
  return {{"a", v.amplitude}, {"f", v.center_freq}, {"T", v.time_index}, {"b", v.width}};
}

inline VibrationParams vibration_from_json(const json& j) {
  return {j.at("a").get<double>(), j.at("f").get<double>(), j.at("T").get<double>(),
          j.at("b").get<double>()};
}

inline json to_json(const CycleParams& c) { return {{"v1", to_json(c.v1)}, {"v2", to_json(c.v2)}}; }

inline CycleParams cycle_from_json(const json& j) {
  return {vibration_from_json(j.at("v1")), vibration_from_json(j.at("v2"))};
}

// ---- segment: <stem>.npy + <stem>.json ----

inline json segment_sidecar(const Segment& s) {
  json j;
  j["fs"] = s.fs;
  j["duration"] = s.duration();
  j["beat_times"] = s.beat_times ? json(*s.beat_times) : json(nullptr);
  json cycles = json::array();
  for (const auto& c : s.cycles) cycles.push_back(to_json(c));
  j["cycle_params"] = cycles;
  return j;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline fs::path sidecar_path(const fs::path& npy_path) {
  fs::path p = npy_path;
  return p.replace_extension(".json");
}

inline void write_text(const fs::path& p, const std::string& text) { npy::write_bytes(p, text); }

inline json read_json(const fs::path& p) {
  const std::string text = npy::read_bytes(p);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::invalid_input, p.string() + ": " + e.what());
  }
}

inline void save_segment(const fs::path& npy_path, const Segment& s) {
  npy::save(npy_path, s.samples);
  write_text(sidecar_path(npy_path), dump(segment_sidecar(s)));
}

/// Loads samples and, when present, the sidecar. Without a sidecar the
/// sample rate falls back to `default_fs`.
inline Segment load_segment(const fs::path& npy_path, double default_fs = kDefaultSampleRate) {
  Segment s;
  s.samples = npy::load_vector(npy_path);
  s.fs = default_fs;
  const fs::path side = sidecar_path(npy_path);
  if (fs::exists(side)) {
    const json j = read_json(side);
    try {
      s.fs = j.at("fs").get<double>();
      if (j.contains("beat_times") && !j["beat_times"].is_null())
        s.beat_times = j["beat_times"].get<std::vector<double>>();
      if (j.contains("cycle_params"))
        for (const auto& c : j["cycle_params"]) s.cycles.push_back(cycle_from_json(c));
    } catch (const json::exception& e) {
      fail(ErrorKind::invalid_input, side.string() + ": " + e.what());
    }
  }
  require(s.fs > 0.0, ErrorKind::invalid_input, npy_path.string() + ": sample rate must be > 0");
  return s;
}

// ---- spectrogram ----

inline json spectrogram_sidecar(const Spectrogram& s) {
  return {{"frame_rate", s.frame_rate},
          {"freq_resolution", s.freq_resolution},
          {"origin_time", s.origin_time},
          {"origin_freq", s.origin_freq}};
}

inline void save_spectrogram(const fs::path& npy_path, const Spectrogram& s) {
  npy::save(npy_path, s.values);
  write_text(sidecar_path(npy_path), dump(spectrogram_sidecar(s)));
}

inline Spectrogram load_spectrogram(const fs::path& npy_path) {
  Spectrogram s;
  s.values = npy::load_matrix(npy_path);
  const fs::path side = sidecar_path(npy_path);
  if (fs::exists(side)) {
    const json j = read_json(side);
    try {
      s.frame_rate = j.at("frame_rate").get<double>();
      s.freq_resolution = j.at("freq_resolution").get<double>();
      s.origin_time = j.value("origin_time", 0.0);
      s.origin_freq = j.value("origin_freq", 0.0);
    } catch (const json::exception& e) {
      fail(ErrorKind::invalid_input, side.string() + ": " + e.what());
    }
  }
  return s;
}

// ---- fits, masks, reports ----

inline json to_json(const FittedTheta& t) {
  return {{"T1", t.t1},
          {"T2", t.t2},
          {"f1", t.f1},
          {"f2", t.f2},
          {"residual_norm", number_or_string(t.residual_norm)},
          {"signal_norm", t.signal_norm},
          {"converged", t.converged},
          {"degenerate", t.degenerate},
          {"n_evals", t.n_evals}};
}

inline const char* to_string(MaskDomain d) {
  switch (d) {
    case MaskDomain::time: return "time";
    case MaskDomain::frequency: return "frequency";
    case MaskDomain::both: return "both";
  }
  return "both";
}

inline const char* to_string(MaskPlacement p) {
  return p == MaskPlacement::dtm ? "dtm" : "random";
}

inline MaskDomain parse_domain(const std::string& s) {
  if (s == "time") return MaskDomain::time;
  if (s == "frequency") return MaskDomain::frequency;
  if (s == "both") return MaskDomain::both;
  fail(ErrorKind::config, "unknown mask domain '" + s + "' (time|frequency|both)");
}

inline MaskPlacement parse_placement(const std::string& s) {
  if (s == "dtm") return MaskPlacement::dtm;
  if (s == "random") return MaskPlacement::random;
  fail(ErrorKind::config, "unknown mask placement '" + s + "' (dtm|random)");
}

inline json to_json(const MaskSpec& m) {
  json j;
  j["domain"] = to_string(m.domain);
  j["placement"] = to_string(m.placement);
  j["target_vibration"] = m.target == Vibration::v1 ? "v1" : "v2";
  j["center_frame"] = m.center_frame ? json(*m.center_frame) : json(nullptr);
  j["center_bin"] = m.center_bin ? json(*m.center_bin) : json(nullptr);
  j["w_t"] = m.w_t;
  j["w_f"] = m.w_f;
  j["fell_back"] = m.fell_back;
  return j;
}

inline json to_json(const AugPolicy& p) {
  return {{"proportion", p.proportion},
          {"domain", to_string(p.domain)},
          {"placement", to_string(p.placement)},
          {"seed", p.seed},
          {"w_t", p.w_t},
          {"w_f", p.w_f}};
}

inline json to_json(const MetricReport& r) {
  return {{"rmse", r.rmse}, {"pcc", r.pcc}, {"heartbeat_error", r.heartbeat_error}, {"mdr", r.mdr}};
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "snr_db,rate_v1,rate_v2,n_trials\n";
  for (const auto& r : rows) {
    if (std::isinf(r.snr_db)) {
      os << (r.snr_db > 0 ? "inf" : "-inf");
    } else {
      os << r.snr_db;
    }
    os << ',' << r.rate_v1 << ',' << r.rate_v2 << ',' << r.n_trials << '\n';
  }
  return os.str();
}

// ---- hashing ----

inline std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) == 1,
          ErrorKind::io, "sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_file(const fs::path& p) { return sha256_hex(npy::read_bytes(p)); }

// ---- PNG ----

namespace detail {
inline void put_be32(std::string& s, std::uint32_t v) {
  for (int sh = 24; sh >= 0; sh -= 8) s.push_back(static_cast<char>((v >> sh) & 0xff));
}

inline void png_chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_be32(out, static_cast<std::uint32_t>(
                    crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}
}  // namespace detail

/// 8-bit grayscale rendering: frames left to right, frequency increasing
/// upwards, linear scale to the spectrogram maximum.
inline std::string encode_png(const Spectrogram& s) {
  const std::size_t width = s.frames(), height = s.bins();
  require(width > 0 && height > 0, ErrorKind::invalid_input, "png: empty spectrogram");
  const double peak = s.values.max();
  std::string raw;
  raw.reserve((width + 1) * height);
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter: none
    const std::size_t bin = height - 1 - y;
    for (std::size_t x = 0; x < width; ++x) {
      const double v = peak > 0.0 ? s.values(x, bin) / peak : 0.0;
      raw.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  require(compress2(reinterpret_cast<Bytef*>(z.data()), &zlen,
                    reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                    Z_BEST_COMPRESSION) == Z_OK,
          ErrorKind::io, "png: deflate failed");
  z.resize(zlen);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // depth 8, gray, deflate, no filter, no interlace
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", z);
  detail::png_chunk(out, "IEND", "");
  return out;
}

inline void save_png(const fs::path& p, const Spectrogram& s) { npy::write_bytes(p, encode_png(s)); }

}  // namespace horcrux
