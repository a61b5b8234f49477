#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "horcrux/augment.hpp"
#include "horcrux/dtm.hpp"
#include "horcrux/error.hpp"
#include "horcrux/hpss.hpp"
#include "horcrux/io.hpp"
#include "horcrux/metrics.hpp"
#include "horcrux/npy.hpp"
#include "horcrux/tfr.hpp"

namespace horcrux {

/// Flat key=value text, a TOML subset: `# comments`, `[section]` headers that
/// prefix the following keys as `section.key`, and scalar values (numbers,
/// inf, true/false, "strings") or one-line arrays `[a, b, c]`.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "config") {
    KeyValueFile kv;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = origin + ":" + std::to_string(lineno);
      line = strip(strip_comment(line));
      if (line.empty()) continue;
      if (line.front() == '[') {
        require(line.back() == ']', ErrorKind::config, where + ": malformed section header");
        section = strip(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      require(eq != std::string::npos, ErrorKind::config, where + ": expected key = value");
      std::string key = strip(line.substr(0, eq));
      std::string value = strip(line.substr(eq + 1));
      require(!key.empty() && !value.empty(), ErrorKind::config, where + ": empty key or value");
      if (!section.empty()) key = section + "." + key;
      require(!kv.values_.count(key), ErrorKind::config, where + ": duplicate key " + key);
      kv.values_[key] = unquote(value);
      kv.origin_[key] = where;
    }
    return kv;
  }

  static KeyValueFile load(const std::filesystem::path& p) {
    return parse(npy::read_bytes(p), p.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_[key] = true;
    return it->second;
  }

  std::optional<double> number(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    return to_number(*v, key);
  }

  std::optional<std::vector<double>> numbers(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    std::string body = *v;
    if (!body.empty() && body.front() == '[') {
      require(body.back() == ']', ErrorKind::config, key + ": unterminated array");
      body = body.substr(1, body.size() - 2);
    }
    std::vector<double> out;
    std::istringstream in(body);
    std::string item;
    while (std::getline(in, item, ',')) {
      item = strip(item);
      if (!item.empty()) out.push_back(to_number(item, key));
    }
    return out;
  }

  std::optional<bool> boolean(const std::string& key) const {
    auto v = get(key);
    if (!v) return std::nullopt;
    if (*v == "true") return true;
    if (*v == "false") return false;
    fail(ErrorKind::config, key + ": expected true or false, got '" + *v + "'");
  }

  /// Keys never read; a non-empty result usually means a typo.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  static double to_number(const std::string& s, const std::string& key) {
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
      std::size_t pos = 0;
      std::string t;
      for (char c : s)
        if (c != '_') t.push_back(c);
      const double v = std::stod(t, &pos);
      if (pos == t.size()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::config, key + ": expected a number, got '" + s + "'");
  }

 private:
  static std::string strip(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
  }

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origin_;
  mutable std::map<std::string, bool> used_;
};

struct SynthSettings {
  std::size_t n_segments = 91 * 45;
  double fs = kDefaultSampleRate;
  double duration = kDefaultDuration;
  std::size_t cycles = 1;
  double snr_db = std::numeric_limits<double>::infinity();
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  void validate() const {
    require(train >= 0.0 && val >= 0.0 && test >= 0.0 &&
                std::abs(train + val + test - 1.0) <= 1e-9,
            ErrorKind::invalid_parameter, "split fractions must be >= 0 and sum to 1");
  }
};

struct BenchConfig {
  std::vector<double> snr_db{std::numeric_limits<double>::infinity(), 10.0, 0.0, -5.0};
  std::size_t trials = 20;
};

struct RunConfig {
  std::filesystem::path out_dir = "horcrux_run";
  std::optional<std::filesystem::path> in_dir;  // bring-your-own segments
  std::uint64_t seed = 0;
  SynthSettings synth;
  TfrSettings tfr;
  HpssSettings hpss;
  DtmConfig dtm;
  AugPolicy aug;
  MetricDirections directions;
  SplitFractions split;
  BenchConfig bench;
  std::size_t workers = 1;

  void validate() const {
    split.validate();
    dtm.validate();
    aug.validate();
    require(synth.n_segments >= 1, ErrorKind::invalid_parameter, "synth.n_segments must be >= 1");
    require(synth.fs > 0.0 && synth.duration > 0.0, ErrorKind::invalid_parameter,
            "synth.fs and synth.duration must be > 0");
    require(synth.cycles >= 1, ErrorKind::invalid_parameter, "synth.cycles must be >= 1");
    require(bench.trials >= 1, ErrorKind::invalid_parameter, "bench.trials must be >= 1");
    require(hpss.kh % 2 == 1 && hpss.kp % 2 == 1, ErrorKind::invalid_parameter,
            "hpss.kh and hpss.kp must be odd");
    require(workers >= 1, ErrorKind::invalid_parameter, "workers must be >= 1");
  }
};

namespace detail {
inline std::size_t to_count(double v, const std::string& key) {
  require(v >= 0.0 && std::floor(v) == v && v < 1e15, ErrorKind::config,
          key + ": expected a non-negative integer");
  return static_cast<std::size_t>(v);
}
}  // namespace detail

/// Builds a RunConfig from key=value text on top of the defaults. Unknown
/// keys are rejected.
inline RunConfig run_config_from(const KeyValueFile& kv) {
  RunConfig c;
  const auto num = [&](const char* key, double& dst) {
    if (auto v = kv.number(key)) dst = *v;
  };
  const auto count = [&](const char* key, std::size_t& dst) {
    if (auto v = kv.number(key)) dst = detail::to_count(*v, key);
  };

  if (auto v = kv.get("out_dir")) c.out_dir = *v;
  if (auto v = kv.get("in_dir")) c.in_dir = std::filesystem::path(*v);
  if (auto v = kv.number("seed")) c.seed = detail::to_count(*v, "seed");
  count("workers", c.workers);

  count("synth.n_segments", c.synth.n_segments);
  num("synth.fs", c.synth.fs);
  num("synth.duration", c.synth.duration);
  count("synth.cycles", c.synth.cycles);
  num("synth.snr_db", c.synth.snr_db);

  count("tfr.win_len", c.tfr.win_len);
  count("tfr.hop", c.tfr.hop);
  count("tfr.nfft", c.tfr.nfft);
  num("tfr.freq_max", c.tfr.freq_max);

  count("hpss.kh", c.hpss.kh);
  count("hpss.kp", c.hpss.kp);

  num("dtm.tau", c.dtm.tau);
  num("dtm.delta_min", c.dtm.delta_min);
  num("dtm.a1", c.dtm.a1);
  num("dtm.a2", c.dtm.a2);
  num("dtm.b1", c.dtm.b1);
  num("dtm.b2", c.dtm.b2);
  if (kv.has("dtm.t1_min") || kv.has("dtm.t1_max")) {
    Range r{0.0, 0.0};
    r.lo = kv.number("dtm.t1_min").value_or(0.0);
    r.hi = kv.number("dtm.t1_max").value_or(c.synth.duration - c.dtm.tau);
    c.dtm.t1 = r;
  }
  num("dtm.f1_min", c.dtm.f1.lo);
  num("dtm.f1_max", c.dtm.f1.hi);
  num("dtm.f2_min", c.dtm.f2.lo);
  num("dtm.f2_max", c.dtm.f2.hi);
  count("dtm.n_starts", c.dtm.n_starts);
  count("dtm.max_iters", c.dtm.max_iters);
  num("dtm.tol", c.dtm.tol);
  num("dtm.degenerate_ratio", c.dtm.degenerate_ratio);

  num("aug.proportion", c.aug.proportion);
  if (auto v = kv.get("aug.domain")) c.aug.domain = parse_domain(*v);
  if (auto v = kv.get("aug.placement")) c.aug.placement = parse_placement(*v);
  if (auto v = kv.number("aug.seed")) c.aug.seed = detail::to_count(*v, "aug.seed");
  count("aug.w_t", c.aug.w_t);
  count("aug.w_f", c.aug.w_f);

  num("split.train", c.split.train);
  num("split.val", c.split.val);
  num("split.test", c.split.test);

  if (auto v = kv.numbers("bench.snr_db")) c.bench.snr_db = *v;
  count("bench.trials", c.bench.trials);

  const auto extra = kv.unused();
  if (!extra.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : extra) msg += " " + k;
    fail(ErrorKind::config, msg);
  }
  return c;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["out_dir"] = c.out_dir.string();
  j["in_dir"] = c.in_dir ? json(c.in_dir->string()) : json(nullptr);
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["synth"] = {{"n_segments", c.synth.n_segments},
                {"fs", c.synth.fs},
                {"duration", c.synth.duration},
                {"cycles", c.synth.cycles},
                {"snr_db", number_or_string(c.synth.snr_db)}};
  j["tfr"] = {{"win_len", c.tfr.win_len},
              {"hop", c.tfr.hop},
              {"nfft", c.tfr.nfft},
              {"freq_max", c.tfr.freq_max}};
  j["hpss"] = {{"kh", c.hpss.kh}, {"kp", c.hpss.kp}};
  json t1 = nullptr;
  if (c.dtm.t1) t1 = {c.dtm.t1->lo, c.dtm.t1->hi};
  j["dtm"] = {{"tau", c.dtm.tau},
              {"delta_min", c.dtm.delta_min},
              {"a1", c.dtm.a1},
              {"a2", c.dtm.a2},
              {"b1", c.dtm.b1},
              {"b2", c.dtm.b2},
              {"t1", t1},
              {"f1", {c.dtm.f1.lo, c.dtm.f1.hi}},
              {"f2", {c.dtm.f2.lo, c.dtm.f2.hi}},
              {"n_starts", c.dtm.n_starts},
              {"max_iters", c.dtm.max_iters},
              {"tol", c.dtm.tol},
              {"degenerate_ratio", c.dtm.degenerate_ratio}};
  j["aug"] = to_json(c.aug);
  json dirs = json::object();
  for (std::size_t i = 0; i < kMetricNames.size(); ++i)
    dirs[std::string(kMetricNames[i])] = c.directions.dirs[i] == Better::lower ? "lower" : "higher";
  j["metric_directions"] = dirs;
  j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
  json snr = json::array();
  for (double s : c.bench.snr_db) snr.push_back(number_or_string(s));
  j["bench"] = {{"snr_db", snr}, {"trials", c.bench.trials}};
  return j;
}

}  // namespace horcrux
