#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "horcrux/augment.hpp"
#include "horcrux/config.hpp"
#include "horcrux/dtm.hpp"
#include "horcrux/error.hpp"
#include "horcrux/hpss.hpp"
#include "horcrux/io.hpp"
#include "horcrux/npy.hpp"
#include "horcrux/parallel.hpp"
#include "horcrux/seeds.hpp"
#include "horcrux/signal_model.hpp"
#include "horcrux/tfr.hpp"

namespace horcrux {

// Seed stream tags.
inline constexpr std::uint64_t kSynthStream = 11;
inline constexpr std::uint64_t kNoiseStream = 12;
inline constexpr std::uint64_t kSplitStream = 13;
inline constexpr std::uint64_t kBenchStream = 14;

inline std::string segment_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seg_%05zu", i);
  return buf;
}

/// Segment `i` of a synthetic dataset: one or more cycles with theta drawn
/// inside the matching bounds, consecutive cycles 0.75-1.1 s apart.
inline Segment synth_segment(const RunConfig& cfg, std::size_t i) {
  std::mt19937_64 rng(derive_seed(cfg.seed, kSynthStream, i));
  std::vector<CycleParams> cycles{random_feasible_cycle(rng, cfg.dtm, cfg.synth.duration)};
  std::uniform_real_distribution<double> period(0.75, 1.1);
  const double t1_max = cfg.dtm.t1_range(cfg.synth.duration).hi;
  while (cycles.size() < cfg.synth.cycles) {
    CycleParams next = cycles.back();
    const double step = period(rng);
    next.v1.time_index += step;
    next.v2.time_index += step;
    if (next.v1.time_index > t1_max) break;
    cycles.push_back(next);
  }
  Segment s = synthesize_segment(cycles, cfg.synth.fs, cfg.synth.duration, cfg.dtm.tau);
  if (std::isfinite(cfg.synth.snr_db))
    s = add_noise(s, cfg.synth.snr_db, derive_seed(cfg.seed, kNoiseStream, i));
  return s;
}

/// Rounds samples through float32, the on-disk precision, so in-memory
/// stages see exactly what a re-run from disk would.
inline void quantize_f32(std::span<double> v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

struct Dataset {
  std::vector<std::string> ids;
  std::vector<Segment> segments;
};

/// Writes N synthetic segments (NPY + JSON sidecar each) under dir.
inline Dataset run_synth_dataset(const RunConfig& cfg, const fs::path& dir) {
  cfg.validate();
  Dataset ds;
  ds.ids.resize(cfg.synth.n_segments);
  ds.segments.resize(cfg.synth.n_segments);
  parallel_for(cfg.synth.n_segments, cfg.workers, [&](std::size_t i) {
    ds.ids[i] = segment_id(i);
    ds.segments[i] = synth_segment(cfg, i);
    quantize_f32(ds.segments[i].samples);
  });
  for (std::size_t i = 0; i < ds.ids.size(); ++i)
    save_segment(dir / (ds.ids[i] + ".npy"), ds.segments[i]);
  return ds;
}

/// Loads every *.npy in dir (sorted by name) as a segment.
inline Dataset load_dataset(const fs::path& dir, double default_fs = kDefaultSampleRate) {
  require(fs::is_directory(dir), ErrorKind::io, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".npy") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Dataset ds;
  for (const auto& f : files) {
    ds.ids.push_back(f.stem().string());
    ds.segments.push_back(load_segment(f, default_fs));
  }
  return ds;
}

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Shuffled partition with largest-remainder rounding of the fractions, so
/// the three counts always sum to n. Each part is returned in ascending order.
inline Split run_split(std::size_t n, const SplitFractions& fr, std::uint64_t seed) {
  require(n > 0, ErrorKind::invalid_input, "cannot split an empty dataset");
  fr.validate();
  const std::array<double, 3> want{fr.train * static_cast<double>(n), fr.val * static_cast<double>(n),
                                   fr.test * static_cast<double>(n)};
  std::array<std::size_t, 3> count{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    count[k] = static_cast<std::size_t>(std::floor(want[k] + 1e-9));
    assigned += count[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return want[a] - static_cast<double>(count[a]) > want[b] - static_cast<double>(count[b]);
  });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++count[order[k]];

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  Split s;
  auto it = idx.begin();
  s.train.assign(it, it + static_cast<std::ptrdiff_t>(count[0]));
  it += static_cast<std::ptrdiff_t>(count[0]);
  s.val.assign(it, it + static_cast<std::ptrdiff_t>(count[1]));
  it += static_cast<std::ptrdiff_t>(count[1]);
  s.test.assign(it, idx.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

inline json split_json(const Split& s, const std::vector<std::string>& ids) {
  const auto names = [&](const std::vector<std::size_t>& part) {
    json a = json::array();
    for (auto i : part) a.push_back(ids[i]);
    return a;
  };
  return {{"train", names(s.train)}, {"val", names(s.val)}, {"test", names(s.test)}};
}

/// Records written files (relative path + SHA-256) and JSON log lines.
class RunRecorder {
 public:
  explicit RunRecorder(fs::path root) : root_(std::move(root)) {}

  void bytes(const fs::path& rel, const std::string& content) {
    npy::write_bytes(root_ / rel, content);
    files_.push_back({{"path", rel.generic_string()}, {"sha256", sha256_hex(content)}});
  }

  void file(const fs::path& rel) {
    files_.push_back({{"path", rel.generic_string()}, {"sha256", sha256_file(root_ / rel)}});
  }

  void log(json line) { log_.push_back(std::move(line)); }

  const fs::path& root() const { return root_; }
  const json& files() const { return files_; }

  std::string log_text() const {
    std::string out;
    for (const auto& l : log_) out += l.dump() + "\n";
    return out;
  }

 private:
  fs::path root_;
  json files_ = json::array();
  std::vector<json> log_;
};

struct RunReport {
  fs::path manifest_path;
  std::string manifest_hash;
  std::size_t n_segments = 0;
  std::size_t n_augmented = 0;
  std::vector<BenchRow> bench;
};

namespace detail {

template <class Fn>
void stage(const char* name, RunRecorder& rec, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    rec.log({{"stage", name}, {"event", "failed"}, {"error", e.what()}});
    throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
  }
  rec.log({{"stage", name}, {"event", "done"}});
}

template <class Fn>
void per_segment(const std::vector<std::string>& ids, std::size_t workers, Fn&& fn) {
  parallel_for(ids.size(), workers, [&](std::size_t i) {
    try {
      fn(i);
    } catch (const Error& e) {
      throw Error(e.kind(), "segment " + ids[i] + ": " + e.what());
    }
  });
}

inline void write_manifest(RunRecorder& rec, const RunConfig& cfg, const std::string& status,
                           const std::string& failed_stage, RunReport& report) {
  json cfg_json = to_json(cfg);
  cfg_json.erase("out_dir");
  json m;
  m["status"] = status;
  if (!failed_stage.empty()) m["failed_stage"] = failed_stage;
  m["config"] = cfg_json;
  m["seeds"] = {{"global", cfg.seed},
                {"augmentation", cfg.aug.seed},
                {"split", derive_seed(cfg.seed, kSplitStream, 0)},
                {"bench", derive_seed(cfg.seed, kBenchStream, 0)}};
  m["files"] = rec.files();
  const std::string text = dump(m);
  report.manifest_path = rec.root() / "manifest.json";
  npy::write_bytes(report.manifest_path, text);
  report.manifest_hash = sha256_hex(text);
}

}  // namespace detail

/// synth (or ingest) -> split -> spectrogram -> hpss -> augment (train split)
/// -> template-matching benchmark. Every artifact lands under cfg.out_dir and
/// is listed in manifest.json with its SHA-256.
inline RunReport run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const fs::path root = cfg.out_dir;
  fs::create_directories(root);
  RunRecorder rec(root);
  RunReport report;
  std::string current = "config";
  rec.log({{"stage", "config"}, {"event", "start"}, {"config", to_json(cfg)}});

  try {
    Dataset ds;
    current = "synth";
    detail::stage("synth", rec, [&] {
      if (cfg.in_dir) {
        ds = load_dataset(*cfg.in_dir, cfg.synth.fs);
        require(!ds.ids.empty(), ErrorKind::invalid_input,
                "no .npy segments in " + cfg.in_dir->string());
        for (auto& s : ds.segments) quantize_f32(s.samples);
        for (std::size_t i = 0; i < ds.ids.size(); ++i)
          save_segment(root / "segments" / (ds.ids[i] + ".npy"), ds.segments[i]);
      } else {
        ds = run_synth_dataset(cfg, root / "segments");
      }
      for (const auto& id : ds.ids) {
        rec.file(fs::path("segments") / (id + ".npy"));
        rec.file(fs::path("segments") / (id + ".json"));
      }
    });
    report.n_segments = ds.ids.size();

    Split split;
    current = "split";
    detail::stage("split", rec, [&] {
      split = run_split(ds.ids.size(), cfg.split, derive_seed(cfg.seed, kSplitStream, 0));
      rec.bytes("split.json", dump(split_json(split, ds.ids)));
    });

    std::vector<Spectrogram> specs(ds.ids.size());
    current = "spectrogram";
    detail::stage("spectrogram", rec, [&] {
      detail::per_segment(ds.ids, cfg.workers, [&](std::size_t i) {
        specs[i] = spectrogram(ds.segments[i], cfg.tfr);
        quantize_f32(specs[i].values.values());
      });
      for (std::size_t i = 0; i < ds.ids.size(); ++i) {
        const fs::path rel = fs::path("spectrograms") / (ds.ids[i] + ".npy");
        save_spectrogram(root / rel, specs[i]);
        rec.file(rel);
        rec.file(fs::path(rel).replace_extension(".json"));
      }
    });

    current = "hpss";
    detail::stage("hpss", rec, [&] {
      std::vector<HpssResult> parts(ds.ids.size());
      detail::per_segment(ds.ids, cfg.workers,
                          [&](std::size_t i) { parts[i] = hpss_decompose(specs[i], cfg.hpss); });
      for (std::size_t i = 0; i < ds.ids.size(); ++i) {
        const fs::path dir = "hpss";
        const auto& id = ds.ids[i];
        save_spectrogram(root / dir / (id + "_harmonic.npy"), parts[i].harmonic);
        save_spectrogram(root / dir / (id + "_percussive.npy"), parts[i].percussive);
        npy::save(root / dir / (id + "_mask_h.npy"), parts[i].mask_h);
        npy::save(root / dir / (id + "_mask_p.npy"), parts[i].mask_p);
        for (const char* suffix : {"_harmonic.npy", "_harmonic.json", "_percussive.npy",
                                   "_percussive.json", "_mask_h.npy", "_mask_p.npy"})
          rec.file(dir / (id + suffix));
      }
    });

    current = "augment";
    detail::stage("augment", rec, [&] {
      std::vector<Segment> train;
      std::vector<std::string> train_ids;
      for (auto i : split.train) {
        train.push_back(ds.segments[i]);
        train_ids.push_back(ds.ids[i]);
      }
      json entries = json::array();
      if (!train.empty()) {
        AugmentSettings as{cfg.tfr, cfg.hpss, cfg.dtm, cfg.aug, cfg.workers};
        AugmentedDataset out;
        try {
          out = augment_dataset(train, as);
        } catch (const Error& e) {
          throw Error(e.kind(), std::string("train split: ") + e.what());
        }
        for (std::size_t k = 0; k < train.size(); ++k) {
          const fs::path rel = fs::path("augmented") / (train_ids[k] + ".npy");
          save_spectrogram(root / rel, out.outputs[k]);
          rec.file(rel);
          rec.file(fs::path(rel).replace_extension(".json"));
          const auto& r = out.records[k];
          entries.push_back({{"segment_id", train_ids[k]},
                             {"augmented", r.augmented},
                             {"mask_spec", r.mask ? to_json(*r.mask) : json(nullptr)},
                             {"theta", r.theta ? to_json(*r.theta) : json(nullptr)}});
          if (r.augmented) ++report.n_augmented;
          for (const auto& n : r.notices)
            rec.log({{"stage", "augment"}, {"event", "notice"}, {"segment_id", train_ids[k]},
                     {"message", n}});
        }
      }
      json m = {{"policy", to_json(cfg.aug)}, {"segments", entries}};
      rec.bytes("augment_manifest.json", dump(m));
    });

    current = "dtm-bench";
    detail::stage("dtm-bench", rec, [&] {
      BenchSettings bs;
      bs.fs = cfg.synth.fs;
      bs.duration = cfg.synth.duration;
      bs.workers = cfg.workers;
      report.bench = dtm_benchmark(cfg.bench.snr_db, cfg.bench.trials,
                                   derive_seed(cfg.seed, kBenchStream, 0), cfg.dtm, bs);
      rec.bytes("dtm_bench.csv", bench_csv(report.bench));
    });
  } catch (const Error&) {
    npy::write_bytes(root / "run_log.jsonl", rec.log_text());
    detail::write_manifest(rec, cfg, "failed", current, report);
    throw;
  }

  rec.log({{"stage", "run"}, {"event", "done"}, {"n_segments", report.n_segments},
           {"n_augmented", report.n_augmented}});
  npy::write_bytes(root / "run_log.jsonl", rec.log_text());
  detail::write_manifest(rec, cfg, "ok", "", report);
  return report;
}

struct AblationRun {
  MaskPlacement placement;
  MaskDomain domain;
  RunReport report;
};

/// The six mask configurations (random | dtm) x (time | frequency | both),
/// each a full run under out_dir/ablation/<placement>_<domain>.
inline std::vector<AblationRun> run_ablation(const RunConfig& base) {
  std::vector<AblationRun> runs;
  for (auto placement : {MaskPlacement::random, MaskPlacement::dtm}) {
    for (auto domain : {MaskDomain::time, MaskDomain::frequency, MaskDomain::both}) {
      RunConfig cfg = base;
      cfg.aug.placement = placement;
      cfg.aug.domain = domain;
      cfg.out_dir = base.out_dir / "ablation" /
                    (std::string(to_string(placement)) + "_" + to_string(domain));
      runs.push_back({placement, domain, run_pipeline(cfg)});
    }
  }
  return runs;
}

}  // namespace horcrux
