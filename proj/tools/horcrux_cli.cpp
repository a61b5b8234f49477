// horcrux: command-line driver for the spectrogram augmentation pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
// non-convergence (dtm-bench only, when every trial fails to converge).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "horcrux/horcrux.hpp"

namespace {

using namespace horcrux;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNonConvergence = 3;

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::invalid_parameter:
      return kExitUsage;
    default:
      return kExitData;
  }
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config, "key=value configuration file");
  cmd->add_option("--seed", c.seed, "global seed");
  cmd->add_option("--out", c.out, out_help);
}

RunConfig load_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) cfg = run_config_from(KeyValueFile::load(c.config));
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

std::vector<double> read_beats(const std::string& path) {
  const json j = read_json(path);
  try {
    if (j.is_array()) return j.get<std::vector<double>>();
    if (j.contains("beat_times")) return j.at("beat_times").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::invalid_input, path + ": " + e.what());
  }
  fail(ErrorKind::invalid_input, path + ": expected an array of beat times or {\"beat_times\": [...]}");
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(KeyValueFile::to_number(item, what));
    } catch (const Error& e) {
      throw Error(ErrorKind::config, e.what());
    }
  }
  return out;
}

// ---- subcommands ----

int cmd_synth(const Common& c, std::optional<std::size_t> n, std::optional<double> snr,
              std::optional<std::size_t> cycles) {
  RunConfig cfg = load_config(c);
  if (n) cfg.synth.n_segments = *n;
  if (snr) cfg.synth.snr_db = *snr;
  if (cycles) cfg.synth.cycles = *cycles;
  const fs::path root = cfg.out_dir;
  const Dataset ds = run_synth_dataset(cfg, root / "segments");
  json files = json::array();
  for (const auto& id : ds.ids) {
    for (const char* ext : {".npy", ".json"}) {
      const fs::path rel = fs::path("segments") / (id + ext);
      files.push_back({{"path", rel.generic_string()}, {"sha256", sha256_file(root / rel)}});
    }
  }
  json cfg_json = to_json(cfg);
  cfg_json.erase("out_dir");
  const json m = {{"config", cfg_json}, {"n_segments", ds.ids.size()}, {"files", files}};
  const std::string text = dump(m);
  write_text(root / "manifest.json", text);
  std::cout << "wrote " << ds.ids.size() << " segments to " << (root / "segments").string()
            << "\nmanifest sha256 " << sha256_hex(text) << "\n";
  return kExitOk;
}

int cmd_split(const Common& c, const std::string& in, const std::string& fractions) {
  RunConfig cfg = load_config(c);
  if (!fractions.empty()) {
    const auto f = parse_list(fractions, "--fractions");
    if (f.size() != 3) throw Error(ErrorKind::config, "--fractions needs three values");
    cfg.split = {f[0], f[1], f[2]};
  }
  const Dataset ds = load_dataset(in);
  const Split s = run_split(ds.ids.size(), cfg.split, cfg.seed);
  emit(c.out, dump(split_json(s, ds.ids)));
  return kExitOk;
}

int cmd_spectrogram(const Common& c, const std::string& in, const std::string& png,
                    std::optional<double> fs_override, std::optional<std::size_t> win,
                    std::optional<std::size_t> hop, std::optional<std::size_t> nfft,
                    std::optional<double> fmax) {
  RunConfig cfg = load_config(c);
  if (win) cfg.tfr.win_len = *win;
  if (hop) cfg.tfr.hop = *hop;
  if (nfft) cfg.tfr.nfft = *nfft;
  if (fmax) cfg.tfr.freq_max = *fmax;
  Segment seg = load_segment(in, cfg.synth.fs);
  if (fs_override) seg.fs = *fs_override;
  const Spectrogram spec = spectrogram(seg, cfg.tfr);
  if (c.out.empty() && png.empty())
    throw Error(ErrorKind::config, "spectrogram: give --out and/or --png");
  if (!c.out.empty()) save_spectrogram(c.out, spec);
  if (!png.empty()) save_png(png, spec);
  return kExitOk;
}

int cmd_hpss(const Common& c, const std::string& in, std::optional<std::size_t> kh,
             std::optional<std::size_t> kp) {
  RunConfig cfg = load_config(c);
  if (kh) cfg.hpss.kh = *kh;
  if (kp) cfg.hpss.kp = *kp;
  if (c.out.empty()) throw Error(ErrorKind::config, "hpss: --out directory is required");
  const Spectrogram spec = load_spectrogram(in);
  const HpssResult r = hpss_decompose(spec, cfg.hpss);
  const fs::path dir = c.out;
  const std::string stem = fs::path(in).stem().string();
  save_spectrogram(dir / (stem + "_harmonic.npy"), r.harmonic);
  save_spectrogram(dir / (stem + "_percussive.npy"), r.percussive);
  npy::save(dir / (stem + "_mask_h.npy"), r.mask_h);
  npy::save(dir / (stem + "_mask_p.npy"), r.mask_p);
  return kExitOk;
}

int cmd_dtm(const Common& c, const std::string& in, std::optional<double> fs_override) {
  RunConfig cfg = load_config(c);
  Segment seg = load_segment(in, cfg.synth.fs);
  if (fs_override) seg.fs = *fs_override;
  const FittedTheta fit = dtm_fit(seg, cfg.dtm, cfg.seed);
  emit(c.out, dump(to_json(fit)));
  return kExitOk;
}

int cmd_dtm_bench(const Common& c, const std::string& snr, std::optional<std::size_t> trials) {
  RunConfig cfg = load_config(c);
  if (!snr.empty()) cfg.bench.snr_db = parse_list(snr, "--snr");
  if (trials) cfg.bench.trials = *trials;
  cfg.validate();
  BenchSettings bs;
  bs.fs = cfg.synth.fs;
  bs.duration = cfg.synth.duration;
  bs.workers = cfg.workers;
  const auto rows = dtm_benchmark(cfg.bench.snr_db, cfg.bench.trials, cfg.seed, cfg.dtm, bs);
  emit(c.out, bench_csv(rows));
  std::size_t converged = 0;
  for (const auto& r : rows) converged += r.n_converged;
  if (converged == 0) {
    std::cerr << "horcrux: every benchmark trial failed to converge\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

int cmd_augment(const Common& c, const std::string& in) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.aug.seed = *c.seed;
  cfg.validate();
  if (c.out.empty()) throw Error(ErrorKind::config, "augment: --out directory is required");
  const Dataset ds = load_dataset(in, cfg.synth.fs);
  require(!ds.ids.empty(), ErrorKind::invalid_input, "no .npy segments in " + in);
  const AugmentSettings as{cfg.tfr, cfg.hpss, cfg.dtm, cfg.aug, cfg.workers};
  const AugmentedDataset out = augment_dataset(ds.segments, as);
  const fs::path dir = c.out;
  json entries = json::array();
  for (std::size_t i = 0; i < ds.ids.size(); ++i) {
    save_spectrogram(dir / (ds.ids[i] + ".npy"), out.outputs[i]);
    const auto& r = out.records[i];
    entries.push_back({{"segment_id", ds.ids[i]},
                       {"augmented", r.augmented},
                       {"mask_spec", r.mask ? to_json(*r.mask) : json(nullptr)},
                       {"theta", r.theta ? to_json(*r.theta) : json(nullptr)}});
    for (const auto& n : r.notices) std::cerr << ds.ids[i] << ": " << n << "\n";
  }
  write_text(dir / "manifest.json", dump({{"policy", to_json(cfg.aug)}, {"segments", entries}}));
  return kExitOk;
}

struct MethodInput {
  std::string name;
  std::string reconstruction;
  std::string detected;
};

MethodInput parse_method(const std::string& s) {
  const auto eq = s.find('=');
  const auto colon = s.find(':', eq == std::string::npos ? 0 : eq);
  if (eq == std::string::npos || colon == std::string::npos)
    throw Error(ErrorKind::config, "--method expects name=reconstruction.npy:detected.json");
  return {s.substr(0, eq), s.substr(eq + 1, colon - eq - 1), s.substr(colon + 1)};
}

std::string delta_csv(const std::vector<std::pair<std::string, MetricReport>>& reports,
                      const std::string& baseline) {
  const MetricReport* base = nullptr;
  for (const auto& [name, r] : reports)
    if (name == baseline) base = &r;
  if (!base) throw Error(ErrorKind::config, "baseline '" + baseline + "' not among the methods");
  std::ostringstream os;
  os.precision(10);
  os << "method,rmse,pcc,heartbeat_error,mdr,delta_m_pct\n";
  for (const auto& [name, r] : reports) {
    os << name << ',' << r.rmse << ',' << r.pcc << ',' << r.heartbeat_error << ',' << r.mdr << ','
       << delta_m(r, *base) << '\n';
  }
  return os.str();
}

std::vector<std::pair<std::string, MetricReport>> read_report_table(const std::string& path) {
  std::istringstream in(npy::read_bytes(path));
  std::string line;
  std::vector<std::pair<std::string, MetricReport>> out;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    require(cells.size() >= 5, ErrorKind::invalid_input,
            path + ": expected method,rmse,pcc,heartbeat_error,mdr");
    MetricReport r;
    try {
      r = {std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4])};
    } catch (const std::exception&) {
      fail(ErrorKind::invalid_input, path + ": non-numeric metric in row '" + line + "'");
    }
    out.emplace_back(cells[0], r);
  }
  return out;
}

int cmd_eval(const Common& c, const std::string& reference, const std::string& reconstruction,
             const std::string& truth, const std::string& detected,
             const std::vector<std::string>& methods, const std::string& baseline,
             const std::string& table, double tol) {
  if (!table.empty()) {
    if (baseline.empty()) throw Error(ErrorKind::config, "eval --table needs --baseline");
    emit(c.out, delta_csv(read_report_table(table), baseline));
    return kExitOk;
  }
  if (reference.empty() || truth.empty())
    throw Error(ErrorKind::config, "eval needs --reference and --truth-beats (or --table)");
  std::vector<MethodInput> inputs;
  for (const auto& m : methods) inputs.push_back(parse_method(m));
  if (!reconstruction.empty()) {
    if (detected.empty()) throw Error(ErrorKind::config, "--reconstruction needs --detected-beats");
    inputs.push_back({"method", reconstruction, detected});
  }
  if (inputs.empty()) throw Error(ErrorKind::config, "eval: no method to evaluate");

  const auto ref = npy::load_vector(reference);
  const auto truth_beats = read_beats(truth);
  std::vector<std::pair<std::string, MetricReport>> reports;
  json out = json::object();
  for (const auto& in : inputs) {
    const auto rec = npy::load_vector(in.reconstruction);
    const auto det = read_beats(in.detected);
    const MetricReport r = evaluate(ref, rec, truth_beats, det, tol);
    reports.emplace_back(in.name, r);
    out[in.name] = to_json(r);
  }
  out["beat_tolerance_s"] = tol;

  if (inputs.size() == 1 && baseline.empty()) {
    emit(c.out, dump(to_json(reports.front().second)));
    return kExitOk;
  }
  if (c.out.empty()) {
    std::cout << dump(out);
    if (!baseline.empty()) std::cout << delta_csv(reports, baseline);
  } else {
    const fs::path dir = c.out;
    write_text(dir / "reports.json", dump(out));
    if (!baseline.empty()) write_text(dir / "delta_m.csv", delta_csv(reports, baseline));
  }
  return kExitOk;
}

int cmd_run(const Common& c, bool ablation) {
  RunConfig cfg = load_config(c);
  if (ablation) {
    for (const auto& r : run_ablation(cfg)) {
      std::cout << to_string(r.placement) << "_" << to_string(r.domain) << " "
                << r.report.manifest_hash << "\n";
    }
    return kExitOk;
  }
  const RunReport r = run_pipeline(cfg);
  std::cout << "segments " << r.n_segments << ", augmented " << r.n_augmented << "\n"
            << "manifest " << r.manifest_path.string() << "\n"
            << "manifest sha256 " << r.manifest_hash << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"horcrux: harmonic/percussive spectrogram augmentation for radar cardiac signals"};
  app.require_subcommand(1);
  int rc = kExitOk;

  Common synth_c;
  std::optional<std::size_t> synth_n, synth_cycles;
  std::optional<double> synth_snr;
  auto* synth = app.add_subcommand("synth", "write a synthetic segment dataset");
  add_common(synth, synth_c, "output directory");
  synth->add_option("--n", synth_n, "number of segments");
  synth->add_option("--snr", synth_snr, "AWGN SNR in dB (omit for noiseless)");
  synth->add_option("--cycles", synth_cycles, "cardiac cycles per segment");
  synth->callback([&] { rc = cmd_synth(synth_c, synth_n, synth_snr, synth_cycles); });

  Common split_c;
  std::string split_in, split_fr;
  auto* split = app.add_subcommand("split", "train/val/test split of a segment directory");
  add_common(split, split_c, "output JSON file (default stdout)");
  split->add_option("--in", split_in, "segment directory")->required();
  split->add_option("--fractions", split_fr, "train,val,test fractions (default 0.8,0.1,0.1)");
  split->callback([&] { rc = cmd_split(split_c, split_in, split_fr); });

  Common spec_c;
  std::string spec_in, spec_png;
  std::optional<double> spec_fs, spec_fmax;
  std::optional<std::size_t> spec_win, spec_hop, spec_nfft;
  auto* spec = app.add_subcommand("spectrogram", "STFT magnitude spectrogram of a segment");
  add_common(spec, spec_c, "output spectrogram NPY");
  spec->add_option("--in", spec_in, "segment NPY")->required();
  spec->add_option("--png", spec_png, "grayscale PNG rendering");
  spec->add_option("--fs", spec_fs, "sample rate when the segment has no sidecar");
  spec->add_option("--win-len", spec_win, "window length (samples)");
  spec->add_option("--hop", spec_hop, "hop (samples)");
  spec->add_option("--nfft", spec_nfft, "DFT length (samples)");
  spec->add_option("--freq-max", spec_fmax, "highest kept frequency (Hz)");
  spec->callback([&] {
    rc = cmd_spectrogram(spec_c, spec_in, spec_png, spec_fs, spec_win, spec_hop, spec_nfft, spec_fmax);
  });

  Common hpss_c;
  std::string hpss_in;
  std::optional<std::size_t> hpss_kh, hpss_kp;
  auto* hp = app.add_subcommand("hpss", "harmonic/percussive decomposition of a spectrogram");
  add_common(hp, hpss_c, "output directory");
  hp->add_option("--in", hpss_in, "spectrogram NPY")->required();
  hp->add_option("--kh", hpss_kh, "time-axis median length (frames, odd)");
  hp->add_option("--kp", hpss_kp, "frequency-axis median length (bins, odd)");
  hp->callback([&] { rc = cmd_hpss(hpss_c, hpss_in, hpss_kh, hpss_kp); });

  Common dtm_c;
  std::string dtm_in;
  std::optional<double> dtm_fs;
  auto* dtm = app.add_subcommand("dtm", "fit T1, T2, f1, f2 to a segment");
  add_common(dtm, dtm_c, "output JSON file (default stdout)");
  dtm->add_option("--in", dtm_in, "segment NPY")->required();
  dtm->add_option("--fs", dtm_fs, "sample rate when the segment has no sidecar");
  dtm->callback([&] { rc = cmd_dtm(dtm_c, dtm_in, dtm_fs); });

  Common bench_c;
  std::string bench_snr;
  std::optional<std::size_t> bench_trials;
  auto* bench = app.add_subcommand("dtm-bench", "identification rates over an SNR grid (CSV)");
  add_common(bench, bench_c, "output CSV file (default stdout)");
  bench->add_option("--snr", bench_snr, "comma-separated SNRs in dB, e.g. inf,10,0,-5");
  bench->add_option("--trials", bench_trials, "trials per SNR");
  bench->callback([&] { rc = cmd_dtm_bench(bench_c, bench_snr, bench_trials); });

  Common aug_c;
  std::string aug_in;
  auto* aug = app.add_subcommand("augment", "augment a directory of segments");
  add_common(aug, aug_c, "output directory");
  aug->add_option("--in", aug_in, "segment directory")->required();
  aug->callback([&] { rc = cmd_augment(aug_c, aug_in); });

  Common eval_c;
  std::string ev_ref, ev_rec, ev_truth, ev_det, ev_base, ev_table;
  std::vector<std::string> ev_methods;
  double ev_tol = kDefaultBeatTolerance;
  auto* ev = app.add_subcommand("eval", "RMSE, PCC, heartbeat error, MDR and delta-m");
  add_common(ev, eval_c, "output file (single report) or directory");
  ev->add_option("--reference", ev_ref, "reference signal NPY");
  ev->add_option("--reconstruction", ev_rec, "reconstructed signal NPY");
  ev->add_option("--truth-beats", ev_truth, "ground-truth beat times JSON");
  ev->add_option("--detected-beats", ev_det, "detected beat times JSON");
  ev->add_option("--method", ev_methods, "name=reconstruction.npy:detected.json (repeatable)");
  ev->add_option("--baseline", ev_base, "method name used as the delta-m baseline");
  ev->add_option("--table", ev_table, "CSV of method,rmse,pcc,heartbeat_error,mdr rows");
  ev->add_option("--tol", ev_tol, "beat matching tolerance (s)");
  ev->callback([&] {
    rc = cmd_eval(eval_c, ev_ref, ev_rec, ev_truth, ev_det, ev_methods, ev_base, ev_table, ev_tol);
  });

  Common run_c;
  bool run_ablation_flag = false;
  auto* run = app.add_subcommand("run", "full pipeline");
  add_common(run, run_c, "output directory");
  run->add_flag("--ablation", run_ablation_flag, "run the six mask configurations");
  run->callback([&] { rc = cmd_run(run_c, run_ablation_flag); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const Error& e) {
    std::cerr << "horcrux: " << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "horcrux: error: " << e.what() << "\n";
    return kExitData;
  }
  return rc;
}
