#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "sdapd/analysis.hpp"
#include "sdapd/calibration.hpp"
#include "sdapd/config.hpp"
#include "sdapd/errors.hpp"
#include "sdapd/event_io.hpp"
#include "sdapd/harness.hpp"
#include "sdapd/random.hpp"
#include "sdapd/waveform.hpp"

using namespace sdapd;

namespace {

enum Exit { kOk = 0, kConfig = 1, kInfeasible = 2, kIo = 3, kInterrupted = 130 };

std::atomic<bool> g_interrupted{false};

extern "C" void on_sigint(int) { g_interrupted.store(true); }

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out = "-";
  std::optional<double> dead_time_ns;
  std::optional<std::uint32_t> bins_ps;
  std::string format;
  std::vector<std::string> inputs;
  bool dark = false;
};

// Writes to a file or stdout; files are replaced only on success.
class Output {
 public:
  Output(const std::string& path, bool binary) : path_(path) {
    if (path == "-") return;
    tmp_ = path + ".partial";
    file_ = std::make_unique<std::ofstream>(tmp_, binary ? std::ios::binary : std::ios::out);
    if (!*file_) throw IoError("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void commit() {
    stream().flush();
    if (!stream()) throw IoError("write failed: " + path_);
    if (!file_) return;
    file_->close();
    if (std::rename(tmp_.c_str(), path_.c_str()) != 0) throw IoError("cannot rename " + tmp_ + " to " + path_);
    file_.reset();
  }
  ~Output() {
    if (file_) {
      file_->close();
      std::remove(tmp_.c_str());
    }
  }

 private:
  std::string path_;
  std::string tmp_;
  std::unique_ptr<std::ofstream> file_;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = load_experiment_file(o.config);
  if (o.seed) {
    cfg.run.seed = *o.seed;
    if (cfg.sweep) cfg.sweep->fixed.seed = *o.seed;
  }
  if (o.dead_time_ns) {
    if (!(*o.dead_time_ns >= 0.0)) throw ConfigError("--dead-time must be nonnegative");
    cfg.analysis.dead_time_ns = *o.dead_time_ns;
    if (cfg.sweep) cfg.sweep->analysis.dead_time_ns = *o.dead_time_ns;
  }
  for (const auto& w : cfg.warnings) std::cerr << "sdapd: warning: " << w << '\n';
  return cfg;
}

int cmd_simulate(const Options& o) {
  ExperimentConfig cfg = load(o);
  RunConfig run = cfg.run;
  if (cfg.target && o.dark) throw ConfigError("--dark cannot be combined with a bias search target");
  if (o.dark) {
    // Same seed and gate count as the dark half of a characterisation run.
    run.illumination = false;
    run.seed = derive_seed(run.seed, 1);
    if (cfg.dark_gates > 0) run.n_gates = cfg.dark_gates;
  }
  if (cfg.target) {
    const auto b = bias_search(run, cfg.analysis, *cfg.target, cfg.search);
    run.gate.v_dc_v = b.v_dc_v;
    std::cerr << "bias search: v_dc_v = " << format_double(b.v_dc_v) << " excess_v = " << format_sig6(b.excess_v)
              << " after " << b.evaluations << " evaluations\n";
  }
  const EventFormat format = event_format_from_string(o.format.empty() ? "binary" : o.format);
  Output out(o.out, format == EventFormat::binary);
  EventWriter writer(out.stream(), format, run.tag_resolution_ps);
  const RunSummary summary = simulate(run, [&](const DetectionEvent& ev, double) { writer.write(ev); });
  out.commit();
  std::cerr << to_text(summary);
  return kOk;
}

int cmd_analyze(const Options& o) {
  if (o.inputs.size() != 2) throw ConfigError("analyze needs an illuminated and a dark event file");
  ExperimentConfig cfg = load(o);
  const EventStream illum = read_events_file(o.inputs[0]);
  const EventStream dark = read_events_file(o.inputs[1]);
  const std::int64_t n_illum = cfg.run.n_gates;
  const std::int64_t n_dark = cfg.dark_gates > 0 ? cfg.dark_gates : cfg.run.n_gates;
  for (const auto* s : {&illum, &dark}) {
    if (!s->events.empty() && s->events.back().gate_index >= (s == &illum ? n_illum : n_dark)) {
      throw IoError("event stream runs past the configured number of gates");
    }
  }
  const GateTiming timing = GateTiming::from(cfg.run.gate, cfg.run.optical);
  const std::string format = o.format.empty() ? "csv" : o.format;
  Output out(o.out, false);
  const std::uint32_t bins = o.bins_ps ? *o.bins_ps : cfg.bin_width_ps;
  if (bins > 0) {
    const auto h = build_histogram(illum.events, timing.f_gate_hz, timing.f_laser_hz, bins, n_illum);
    write_histogram_csv(out.stream(), h);
  } else {
    const auto r = characterize_streams({illum.events, n_illum}, {dark.events, n_dark}, timing,
                                        cfg.run.optical.mu, cfg.analysis);
    if (format == "csv") {
      out.stream() << characterization_csv_header() << '\n' << characterization_csv_row(r) << '\n';
    } else {
      const auto names = characterization_csv_header();
      const auto values = characterization_csv_row(r);
      std::stringstream n(names), v(values);
      std::string a, b;
      while (std::getline(n, a, ',') && std::getline(v, b, ',')) out.stream() << a << " = " << b << '\n';
    }
  }
  out.commit();
  return kOk;
}

int cmd_sweep(const Options& o) {
  ExperimentConfig cfg = load(o);
  if (!cfg.sweep) throw ConfigError("config has no [sweep] section");
  const int workers = o.workers ? *o.workers : default_worker_count();
  if (workers < 1) throw ConfigError("--workers must be at least 1");
  // Rows go straight to the destination so an interrupted sweep keeps them.
  std::unique_ptr<std::ofstream> file;
  if (o.out != "-") {
    file = std::make_unique<std::ofstream>(o.out);
    if (!*file) throw IoError("cannot write " + o.out);
  }
  std::ostream& out = file ? *file : std::cout;
  out << sweep_csv_header(*cfg.sweep) << '\n';
  out.flush();
  int failed = 0;
  std::signal(SIGINT, on_sigint);
  const auto rows = run_sweep(*cfg.sweep, workers, [&](const SweepRow& row) {
    out << sweep_csv_row(row) << '\n';
    out.flush();
    if (row.failed) {
      ++failed;
      std::cerr << "sdapd: row " << row.index << " failed: " << row.note << '\n';
    }
  }, &g_interrupted);
  std::signal(SIGINT, SIG_DFL);
  if (!out) throw IoError("write failed: " + o.out);
  if (g_interrupted.load()) {
    std::cerr << "sdapd: interrupted after " << rows.size() << " of " << cfg.sweep->row_count() << " rows\n";
    return kInterrupted;
  }
  return failed > 0 ? kInfeasible : kOk;
}

int cmd_waveform(const Options& o) {
  ExperimentConfig cfg = load(o);
  RunConfig run = cfg.run;
  run.n_gates = cfg.waveform_gates;
  std::vector<Avalanche> avalanches;
  simulate(run, [&](const DetectionEvent& ev, double q) {
    avalanches.push_back({ev.gate_index, static_cast<double>(ev.t_in_gate_ps), q});
  });
  const Waveform raw = synthesize(run.gate, run.n_gates, avalanches, cfg.waveform);
  const Waveform sd = self_difference(raw, static_cast<double>(run.gate.period_ps()));
  const auto found = discriminate(sd, cfg.threshold_mv, run.gate);
  Output out(o.out, false);
  if (o.format == "text") {
    write_waveform(out.stream(), sd);
  } else {
    out.stream() << "t_ps,raw_mv,sd_mv\n";
    for (std::size_t i = 0; i < raw.samples_mv.size(); ++i) {
      out.stream() << format_double(raw.time_ps(i)) << ',' << format_sig6(raw.samples_mv[i]) << ','
                   << format_sig6(sd.samples_mv[i]) << '\n';
    }
  }
  out.commit();
  std::cerr << "avalanches = " << avalanches.size() << "\ndiscriminated = " << found.size() << '\n';
  return kOk;
}

int cmd_calibrate(const Options& o) {
  if (o.inputs.size() != 1) throw ConfigError("calibrate needs one anchor table");
  DeviceParams initial;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw IoError("cannot open " + o.config);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      initial = device_params_from_text(ss.str());
    } catch (const ConfigError& e) {
      throw ConfigError(o.config + ": " + e.what());
    }
  }
  std::vector<Anchor> anchors;
  try {
    anchors = load_anchors(o.inputs[0]);
  } catch (const ConfigError& e) {
    throw ConfigError(o.inputs[0] + ": " + e.what());
  }
  const auto report = calibrate(initial, anchors);
  std::cerr << format_report(report);
  Output out(o.out, false);
  out.stream() << to_text(report.device);
  out.commit();
  if (!report.all_within_tolerance()) std::cerr << "sdapd: warning: some anchors lie outside their tolerance\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated self-differencing InGaAs APD simulator and characterisation toolkit", "sdapd"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "configuration file");
    if (config_required) c->required();
    sub->add_option("--out", o.out, "output path, - for stdout");
  };

  auto* sim = app.add_subcommand("simulate", "run one configuration to an event file");
  add_common(sim, true);
  sim->add_option("--seed", o.seed, "override [run] seed");
  sim->add_option("--format", o.format, "event file format")->check(CLI::IsMember({"binary", "text"}));
  sim->add_flag("--dark", o.dark, "dark reference run: laser off, derived seed, [run] dark_gates");

  auto* ana = app.add_subcommand("analyze", "characterise an illuminated and a dark event file");
  add_common(ana, true);
  ana->add_option("inputs", o.inputs, "illuminated and dark event files")->required()->expected(2);
  ana->add_option("--dead-time", o.dead_time_ns, "software dead time [ns]");
  ana->add_option("--bins", o.bins_ps, "emit a phase histogram with this bin width [ps]");
  ana->add_option("--format", o.format, "output format")->check(CLI::IsMember({"csv", "text"}));

  auto* swp = app.add_subcommand("sweep", "run a parameter sweep to CSV");
  add_common(swp, true);
  swp->add_option("--seed", o.seed, "override [run] seed");
  swp->add_option("--workers", o.workers, "worker threads (default SDAPD_WORKERS or all cores)");
  swp->add_option("--dead-time", o.dead_time_ns, "software dead time [ns]");
  swp->add_option("--format", o.format, "output format")->check(CLI::IsMember({"csv"}));

  auto* wav = app.add_subcommand("waveform", "render raw and self-differenced output traces");
  add_common(wav, true);
  wav->add_option("--seed", o.seed, "override [run] seed");
  wav->add_option("--format", o.format, "csv: t,raw,sd; text: self-differenced trace only")
      ->check(CLI::IsMember({"csv", "text"}));

  auto* cal = app.add_subcommand("calibrate", "fit device coefficients to an anchor table");
  add_common(cal, false);
  cal->add_option("anchors", o.inputs, "anchor table CSV")->required()->expected(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) return cmd_simulate(o);
    if (*ana) return cmd_analyze(o);
    if (*swp) return cmd_sweep(o);
    if (*wav) return cmd_waveform(o);
    if (*cal) return cmd_calibrate(o);
  } catch (const ConfigError& e) {
    const bool prefixed = *cal || o.config.empty();
    std::cerr << "sdapd: " << (prefixed ? "" : o.config + ": ") << e.what() << '\n';
    return kConfig;
  } catch (const InfeasibleTarget& e) {
    std::cerr << "sdapd: infeasible target: " << e.what() << '\n';
    return kInfeasible;
  } catch (const IoError& e) {
    std::cerr << "sdapd: " << e.what() << '\n';
    return kIo;
  } catch (const DomainError& e) {
    std::cerr << "sdapd: " << e.what() << '\n';
    return kConfig;
  }
  return kConfig;
}
