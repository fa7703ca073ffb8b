#include "sdapd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "sdapd/config.hpp"
#include "sdapd/errors.hpp"
#include "sdapd/random.hpp"

namespace sdapd {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::string_view> kSections = {"", "device", "gate", "optical", "run",
                                                 "analysis", "search", "sweep", "waveform"};

// Validation messages start with the offending key; point them at its line.
template <class F>
auto with_key_lines(const KeyValueDocument& doc, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    if (e.line() != 0) throw;
    const std::string msg = e.what();
    const std::string key = msg.substr(0, msg.find(' '));
    for (auto name : kSections) {
      if (const auto* s = doc.section(name)) {
        if (s->contains(key)) throw ConfigError(msg, s->find(key)->line);
      }
    }
    throw;
  }
}

SamplingPath sampling_path_from(const std::string& text, int line) {
  if (text == "fast") return SamplingPath::fast;
  if (text == "naive") return SamplingPath::naive;
  throw ConfigError("path must be 'fast' or 'naive'", line);
}

int line_of(const KeyValueSection& s, std::string_view key) {
  const auto* e = s.find(key);
  return e ? e->line : s.line();
}

std::optional<BiasTarget> read_target(const KeyValueSection& s) {
  const auto spde = s.get_double("target_spde");
  const auto pa = s.get_double("target_p_a");
  if (spde && pa) throw ConfigError("give target_spde or target_p_a, not both", line_of(s, "target_p_a"));
  if (!spde && !pa) {
    if (s.contains("tolerance")) throw ConfigError("tolerance without a target", line_of(s, "tolerance"));
    return std::nullopt;
  }
  BiasTarget t;
  t.kind = spde ? BiasTarget::Kind::spde : BiasTarget::Kind::p_a;
  t.value = spde ? *spde : *pa;
  t.tolerance = s.get_double_or("tolerance", t.tolerance);
  const int line = line_of(s, spde ? "target_spde" : "target_p_a");
  if (!(t.value >= 0.0 && t.value < 1.0)) throw ConfigError("target must lie in [0, 1)", line);
  if (!(t.tolerance > 0.0)) throw ConfigError("tolerance must be positive", line_of(s, "tolerance"));
  return t;
}

Estimate target_estimate(const Characterization& c, BiasTarget::Kind kind) {
  return kind == BiasTarget::Kind::spde ? c.result.spde : c.result.p_a;
}

RunConfig at_excess(const RunConfig& tmpl, double excess_v, std::int64_t n_gates) {
  RunConfig cfg = tmpl;
  cfg.gate.v_dc_v = dc_bias_for_excess(cfg.device, cfg.gate.v_pp_v, excess_v, cfg.temperature_c);
  cfg.n_gates = n_gates;
  return cfg;
}

std::string csv_safe(std::string text) {
  std::replace(text.begin(), text.end(), ',', ';');
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

}  // namespace

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::gate_width: return "gate_width";
    case SweepAxis::amplitude: return "amplitude";
    case SweepAxis::temperature: return "temperature";
    case SweepAxis::flux: return "flux";
    case SweepAxis::dc_bias: return "dc_bias";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(std::string_view text) {
  for (auto a : {SweepAxis::gate_width, SweepAxis::amplitude, SweepAxis::temperature, SweepAxis::flux,
                 SweepAxis::dc_bias}) {
    if (text == to_string(a)) return a;
  }
  throw ConfigError("unknown sweep axis '" + std::string(text) + "'");
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("values must not be empty");
  const bool up = values.size() < 2 || values[1] > values[0];
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (up ? !(values[i] > values[i - 1]) : !(values[i] < values[i - 1])) {
      throw ConfigError("values must be strictly monotone");
    }
  }
  if (replicates < 1) throw ConfigError("replicates must be at least 1");
  if (axis == SweepAxis::dc_bias && (target || hold_excess_v)) {
    throw ConfigError("axis dc_bias cannot be combined with a bias target or excess_v");
  }
  if (target && hold_excess_v) throw ConfigError("excess_v cannot be held while searching for a target");
  for (std::size_t i = 0; i < values.size(); ++i) sweep_row_config(*this, i * static_cast<std::size_t>(replicates)).validate();
}

ExperimentConfig load_experiment(const KeyValueDocument& doc, const std::string& base_dir) {
  return with_key_lines(doc, [&] {
    doc.reject_unknown_sections(kSections);
    if (const auto* root = doc.section("")) {
      if (!root->entries().empty()) {
        throw ConfigError("entries must sit inside a [section]", root->entries().begin()->second.line);
      }
    }
    ExperimentConfig out;
    RunConfig& run = out.run;

    const auto& dev = doc.section_or_empty("device");
    DeviceParams base_device;
    if (auto file = dev.get_string("file")) {
      std::filesystem::path p(*file);
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      std::ifstream in(p);
      if (!in) throw IoError("cannot open device file " + p.string());
      std::stringstream ss;
      ss << in.rdbuf();
      try {
        base_device = device_params_from_text(ss.str());
      } catch (const ConfigError& e) {
        throw ConfigError(p.string() + ": " + e.what(), line_of(dev, "file"));
      }
    }
    run.device = device_params_from_section(dev, base_device);

    const auto& run_s = doc.section_or_empty("run");
    run.temperature_c = run_s.get_double_or("temperature_c", run.temperature_c);
    if (auto n = run_s.get_int("n_gates")) run.n_gates = *n;
    if (auto seed = run_s.get_int("seed")) {
      if (*seed < 0) throw ConfigError("seed must be nonnegative", line_of(run_s, "seed"));
      run.seed = static_cast<std::uint64_t>(*seed);
    }
    if (auto b = run_s.get_bool("illumination")) run.illumination = *b;
    if (auto r = run_s.get_int("tag_resolution_ps")) {
      if (*r < 1 || *r > std::numeric_limits<std::uint32_t>::max()) {
        throw ConfigError("tag_resolution_ps out of range", line_of(run_s, "tag_resolution_ps"));
      }
      run.tag_resolution_ps = static_cast<std::uint32_t>(*r);
    }
    if (auto p = run_s.get_string("path")) run.path = sampling_path_from(*p, line_of(run_s, "path"));
    if (auto d = run_s.get_int("dark_gates")) {
      if (*d < 0) throw ConfigError("dark_gates must be nonnegative", line_of(run_s, "dark_gates"));
      out.dark_gates = *d;
    }

    const auto& gate = doc.section_or_empty("gate");
    run.gate = gate_config_from_section(gate);
    const auto excess = gate.get_double("excess_v");
    if (excess) {
      if (gate.contains("v_dc_v")) throw ConfigError("give v_dc_v or excess_v, not both", line_of(gate, "excess_v"));
      run.gate.v_dc_v = dc_bias_for_excess(run.device, run.gate.v_pp_v, *excess, run.temperature_c);
    }
    run.optical = optical_config_from_section(doc.section_or_empty("optical"));

    const auto& an = doc.section_or_empty("analysis");
    out.analysis.dead_time_ns = an.get_double_or("dead_time_ns", 0.0);
    if (!(out.analysis.dead_time_ns >= 0.0)) throw ConfigError("dead_time_ns must be nonnegative", line_of(an, "dead_time_ns"));
    if (auto b = an.get_bool("exclude_dead_gates")) out.analysis.exclude_dead_gates = *b;
    if (auto b = an.get_int("bin_width_ps")) {
      if (*b < 1 || *b > std::numeric_limits<std::uint32_t>::max()) {
        throw ConfigError("bin_width_ps out of range", line_of(an, "bin_width_ps"));
      }
      out.bin_width_ps = static_cast<std::uint32_t>(*b);
    }

    const auto& search = doc.section_or_empty("search");
    out.target = read_target(search);
    out.search.max_excess_v = search.get_double_or("max_excess_v", out.search.max_excess_v);
    if (auto n = search.get_int("initial_gates")) out.search.initial_gates = *n;
    if (auto n = search.get_int("max_gates")) out.search.max_gates = *n;
    if (!(out.search.max_excess_v > 0.0)) throw ConfigError("max_excess_v must be positive", line_of(search, "max_excess_v"));
    if (out.search.initial_gates < 1 || out.search.max_gates < out.search.initial_gates) {
      throw ConfigError("need 1 <= initial_gates <= max_gates", line_of(search, "initial_gates"));
    }

    if (const auto* sw = doc.section("sweep")) {
      SweepSpec spec;
      const auto axis = sw->get_string("axis");
      if (!axis) throw ConfigError("sweep needs an axis", sw->line());
      try {
        spec.axis = sweep_axis_from_string(*axis);
      } catch (const ConfigError& e) {
        throw ConfigError(e.what(), line_of(*sw, "axis"));
      }
      auto values = sw->get_double_list("values");
      if (!values) throw ConfigError("sweep needs values", sw->line());
      spec.values = std::move(*values);
      if (auto r = sw->get_int("replicates")) spec.replicates = static_cast<int>(*r);
      spec.fixed = run;
      spec.analysis = out.analysis;
      spec.target = out.target;
      spec.search = out.search;
      if (excess && !out.target && spec.axis != SweepAxis::dc_bias) spec.hold_excess_v = excess;
      try {
        spec.validate();
      } catch (const ConfigError& e) {
        if (e.line() != 0) throw;
        const std::string msg = e.what();
        const std::string key = msg.substr(0, msg.find(' '));
        int line = sw->contains(key) ? line_of(*sw, key) : 0;
        if (line == 0) {
          for (auto name : kSections) {
            const auto* s = doc.section(name);
            if (s && s->contains(key)) line = line_of(*s, key);
          }
        }
        throw ConfigError(msg, line ? line : line_of(*sw, "values"));
      }
      out.sweep = std::move(spec);
    }

    const auto& wf = doc.section_or_empty("waveform");
    if (auto shape = wf.get_string("shape")) {
      try {
        out.waveform.shape = gate_shape_from_string(*shape);
      } catch (const ConfigError& e) {
        throw ConfigError(e.what(), line_of(wf, "shape"));
      }
    }
    out.waveform.trapezoid_edge_ps = wf.get_double_or("trapezoid_edge_ps", out.waveform.trapezoid_edge_ps);
    out.waveform.sample_period_ps = wf.get_double_or("sample_period_ps", out.waveform.sample_period_ps);
    out.waveform.capacitive_mv_per_v_per_ps =
        wf.get_double_or("capacitive_mv_per_v_per_ps", out.waveform.capacitive_mv_per_v_per_ps);
    out.waveform.avalanche_rise_ps = wf.get_double_or("avalanche_rise_ps", out.waveform.avalanche_rise_ps);
    out.waveform.avalanche_fall_ps = wf.get_double_or("avalanche_fall_ps", out.waveform.avalanche_fall_ps);
    out.waveform.area_mv_ps_per_coulomb =
        wf.get_double_or("area_mv_ps_per_coulomb", out.waveform.area_mv_ps_per_coulomb);
    out.waveform.noise_rms_mv = wf.get_double_or("noise_rms_mv", out.waveform.noise_rms_mv);
    if (auto seed = wf.get_int("noise_seed")) out.waveform.noise_seed = static_cast<std::uint64_t>(*seed);
    if (auto n = wf.get_int("n_gates")) {
      if (*n < 1) throw ConfigError("n_gates must be at least 1", line_of(wf, "n_gates"));
      out.waveform_gates = *n;
    }
    out.threshold_mv = wf.get_double_or("threshold_mv", out.threshold_mv);
    if (!(out.threshold_mv > 0.0)) throw ConfigError("threshold_mv must be positive", line_of(wf, "threshold_mv"));
    if (!(out.waveform.noise_rms_mv >= 0.0)) {
      throw ConfigError("noise_rms_mv must be nonnegative", line_of(wf, "noise_rms_mv"));
    }

    doc.reject_unused();
    run.validate();
    if (auto w = temperature_warning(run.temperature_c)) out.warnings.push_back(*w);
    return out;
  });
}

ExperimentConfig parse_experiment(std::string_view text, const std::string& base_dir) {
  return load_experiment(KeyValueDocument::parse(text), base_dir);
}

ExperimentConfig load_experiment_file(const std::string& path) {
  const auto doc = KeyValueDocument::load(path);
  return load_experiment(doc, std::filesystem::path(path).parent_path().string());
}

double Characterization::charge_per_count_c() const {
  const auto n = illuminated.total_events();
  return n > 0 ? illuminated.total_charge_c / static_cast<double>(n) : kNaN;
}

Characterization characterize(const RunConfig& cfg, const EstimatorOptions& options, std::int64_t dark_gates) {
  cfg.validate();
  RunConfig dark_cfg = cfg;
  dark_cfg.illumination = false;
  dark_cfg.seed = derive_seed(cfg.seed, 1);
  if (dark_gates > 0) dark_cfg.n_gates = dark_gates;

  Characterization c;
  c.seed = cfg.seed;
  c.n_gates = cfg.n_gates;
  c.v_dc_v = cfg.gate.v_dc_v;
  c.excess_v = cfg.excess_v();

  std::vector<DetectionEvent> illum_events;
  std::vector<DetectionEvent> dark_events;
  c.illuminated = simulate(cfg, [&](const DetectionEvent& ev, double) { illum_events.push_back(ev); });
  c.dark = simulate(dark_cfg, [&](const DetectionEvent& ev, double) { dark_events.push_back(ev); });
  c.result = characterize_streams({illum_events, cfg.n_gates}, {dark_events, dark_cfg.n_gates},
                                  GateTiming::from(cfg.gate, cfg.optical), cfg.optical.mu, options);
  return c;
}

BiasResult bias_search(const RunConfig& tmpl, const EstimatorOptions& options, const BiasTarget& target,
                       const BiasSearchOptions& search) {
  if (!(target.tolerance > 0.0)) throw DomainError("tolerance must be positive");
  if (!(search.max_excess_v > 0.0)) throw DomainError("max_excess_v must be positive");
  if (!tmpl.illumination) throw DomainError("bias search needs an illuminated run");
  std::int64_t n = std::max<std::int64_t>(1, search.initial_gates);

  BiasResult out;
  auto evaluate = [&](double v) {
    ++out.evaluations;
    return characterize(at_excess(tmpl, v, n), options);
  };
  auto finish = [&](double v, Characterization c) {
    out.excess_v = v;
    out.v_dc_v = c.v_dc_v;
    out.at = std::move(c);
    return out;
  };

  if (target.value <= 0.0) return finish(0.0, evaluate(0.0));

  double lo = 0.0;
  double hi = search.max_excess_v;
  {
    auto top = evaluate(hi);
    const Estimate e = target_estimate(top, target.kind);
    if (std::isnan(e.value) || e.value + std::max(target.tolerance, 3.0 * e.sigma) < target.value) {
      std::ostringstream os;
      os << "target " << format_sig6(target.value) << " unreachable: at the largest excess voltage "
         << format_sig6(hi) << " V the estimate is " << format_sig6(e.value) << " +- " << format_sig6(e.sigma)
         << "; at 0 V it is 0";
      throw InfeasibleTarget(os.str());
    }
    if (std::abs(e.value - target.value) <= target.tolerance && e.sigma <= target.tolerance / 2) {
      return finish(hi, std::move(top));
    }
  }

  std::optional<Characterization> last;
  double mid = 0.5 * (lo + hi);
  while (out.evaluations < search.max_evaluations) {
    auto c = evaluate(mid);
    const Estimate e = target_estimate(c, target.kind);
    if (std::isnan(e.value)) {
      lo = mid;
    } else if (e.sigma > target.tolerance / 2 && n < search.max_gates) {
      n = std::min(search.max_gates, 2 * n);
      continue;
    } else if (std::abs(e.value - target.value) <= target.tolerance) {
      return finish(mid, std::move(c));
    } else if (e.value < target.value) {
      lo = mid;
    } else {
      hi = mid;
    }
    last = std::move(c);
    if (hi - lo < 1e-6) break;
    mid = 0.5 * (lo + hi);
  }
  std::ostringstream os;
  os << "bias search for " << format_sig6(target.value) << " did not converge; bracket [" << format_sig6(lo)
     << ", " << format_sig6(hi) << "] V excess";
  if (last) {
    const Estimate e = target_estimate(*last, target.kind);
    os << ", last estimate " << format_sig6(e.value) << " +- " << format_sig6(e.sigma);
  }
  throw InfeasibleTarget(os.str());
}

RunConfig sweep_row_config(const SweepSpec& spec, std::size_t index) {
  if (index >= spec.row_count()) throw DomainError("sweep row out of range");
  const double v = spec.values[index / static_cast<std::size_t>(spec.replicates)];
  RunConfig cfg = spec.fixed;
  cfg.seed = derive_seed(spec.fixed.seed, index);
  switch (spec.axis) {
    case SweepAxis::gate_width:
      cfg.gate.t_gate_ps = v;
      cfg.optical.gate_offset_ps = 0.5 * v;
      break;
    case SweepAxis::amplitude: cfg.gate.v_pp_v = v; break;
    case SweepAxis::temperature: cfg.temperature_c = v; break;
    case SweepAxis::flux: cfg.optical.mu = v; break;
    case SweepAxis::dc_bias: cfg.gate.v_dc_v = v; break;
  }
  if (spec.hold_excess_v) {
    cfg.gate.v_dc_v = dc_bias_for_excess(cfg.device, cfg.gate.v_pp_v, *spec.hold_excess_v, cfg.temperature_c);
  }
  return cfg;
}

SweepRow run_sweep_row(const SweepSpec& spec, std::size_t index) {
  const RunConfig cfg = sweep_row_config(spec, index);
  SweepRow row;
  row.index = index;
  row.value = spec.values[index / static_cast<std::size_t>(spec.replicates)];
  row.replicate = static_cast<int>(index % static_cast<std::size_t>(spec.replicates));
  row.seed = cfg.seed;
  try {
    if (spec.target) {
      row.at = bias_search(cfg, spec.analysis, *spec.target, spec.search).at;
    } else {
      row.at = characterize(cfg, spec.analysis, 0);
    }
  } catch (const std::exception& e) {
    row.failed = true;
    row.note = e.what();
    row.at = {};
    row.at.seed = cfg.seed;
    row.at.v_dc_v = cfg.gate.v_dc_v;
    row.at.excess_v = kNaN;
    row.at.result.spde = row.at.result.p_d = row.at.result.p_a = {kNaN, kNaN};
    row.at.result.jitter_rms_ps = row.at.result.r_illum_cps = row.at.result.r_dark_cps = {kNaN, kNaN};
  }
  return row;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, int workers,
                                const std::function<void(const SweepRow&)>& emit,
                                const std::atomic<bool>* cancel) {
  spec.validate();
  const std::size_t n = spec.row_count();
  workers = std::clamp(workers, 1, static_cast<int>(std::max<std::size_t>(1, n)));

  std::vector<std::optional<SweepRow>> done(n);
  std::vector<SweepRow> emitted;
  std::size_t next_emit = 0;
  std::atomic<std::size_t> next_row{0};
  std::mutex mu;

  auto flush_prefix = [&] {
    while (next_emit < n && done[next_emit]) {
      if (emit) emit(*done[next_emit]);
      emitted.push_back(std::move(*done[next_emit]));
      done[next_emit].reset();
      ++next_emit;
    }
  };

  auto work = [&] {
    while (!(cancel && cancel->load())) {
      const std::size_t i = next_row.fetch_add(1);
      if (i >= n) break;
      SweepRow row = run_sweep_row(spec, i);
      std::lock_guard lock(mu);
      done[i] = std::move(row);
      flush_prefix();
    }
  };

  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (std::size_t i = next_emit; i < n; ++i) {
    if (!done[i]) continue;
    if (emit) emit(*done[i]);
    emitted.push_back(std::move(*done[i]));
  }
  return emitted;
}

std::string sweep_csv_header(const SweepSpec& spec) {
  return std::string("row,") + to_string(spec.axis) +
         ",replicate,seed,status,v_dc_v,excess_v,spde,spde_err,p_d,p_d_err,p_a,p_a_err,jitter_rms_ps,"
         "jitter_rms_err_ps,r_illum_cps,r_illum_err_cps,count_rate_cps,charge_per_count_c,n_gates,note";
}

std::string sweep_csv_row(const SweepRow& row) {
  const auto& r = row.at.result;
  std::ostringstream os;
  os << row.index << ',' << format_sig6(row.value) << ',' << row.replicate << ',' << row.seed << ','
     << (row.failed ? "failed" : "ok") << ',' << format_sig6(row.at.v_dc_v) << ',' << format_sig6(row.at.excess_v);
  for (const Estimate* e : {&r.spde, &r.p_d, &r.p_a, &r.jitter_rms_ps, &r.r_illum_cps}) {
    os << ',' << format_sig6(e->value) << ',' << format_sig6(e->sigma);
  }
  const double rate = row.failed || row.at.illuminated.simulated_time_s <= 0.0
                          ? kNaN
                          : static_cast<double>(row.at.illuminated.total_events()) / row.at.illuminated.simulated_time_s;
  os << ',' << format_sig6(rate) << ',' << format_sig6(row.failed ? kNaN : row.at.charge_per_count_c()) << ','
     << row.at.n_gates << ',' << csv_safe(row.note);
  return os.str();
}

int default_worker_count() {
  if (const char* env = std::getenv("SDAPD_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min(v, 1024L));
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace sdapd
