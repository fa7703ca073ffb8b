#include "sdapd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "sdapd/errors.hpp"

namespace sdapd {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

long long to_ps(double ns) { return std::llround(ns * 1e3); }

// Number of multiples of m in [a, b].
std::int64_t multiples_in(std::int64_t a, std::int64_t b, std::int64_t m) {
  if (b < a) return 0;
  auto floor_div = [m](std::int64_t x) { return x >= 0 ? x / m : -((-x + m - 1) / m); };
  return floor_div(b) - floor_div(a - 1);
}

void require_sorted(std::span<const DetectionEvent> events) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].gate_index < events[i - 1].gate_index) {
      throw DomainError("event stream is not sorted by gate index");
    }
  }
}

}  // namespace

GateTiming GateTiming::from(const GateConfig& gate, const OpticalConfig& optical) {
  GateTiming t;
  t.period_ps = gate.period_ps();
  t.gates_per_laser_period = optical.gates_per_period(gate);
  t.f_gate_hz = gate.f_gate_hz;
  t.f_laser_hz = optical.f_laser_hz;
  return t;
}

std::int64_t GateHistogram::total() const {
  std::int64_t sum = 0;
  for (auto c : counts) sum += c;
  return sum;
}

void GateHistogram::merge(const GateHistogram& other) {
  if (other.bin_width_ps != bin_width_ps || other.gate_period_ps != gate_period_ps ||
      other.gates_per_laser_period != gates_per_laser_period || other.counts.size() != counts.size()) {
    throw DomainError("cannot merge histograms of different geometry");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  n_laser_periods += other.n_laser_periods;
}

GateHistogram build_histogram(std::span<const DetectionEvent> events, double f_gate_hz,
                              double f_laser_hz, std::uint32_t bin_width_ps, std::int64_t n_gates) {
  GateConfig gate;
  gate.f_gate_hz = f_gate_hz;
  gate.t_gate_ps = 1.0;
  OpticalConfig optical;
  optical.f_laser_hz = f_laser_hz;
  GateHistogram h;
  h.gate_period_ps = gate.period_ps();
  h.gates_per_laser_period = optical.gates_per_period(gate);
  if (bin_width_ps == 0 || h.gate_period_ps % bin_width_ps != 0) {
    throw DomainError("bin width must divide the gate period");
  }
  h.bin_width_ps = bin_width_ps;
  require_sorted(events);
  const long long bins_per_gate = h.gate_period_ps / bin_width_ps;
  h.counts.assign(static_cast<std::size_t>(h.gates_per_laser_period * bins_per_gate), 0);
  for (const auto& ev : events) {
    if (ev.t_in_gate_ps >= h.gate_period_ps) throw DomainError("event time exceeds the gate period");
    const long long phase = ev.gate_index % h.gates_per_laser_period;
    ++h.counts[static_cast<std::size_t>(phase * bins_per_gate + ev.t_in_gate_ps / bin_width_ps)];
  }
  if (n_gates > 0) {
    h.n_laser_periods = (n_gates + h.gates_per_laser_period - 1) / h.gates_per_laser_period;
  } else if (!events.empty()) {
    h.n_laser_periods = events.back().gate_index / h.gates_per_laser_period + 1;
  }
  return h;
}

std::vector<DetectionEvent> apply_dead_time(std::span<const DetectionEvent> events,
                                            long long gate_period_ps, double tau_dead_ns) {
  if (tau_dead_ns < 0.0 || std::isnan(tau_dead_ns)) throw DomainError("dead time must be nonnegative");
  const long long tau = to_ps(tau_dead_ns);
  std::vector<DetectionEvent> kept;
  kept.reserve(events.size());
  bool have_last = false;
  long long last = 0;
  long long prev = std::numeric_limits<long long>::min();
  for (const auto& ev : events) {
    const long long t = ev.gate_index * gate_period_ps + ev.t_in_gate_ps;
    if (t < prev) throw DomainError("event stream is not time ordered");
    prev = t;
    if (!have_last || t >= last + tau) {
      kept.push_back(ev);
      last = t;
      have_last = true;
    }
  }
  return kept;
}

GateCounts count_gates(std::span<const DetectionEvent> events, std::int64_t n_gates,
                       long long gates_per_laser_period, long long gate_period_ps,
                       long long dead_time_ps) {
  if (n_gates <= 0) throw DomainError("gate count must be positive");
  require_sorted(events);
  const std::int64_t m = gates_per_laser_period;
  GateCounts c;
  c.illuminated_gates = multiples_in(0, n_gates - 1, m);
  c.other_gates = n_gates - c.illuminated_gates;
  std::int64_t dead_il = 0;
  std::int64_t dead_other = 0;
  std::int64_t dead_until = -1;  // last gate already counted dead
  for (const auto& ev : events) {
    if (ev.gate_index % m == 0) {
      ++c.illuminated_counts;
    } else {
      ++c.other_counts;
    }
    const long long span = (ev.t_in_gate_ps + dead_time_ps + gate_period_ps - 1) / gate_period_ps - 1;
    const std::int64_t first = std::max(ev.gate_index + 1, dead_until + 1);
    const std::int64_t last = std::min<std::int64_t>(ev.gate_index + std::max(1LL, span), n_gates - 1);
    if (last >= first) {
      const std::int64_t il = multiples_in(first, last, m);
      dead_il += il;
      dead_other += (last - first + 1) - il;
      dead_until = last;
    }
  }
  c.illuminated_live = c.illuminated_gates - dead_il;
  c.other_live = c.other_gates - dead_other;
  return c;
}

double spde(double r_cps, double r_dark_cps, double mu, double f_laser_hz, double f_gate_hz) {
  if (!(mu > 0.0)) throw DomainError("mu must be positive");
  if (!(r_cps < f_laser_hz)) throw DomainError("detection rate must be below the laser rate");
  if (!(r_dark_cps < f_gate_hz)) throw DomainError("dark rate must be below the gate rate");
  return (std::log1p(-r_dark_cps / f_gate_hz) - std::log1p(-r_cps / f_laser_hz)) / mu;
}

double expected_rate(double mu, double eta, double p_d, double f_laser_hz) {
  return f_laser_hz * (1.0 - std::exp(-mu * eta) * (1.0 - p_d));
}

Estimate dark_count_prob(std::span<const DetectionEvent> dark, std::int64_t n_gates,
                         long long gate_period_ps, double dead_time_ns, bool exclude_dead_gates) {
  if (n_gates <= 0) throw DomainError("dark run has no gates");
  auto kept = apply_dead_time(dark, gate_period_ps, dead_time_ns);
  const GateCounts c = count_gates(kept, n_gates, 1, gate_period_ps, to_ps(dead_time_ns));
  const std::int64_t gates = exclude_dead_gates ? c.illuminated_live : c.illuminated_gates;
  const auto events = static_cast<double>(c.illuminated_counts);
  const double p = gates > 0 ? events / static_cast<double>(gates) : 0.0;
  return {p, gates > 0 ? std::sqrt(p * (1.0 - p) / static_cast<double>(gates)) : 0.0};
}

namespace {

struct PreparedRuns {
  GateCounts illum;
  Estimate p_d;
  std::int64_t g_il = 0;
  std::int64_t g_ni = 0;
  std::vector<DetectionEvent> illum_kept;
};

PreparedRuns prepare(const RunStream& illuminated, const RunStream& dark, const GateTiming& timing,
                     const EstimatorOptions& options) {
  PreparedRuns p;
  p.p_d = dark_count_prob(dark.events, dark.n_gates, timing.period_ps, options.dead_time_ns,
                          options.exclude_dead_gates);
  p.illum_kept = apply_dead_time(illuminated.events, timing.period_ps, options.dead_time_ns);
  p.illum = count_gates(p.illum_kept, illuminated.n_gates, timing.gates_per_laser_period,
                        timing.period_ps, to_ps(options.dead_time_ns));
  p.g_il = options.exclude_dead_gates ? p.illum.illuminated_live : p.illum.illuminated_gates;
  p.g_ni = options.exclude_dead_gates ? p.illum.other_live : p.illum.other_gates;
  return p;
}

Estimate spde_from(const PreparedRuns& p, const GateTiming& timing, double mu) {
  if (p.g_il <= 0) throw DomainError("no live illuminated gates");
  const double click = static_cast<double>(p.illum.illuminated_counts) / static_cast<double>(p.g_il);
  const double eta = spde(click * timing.f_laser_hz, p.p_d.value * timing.f_gate_hz, mu,
                          timing.f_laser_hz, timing.f_gate_hz);
  const double var_click = click * (1.0 - click) / static_cast<double>(p.g_il);
  const double a = 1.0 / (1.0 - click);
  const double b = 1.0 / (1.0 - p.p_d.value);
  const double var = (a * a * var_click + b * b * p.p_d.sigma * p.p_d.sigma) / (mu * mu);
  return {eta, std::sqrt(var)};
}

Estimate afterpulse_from(const PreparedRuns& p) {
  const double pd = p.p_d.value;
  const double var_pd = p.p_d.sigma * p.p_d.sigma;
  const auto g_il = static_cast<double>(p.g_il);
  const auto g_ni = static_cast<double>(p.g_ni);
  const auto c_il = static_cast<double>(p.illum.illuminated_counts);
  const auto c_ni = static_cast<double>(p.illum.other_counts);
  const double num = c_ni - pd * g_ni;
  const double den = c_il - pd * g_il;
  if (!(den > 0.0)) throw DomainError("afterpulse estimate undefined: photon signal below the dark floor");
  const double pa = num / den;
  const double click = g_il > 0.0 ? c_il / g_il : 0.0;
  const double var_num = c_ni + g_ni * g_ni * var_pd;
  const double var_den = c_il * (1.0 - click) + g_il * g_il * var_pd;
  const double cov = g_ni * g_il * var_pd;
  const double var = (var_num + pa * pa * var_den - 2.0 * pa * cov) / (den * den);
  return {pa, std::sqrt(std::max(var, 0.0))};
}

}  // namespace

Estimate spde_estimate(const RunStream& illuminated, const RunStream& dark, const GateTiming& timing,
                       double mu, const EstimatorOptions& options) {
  return spde_from(prepare(illuminated, dark, timing, options), timing, mu);
}

Estimate afterpulse_prob(const RunStream& illuminated, const RunStream& dark, const GateTiming& timing,
                         const EstimatorOptions& options) {
  return afterpulse_from(prepare(illuminated, dark, timing, options));
}

double jitter_rms(std::span<const DetectionEvent> events) {
  if (events.size() < 2) throw DomainError("jitter needs at least two events");
  double mean = 0.0;
  for (const auto& ev : events) mean += ev.t_in_gate_ps;
  mean /= static_cast<double>(events.size());
  double ss = 0.0;
  for (const auto& ev : events) {
    const double d = ev.t_in_gate_ps - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(events.size()));
}

std::vector<DetectionEvent> illuminated_events(std::span<const DetectionEvent> events,
                                               long long gates_per_laser_period) {
  std::vector<DetectionEvent> out;
  for (const auto& ev : events) {
    if (ev.gate_index % gates_per_laser_period == 0) out.push_back(ev);
  }
  return out;
}

CharacterizationResult characterize_streams(const RunStream& illuminated, const RunStream& dark,
                                            const GateTiming& timing, double mu,
                                            const EstimatorOptions& options) {
  const PreparedRuns p = prepare(illuminated, dark, timing, options);
  CharacterizationResult r;
  r.p_d = p.p_d;
  r.r_dark_cps = {p.p_d.value * timing.f_gate_hz, p.p_d.sigma * timing.f_gate_hz};
  if (p.g_il > 0) {
    const double click = static_cast<double>(p.illum.illuminated_counts) / static_cast<double>(p.g_il);
    r.r_illum_cps = {click * timing.f_laser_hz,
                     std::sqrt(click * (1.0 - click) / static_cast<double>(p.g_il)) * timing.f_laser_hz};
  } else {
    r.r_illum_cps = {kNaN, kNaN};
  }
  try {
    r.spde = spde_from(p, timing, mu);
  } catch (const DomainError&) {
    r.spde = {kNaN, kNaN};
  }
  try {
    r.p_a = afterpulse_from(p);
  } catch (const DomainError&) {
    r.p_a = {kNaN, kNaN};
  }
  const auto in_phase = illuminated_events(p.illum_kept, timing.gates_per_laser_period);
  if (in_phase.size() >= 2) {
    const double rms = jitter_rms(in_phase);
    r.jitter_rms_ps = {rms, rms / std::sqrt(2.0 * static_cast<double>(in_phase.size() - 1))};
  } else {
    r.jitter_rms_ps = {kNaN, kNaN};
  }
  return r;
}

std::string format_sig6(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

std::string characterization_csv_header() {
  return "spde,spde_err,p_d,p_d_err,p_a,p_a_err,jitter_rms_ps,jitter_rms_err_ps,"
         "r_illum_cps,r_illum_err_cps,r_dark_cps,r_dark_err_cps";
}

std::string characterization_csv_row(const CharacterizationResult& r) {
  std::string row;
  for (const Estimate* e : {&r.spde, &r.p_d, &r.p_a, &r.jitter_rms_ps, &r.r_illum_cps, &r.r_dark_cps}) {
    if (!row.empty()) row += ',';
    row += format_sig6(e->value);
    row += ',';
    row += format_sig6(e->sigma);
  }
  return row;
}

void write_histogram_csv(std::ostream& out, const GateHistogram& h) {
  out << "bin,gate_phase,t_in_gate_ps,counts\n";
  const long long bins_per_gate = h.gate_period_ps / h.bin_width_ps;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const long long phase = static_cast<long long>(k) / bins_per_gate;
    const long long t = (static_cast<long long>(k) % bins_per_gate) * h.bin_width_ps;
    out << k << ',' << phase << ',' << t << ',' << h.counts[k] << '\n';
  }
}

}  // namespace sdapd
