#include "sdapd/waveform.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <boost/random/normal_distribution.hpp>

#include "sdapd/config.hpp"
#include "sdapd/errors.hpp"
#include "sdapd/random.hpp"

namespace sdapd {
namespace {

// Pulses are cut this many fall times after onset.
constexpr double kPulseSpanFalls = 20.0;

std::size_t samples_per(double period_ps, double sample_period_ps) {
  if (!(sample_period_ps > 0.0)) throw DomainError("sample period must be positive");
  const double ratio = period_ps / sample_period_ps;
  const double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9 * ratio) {
    throw DomainError("period must be an integer multiple of the sample period");
  }
  return static_cast<std::size_t>(r);
}

// dV/dt of the gate drive in V/ps at time t since the start of the gate.
double gate_slew(const GateConfig& gate, const WaveformConfig& cfg, double t) {
  const double tg = gate.t_gate_ps;
  if (t < 0.0 || t >= tg) return 0.0;
  switch (cfg.shape) {
    case GateShape::raised_cosine:
      return gate.v_pp_v * std::numbers::pi / tg * std::sin(2.0 * std::numbers::pi * t / tg);
    case GateShape::trapezoid: {
      const double e = cfg.trapezoid_edge_ps;
      if (t < e) return gate.v_pp_v / e;
      if (t >= tg - e) return -gate.v_pp_v / e;
      return 0.0;
    }
  }
  return 0.0;
}

double pulse_scale(double charge_c, const WaveformConfig& cfg) {
  return charge_c * cfg.area_mv_ps_per_coulomb / (cfg.avalanche_fall_ps - cfg.avalanche_rise_ps);
}

}  // namespace

GateShape gate_shape_from_string(std::string_view text) {
  if (text == "raised_cosine") return GateShape::raised_cosine;
  if (text == "trapezoid") return GateShape::trapezoid;
  throw ConfigError("unknown gate shape '" + std::string(text) + "'");
}

double avalanche_peak_mv(double charge_c, const WaveformConfig& cfg) {
  const double r = cfg.avalanche_rise_ps;
  const double f = cfg.avalanche_fall_ps;
  const double t_peak = std::log(f / r) * r * f / (f - r);
  return pulse_scale(charge_c, cfg) * (std::exp(-t_peak / f) - std::exp(-t_peak / r));
}

Waveform synthesize(const GateConfig& gate, std::int64_t n_gates, std::span<const Avalanche> avalanches,
                    const WaveformConfig& cfg) {
  gate.validate();
  if (n_gates < 1) throw DomainError("waveform needs at least one gate");
  if (!(cfg.avalanche_fall_ps > cfg.avalanche_rise_ps && cfg.avalanche_rise_ps > 0.0)) {
    throw DomainError("avalanche fall time must exceed a positive rise time");
  }
  if (cfg.shape == GateShape::trapezoid &&
      !(cfg.trapezoid_edge_ps > 0.0 && 2.0 * cfg.trapezoid_edge_ps <= gate.t_gate_ps)) {
    throw DomainError("trapezoid edges must fit inside the gate");
  }
  const auto period = static_cast<double>(gate.period_ps());
  const std::size_t spp = samples_per(period, cfg.sample_period_ps);
  const double dt = cfg.sample_period_ps;

  Waveform w;
  w.sample_period_ps = dt;
  w.samples_mv.resize(spp * static_cast<std::size_t>(n_gates));

  // One period of the capacitive term, tiled so every period is bitwise equal.
  std::vector<double> cap(spp);
  for (std::size_t i = 0; i < spp; ++i) {
    cap[i] = cfg.capacitive_mv_per_v_per_ps * gate_slew(gate, cfg, static_cast<double>(i) * dt);
  }
  for (std::size_t i = 0; i < w.samples_mv.size(); ++i) w.samples_mv[i] = cap[i % spp];

  for (const auto& av : avalanches) {
    if (av.gate_index < 0 || av.gate_index >= n_gates || av.t_in_gate_ps < 0.0 ||
        av.t_in_gate_ps >= gate.t_gate_ps) {
      throw DomainError("avalanche lies outside its gate");
    }
    if (av.charge_c < 0.0) throw DomainError("avalanche charge must be nonnegative");
    if (av.charge_c == 0.0) continue;
    const double k = pulse_scale(av.charge_c, cfg);
    const double onset = static_cast<double>(av.gate_index) * period + av.t_in_gate_ps;
    const double end = onset + kPulseSpanFalls * cfg.avalanche_fall_ps;
    auto i = static_cast<std::size_t>(std::ceil(onset / dt));
    for (; i < w.samples_mv.size() && w.time_ps(i) < end; ++i) {
      const double s = w.time_ps(i) - onset;
      w.samples_mv[i] += k * (std::exp(-s / cfg.avalanche_fall_ps) - std::exp(-s / cfg.avalanche_rise_ps));
    }
  }

  if (cfg.noise_rms_mv > 0.0) {
    Xoshiro256pp rng(cfg.noise_seed);
    boost::random::normal_distribution<double> noise(0.0, cfg.noise_rms_mv);
    for (auto& s : w.samples_mv) s += noise(rng);
  }
  return w;
}

Waveform self_difference(const Waveform& w, double period_ps) {
  const std::size_t lag = samples_per(period_ps, w.sample_period_ps);
  Waveform out;
  out.sample_period_ps = w.sample_period_ps;
  out.samples_mv.resize(w.samples_mv.size());
  for (std::size_t i = 0; i < w.samples_mv.size(); ++i) {
    out.samples_mv[i] = i >= lag ? w.samples_mv[i] - w.samples_mv[i - lag] : w.samples_mv[i];
  }
  out.warmup_samples = std::min(out.samples_mv.size(), std::max(w.warmup_samples, lag));
  return out;
}

std::vector<DetectionEvent> discriminate(const Waveform& w, double threshold_mv, const GateConfig& gate) {
  if (!(threshold_mv > 0.0)) throw DomainError("threshold must be positive");
  const auto period = static_cast<double>(gate.period_ps());
  const std::size_t spp = samples_per(period, w.sample_period_ps);
  const double dt = w.sample_period_ps;
  std::vector<DetectionEvent> events;
  const std::size_t n_gates = w.samples_mv.size() / spp;
  for (std::size_t g = 0; g < n_gates; ++g) {
    const std::size_t first = g * spp;
    for (std::size_t j = 0; j < spp && static_cast<double>(j) * dt < gate.t_gate_ps; ++j) {
      const std::size_t i = first + j;
      if (i < w.warmup_samples) continue;
      const bool above = w.samples_mv[i] >= threshold_mv;
      const bool was_below = i == 0 || w.samples_mv[i - 1] < threshold_mv;
      if (above && was_below) {
        DetectionEvent ev;
        ev.gate_index = static_cast<std::int64_t>(g);
        ev.t_in_gate_ps = static_cast<std::uint32_t>(std::llround(static_cast<double>(j) * dt));
        ev.cause = Cause::unlabeled;
        events.push_back(ev);
        break;
      }
    }
  }
  return events;
}

double detection_probability(const GateConfig& gate, const WaveformConfig& cfg, double charge_c,
                             double t_in_gate_ps, double threshold_mv, int n_avalanches) {
  if (n_avalanches < 1) throw DomainError("need at least one avalanche");
  // Avalanches sit in every third gate after one warm-up gate, so each
  // pulse and its inverted replica are isolated.
  std::vector<Avalanche> avs;
  for (int k = 0; k < n_avalanches; ++k) avs.push_back({1 + 3 * static_cast<std::int64_t>(k), t_in_gate_ps, charge_c});
  const std::int64_t n_gates = 3 * static_cast<std::int64_t>(n_avalanches) + 1;
  const auto sd = self_difference(synthesize(gate, n_gates, avs, cfg), static_cast<double>(gate.period_ps()));
  int hits = 0;
  for (const auto& ev : discriminate(sd, threshold_mv, gate)) {
    if ((ev.gate_index - 1) % 3 == 0) ++hits;
  }
  return static_cast<double>(hits) / n_avalanches;
}

void write_waveform(std::ostream& out, const Waveform& w) {
  out << "# sdapd-waveform sample_period_ps=" << format_double(w.sample_period_ps)
      << " warmup_samples=" << w.warmup_samples << '\n';
  out << "# t_ps,mv\n";
  for (std::size_t i = 0; i < w.samples_mv.size(); ++i) {
    out << format_double(w.time_ps(i)) << ',' << format_double(w.samples_mv[i]) << '\n';
  }
}

Waveform read_waveform(std::istream& in) {
  Waveform w;
  std::vector<double> times;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto pos = line.find("warmup_samples=");
      if (pos != std::string::npos) w.warmup_samples = std::stoul(line.substr(pos + 15));
      continue;
    }
    auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("line " + std::to_string(line_no) + ": expected t_ps,mv");
    double t = 0.0;
    double v = 0.0;
    auto r1 = std::from_chars(line.data(), line.data() + comma, t);
    auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), v);
    if (r1.ec != std::errc() || r2.ec != std::errc() || r2.ptr != line.data() + line.size()) {
      throw IoError("line " + std::to_string(line_no) + ": malformed number");
    }
    times.push_back(t);
    w.samples_mv.push_back(v);
  }
  if (times.size() < 2) throw IoError("waveform needs at least two samples");
  w.sample_period_ps = times[1] - times[0];
  if (!(w.sample_period_ps > 0.0)) throw IoError("waveform times must increase");
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double expected = times[0] + static_cast<double>(i) * w.sample_period_ps;
    if (std::abs(times[i] - expected) > 1e-6 * w.sample_period_ps) {
      throw IoError("waveform samples are not uniformly spaced");
    }
  }
  return w;
}

}  // namespace sdapd
