#include "sdapd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include <boost/math/distributions/normal.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/geometric_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "sdapd/errors.hpp"
#include "sdapd/random.hpp"

namespace sdapd {

const char* to_string(Cause cause) {
  switch (cause) {
    case Cause::photon: return "photon";
    case Cause::dark: return "dark";
    case Cause::afterpulse: return "afterpulse";
    case Cause::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

Cause cause_from_string(std::string_view text) {
  if (text == "photon") return Cause::photon;
  if (text == "dark") return Cause::dark;
  if (text == "afterpulse") return Cause::afterpulse;
  if (text == "unlabeled") return Cause::unlabeled;
  throw DomainError("unknown cause '" + std::string(text) + "'");
}

void RunConfig::validate() const {
  device.validate();
  gate.validate();
  if (n_gates < 1) throw ConfigError("n_gates must be at least 1");
  if (tag_resolution_ps < 1) throw ConfigError("tag_resolution_ps must be at least 1");
  if (!(temperature_c > -273.15)) throw ConfigError("temperature must be above absolute zero");
  if (illumination) {
    optical.validate_against(gate);
  } else {
    optical.validate();
  }
}

namespace {

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Trap {
  double release_ps;
  bool photon_chain;
};

struct LaterRelease {
  bool operator()(const Trap& a, const Trap& b) const { return a.release_ps > b.release_ps; }
};

struct Trigger {
  double t_ps = kInf;
  Cause cause = Cause::unlabeled;
  bool photon_chain = false;

  void offer(double t, Cause c, bool chain) {
    if (t < t_ps) {
      t_ps = t;
      cause = c;
      photon_chain = chain;
    }
  }
  bool fired() const { return t_ps < kInf; }
};

class Simulator {
 public:
  Simulator(const RunConfig& cfg, const EventSink& sink)
      : cfg_(cfg), sink_(sink), rng_(cfg.seed) {
    const auto& dev = cfg.device;
    period_ps_ = cfg.gate.period_ps();
    t_gate_ps_ = cfg.gate.t_gate_ps;
    v_ex_ = cfg.excess_v();
    p_avl_ = avalanche_probability(dev, v_ex_, cfg.temperature_c);
    illuminated_ = cfg.illumination && cfg.optical.mu > 0.0;
    gates_per_period_ = cfg.illumination ? cfg.gates_per_laser_period() : 1;

    photon_mean_ = cfg.optical.mu * dev.eqe_max;
    photon_click_prob_ = -std::expm1(-photon_mean_ * p_avl_);

    dark_carriers_per_gate_ = dark_rate(dev, cfg.temperature_c, cfg.gate) * t_gate_ps_ * 1e-12;
    dark_trigger_mean_ = dark_carriers_per_gate_ * p_avl_;
    dark_gate_prob_ = -std::expm1(-dark_trigger_mean_);

    if (v_ex_ > 0.0) {
      charge_per_ps_ = dev.charge_coeff_c_per_v_s * v_ex_ * 1e-12;
      sigma_ps_ = jitter_sigma_ps(dev, v_ex_);
    }
    tau_ps_ = detrap_tau_ns(dev, cfg.temperature_c) * 1e3;
  }

  RunSummary run() {
    summary_.gates_simulated = cfg_.n_gates;
    summary_.simulated_time_s = static_cast<double>(cfg_.n_gates) / cfg_.gate.f_gate_hz;
    if (cfg_.illumination) {
      summary_.illuminated_gates = (cfg_.n_gates - 1) / gates_per_period_ + 1;
    }
    if (cfg_.path == SamplingPath::fast) {
      run_fast();
    } else {
      run_naive();
    }
    return summary_;
  }

 private:
  void run_fast() {
    const std::int64_t n = cfg_.n_gates;
    std::int64_t cur = 0;
    std::int64_t next_dark = next_dark_from(0);
    while (true) {
      const std::int64_t trap_gate = next_trap_gate(cur);
      const std::int64_t illum_gate = next_illuminated(cur);
      const std::int64_t g = std::min({next_dark, trap_gate, illum_gate});
      if (g >= n) break;

      Trigger best;
      if (g == next_dark) best.offer(dark_trigger_time(), Cause::dark, false);
      if (g == illum_gate && rng_.uniform01() < photon_click_prob_) {
        best.offer(cfg_.optical.gate_offset_ps, Cause::photon, false);
      }
      collect_traps(g, best);

      cur = finish_gate(g, best);
      if (next_dark < cur) next_dark = next_dark_from(cur);
    }
  }

  void run_naive() {
    const std::int64_t n = cfg_.n_gates;
    std::int64_t cur = 0;
    for (std::int64_t g = 0; g < n; ++g) {
      if (g < cur) continue;
      Trigger best;
      for (int k = poisson(dark_carriers_per_gate_); k > 0; --k) {
        const double t = rng_.uniform01() * t_gate_ps_;
        if (rng_.uniform01() < p_avl_) best.offer(t, Cause::dark, false);
      }
      if (illuminated_ && g % gates_per_period_ == 0) {
        for (int k = poisson(photon_mean_); k > 0; --k) {
          if (rng_.uniform01() < p_avl_) best.offer(cfg_.optical.gate_offset_ps, Cause::photon, false);
        }
      }
      (void)next_trap_gate(g);
      collect_traps(g, best);
      cur = finish_gate(g, best);
    }
  }

  // Emits the event for a fired gate and returns the first gate that can
  // fire next.
  std::int64_t finish_gate(std::int64_t g, const Trigger& best) {
    if (!best.fired()) return g + 1;
    fire(g, best);
    if (g + 1 < cfg_.n_gates) ++summary_.suppressed_gates;
    return g + 2;
  }

  void fire(std::int64_t gate, const Trigger& trig) {
    const double charge = charge_per_ps_ * (t_gate_ps_ - trig.t_ps);
    DetectionEvent ev;
    ev.gate_index = gate;
    ev.cause = trig.cause;
    ev.t_in_gate_ps = quantize(jittered(trig.t_ps));

    ++summary_.counts[static_cast<std::size_t>(trig.cause)];
    if (trig.cause == Cause::afterpulse && trig.photon_chain) ++summary_.photon_chain_afterpulses;
    summary_.total_charge_c += charge;

    const double mean_traps = cfg_.device.trap_fill_coeff_per_coulomb * charge;
    const bool chain = trig.cause == Cause::photon || (trig.cause == Cause::afterpulse && trig.photon_chain);
    const double t_abs = static_cast<double>(gate) * static_cast<double>(period_ps_) + trig.t_ps;
    if (mean_traps > 0.0) {
      boost::random::exponential_distribution<double> delay(1.0 / tau_ps_);
      for (int k = poisson(mean_traps); k > 0; --k) {
        traps_.push(Trap{t_abs + delay(rng_), chain});
        ++summary_.traps_filled;
      }
    }
    if (sink_) sink_(ev, charge);
  }

  // Drops releases that land before `from` or between gates, then reports the
  // gate of the earliest usable release.
  std::int64_t next_trap_gate(std::int64_t from) {
    while (!traps_.empty()) {
      const double release = traps_.top().release_ps;
      const auto gate = static_cast<std::int64_t>(std::floor(release / static_cast<double>(period_ps_)));
      const double offset = release - static_cast<double>(gate) * static_cast<double>(period_ps_);
      if (gate < from || offset >= t_gate_ps_) {
        traps_.pop();
        continue;
      }
      return gate;
    }
    return kNever;
  }

  void collect_traps(std::int64_t g, Trigger& best) {
    while (next_trap_gate(g) == g) {
      const Trap trap = traps_.top();
      traps_.pop();
      const double offset = trap.release_ps - static_cast<double>(g) * static_cast<double>(period_ps_);
      if (rng_.uniform01() < p_avl_) best.offer(offset, Cause::afterpulse, trap.photon_chain);
    }
  }

  std::int64_t next_illuminated(std::int64_t from) const {
    if (!illuminated_) return kNever;
    return (from + gates_per_period_ - 1) / gates_per_period_ * gates_per_period_;
  }

  std::int64_t next_dark_from(std::int64_t from) {
    if (!(dark_gate_prob_ > 0.0)) return kNever;
    if (dark_gate_prob_ >= 1.0) return from;
    boost::random::geometric_distribution<std::int64_t, double> skip(dark_gate_prob_);
    const std::int64_t k = skip(rng_);
    return k > kNever - from ? kNever : from + k;
  }

  // Earliest of the triggering dark carriers, given that at least one triggers.
  double dark_trigger_time() {
    const double u = rng_.uniform01();
    return -t_gate_ps_ / dark_trigger_mean_ * std::log1p(u * std::expm1(-dark_trigger_mean_));
  }

  int poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    boost::random::poisson_distribution<int, double> dist(mean);
    return dist(rng_);
  }

  // Build-up jitter: normal about the trigger time, truncated to the gate.
  double jittered(double t) {
    if (sigma_ps_ == 0.0) return t;
    const double upper = std::nextafter(t_gate_ps_, 0.0);
    double x = t;
    if (std::isfinite(sigma_ps_)) {
      const boost::math::normal_distribution<double> unit;
      const double lo = boost::math::cdf(unit, -t / sigma_ps_);
      const double hi = boost::math::cdf(unit, (t_gate_ps_ - t) / sigma_ps_);
      const double u = lo + rng_.uniform01() * (hi - lo);
      if (u > 0.0 && u < 1.0) x = t + sigma_ps_ * boost::math::quantile(unit, u);
    } else {
      x = rng_.uniform01() * t_gate_ps_;
    }
    return std::clamp(x, 0.0, upper);
  }

  std::uint32_t quantize(double t) const {
    const double res = cfg_.tag_resolution_ps;
    return static_cast<std::uint32_t>(std::floor(t / res) * res);
  }

  const RunConfig& cfg_;
  const EventSink& sink_;
  Xoshiro256pp rng_;
  RunSummary summary_;
  std::priority_queue<Trap, std::vector<Trap>, LaterRelease> traps_;

  std::int64_t period_ps_ = 0;
  double t_gate_ps_ = 0.0;
  double v_ex_ = 0.0;
  double p_avl_ = 0.0;
  bool illuminated_ = false;
  std::int64_t gates_per_period_ = 1;
  double photon_mean_ = 0.0;
  double photon_click_prob_ = 0.0;
  double dark_carriers_per_gate_ = 0.0;
  double dark_trigger_mean_ = 0.0;
  double dark_gate_prob_ = 0.0;
  double charge_per_ps_ = 0.0;
  double sigma_ps_ = 0.0;
  double tau_ps_ = 1.0;
};

}  // namespace

RunSummary simulate(const RunConfig& cfg, const EventSink& sink) {
  cfg.validate();
  Simulator sim(cfg, sink);
  return sim.run();
}

RunResult simulate(const RunConfig& cfg) {
  RunResult result;
  EventSink sink = [&](const DetectionEvent& ev, double charge) {
    result.events.push_back(ev);
    result.charges_c.push_back(charge);
  };
  result.summary = simulate(cfg, sink);
  return result;
}

std::vector<SaturationPoint> saturation_run(const RunConfig& cfg, const std::vector<double>& flux_list) {
  if (flux_list.empty()) throw DomainError("flux list is empty");
  std::vector<SaturationPoint> out;
  out.reserve(flux_list.size());
  for (std::size_t i = 0; i < flux_list.size(); ++i) {
    RunConfig run = cfg;
    run.optical.mu = flux_list[i];
    run.illumination = true;
    run.seed = derive_seed(cfg.seed, i);
    const RunSummary s = simulate(run, EventSink{});
    SaturationPoint p;
    p.mu = flux_list[i];
    p.count_rate_cps = static_cast<double>(s.total_events()) / s.simulated_time_s;
    p.current_a = s.total_charge_c / s.simulated_time_s;
    p.charge_per_count_c = s.total_events() > 0 ? s.total_charge_c / static_cast<double>(s.total_events()) : 0.0;
    out.push_back(p);
  }
  return out;
}

}  // namespace sdapd
