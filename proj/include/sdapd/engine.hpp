#pragma once

// Gate-granular Monte Carlo of a self-differencing gated APD.
//
// Each gate is a Bernoulli trial for "an avalanche was discriminated". The
// candidate carriers in a gate are photoelectrons (illuminated gates only,
// all at gate_offset), thermally generated dark carriers (uniform in the
// gate) and trapped carriers released inside the open gate. Each candidate
// triggers independently with P_avl; the earliest trigger wins. A triggered
// gate emits one event, fills traps in proportion to the avalanche charge,
// and the following gate is suppressed by the self-differencing subtraction.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sdapd/device_model.hpp"

namespace sdapd {

enum class Cause : std::uint8_t { photon = 0, dark = 1, afterpulse = 2, unlabeled = 3 };

const char* to_string(Cause cause);
Cause cause_from_string(std::string_view text);

struct DetectionEvent {
  std::int64_t gate_index = 0;
  // Picoseconds from the start of the gate, a multiple of the tag resolution.
  std::uint32_t t_in_gate_ps = 0;
  // Ground truth; estimators never read it.
  Cause cause = Cause::unlabeled;

  bool operator==(const DetectionEvent&) const = default;
};

enum class SamplingPath {
  // Skips quiet gates: the next dark-triggered gate is drawn geometrically
  // and only gates with a photon pulse, a dark trigger or a trap release are
  // visited.
  fast,
  // Visits every gate and draws every carrier. Reference for the fast path.
  naive,
};

struct RunConfig {
  DeviceParams device;
  GateConfig gate;
  OpticalConfig optical;
  double temperature_c = 20.0;
  std::int64_t n_gates = 1'000'000;
  std::uint64_t seed = 1;
  bool illumination = true;
  std::uint32_t tag_resolution_ps = 100;
  SamplingPath path = SamplingPath::fast;

  // Throws ConfigError on any invariant violation.
  void validate() const;
  long long gates_per_laser_period() const { return optical.gates_per_period(gate); }
  double excess_v() const { return excess_voltage(device, gate, temperature_c); }
};

struct RunSummary {
  std::int64_t gates_simulated = 0;
  std::int64_t illuminated_gates = 0;
  std::int64_t suppressed_gates = 0;
  // Indexed by Cause (photon, dark, afterpulse).
  std::array<std::int64_t, 3> counts{};
  // Afterpulses whose avalanche chain started with a photon.
  std::int64_t photon_chain_afterpulses = 0;
  std::int64_t traps_filled = 0;
  double total_charge_c = 0.0;
  double simulated_time_s = 0.0;

  std::int64_t total_events() const { return counts[0] + counts[1] + counts[2]; }
  std::int64_t count(Cause c) const { return counts[static_cast<std::size_t>(c)]; }
  bool operator==(const RunSummary&) const = default;
};

// Receives every event in gate order together with its avalanche charge.
using EventSink = std::function<void(const DetectionEvent&, double charge_c)>;

RunSummary simulate(const RunConfig& cfg, const EventSink& sink);

struct RunResult {
  std::vector<DetectionEvent> events;
  std::vector<double> charges_c;
  RunSummary summary;
};

RunResult simulate(const RunConfig& cfg);

struct SaturationPoint {
  double mu = 0.0;
  double count_rate_cps = 0.0;
  double current_a = 0.0;
  double charge_per_count_c = 0.0;
};

// One run per flux value; run i uses seed derive_seed(cfg.seed, i).
std::vector<SaturationPoint> saturation_run(const RunConfig& cfg, const std::vector<double>& flux_list);

}  // namespace sdapd
