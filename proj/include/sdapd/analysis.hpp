#pragma once

// Measurement mathematics for gated time-tag streams: phase histograms,
// software dead time, and the detection-efficiency, dark-count,
// afterpulse and jitter estimators.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sdapd/engine.hpp"

namespace sdapd {

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;  // 1 sigma
};

// Gate and laser timing shared by an illuminated and a dark run.
struct GateTiming {
  long long period_ps = 1000;
  long long gates_per_laser_period = 50;
  double f_gate_hz = 1e9;
  double f_laser_hz = 20e6;

  static GateTiming from(const GateConfig& gate, const OpticalConfig& optical);
};

struct RunStream {
  std::span<const DetectionEvent> events;
  std::int64_t n_gates = 0;
};

struct EstimatorOptions {
  double dead_time_ns = 0.0;
  // Gates blanked by the self-differencing subtraction or by the software
  // dead time cannot hold counts; by default they are left out of every
  // gate total. Setting this false counts all gates.
  bool exclude_dead_gates = true;
};

struct GateHistogram {
  std::uint32_t bin_width_ps = 1000;
  long long gate_period_ps = 1000;
  long long gates_per_laser_period = 1;
  std::vector<std::int64_t> counts;
  std::int64_t n_laser_periods = 0;

  std::int64_t total() const;
  // Adds another histogram of identical geometry. Associative and commutative.
  void merge(const GateHistogram& other);
};

// counts[k] holds events whose (gate phase, t_in_gate) falls in bin k of one
// laser period. bin_width_ps must divide the gate period. n_gates sets
// n_laser_periods; when 0 it is inferred from the last event.
GateHistogram build_histogram(std::span<const DetectionEvent> events, double f_gate_hz,
                              double f_laser_hz, std::uint32_t bin_width_ps,
                              std::int64_t n_gates = 0);

// Non-paralysable software dead time: keep an event iff its absolute time is
// at least tau after the last kept event. Times are whole picoseconds.
std::vector<DetectionEvent> apply_dead_time(std::span<const DetectionEvent> events,
                                            long long gate_period_ps, double tau_dead_ns);

// Per-gate counts and live-gate totals of one stream, split by laser phase.
struct GateCounts {
  std::int64_t illuminated_counts = 0;
  std::int64_t other_counts = 0;
  std::int64_t illuminated_gates = 0;
  std::int64_t other_gates = 0;
  std::int64_t illuminated_live = 0;
  std::int64_t other_live = 0;
};

// A gate is dead when it follows an event directly (self-differencing) or
// starts before the event time plus dead_time_ps.
GateCounts count_gates(std::span<const DetectionEvent> events, std::int64_t n_gates,
                       long long gates_per_laser_period, long long gate_period_ps,
                       long long dead_time_ps);

// Efficiency from the illuminated and dark count rates.
double spde(double r_cps, double r_dark_cps, double mu, double f_laser_hz, double f_gate_hz);

// Detection rate predicted for a laser at f_laser_hz: f_l [1 - e^{-mu eta} (1 - p_d)].
double expected_rate(double mu, double eta, double p_d, double f_laser_hz);

// Events per live gate of a dark run, with binomial uncertainty.
Estimate dark_count_prob(std::span<const DetectionEvent> dark, std::int64_t n_gates,
                         long long gate_period_ps, double dead_time_ns = 0.0,
                         bool exclude_dead_gates = true);

Estimate spde_estimate(const RunStream& illuminated, const RunStream& dark, const GateTiming& timing,
                       double mu, const EstimatorOptions& options = {});

// Dark-subtracted counts outside the illuminated gates per dark-subtracted
// count inside them.
Estimate afterpulse_prob(const RunStream& illuminated, const RunStream& dark, const GateTiming& timing,
                         const EstimatorOptions& options = {});

// Population RMS of t_in_gate about its mean.
double jitter_rms(std::span<const DetectionEvent> events);

// Events in the illuminated laser phase only.
std::vector<DetectionEvent> illuminated_events(std::span<const DetectionEvent> events,
                                               long long gates_per_laser_period);

struct CharacterizationResult {
  Estimate spde;
  Estimate p_d;
  Estimate p_a;
  Estimate jitter_rms_ps;
  Estimate r_illum_cps;
  Estimate r_dark_cps;
};

CharacterizationResult characterize_streams(const RunStream& illuminated, const RunStream& dark,
                                            const GateTiming& timing, double mu,
                                            const EstimatorOptions& options = {});

// Six significant digits, "nan" for undefined values.
std::string format_sig6(double value);

std::string characterization_csv_header();
std::string characterization_csv_row(const CharacterizationResult& r);
void write_histogram_csv(std::ostream& out, const GateHistogram& h);

}  // namespace sdapd
