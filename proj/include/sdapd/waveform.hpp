#pragma once

// Sampled APD output under periodic gating and the self-differencing (SD)
// subtraction that cancels the capacitive gate transient.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sdapd/device_model.hpp"
#include "sdapd/engine.hpp"

namespace sdapd {

enum class GateShape { raised_cosine, trapezoid };

GateShape gate_shape_from_string(std::string_view text);

struct WaveformConfig {
  GateShape shape = GateShape::raised_cosine;
  double trapezoid_edge_ps = 60.0;
  double sample_period_ps = 5.0;
  // Capacitive output per unit slew of the gate voltage, mV per (V/ps).
  double capacitive_mv_per_v_per_ps = 2000.0;
  // Avalanche current pulse: difference of exponentials with this area per
  // coulomb of avalanche charge.
  double avalanche_rise_ps = 50.0;
  double avalanche_fall_ps = 150.0;
  double area_mv_ps_per_coulomb = 1e17;
  double noise_rms_mv = 0.0;
  std::uint64_t noise_seed = 1;
};

struct Waveform {
  double sample_period_ps = 5.0;
  std::vector<double> samples_mv;
  // Leading samples without a valid SD reference.
  std::size_t warmup_samples = 0;

  double time_ps(std::size_t i) const { return static_cast<double>(i) * sample_period_ps; }
};

struct Avalanche {
  std::int64_t gate_index = 0;
  double t_in_gate_ps = 0.0;
  double charge_c = 0.0;
};

// Output of n_gates gate periods: capacitive response C dV/dt of the chosen
// gate shape, plus one pulse per avalanche, plus white noise.
Waveform synthesize(const GateConfig& gate, std::int64_t n_gates, std::span<const Avalanche> avalanches,
                    const WaveformConfig& cfg = {});

// out(t) = w(t) - w(t - period). The first period is w(t) minus zero and is
// marked as warm-up.
Waveform self_difference(const Waveform& w, double period_ps);

// One event per gate at the first positive-going threshold crossing inside
// the gate window. Warm-up samples are ignored. Events are unlabeled.
std::vector<DetectionEvent> discriminate(const Waveform& w, double threshold_mv, const GateConfig& gate);

// Peak of the avalanche pulse for a given charge.
double avalanche_peak_mv(double charge_c, const WaveformConfig& cfg);

// Fraction of isolated avalanches of the given charge that survive
// synthesize -> self_difference -> discriminate.
double detection_probability(const GateConfig& gate, const WaveformConfig& cfg, double charge_c,
                             double t_in_gate_ps, double threshold_mv, int n_avalanches);

// Two-column "t_ps,mv" text with a "# sdapd-waveform" header line.
void write_waveform(std::ostream& out, const Waveform& w);
Waveform read_waveform(std::istream& in);

}  // namespace sdapd
