#pragma once

// Least-squares fit of the free device coefficients to a table of measured
// operating points.
//
// Afterpulse anchors are evaluated with a closed-form expectation of the
// engine's trap process (first order in trap-trap interactions, all
// generations of the avalanche cascade), which keeps the fit deterministic
// and fast. The engine remains the judge: acceptance runs re-measure the
// calibrated operating points by simulation.

#include <iosfwd>
#include <string>
#include <vector>

#include "sdapd/device_model.hpp"

namespace sdapd {

enum class AnchorKind {
  eqe,             // sets eqe_max directly
  spde_at_excess,  // efficiency at a given excess voltage
  pa_at_spde,      // afterpulse probability at a given efficiency
  jitter_at_spde,  // RMS jitter [ps] at a given efficiency
  dark_at_spde,    // per-gate dark count probability at a given efficiency
};

const char* to_string(AnchorKind kind);

struct Anchor {
  AnchorKind kind = AnchorKind::spde_at_excess;
  double temperature_c = 20.0;
  double v_pp_v = 18.0;
  double t_gate_ps = 360.0;
  double dead_time_ns = 0.0;
  double spde = 0.0;
  double excess_v = 0.0;
  double target = 0.0;
  // Acceptable |model - target|; for dark anchors in decades.
  double tolerance = 0.01;
  std::string label;
  int line = 0;
};

// CSV with header
// kind,temperature_c,v_pp_v,t_gate_ps,dead_time_ns,spde,excess_v,target,tolerance,label
// Empty numeric fields keep their defaults; '#' starts a comment line.
std::vector<Anchor> read_anchors(std::istream& in);
std::vector<Anchor> load_anchors(const std::string& path);

// Expected afterpulses per photon-triggered avalanche for a pulse arriving at
// gate_offset_ps, counting only avalanches the software dead time lets
// through. Gate n+1 is blanked by self-differencing; releases between gates
// are lost.
double predicted_afterpulse_probability(const DeviceParams& dev, double t_gate_ps, double gate_offset_ps,
                                        long long gate_period_ps, double excess_v, double temperature_c,
                                        double dead_time_ns);

// Per-gate probability of a dark-triggered avalanche.
double predicted_dark_probability(const DeviceParams& dev, const GateConfig& gate, double excess_v,
                                  double temperature_c);

struct AnchorResult {
  Anchor anchor;
  double model = 0.0;
  double residual = 0.0;  // (model - target) / tolerance, dark in log10
  bool within_tolerance = false;
};

struct CalibrationReport {
  DeviceParams device;
  std::vector<AnchorResult> anchors;
  std::vector<std::string> fitted_parameters;
  int optimizer_status = 0;
  int evaluations = 0;

  bool all_within_tolerance(bool include_jitter = true) const;
};

// Evaluates every anchor against dev without fitting.
std::vector<AnchorResult> evaluate_anchors(const DeviceParams& dev, const std::vector<Anchor>& anchors,
                                           double f_gate_hz = 1e9);

// Starts from `initial` and fits the coefficients the anchor table
// constrains: p_avl_scale_v, the ceiling (reference and slope), the trap fill
// coefficient, jitter_coeff_ps_v, dark_rate_ref_hz and
// dark_floor_coeff_hz_per_v. eqe anchors set eqe_max before the fit.
CalibrationReport calibrate(const DeviceParams& initial, const std::vector<Anchor>& anchors,
                            double f_gate_hz = 1e9);

std::string format_report(const CalibrationReport& report);

}  // namespace sdapd
