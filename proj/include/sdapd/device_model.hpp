#pragma once

// Physical model of an InGaAs/InP APD under periodic Geiger-mode gating.
//
// Every law here is a closed-form function of the device parameters, the
// gate settings and the temperature. Temperatures are in degrees Celsius,
// voltages in volts, rates in events per second unless a name says otherwise.

#include <optional>
#include <string>
#include <string_view>

namespace sdapd {

class KeyValueSection;

// Temperature at which dark_rate_ref is quoted; above it the thermal rate
// doubles every dark_doubling_interval_c.
inline constexpr double kDarkReferenceTemperatureC = -30.0;

// Range over which the breakdown law was characterised.
inline constexpr double kValidityMinC = -50.0;
inline constexpr double kValidityMaxC = 20.0;

struct DeviceParams {
  // Breakdown voltage is affine in temperature, pinned by two endpoints:
  // 60.1 V at -50 C and 67.2 V at 20 C.
  double v_br_ref_v = 67.2;
  double t_ref_c = 20.0;
  double dv_br_dt_v_per_c = 7.1 / 70.0;

  double eqe_max = 0.69;
  double v_punch_v = 36.0;

  // P_avl = ceiling(T) * (1 - exp(-V_EX / p_avl_scale)), ceiling affine in T.
  double p_avl_scale_v = 2.0;
  double p_avl_ceiling_ref = 0.8;
  double p_avl_ceiling_slope_per_c = 0.004;

  double dark_rate_ref_hz = 1.0e4;
  double dark_doubling_interval_c = 10.0;
  double dark_floor_coeff_hz_per_v = 500.0;

  // Traps filled per coulomb of avalanche charge, and the charge law
  // Q = charge_coeff * V_EX * (remaining gate time).
  double trap_fill_coeff_per_coulomb = 1.0e13;
  double charge_coeff_c_per_v_s = 3.0e-5;

  // Single-species de-trapping time, Arrhenius in absolute temperature.
  double detrap_tau_ref_ns = 15.0;
  double detrap_activation_k = 1504.0;

  // Avalanche build-up jitter: sigma_t = jitter_coeff / V_EX.
  double jitter_coeff_ps_v = 400.0;

  // Throws ConfigError listing the first violated invariant.
  void validate() const;

  bool operator==(const DeviceParams&) const = default;
};

struct GateConfig {
  double f_gate_hz = 1.0e9;
  double t_gate_ps = 360.0;
  double v_pp_v = 18.0;
  double v_dc_v = 67.7;

  void validate() const;

  // Gate period in whole picoseconds; throws ConfigError if 1/f_gate is not
  // an integer number of picoseconds.
  long long period_ps() const;

  bool operator==(const GateConfig&) const = default;
};

struct OpticalConfig {
  double f_laser_hz = 20.0e6;
  double mu = 0.1;
  double wavelength_nm = 1550.0;
  double pulse_width_ps = 3.0;
  double gate_offset_ps = 180.0;

  void validate() const;
  // Checks the pairing with a gate: integer gates per laser period, pulse
  // arrival inside the gate.
  void validate_against(const GateConfig& gate) const;
  long long gates_per_period(const GateConfig& gate) const;

  bool operator==(const OpticalConfig&) const = default;
};

double breakdown_voltage(const DeviceParams& dev, double temperature_c);

// Warning text when temperature_c lies outside [-50, 20] C; the laws are
// still evaluated (extrapolated) there.
std::optional<std::string> temperature_warning(double temperature_c);

// Gate-peak bias above breakdown: v_dc + v_pp/2 - V_br(T). Negative when the
// gate never arms the device.
double excess_voltage(const DeviceParams& dev, const GateConfig& gate, double temperature_c);

// DC bias that places the gate peak excess_v above breakdown.
double dc_bias_for_excess(const DeviceParams& dev, double v_pp_v, double excess_v,
                          double temperature_c);

// External quantum efficiency from a unity-gain photocurrent measurement,
// (I_ph / P_opt) * h c / (e lambda). Not clamped to 1.
double eqe_from_photocurrent(double photocurrent_a, double optical_power_w, double wavelength_nm);
// Inverse of the above at fixed power and wavelength.
double photocurrent_for_eqe(double eqe, double optical_power_w, double wavelength_nm);

double avalanche_probability_ceiling(const DeviceParams& dev, double temperature_c);
double avalanche_probability(const DeviceParams& dev, double excess_v, double temperature_c);

// Excess voltage at which eqe_max * P_avl equals spde. Returns nullopt when
// spde is at or above the temperature's ceiling.
std::optional<double> excess_for_spde(const DeviceParams& dev, double spde, double temperature_c);

// Low-flux single-photon detection efficiency eqe_max * P_avl * P_det, P_det = 1
// at gate level.
double spde_model(const DeviceParams& dev, double excess_v, double temperature_c);

double dark_rate(const DeviceParams& dev, double temperature_c, const GateConfig& gate);

double detrap_tau_ns(const DeviceParams& dev, double temperature_c);

double jitter_sigma_ps(const DeviceParams& dev, double excess_v);

// Line-oriented "key = value" serialisation. Key names are frozen; see
// docs in README.md.
std::string to_text(const DeviceParams& dev);
DeviceParams device_params_from_text(std::string_view text);
DeviceParams device_params_from_section(const KeyValueSection& section,
                                        const DeviceParams& defaults = {});
GateConfig gate_config_from_section(const KeyValueSection& section,
                                    const GateConfig& defaults = {});
OpticalConfig optical_config_from_section(const KeyValueSection& section,
                                          const OpticalConfig& defaults = {});
std::string to_text(const GateConfig& gate);
std::string to_text(const OpticalConfig& optical);

}  // namespace sdapd
