#include "sdapd/device_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sdapd/config.hpp"
#include "sdapd/errors.hpp"

namespace sdapd {
namespace {

// CODATA 2018 exact SI values.
constexpr double kPlanck = 6.62607015e-34;
constexpr double kSpeedOfLight = 299792458.0;
constexpr double kElementaryCharge = 1.602176634e-19;
constexpr double kZeroCelsiusK = 273.15;

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

// h c / (e lambda) in W/A, i.e. the inverse responsivity of a unity-QE detector.
double unity_qe_inverse_responsivity(double wavelength_nm) {
  return kPlanck * kSpeedOfLight / (kElementaryCharge * wavelength_nm * 1e-9);
}

}  // namespace

void DeviceParams::validate() const {
  require(eqe_max > 0.0 && eqe_max <= 1.0, "eqe_max must lie in (0, 1]");
  require(v_punch_v < v_br_ref_v, "v_punch_v must be below v_br_ref_v");
  require(p_avl_scale_v > 0.0, "p_avl_scale_v must be positive");
  require(p_avl_ceiling_ref >= 0.0 && p_avl_ceiling_ref <= 1.0, "p_avl_ceiling_ref must lie in [0, 1]");
  require(dark_rate_ref_hz >= 0.0, "dark_rate_ref_hz must be nonnegative");
  require(dark_doubling_interval_c > 0.0, "dark_doubling_interval_c must be positive");
  require(dark_floor_coeff_hz_per_v >= 0.0, "dark_floor_coeff_hz_per_v must be nonnegative");
  require(trap_fill_coeff_per_coulomb >= 0.0, "trap_fill_coeff_per_coulomb must be nonnegative");
  require(charge_coeff_c_per_v_s >= 0.0, "charge_coeff_c_per_v_s must be nonnegative");
  require(detrap_tau_ref_ns > 0.0, "detrap_tau_ref_ns must be positive");
  require(jitter_coeff_ps_v >= 0.0, "jitter_coeff_ps_v must be nonnegative");
  require(t_ref_c > -kZeroCelsiusK, "t_ref_c must be above absolute zero");
}

void GateConfig::validate() const {
  require(f_gate_hz > 0.0, "f_gate_hz must be positive");
  require(v_pp_v > 0.0, "v_pp_v must be positive");
  require(t_gate_ps > 0.0, "t_gate_ps must be positive");
  require(t_gate_ps < 1e12 / f_gate_hz, "t_gate_ps must be shorter than the gate period");
  (void)period_ps();
}

long long GateConfig::period_ps() const {
  const double p = 1e12 / f_gate_hz;
  const double r = std::round(p);
  if (r < 1.0 || std::abs(p - r) > 1e-6 * std::max(1.0, p)) {
    throw ConfigError("gate period 1/f_gate_hz must be a whole number of picoseconds");
  }
  return static_cast<long long>(r);
}

void OpticalConfig::validate() const {
  require(f_laser_hz > 0.0, "f_laser_hz must be positive");
  require(mu >= 0.0, "mu must be nonnegative");
  require(wavelength_nm > 0.0, "wavelength_nm must be positive");
  require(pulse_width_ps >= 0.0, "pulse_width_ps must be nonnegative");
  require(gate_offset_ps >= 0.0, "gate_offset_ps must be nonnegative");
}

long long OpticalConfig::gates_per_period(const GateConfig& gate) const {
  const double ratio = gate.f_gate_hz / f_laser_hz;
  const double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9 * ratio) {
    throw ConfigError("f_gate_hz must be an integer multiple of f_laser_hz");
  }
  return static_cast<long long>(r);
}

void OpticalConfig::validate_against(const GateConfig& gate) const {
  validate();
  (void)gates_per_period(gate);
  require(gate_offset_ps < gate.t_gate_ps, "gate_offset_ps must fall inside the gate");
}

double breakdown_voltage(const DeviceParams& dev, double temperature_c) {
  return dev.v_br_ref_v + dev.dv_br_dt_v_per_c * (temperature_c - dev.t_ref_c);
}

std::optional<std::string> temperature_warning(double temperature_c) {
  if (temperature_c >= kValidityMinC && temperature_c <= kValidityMaxC) return std::nullopt;
  std::ostringstream os;
  os << "temperature " << temperature_c << " C is outside the characterised range ["
     << kValidityMinC << ", " << kValidityMaxC << "] C; laws are extrapolated";
  return os.str();
}

double excess_voltage(const DeviceParams& dev, const GateConfig& gate, double temperature_c) {
  return gate.v_dc_v + 0.5 * gate.v_pp_v - breakdown_voltage(dev, temperature_c);
}

double dc_bias_for_excess(const DeviceParams& dev, double v_pp_v, double excess_v,
                          double temperature_c) {
  return breakdown_voltage(dev, temperature_c) + excess_v - 0.5 * v_pp_v;
}

double eqe_from_photocurrent(double photocurrent_a, double optical_power_w, double wavelength_nm) {
  if (!(optical_power_w > 0.0)) throw DomainError("optical power must be positive");
  if (!(wavelength_nm > 0.0)) throw DomainError("wavelength must be positive");
  return photocurrent_a / optical_power_w * unity_qe_inverse_responsivity(wavelength_nm);
}

double photocurrent_for_eqe(double eqe, double optical_power_w, double wavelength_nm) {
  if (!(optical_power_w > 0.0)) throw DomainError("optical power must be positive");
  if (!(wavelength_nm > 0.0)) throw DomainError("wavelength must be positive");
  return eqe * optical_power_w / unity_qe_inverse_responsivity(wavelength_nm);
}

double avalanche_probability_ceiling(const DeviceParams& dev, double temperature_c) {
  const double c = dev.p_avl_ceiling_ref + dev.p_avl_ceiling_slope_per_c * (temperature_c - dev.t_ref_c);
  return std::clamp(c, 0.0, 1.0);
}

double avalanche_probability(const DeviceParams& dev, double excess_v, double temperature_c) {
  if (excess_v <= 0.0) return 0.0;
  return avalanche_probability_ceiling(dev, temperature_c) * -std::expm1(-excess_v / dev.p_avl_scale_v);
}

std::optional<double> excess_for_spde(const DeviceParams& dev, double spde, double temperature_c) {
  if (spde <= 0.0) return 0.0;
  const double ceiling = dev.eqe_max * avalanche_probability_ceiling(dev, temperature_c);
  if (spde >= ceiling) return std::nullopt;
  return -dev.p_avl_scale_v * std::log1p(-spde / ceiling);
}

double spde_model(const DeviceParams& dev, double excess_v, double temperature_c) {
  return dev.eqe_max * avalanche_probability(dev, excess_v, temperature_c);
}

double dark_rate(const DeviceParams& dev, double temperature_c, const GateConfig& gate) {
  const double thermal =
      dev.dark_rate_ref_hz *
      std::exp2((temperature_c - kDarkReferenceTemperatureC) / dev.dark_doubling_interval_c);
  if (temperature_c >= kDarkReferenceTemperatureC) return thermal;
  return std::max(thermal, dev.dark_floor_coeff_hz_per_v * gate.v_pp_v);
}

double detrap_tau_ns(const DeviceParams& dev, double temperature_c) {
  const double t_k = temperature_c + kZeroCelsiusK;
  const double ref_k = dev.t_ref_c + kZeroCelsiusK;
  return dev.detrap_tau_ref_ns * std::exp(dev.detrap_activation_k * (1.0 / t_k - 1.0 / ref_k));
}

double jitter_sigma_ps(const DeviceParams& dev, double excess_v) {
  if (dev.jitter_coeff_ps_v == 0.0) return 0.0;
  if (excess_v <= 0.0) return std::numeric_limits<double>::infinity();
  return dev.jitter_coeff_ps_v / excess_v;
}

namespace {

template <typename T>
struct Field {
  const char* key;
  double T::*member;
  const char* comment;
};

constexpr Field<DeviceParams> kDeviceFields[] = {
    {"v_br_ref_v", &DeviceParams::v_br_ref_v, "breakdown voltage at t_ref_c [V]"},
    {"t_ref_c", &DeviceParams::t_ref_c, "reference temperature [C]"},
    {"dv_br_dt_v_per_c", &DeviceParams::dv_br_dt_v_per_c, "breakdown slope [V/C]"},
    {"eqe_max", &DeviceParams::eqe_max, "absorption x transit at unity gain"},
    {"v_punch_v", &DeviceParams::v_punch_v, "punch-through voltage [V]"},
    {"p_avl_scale_v", &DeviceParams::p_avl_scale_v, "trigger-curve e-folding voltage [V]"},
    {"p_avl_ceiling_ref", &DeviceParams::p_avl_ceiling_ref, "trigger ceiling at t_ref_c"},
    {"p_avl_ceiling_slope_per_c", &DeviceParams::p_avl_ceiling_slope_per_c, "trigger ceiling slope [1/C]"},
    {"dark_rate_ref_hz", &DeviceParams::dark_rate_ref_hz, "thermal dark rate at -30 C [1/s]"},
    {"dark_doubling_interval_c", &DeviceParams::dark_doubling_interval_c, "dark doubling interval [C]"},
    {"dark_floor_coeff_hz_per_v", &DeviceParams::dark_floor_coeff_hz_per_v, "amplitude floor below -30 C [1/(s V)]"},
    {"trap_fill_coeff_per_coulomb", &DeviceParams::trap_fill_coeff_per_coulomb, "traps per coulomb"},
    {"charge_coeff_c_per_v_s", &DeviceParams::charge_coeff_c_per_v_s, "avalanche charge per excess volt per second [C/(V s)]"},
    {"detrap_tau_ref_ns", &DeviceParams::detrap_tau_ref_ns, "de-trapping time at t_ref_c [ns]"},
    {"detrap_activation_k", &DeviceParams::detrap_activation_k, "Arrhenius activation [K]"},
    {"jitter_coeff_ps_v", &DeviceParams::jitter_coeff_ps_v, "build-up jitter scale [ps V]"},
};

constexpr Field<GateConfig> kGateFields[] = {
    {"f_gate_hz", &GateConfig::f_gate_hz, "gating frequency [Hz]"},
    {"t_gate_ps", &GateConfig::t_gate_ps, "active gate width [ps]"},
    {"v_pp_v", &GateConfig::v_pp_v, "peak-to-peak gate amplitude [V]"},
    {"v_dc_v", &GateConfig::v_dc_v, "DC bias [V]"},
};

constexpr Field<OpticalConfig> kOpticalFields[] = {
    {"f_laser_hz", &OpticalConfig::f_laser_hz, "laser repetition rate [Hz]"},
    {"mu", &OpticalConfig::mu, "mean photons per pulse"},
    {"wavelength_nm", &OpticalConfig::wavelength_nm, "wavelength [nm]"},
    {"pulse_width_ps", &OpticalConfig::pulse_width_ps, "pulse duration [ps]"},
    {"gate_offset_ps", &OpticalConfig::gate_offset_ps, "pulse arrival inside the illuminated gate [ps]"},
};

template <typename T, std::size_t N>
std::string write_fields(const T& value, const Field<T> (&fields)[N]) {
  std::string out;
  for (const auto& f : fields) {
    out += f.key;
    out += " = ";
    out += format_double(value.*(f.member));
    out += "  # ";
    out += f.comment;
    out += '\n';
  }
  return out;
}

template <typename T, std::size_t N>
T read_fields(const KeyValueSection& section, T value, const Field<T> (&fields)[N]) {
  for (const auto& f : fields) {
    if (auto v = section.get_double(f.key)) value.*(f.member) = *v;
  }
  return value;
}

}  // namespace

std::string to_text(const DeviceParams& dev) { return write_fields(dev, kDeviceFields); }
std::string to_text(const GateConfig& gate) { return write_fields(gate, kGateFields); }
std::string to_text(const OpticalConfig& optical) { return write_fields(optical, kOpticalFields); }

DeviceParams device_params_from_section(const KeyValueSection& section, const DeviceParams& defaults) {
  return read_fields(section, defaults, kDeviceFields);
}

GateConfig gate_config_from_section(const KeyValueSection& section, const GateConfig& defaults) {
  return read_fields(section, defaults, kGateFields);
}

OpticalConfig optical_config_from_section(const KeyValueSection& section,
                                          const OpticalConfig& defaults) {
  return read_fields(section, defaults, kOpticalFields);
}

DeviceParams device_params_from_text(std::string_view text) {
  auto doc = KeyValueDocument::parse(text);
  const KeyValueSection* s = doc.section("device");
  if (!s) s = doc.section("");
  DeviceParams dev = device_params_from_section(*s);
  doc.reject_unused();
  dev.validate();
  return dev;
}

}  // namespace sdapd
