#include "sdapd/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "sdapd/analysis.hpp"
#include "sdapd/errors.hpp"

namespace sdapd {
namespace {

// Deepest point of the trigger curve used when a target efficiency lies at or
// above the ceiling; keeps residuals finite while the fit moves the ceiling.
constexpr double kMaxTriggerFraction = 1.0 - 1e-9;

double excess_for_spde_clamped(const DeviceParams& dev, double spde, double temperature_c) {
  if (auto v = excess_for_spde(dev, spde, temperature_c)) return *v;
  return -dev.p_avl_scale_v * std::log1p(-kMaxTriggerFraction);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

AnchorKind anchor_kind_from(std::string_view text, int line) {
  if (text == "eqe") return AnchorKind::eqe;
  if (text == "spde_at_excess") return AnchorKind::spde_at_excess;
  if (text == "pa_at_spde") return AnchorKind::pa_at_spde;
  if (text == "jitter_at_spde") return AnchorKind::jitter_at_spde;
  if (text == "dark_at_spde") return AnchorKind::dark_at_spde;
  throw ConfigError("unknown anchor kind '" + std::string(text) + "'", line);
}

}  // namespace

const char* to_string(AnchorKind kind) {
  switch (kind) {
    case AnchorKind::eqe: return "eqe";
    case AnchorKind::spde_at_excess: return "spde_at_excess";
    case AnchorKind::pa_at_spde: return "pa_at_spde";
    case AnchorKind::jitter_at_spde: return "jitter_at_spde";
    case AnchorKind::dark_at_spde: return "dark_at_spde";
  }
  return "?";
}

std::vector<Anchor> read_anchors(std::istream& in) {
  static const std::vector<std::string_view> kColumns = {
      "kind", "temperature_c", "v_pp_v", "t_gate_ps", "dead_time_ns",
      "spde", "excess_v",      "target", "tolerance", "label"};
  std::vector<Anchor> anchors;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    std::vector<std::string_view> fields;
    while (true) {
      auto comma = text.find(',');
      fields.push_back(trim(text.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      text.remove_prefix(comma + 1);
    }
    if (!header_seen) {
      if (fields.size() != kColumns.size() || !std::equal(fields.begin(), fields.end(), kColumns.begin())) {
        throw ConfigError("anchor table header must be: kind,temperature_c,v_pp_v,t_gate_ps,"
                          "dead_time_ns,spde,excess_v,target,tolerance,label",
                          line_no);
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != kColumns.size()) {
      throw ConfigError("expected " + std::to_string(kColumns.size()) + " columns", line_no);
    }
    Anchor a;
    a.line = line_no;
    a.kind = anchor_kind_from(fields[0], line_no);
    double* numeric[] = {&a.temperature_c, &a.v_pp_v, &a.t_gate_ps, &a.dead_time_ns,
                         &a.spde,          &a.excess_v, &a.target,  &a.tolerance};
    for (std::size_t i = 0; i < 8; ++i) {
      std::string_view f = fields[i + 1];
      if (f.empty()) continue;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), *numeric[i]);
      if (ec != std::errc() || p != f.data() + f.size()) {
        throw ConfigError("column '" + std::string(kColumns[i + 1]) + "' is not a number", line_no);
      }
    }
    if (fields[1 + 7].empty()) throw ConfigError("anchor lacks a target", line_no);
    if (!(a.tolerance > 0.0)) throw ConfigError("tolerance must be positive", line_no);
    a.label = std::string(fields[9]);
    anchors.push_back(std::move(a));
  }
  if (!header_seen) throw ConfigError("anchor table is empty");
  return anchors;
}

std::vector<Anchor> load_anchors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_anchors(in);
}

double predicted_afterpulse_probability(const DeviceParams& dev, double t_gate_ps, double gate_offset_ps,
                                        long long gate_period_ps, double excess_v, double temperature_c,
                                        double dead_time_ns) {
  const double a = avalanche_probability(dev, excess_v, temperature_c);
  // Traps filled per picosecond of remaining gate.
  const double g = dev.trap_fill_coeff_per_coulomb * dev.charge_coeff_c_per_v_s * std::max(excess_v, 0.0) * 1e-12;
  if (a * g <= 0.0) return 0.0;
  const double tau = detrap_tau_ns(dev, temperature_c) * 1e3;
  const auto period = static_cast<double>(gate_period_ps);
  const double tg = t_gate_ps;
  const double t0 = gate_offset_ps;
  const double r = std::exp(-period / tau);
  const double capture = -std::expm1(-tg / tau);
  // A release in gate k, in-gate time u, carries density ~ exp(-u/tau), so
  // the per-gate state collapses to one number B_k: the trap population
  // weighted by exp(-(k P - t_fill)/tau) summed over all earlier avalanches
  // at least two gates back.
  const double next_gen = a * g * tg * tg / (2.0 * tau);
  const auto horizon = static_cast<std::size_t>(std::ceil(40.0 * tau / period)) + 4;

  std::vector<double> hits(horizon, 0.0);
  std::vector<double> b(horizon, 0.0);
  std::vector<double> m(horizon, 0.0);
  b[2] = (tg - t0) * std::exp(-(2.0 * period - t0) / tau);
  for (std::size_t k = 2; k < horizon; ++k) {
    if (k >= 3) b[k] += r * b[k - 1];
    if (k >= 4) b[k] += r * r * m[k - 2];
    hits[k] = a * g * b[k] * capture;
    m[k] = next_gen * b[k];
  }

  double total = 0.0;
  const double dead_ps = dead_time_ns * 1e3;
  const auto first_live = static_cast<std::size_t>(std::max(2.0, std::ceil((t0 + dead_ps) / period)));
  for (std::size_t k = first_live; k < horizon; ++k) total += hits[k];
  if (dead_ps > 0.0 && first_live >= 3) {
    const std::size_t k = first_live - 1;
    const double cut = t0 + dead_ps - static_cast<double>(k) * period;
    if (cut < tg) total += hits[k] * (std::exp(-cut / tau) - std::exp(-tg / tau)) / capture;
  }
  return total;
}

double predicted_dark_probability(const DeviceParams& dev, const GateConfig& gate, double excess_v,
                                  double temperature_c) {
  const double carriers = dark_rate(dev, temperature_c, gate) * gate.t_gate_ps * 1e-12;
  return -std::expm1(-carriers * avalanche_probability(dev, excess_v, temperature_c));
}

namespace {

double anchor_model(const DeviceParams& dev, const Anchor& a, double f_gate_hz) {
  GateConfig gate;
  gate.f_gate_hz = f_gate_hz;
  gate.t_gate_ps = a.t_gate_ps;
  gate.v_pp_v = a.v_pp_v;
  switch (a.kind) {
    case AnchorKind::eqe:
      return dev.eqe_max;
    case AnchorKind::spde_at_excess:
      return spde_model(dev, a.excess_v, a.temperature_c);
    case AnchorKind::pa_at_spde: {
      const double v = excess_for_spde_clamped(dev, a.spde, a.temperature_c);
      return predicted_afterpulse_probability(dev, a.t_gate_ps, 0.5 * a.t_gate_ps, gate.period_ps(), v,
                                              a.temperature_c, a.dead_time_ns);
    }
    case AnchorKind::jitter_at_spde:
      return jitter_sigma_ps(dev, excess_for_spde_clamped(dev, a.spde, a.temperature_c));
    case AnchorKind::dark_at_spde:
      return predicted_dark_probability(dev, gate, excess_for_spde_clamped(dev, a.spde, a.temperature_c),
                                        a.temperature_c);
  }
  return 0.0;
}

double anchor_residual(const Anchor& a, double model) {
  if (a.kind == AnchorKind::dark_at_spde) {
    return std::log10(std::max(model, 1e-300) / a.target) / a.tolerance;
  }
  return (model - a.target) / a.tolerance;
}

struct FreeParameter {
  std::string name;
  std::function<double(const DeviceParams&)> get;
  std::function<void(DeviceParams&, double)> set;
};

std::vector<FreeParameter> select_parameters(const std::vector<Anchor>& anchors) {
  bool efficiency = false;
  bool afterpulse = false;
  bool jitter = false;
  bool dark_thermal = false;
  bool dark_floor = false;
  std::set<double> temperatures;
  for (const auto& a : anchors) {
    switch (a.kind) {
      case AnchorKind::eqe: break;
      case AnchorKind::spde_at_excess: efficiency = true; temperatures.insert(a.temperature_c); break;
      case AnchorKind::pa_at_spde:
        efficiency = afterpulse = true;
        temperatures.insert(a.temperature_c);
        break;
      case AnchorKind::jitter_at_spde: jitter = true; break;
      case AnchorKind::dark_at_spde:
        (a.temperature_c >= kDarkReferenceTemperatureC ? dark_thermal : dark_floor) = true;
        break;
    }
  }
  auto log_param = [](std::string name, double DeviceParams::*member) {
    return FreeParameter{std::move(name), [member](const DeviceParams& d) { return std::log(d.*member); },
                         [member](DeviceParams& d, double x) { d.*member = std::exp(x); }};
  };
  std::vector<FreeParameter> out;
  if (efficiency) {
    out.push_back(log_param("p_avl_scale_v", &DeviceParams::p_avl_scale_v));
    out.push_back({"p_avl_ceiling_ref", [](const DeviceParams& d) { return d.p_avl_ceiling_ref; },
                   [](DeviceParams& d, double x) { d.p_avl_ceiling_ref = x; }});
    if (temperatures.size() > 1) {
      out.push_back({"p_avl_ceiling_slope_per_c",
                     [](const DeviceParams& d) { return d.p_avl_ceiling_slope_per_c * 100.0; },
                     [](DeviceParams& d, double x) { d.p_avl_ceiling_slope_per_c = x / 100.0; }});
    }
  }
  if (afterpulse) out.push_back(log_param("trap_fill_coeff_per_coulomb", &DeviceParams::trap_fill_coeff_per_coulomb));
  if (jitter) out.push_back(log_param("jitter_coeff_ps_v", &DeviceParams::jitter_coeff_ps_v));
  if (dark_thermal) out.push_back(log_param("dark_rate_ref_hz", &DeviceParams::dark_rate_ref_hz));
  if (dark_floor) out.push_back(log_param("dark_floor_coeff_hz_per_v", &DeviceParams::dark_floor_coeff_hz_per_v));
  return out;
}

struct AnchorFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const DeviceParams* base;
  const std::vector<Anchor>* anchors;
  const std::vector<FreeParameter>* params;
  double f_gate_hz;
  int* evaluations;

  int inputs() const { return static_cast<int>(params->size()); }
  int values() const { return static_cast<int>(std::max(anchors->size(), params->size())); }

  DeviceParams apply(const Eigen::VectorXd& x) const {
    DeviceParams d = *base;
    for (std::size_t i = 0; i < params->size(); ++i) (*params)[i].set(d, x[static_cast<Eigen::Index>(i)]);
    return d;
  }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    ++*evaluations;
    const DeviceParams d = apply(x);
    fvec.setZero(values());
    for (std::size_t i = 0; i < anchors->size(); ++i) {
      const Anchor& a = (*anchors)[i];
      if (a.kind == AnchorKind::eqe) continue;
      fvec[static_cast<Eigen::Index>(i)] = anchor_residual(a, anchor_model(d, a, f_gate_hz));
    }
    return 0;
  }
};

}  // namespace

bool CalibrationReport::all_within_tolerance(bool include_jitter) const {
  return std::all_of(anchors.begin(), anchors.end(), [&](const AnchorResult& r) {
    return r.within_tolerance || (!include_jitter && r.anchor.kind == AnchorKind::jitter_at_spde);
  });
}

std::vector<AnchorResult> evaluate_anchors(const DeviceParams& dev, const std::vector<Anchor>& anchors,
                                           double f_gate_hz) {
  std::vector<AnchorResult> out;
  for (const auto& a : anchors) {
    AnchorResult r;
    r.anchor = a;
    r.model = anchor_model(dev, a, f_gate_hz);
    r.residual = anchor_residual(a, r.model);
    r.within_tolerance = std::abs(r.residual) <= 1.0;
    out.push_back(std::move(r));
  }
  return out;
}

CalibrationReport calibrate(const DeviceParams& initial, const std::vector<Anchor>& anchors, double f_gate_hz) {
  DeviceParams base = initial;
  for (const auto& a : anchors) {
    if (a.kind == AnchorKind::eqe) base.eqe_max = a.target;
  }
  base.validate();

  CalibrationReport report;
  const auto params = select_parameters(anchors);
  for (const auto& p : params) report.fitted_parameters.push_back(p.name);

  if (!params.empty()) {
    AnchorFunctor functor{&base, &anchors, &params, f_gate_hz, &report.evaluations};
    Eigen::VectorXd x(static_cast<Eigen::Index>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) x[static_cast<Eigen::Index>(i)] = params[i].get(base);
    Eigen::NumericalDiff<AnchorFunctor, Eigen::Central> numeric(functor, 1e-7);
    Eigen::LevenbergMarquardt<decltype(numeric), double> lm(numeric);
    lm.parameters.maxfev = 4000;
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-14;
    report.optimizer_status = static_cast<int>(lm.minimize(x));
    base = functor.apply(x);
  }
  base.validate();
  report.device = base;
  report.anchors = evaluate_anchors(base, anchors, f_gate_hz);
  return report;
}

std::string format_report(const CalibrationReport& report) {
  std::ostringstream os;
  os << "fitted:";
  for (const auto& n : report.fitted_parameters) os << ' ' << n;
  os << "\noptimizer_status = " << report.optimizer_status << "\nevaluations = " << report.evaluations << '\n';
  os << "kind,temperature_c,spde,target,model,residual,ok,label\n";
  for (const auto& r : report.anchors) {
    os << to_string(r.anchor.kind) << ',' << format_sig6(r.anchor.temperature_c) << ','
       << format_sig6(r.anchor.spde) << ',' << format_sig6(r.anchor.target) << ',' << format_sig6(r.model)
       << ',' << format_sig6(r.residual) << ',' << (r.within_tolerance ? "yes" : "no") << ',' << r.anchor.label
       << '\n';
  }
  return os.str();
}

}  // namespace sdapd
