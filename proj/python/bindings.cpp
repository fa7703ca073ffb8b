#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sdapd/analysis.hpp"
#include "sdapd/calibration.hpp"
#include "sdapd/engine.hpp"
#include "sdapd/errors.hpp"
#include "sdapd/harness.hpp"
#include "sdapd/waveform.hpp"

namespace py = pybind11;
using namespace sdapd;

namespace {

struct EventArrays {
  py::array_t<std::int64_t> gate_index;
  py::array_t<std::uint32_t> t_in_gate_ps;
  py::array_t<std::uint8_t> cause;
};

py::dict events_to_dict(const std::vector<DetectionEvent>& events) {
  const auto n = static_cast<py::ssize_t>(events.size());
  const std::vector<py::ssize_t> shape{n};
  py::array_t<std::int64_t> gate(shape);
  py::array_t<std::uint32_t> t(shape);
  py::array_t<std::uint8_t> cause(shape);
  auto g = gate.mutable_unchecked<1>();
  auto tt = t.mutable_unchecked<1>();
  auto c = cause.mutable_unchecked<1>();
  for (py::ssize_t i = 0; i < n; ++i) {
    g(i) = events[i].gate_index;
    tt(i) = events[i].t_in_gate_ps;
    c(i) = static_cast<std::uint8_t>(events[i].cause);
  }
  py::dict d;
  d["gate_index"] = gate;
  d["t_in_gate_ps"] = t;
  d["cause"] = cause;
  return d;
}

std::vector<DetectionEvent> events_from(py::array_t<std::int64_t, py::array::c_style | py::array::forcecast> gate,
                                        py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast> t) {
  if (gate.size() != t.size()) throw DomainError("gate_index and t_in_gate_ps differ in length");
  std::vector<DetectionEvent> out(static_cast<std::size_t>(gate.size()));
  auto g = gate.unchecked<1>();
  auto tt = t.unchecked<1>();
  for (py::ssize_t i = 0; i < gate.size(); ++i) out[static_cast<std::size_t>(i)] = {g(i), tt(i), Cause::unlabeled};
  return out;
}

py::dict summary_dict(const RunSummary& s) {
  py::dict d;
  d["gates_simulated"] = s.gates_simulated;
  d["illuminated_gates"] = s.illuminated_gates;
  d["suppressed_gates"] = s.suppressed_gates;
  d["photon"] = s.counts[0];
  d["dark"] = s.counts[1];
  d["afterpulse"] = s.counts[2];
  d["photon_chain_afterpulses"] = s.photon_chain_afterpulses;
  d["traps_filled"] = s.traps_filled;
  d["total_charge_c"] = s.total_charge_c;
  d["simulated_time_s"] = s.simulated_time_s;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gated self-differencing InGaAs APD simulator";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<InfeasibleTarget>(m, "InfeasibleTarget", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<DeviceParams>(m, "DeviceParams")
      .def(py::init<>())
      .def_readwrite("v_br_ref_v", &DeviceParams::v_br_ref_v)
      .def_readwrite("t_ref_c", &DeviceParams::t_ref_c)
      .def_readwrite("dv_br_dt_v_per_c", &DeviceParams::dv_br_dt_v_per_c)
      .def_readwrite("eqe_max", &DeviceParams::eqe_max)
      .def_readwrite("v_punch_v", &DeviceParams::v_punch_v)
      .def_readwrite("p_avl_scale_v", &DeviceParams::p_avl_scale_v)
      .def_readwrite("p_avl_ceiling_ref", &DeviceParams::p_avl_ceiling_ref)
      .def_readwrite("p_avl_ceiling_slope_per_c", &DeviceParams::p_avl_ceiling_slope_per_c)
      .def_readwrite("dark_rate_ref_hz", &DeviceParams::dark_rate_ref_hz)
      .def_readwrite("dark_doubling_interval_c", &DeviceParams::dark_doubling_interval_c)
      .def_readwrite("dark_floor_coeff_hz_per_v", &DeviceParams::dark_floor_coeff_hz_per_v)
      .def_readwrite("trap_fill_coeff_per_coulomb", &DeviceParams::trap_fill_coeff_per_coulomb)
      .def_readwrite("charge_coeff_c_per_v_s", &DeviceParams::charge_coeff_c_per_v_s)
      .def_readwrite("detrap_tau_ref_ns", &DeviceParams::detrap_tau_ref_ns)
      .def_readwrite("detrap_activation_k", &DeviceParams::detrap_activation_k)
      .def_readwrite("jitter_coeff_ps_v", &DeviceParams::jitter_coeff_ps_v)
      .def("validate", &DeviceParams::validate)
      .def("to_text", [](const DeviceParams& d) { return to_text(d); })
      .def_static("from_text", &device_params_from_text);

  py::class_<GateConfig>(m, "GateConfig")
      .def(py::init<>())
      .def_readwrite("f_gate_hz", &GateConfig::f_gate_hz)
      .def_readwrite("t_gate_ps", &GateConfig::t_gate_ps)
      .def_readwrite("v_pp_v", &GateConfig::v_pp_v)
      .def_readwrite("v_dc_v", &GateConfig::v_dc_v)
      .def("period_ps", &GateConfig::period_ps);

  py::class_<OpticalConfig>(m, "OpticalConfig")
      .def(py::init<>())
      .def_readwrite("f_laser_hz", &OpticalConfig::f_laser_hz)
      .def_readwrite("mu", &OpticalConfig::mu)
      .def_readwrite("wavelength_nm", &OpticalConfig::wavelength_nm)
      .def_readwrite("pulse_width_ps", &OpticalConfig::pulse_width_ps)
      .def_readwrite("gate_offset_ps", &OpticalConfig::gate_offset_ps);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("device", &RunConfig::device)
      .def_readwrite("gate", &RunConfig::gate)
      .def_readwrite("optical", &RunConfig::optical)
      .def_readwrite("temperature_c", &RunConfig::temperature_c)
      .def_readwrite("n_gates", &RunConfig::n_gates)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("illumination", &RunConfig::illumination)
      .def_readwrite("tag_resolution_ps", &RunConfig::tag_resolution_ps)
      .def_property(
          "naive", [](const RunConfig& c) { return c.path == SamplingPath::naive; },
          [](RunConfig& c, bool v) { c.path = v ? SamplingPath::naive : SamplingPath::fast; })
      .def("excess_v", &RunConfig::excess_v)
      .def("validate", &RunConfig::validate);

  py::class_<Estimate>(m, "Estimate")
      .def_readonly("value", &Estimate::value)
      .def_readonly("sigma", &Estimate::sigma)
      .def("__repr__", [](const Estimate& e) { return format_sig6(e.value) + " +- " + format_sig6(e.sigma); });

  py::class_<CharacterizationResult>(m, "CharacterizationResult")
      .def_readonly("spde", &CharacterizationResult::spde)
      .def_readonly("p_d", &CharacterizationResult::p_d)
      .def_readonly("p_a", &CharacterizationResult::p_a)
      .def_readonly("jitter_rms_ps", &CharacterizationResult::jitter_rms_ps)
      .def_readonly("r_illum_cps", &CharacterizationResult::r_illum_cps)
      .def_readonly("r_dark_cps", &CharacterizationResult::r_dark_cps);

  m.def("breakdown_voltage", &breakdown_voltage, py::arg("device"), py::arg("temperature_c"));
  m.def("excess_voltage", &excess_voltage, py::arg("device"), py::arg("gate"), py::arg("temperature_c"));
  m.def("dc_bias_for_excess", &dc_bias_for_excess, py::arg("device"), py::arg("v_pp_v"), py::arg("excess_v"),
        py::arg("temperature_c"));
  m.def("spde_model", &spde_model, py::arg("device"), py::arg("excess_v"), py::arg("temperature_c"));
  m.def("dark_rate", &dark_rate, py::arg("device"), py::arg("temperature_c"), py::arg("gate"));
  m.def("eqe_from_photocurrent", &eqe_from_photocurrent, py::arg("photocurrent_a"), py::arg("optical_power_w"),
        py::arg("wavelength_nm"));

  m.def("simulate", [](const RunConfig& cfg) {
        RunResult r;
        {
          py::gil_scoped_release release;
          r = simulate(cfg);
        }
        py::dict d = events_to_dict(r.events);
        d["charge_c"] = py::array_t<double>(static_cast<py::ssize_t>(r.charges_c.size()), r.charges_c.data());
        d["summary"] = summary_dict(r.summary);
        return d;
      },
      py::arg("config"), "Runs one configuration; returns event arrays and a summary dict.");

  m.def("spde", &spde, py::arg("r_cps"), py::arg("r_dark_cps"), py::arg("mu"), py::arg("f_laser_hz"),
        py::arg("f_gate_hz"));
  m.def("expected_rate", &expected_rate, py::arg("mu"), py::arg("eta"), py::arg("p_d"), py::arg("f_laser_hz"));
  m.def("apply_dead_time",
        [](py::array_t<std::int64_t, py::array::c_style | py::array::forcecast> gate,
           py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast> t, long long period_ps,
           double tau_ns) { return events_to_dict(apply_dead_time(events_from(gate, t), period_ps, tau_ns)); },
        py::arg("gate_index"), py::arg("t_in_gate_ps"), py::arg("gate_period_ps"), py::arg("dead_time_ns"));
  m.def("jitter_rms",
        [](py::array_t<std::int64_t, py::array::c_style | py::array::forcecast> gate,
           py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast> t) {
          return jitter_rms(events_from(gate, t));
        },
        py::arg("gate_index"), py::arg("t_in_gate_ps"));

  m.def("characterize",
        [](const RunConfig& cfg, double dead_time_ns) {
          py::gil_scoped_release release;
          return characterize(cfg, EstimatorOptions{dead_time_ns}).result;
        },
        py::arg("config"), py::arg("dead_time_ns") = 0.0,
        "Paired illuminated and dark runs analysed into SPDE, P_d, P_a and jitter.");

  m.def("bias_search",
        [](const RunConfig& cfg, const std::string& kind, double value, double tolerance, double dead_time_ns) {
          BiasTarget t;
          if (kind == "spde") t.kind = BiasTarget::Kind::spde;
          else if (kind == "p_a") t.kind = BiasTarget::Kind::p_a;
          else throw DomainError("kind must be 'spde' or 'p_a'");
          t.value = value;
          t.tolerance = tolerance;
          py::gil_scoped_release release;
          const auto r = bias_search(cfg, EstimatorOptions{dead_time_ns}, t);
          return std::make_tuple(r.v_dc_v, r.excess_v, r.at.result);
        },
        py::arg("config"), py::arg("kind"), py::arg("value"), py::arg("tolerance") = 0.005,
        py::arg("dead_time_ns") = 0.0, "Returns (v_dc_v, excess_v, result) at the found bias.");

  m.def("calibrate",
        [](const DeviceParams& initial, const std::string& anchors_path) {
          const auto report = calibrate(initial, load_anchors(anchors_path));
          return std::make_tuple(report.device, report.all_within_tolerance(), format_report(report));
        },
        py::arg("initial"), py::arg("anchors_path"), "Returns (device, all_within_tolerance, report text).");

  m.def("self_difference_residual",
        [](const GateConfig& gate, std::int64_t n_gates, const std::string& shape) {
          WaveformConfig cfg;
          cfg.shape = gate_shape_from_string(shape);
          const auto sd = self_difference(synthesize(gate, n_gates, {}, cfg), static_cast<double>(gate.period_ps()));
          double worst = 0.0;
          for (std::size_t i = sd.warmup_samples; i < sd.samples_mv.size(); ++i) worst = std::max(worst, std::abs(sd.samples_mv[i]));
          return worst;
        },
        py::arg("gate"), py::arg("n_gates") = 8, py::arg("shape") = "raised_cosine",
        "Largest |SD output| after warm-up for an avalanche-free trace.");
}
