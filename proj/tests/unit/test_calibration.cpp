#include "doctest.h"

#include <cmath>
#include <sstream>

#include "sdapd/analysis.hpp"
#include "sdapd/calibration.hpp"
#include "sdapd/errors.hpp"

using namespace sdapd;
using doctest::Approx;

namespace {

const std::string kAnchors = std::string(SDAPD_DATA_DIR) + "/anchors.csv";

std::vector<Anchor> parse(const std::string& text) {
  std::istringstream in(text);
  return read_anchors(in);
}

const char* kHeader = "kind,temperature_c,v_pp_v,t_gate_ps,dead_time_ns,spde,excess_v,target,tolerance,label\n";

}  // namespace

TEST_CASE("anchor table parsing") {
  const auto a = parse(std::string("# comment\n") + kHeader + "spde_at_excess,20,18,360,0,,9.5,0.55,0.01,x y\n");
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == AnchorKind::spde_at_excess);
  CHECK(a[0].excess_v == 9.5);
  CHECK(a[0].label == "x y");
  CHECK(a[0].line == 3);
  CHECK(load_anchors(kAnchors).size() == 9);
}

TEST_CASE("anchor table errors carry line numbers") {
  CHECK_THROWS_AS(parse("kind,target\n"), ConfigError);
  try {
    parse(std::string(kHeader) + "eqe,20,18,360,0,,,0.69,0.005,a\nbogus,20,18,360,0,,,1,1,b\n");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 3);
  }
  try {
    parse(std::string(kHeader) + "pa_at_spde,20,18,360,0,abc,,0.1,0.01,a\n");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(load_anchors("/nonexistent/anchors.csv"), IoError);
}

TEST_CASE("afterpulse surrogate basics") {
  DeviceParams d;
  CHECK(predicted_afterpulse_probability(d, 360, 180, 1000, 0.0, 20.0, 0.0) == 0.0);
  d.trap_fill_coeff_per_coulomb = 0.0;
  CHECK(predicted_afterpulse_probability(d, 360, 180, 1000, 6.0, 20.0, 0.0) == 0.0);
  d = DeviceParams{};
  const double no_dead = predicted_afterpulse_probability(d, 360, 180, 1000, 6.0, 20.0, 0.0);
  const double dead = predicted_afterpulse_probability(d, 360, 180, 1000, 6.0, 20.0, 10.0);
  CHECK(no_dead > dead);
  CHECK(predicted_afterpulse_probability(d, 360, 180, 1000, 8.0, 20.0, 0.0) > no_dead);
}

TEST_CASE("calibration reproduces every anchor") {
  const auto anchors = load_anchors(kAnchors);
  const auto report = calibrate(DeviceParams{}, anchors);
  for (const auto& r : report.anchors) {
    INFO(r.anchor.label << ": model " << r.model << " target " << r.anchor.target);
    CHECK(r.within_tolerance);
  }
  CHECK(report.all_within_tolerance());
  CHECK(report.device.eqe_max == 0.69);
  CHECK(spde_model(report.device, 9.5, 20.0) == Approx(0.55).epsilon(0.02));
  const std::string text = format_report(report);
  CHECK(text.find("kind,temperature_c,spde,target,model,residual,ok,label") != std::string::npos);

  // Deterministic
  CHECK(calibrate(DeviceParams{}, anchors).device == report.device);
}

TEST_CASE("surrogate afterpulse probability tracks the engine") {
  const auto d = calibrate(DeviceParams{}, load_anchors(kAnchors)).device;
  RunConfig c;
  c.device = d;
  c.gate.v_dc_v = dc_bias_for_excess(d, 18.0, *excess_for_spde(d, 0.50, 20.0), 20.0);
  c.n_gates = 200'000'000;
  c.seed = 21;
  const auto il = simulate(c);
  c.illumination = false;
  c.seed = 22;
  const auto dk = simulate(c);
  const auto t = GateTiming::from(c.gate, c.optical);
  const auto e = afterpulse_prob({il.events, c.n_gates}, {dk.events, c.n_gates}, t);
  const double model = predicted_afterpulse_probability(d, 360, 180, 1000, c.excess_v(), 20.0, 0.0);
  INFO("engine " << e.value << " +- " << e.sigma << " surrogate " << model);
  CHECK(std::abs(e.value - model) < 0.01);
}
