#include "doctest.h"

#include <cmath>
#include <sstream>

#include "sdapd/analysis.hpp"
#include "sdapd/errors.hpp"
#include "sdapd/random.hpp"

using namespace sdapd;
using doctest::Approx;

namespace {

std::vector<DetectionEvent> bernoulli_stream(double p, std::int64_t n_gates, std::uint64_t seed,
                                             std::uint32_t max_t = 360) {
  Xoshiro256pp rng(seed);
  std::vector<DetectionEvent> out;
  for (std::int64_t g = 0; g < n_gates; ++g) {
    if (rng.uniform01() < p) {
      out.push_back({g, static_cast<std::uint32_t>(rng.uniform01() * max_t), Cause::unlabeled});
    }
  }
  return out;
}

DeviceParams calibrated() {
  DeviceParams d;
  d.p_avl_scale_v = 2.1167674730805075;
  d.p_avl_ceiling_ref = 0.8061654828725395;
  d.p_avl_ceiling_slope_per_c = 0.0048223782941;
  d.trap_fill_coeff_per_coulomb = 10623361346675.072;
  return d;
}

}  // namespace

TEST_CASE("efficiency estimator closed form") {
  CHECK(spde(975411.5099857197, 0.0, 0.1, 20e6, 1e9) == Approx(0.5).epsilon(1e-12));
  CHECK(spde(20e6 * 1e-4, 1e9 * 1e-4, 0.1, 20e6, 1e9) == Approx(0.0).scale(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(spde(20e6, 0.0, 0.1, 20e6, 1e9), DomainError);
  CHECK_THROWS_AS(spde(1e6, 1e9, 0.1, 20e6, 1e9), DomainError);
  CHECK_THROWS_AS(spde(1e6, 0.0, 0.0, 20e6, 1e9), DomainError);
}

TEST_CASE("saturation law") {
  CHECK(expected_rate(0.0, 0.5, 0.0, 500e6) == 0.0);
  CHECK(expected_rate(0.1, 0.5, 0.0, 500e6) == Approx(24385287.74964299).epsilon(1e-12));
  CHECK(expected_rate(1e4, 0.5, 0.0, 500e6) == 500e6);
}

TEST_CASE("efficiency estimator inverts the saturation law") {
  for (double mu : {0.05, 0.1, 1.0}) {
    for (double eta : {0.1, 0.55}) {
      for (double pd : {0.0, 1e-5, 3e-3}) {
        const double r = expected_rate(mu, eta, pd, 20e6);
        CHECK(spde(r, pd * 1e9, mu, 20e6, 1e9) == Approx(eta).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("dead time: greedy rule, identity, idempotence") {
  const std::vector<DetectionEvent> ev = {{0, 0}, {5, 0}, {12, 0}};
  const auto kept = apply_dead_time(ev, 1000, 10.0);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].gate_index == 0);
  CHECK(kept[1].gate_index == 12);
  const std::vector<DetectionEvent> edge = {{0, 100}, {10, 100}};
  CHECK(apply_dead_time(edge, 1000, 10.0).size() == 2);
  CHECK_THROWS_AS(apply_dead_time(ev, 1000, -1.0), DomainError);
  const auto s = bernoulli_stream(0.05, 200000, 1);
  CHECK(apply_dead_time(s, 1000, 0.0) == s);
  for (double tau : {1.0, 10.0, 37.5}) {
    const auto once = apply_dead_time(s, 1000, tau);
    CHECK(apply_dead_time(once, 1000, tau) == once);
  }
  const std::vector<DetectionEvent> unordered = {{3, 0}, {2, 0}};
  CHECK_THROWS_AS(apply_dead_time(unordered, 1000, 1.0), DomainError);
}

TEST_CASE("dead time at 10 Mcps follows the non-paralysable law") {
  const std::int64_t n = 100'000'000;
  const auto s = bernoulli_stream(0.01, n, 2, 1000);
  const auto kept = apply_dead_time(s, 1000, 10.0);
  const double r_in = static_cast<double>(s.size()) / (n * 1e-9);
  const double r_out = static_cast<double>(kept.size()) / (n * 1e-9);
  CHECK(1.0 - r_out / r_in < 0.10);
  CHECK(r_out == Approx(r_in / (1.0 + r_in * 10e-9)).epsilon(0.01));
}

TEST_CASE("histogram conservation and geometry") {
  const auto s = bernoulli_stream(0.02, 100000, 3);
  for (std::uint32_t w : {1u, 8u, 100u, 250u, 1000u}) {
    const auto h = build_histogram(s, 1e9, 20e6, w, 100000);
    CHECK(h.counts.size() == 50u * (1000u / w));
    CHECK(h.total() == static_cast<std::int64_t>(s.size()));
    CHECK(h.n_laser_periods == 2000);
  }
  CHECK_THROWS_AS(build_histogram(s, 1e9, 20e6, 300), DomainError);
  const std::vector<DetectionEvent> unsorted = {{5, 0}, {1, 0}};
  CHECK_THROWS_AS(build_histogram(unsorted, 1e9, 20e6, 1000), DomainError);
  const auto empty = build_histogram({}, 1e9, 20e6, 1000, 1000);
  CHECK(empty.total() == 0);
  CHECK(empty.counts.size() == 50);
}

TEST_CASE("one event per illuminated gate makes one hot column") {
  std::vector<DetectionEvent> s;
  for (std::int64_t g = 0; g < 5000; g += 50) s.push_back({g, 180, Cause::unlabeled});
  const auto h = build_histogram(s, 1e9, 20e6, 100, 5000);
  CHECK(h.counts[1] == 100);
  CHECK(h.total() == 100);
}

TEST_CASE("histogram merge is associative and commutative") {
  auto part = [](std::uint64_t seed) { return build_histogram(bernoulli_stream(0.03, 50000, seed), 1e9, 20e6, 100, 50000); };
  auto a = part(1), b = part(2), c = part(3);
  auto ab_c = a;
  ab_c.merge(b);
  ab_c.merge(c);
  auto bc = b;
  bc.merge(c);
  auto a_bc = a;
  a_bc.merge(bc);
  auto cba = c;
  cba.merge(b);
  cba.merge(a);
  CHECK(ab_c.counts == a_bc.counts);
  CHECK(ab_c.counts == cba.counts);
  CHECK(ab_c.n_laser_periods == cba.n_laser_periods);
  auto other = build_histogram({}, 1e9, 20e6, 1000, 1000);
  CHECK_THROWS_AS(a.merge(other), DomainError);
}

TEST_CASE("jitter") {
  const std::vector<DetectionEvent> same = {{0, 100}, {2, 100}, {4, 100}};
  CHECK(jitter_rms(same) == 0.0);
  const std::vector<DetectionEvent> two = {{0, 0}, {2, 100}};
  CHECK(jitter_rms(two) == 50.0);
  CHECK_THROWS_AS(jitter_rms(std::span(two.data(), 1)), DomainError);
}

TEST_CASE("dark count probability") {
  CHECK(dark_count_prob({}, 1000, 1000).value == 0.0);
  CHECK_THROWS_AS(dark_count_prob({}, 0, 1000), DomainError);
  // Events at gates 0 and 10: gates 1 and 11 are blanked.
  const std::vector<DetectionEvent> ev = {{0, 0}, {10, 0}};
  const auto e = dark_count_prob(ev, 100, 1000);
  CHECK(e.value == Approx(2.0 / 98.0));
  CHECK(dark_count_prob(ev, 100, 1000, 0.0, false).value == Approx(2.0 / 100.0));
}

TEST_CASE("live gate accounting") {
  const std::vector<DetectionEvent> ev = {{0, 180}, {7, 900}};
  // 10 ns after t = 180 ps blanks gates 1..10; the second event is dropped first.
  const auto kept = apply_dead_time(ev, 1000, 10.0);
  const auto c = count_gates(kept, 100, 50, 1000, 10000);
  CHECK(c.illuminated_counts == 1);
  CHECK(c.other_counts == 0);
  CHECK(c.illuminated_gates == 2);
  CHECK(c.other_gates == 98);
  CHECK(c.illuminated_live == 2);
  CHECK(c.other_live == 88);
}

TEST_CASE("afterpulse estimate is undefined without photon signal") {
  const std::vector<DetectionEvent> dark = {{3, 0}, {60, 0}};
  const GateTiming t;
  CHECK_THROWS_AS(afterpulse_prob({{}, 1000}, {dark, 1000}, t), DomainError);
  const auto r = characterize_streams({{}, 1000}, {dark, 1000}, t, 0.1);
  CHECK(std::isnan(r.p_a.value));
  CHECK(std::isnan(r.jitter_rms_ps.value));
}

TEST_CASE("efficiency estimate recovers engine truth") {
  RunConfig c;
  c.device = calibrated();
  c.device.trap_fill_coeff_per_coulomb = 0.0;
  c.gate.v_dc_v = dc_bias_for_excess(c.device, 18.0, *excess_for_spde(c.device, 0.55, 20.0), 20.0);
  c.n_gates = 500'000'000;
  c.seed = 5;
  const auto il = simulate(c);
  c.illumination = false;
  c.seed = 6;
  const auto dk = simulate(c);
  const auto t = GateTiming::from(c.gate, c.optical);
  const auto e = spde_estimate({il.events, c.n_gates}, {dk.events, c.n_gates}, t, 0.1);
  CHECK(std::abs(e.value - 0.55) < 3 * e.sigma);
  CHECK(e.sigma < 0.005);
}

TEST_CASE("dark count estimate recovers a 1e-6 per-gate probability") {
  RunConfig c;
  c.device.trap_fill_coeff_per_coulomb = 0.0;
  c.illumination = false;
  c.temperature_c = -30.0;
  c.gate.v_dc_v = dc_bias_for_excess(c.device, 18.0, 40.0, -30.0);
  const double p_avl = avalanche_probability(c.device, 40.0, -30.0);
  // Per-gate probability 1 - exp(-rate * t_gate * P_avl) = 1e-6.
  c.device.dark_rate_ref_hz = -std::log1p(-1e-6) / (360e-12 * p_avl);
  c.n_gates = 2'000'000'000;
  const auto r = simulate(c);
  const auto e = dark_count_prob(r.events, c.n_gates, 1000);
  CHECK(std::abs(e.value - 1e-6) < 3 * e.sigma);

  c.device.dark_rate_ref_hz *= 2;
  c.n_gates = 500'000'000;
  const auto r2 = simulate(c);
  c.device.dark_rate_ref_hz /= 2;
  const auto r1 = simulate(c);
  const double ratio = dark_count_prob(r2.events, c.n_gates, 1000).value / dark_count_prob(r1.events, c.n_gates, 1000).value;
  CHECK(ratio == Approx(2.0).epsilon(0.15));
}

TEST_CASE("afterpulse estimate agrees with cause labels") {
  for (double kappa : {0.0, 5e12, 2e13}) {
    RunConfig c;
    c.device = calibrated();
    c.device.trap_fill_coeff_per_coulomb = kappa;
    c.gate.v_dc_v = dc_bias_for_excess(c.device, 18.0, 6.0, 20.0);
    c.n_gates = 200'000'000;
    c.seed = 11;
    const auto il = simulate(c);
    RunConfig d = c;
    d.illumination = false;
    d.seed = 12;
    const auto dk = simulate(d);
    const auto t = GateTiming::from(c.gate, c.optical);
    const auto e = afterpulse_prob({il.events, c.n_gates}, {dk.events, d.n_gates}, t);
    const double truth = static_cast<double>(il.summary.photon_chain_afterpulses) /
                         static_cast<double>(il.summary.count(Cause::photon));
    INFO("kappa " << kappa << " estimate " << e.value << " +- " << e.sigma << " truth " << truth);
    CHECK(std::abs(e.value - truth) < 3 * e.sigma);

    if (kappa > 0) {
      EstimatorOptions o;
      o.dead_time_ns = 10.0;
      CHECK(afterpulse_prob({il.events, c.n_gates}, {dk.events, d.n_gates}, t, o).value < e.value);
    }
  }
}

TEST_CASE("characterisation CSV formatting") {
  CharacterizationResult r;
  r.spde = {0.5512345678, 0.00123};
  r.p_d = {1.2e-6, 3e-8};
  r.p_a = {std::nan(""), std::nan("")};
  const std::string row = characterization_csv_row(r);
  CHECK(row.rfind("0.551235,0.00123,1.2e-06,3e-08,nan,nan,", 0) == 0);
  CHECK(characterization_csv_header().rfind("spde,spde_err,", 0) == 0);
  std::ostringstream out;
  write_histogram_csv(out, build_histogram({}, 1e9, 500e6, 500, 4));
  CHECK(out.str() == "bin,gate_phase,t_in_gate_ps,counts\n0,0,0,0\n1,0,500,0\n2,1,0,0\n3,1,500,0\n");
}
