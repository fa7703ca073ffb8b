#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sdapd/errors.hpp"
#include "sdapd/random.hpp"
#include "sdapd/waveform.hpp"

using namespace sdapd;

namespace {

double max_abs_after(const Waveform& w, std::size_t from) {
  double m = 0.0;
  for (std::size_t i = from; i < w.samples_mv.size(); ++i) m = std::max(m, std::abs(w.samples_mv[i]));
  return m;
}

}  // namespace

TEST_CASE("avalanche-free output is periodic and cancels exactly") {
  Xoshiro256pp rng(3);
  for (auto shape : {GateShape::raised_cosine, GateShape::trapezoid}) {
    for (int k = 0; k < 5; ++k) {
      GateConfig g;
      g.v_pp_v = 2.0 + 20.0 * rng.uniform01();
      g.t_gate_ps = 150.0 + 5.0 * std::floor(120.0 * rng.uniform01());
      WaveformConfig cfg;
      cfg.shape = shape;
      const auto raw = synthesize(g, 6, {}, cfg);
      const std::size_t spp = 200;
      for (std::size_t i = spp; i < raw.samples_mv.size(); ++i) REQUIRE(raw.samples_mv[i] == raw.samples_mv[i - spp]);
      const auto sd = self_difference(raw, 1000.0);
      CHECK(sd.warmup_samples == spp);
      CHECK(max_abs_after(sd, sd.warmup_samples) <= 1e-12 * max_abs_after(raw, 0));
    }
  }
}

TEST_CASE("zero-charge avalanche changes nothing") {
  GateConfig g;
  const Avalanche a{2, 100.0, 0.0};
  CHECK(synthesize(g, 4, std::span(&a, 1)).samples_mv == synthesize(g, 4, {}).samples_mv);
}

TEST_CASE("pulse amplitude is linear in charge") {
  GateConfig g;
  WaveformConfig cfg;
  cfg.capacitive_mv_per_v_per_ps = 0.0;
  const Avalanche a{1, 50.0, 1e-14};
  const Avalanche b{1, 50.0, 3e-14};
  const double pa = max_abs_after(synthesize(g, 3, std::span(&a, 1), cfg), 0);
  const double pb = max_abs_after(synthesize(g, 3, std::span(&b, 1), cfg), 0);
  CHECK(pb / pa == doctest::Approx(3.0).epsilon(1e-12));
  // Peak of the difference of exponentials: scale * 0.3849... at 82.4 ps.
  const double scale = 1e-14 * cfg.area_mv_ps_per_coulomb / (150.0 - 50.0);
  CHECK(avalanche_peak_mv(1e-14, cfg) == doctest::Approx(scale * 0.3849001794597505).epsilon(1e-12));
  CHECK(pa <= avalanche_peak_mv(1e-14, cfg));
  CHECK(pa > 0.99 * avalanche_peak_mv(1e-14, cfg));
}

TEST_CASE("single avalanche becomes a bipolar pair") {
  GateConfig g;
  WaveformConfig cfg;
  const Avalanche a{2, 60.0, 2e-14};
  const auto raw = synthesize(g, 6, std::span(&a, 1), cfg);
  const auto base = synthesize(g, 6, {}, cfg);
  const auto sd = self_difference(raw, 1000.0);
  for (std::size_t i = 200; i < raw.samples_mv.size(); ++i) {
    const double pulse_now = raw.samples_mv[i] - base.samples_mv[i];
    const double pulse_prev = raw.samples_mv[i - 200] - base.samples_mv[i - 200];
    REQUIRE(sd.samples_mv[i] == doctest::Approx(pulse_now - pulse_prev).epsilon(1e-9).scale(1.0));
  }
  const auto lo = std::min_element(sd.samples_mv.begin() + 200, sd.samples_mv.end());
  CHECK(*lo < -0.9 * avalanche_peak_mv(2e-14, cfg));
  CHECK((lo - sd.samples_mv.begin()) / 200 == 3);
}

TEST_CASE("self difference is linear") {
  GateConfig g;
  const Avalanche a{1, 40.0, 1e-14};
  const auto w1 = synthesize(g, 4, std::span(&a, 1));
  WaveformConfig trap;
  trap.shape = GateShape::trapezoid;
  const auto w2 = synthesize(g, 4, {}, trap);
  Waveform mix = w1;
  for (std::size_t i = 0; i < mix.samples_mv.size(); ++i) mix.samples_mv[i] = 2.5 * w1.samples_mv[i] + w2.samples_mv[i];
  const auto s1 = self_difference(w1, 1000.0);
  const auto s2 = self_difference(w2, 1000.0);
  const auto sm = self_difference(mix, 1000.0);
  for (std::size_t i = 0; i < sm.samples_mv.size(); ++i) {
    REQUIRE(sm.samples_mv[i] == doctest::Approx(2.5 * s1.samples_mv[i] + s2.samples_mv[i]).scale(1.0).epsilon(1e-12));
  }
}

TEST_CASE("discriminator") {
  GateConfig g;
  WaveformConfig cfg;
  const Avalanche a{2, 60.0, 2e-14};
  const auto sd = self_difference(synthesize(g, 6, std::span(&a, 1), cfg), 1000.0);
  const double peak = avalanche_peak_mv(2e-14, cfg);
  CHECK(discriminate(sd, 10.0 * peak, g).empty());
  const auto evs = discriminate(sd, 0.5 * peak, g);
  REQUIRE(evs.size() == 1);
  CHECK(evs[0].gate_index == 2);
  CHECK(evs[0].cause == Cause::unlabeled);
  // Analytic half-height crossing of the pulse, rounded up to the sample grid.
  const double scale = 2e-14 * cfg.area_mv_ps_per_coulomb / 100.0;
  double t = 0.0;
  while (scale * (std::exp(-t / 150.0) - std::exp(-t / 50.0)) < 0.5 * peak) t += 0.01;
  CHECK(evs[0].t_in_gate_ps == static_cast<std::uint32_t>(5.0 * std::ceil((60.0 + t) / 5.0)));
  CHECK_THROWS_AS(discriminate(sd, 0.0, g), DomainError);
}

TEST_CASE("consecutive avalanches: the second is lost to its predecessor's replica") {
  GateConfig g;
  WaveformConfig cfg;
  cfg.capacitive_mv_per_v_per_ps = 0.0;
  const std::vector<Avalanche> pair = {{2, 60.0, 2e-14}, {3, 60.0, 2e-14}};
  const auto sd = self_difference(synthesize(g, 6, pair, cfg), 1000.0);
  const auto evs = discriminate(sd, 0.5 * avalanche_peak_mv(2e-14, cfg), g);
  REQUIRE(evs.size() == 1);
  CHECK(evs[0].gate_index == 2);
}

TEST_CASE("detection probability rises with charge") {
  GateConfig g;
  WaveformConfig cfg;
  cfg.noise_rms_mv = 1.0;
  const double thr = 6.0;
  double prev = 0.0;
  for (double q : {2e-15, 5e-15, 1e-14, 2e-14, 5e-14}) {
    const double p = detection_probability(g, cfg, q, 60.0, thr, 200);
    CHECK(p >= prev);
    prev = p;
  }
  CHECK(prev == 1.0);
  for (double vpp : {6.0, 12.0, 18.0}) {
    g.v_pp_v = vpp;
    CHECK(detection_probability(g, cfg, 2e-14, 60.0, thr, 50) == 1.0);
  }
}

TEST_CASE("waveform errors") {
  GateConfig g;
  const Avalanche outside{1, 400.0, 1e-14};
  CHECK_THROWS_AS(synthesize(g, 3, std::span(&outside, 1)), DomainError);
  const Avalanche late{5, 10.0, 1e-14};
  CHECK_THROWS_AS(synthesize(g, 3, std::span(&late, 1)), DomainError);
  CHECK_THROWS_AS(self_difference(synthesize(g, 2, {}), 1002.0), DomainError);
  WaveformConfig bad;
  bad.sample_period_ps = 3.0;
  CHECK_THROWS_AS(synthesize(g, 2, {}, bad), DomainError);
  CHECK_THROWS_AS(gate_shape_from_string("sawtooth"), ConfigError);
}

TEST_CASE("waveform text round trip") {
  GateConfig g;
  const Avalanche a{1, 40.0, 1e-14};
  const auto sd = self_difference(synthesize(g, 3, std::span(&a, 1)), 1000.0);
  std::stringstream buf;
  write_waveform(buf, sd);
  const auto back = read_waveform(buf);
  CHECK(back.sample_period_ps == sd.sample_period_ps);
  CHECK(back.warmup_samples == sd.warmup_samples);
  CHECK(back.samples_mv == sd.samples_mv);
  std::stringstream bad("0,1\n5,2\n11,3\n");
  CHECK_THROWS_AS(read_waveform(bad), IoError);
}
