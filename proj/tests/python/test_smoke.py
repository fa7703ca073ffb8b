import math

import numpy as np
import pytest

import sdapd


def test_breakdown_and_bias():
    d = sdapd.DeviceParams()
    assert sdapd.breakdown_voltage(d, -50.0) == 60.1
    assert sdapd.breakdown_voltage(d, 20.0) == 67.2
    assert sdapd.dc_bias_for_excess(d, 18.0, 9.5, 20.0) == pytest.approx(67.7, abs=1e-12)


def test_closed_forms():
    assert sdapd.spde(975411.5099857197, 0.0, 0.1, 20e6, 1e9) == pytest.approx(0.5, rel=1e-12)
    assert sdapd.expected_rate(0.1, 0.5, 0.0, 500e6) == pytest.approx(24385287.74964299, rel=1e-12)
    assert sdapd.eqe_from_photocurrent(169e-9, 196e-9, 1550.0) == pytest.approx(0.6897080163005543, rel=1e-12)


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        sdapd.eqe_from_photocurrent(1e-9, 0.0, 1550.0)
    with pytest.raises(ValueError):
        sdapd.DeviceParams.from_text("no_such_key = 1\n")
    with pytest.raises(OSError):
        sdapd.calibrate(sdapd.DeviceParams(), "/nonexistent/anchors.csv")


def test_device_text_round_trip():
    d = sdapd.DeviceParams()
    d.trap_fill_coeff_per_coulomb = 1.5e13
    e = sdapd.DeviceParams.from_text(d.to_text())
    assert e.trap_fill_coeff_per_coulomb == 1.5e13


def test_simulate_returns_arrays():
    c = sdapd.RunConfig()
    c.n_gates = 200_000
    c.seed = 5
    r = sdapd.simulate(c)
    n = len(r["gate_index"])
    assert n == r["summary"]["photon"] + r["summary"]["dark"] + r["summary"]["afterpulse"]
    assert r["gate_index"].dtype == np.int64
    assert np.all(np.diff(r["gate_index"]) >= 2)
    assert len(r["charge_c"]) == n
    again = sdapd.simulate(c)
    assert np.array_equal(r["t_in_gate_ps"], again["t_in_gate_ps"])


def test_quiet_run_is_empty():
    c = sdapd.RunConfig()
    c.illumination = False
    c.device.dark_rate_ref_hz = 0.0
    c.device.dark_floor_coeff_hz_per_v = 0.0
    c.n_gates = 100_000
    r = sdapd.simulate(c)
    assert len(r["gate_index"]) == 0


def test_dead_time_and_jitter():
    kept = sdapd.apply_dead_time(np.array([0, 5, 12]), np.array([0, 0, 0]), 1000, 10.0)
    assert list(kept["gate_index"]) == [0, 12]
    assert sdapd.jitter_rms(np.array([0, 2]), np.array([0, 100])) == 50.0


def test_characterize_and_sd_residual():
    c = sdapd.RunConfig()
    c.n_gates = 2_000_000
    r = sdapd.characterize(c, 10.0)
    assert 0.0 < r.spde.value < 1.0
    assert r.spde.sigma > 0.0
    g = sdapd.GateConfig()
    assert sdapd.self_difference_residual(g, 8, "trapezoid") == 0.0
    assert math.isfinite(sdapd.self_difference_residual(g))
