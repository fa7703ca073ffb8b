"""Independent reference values frozen into the C++ unit tests.

Run with `python3 tests/oracles/derive.py`; every number printed here appears
verbatim in a test.
"""
import math

from scipy import constants as k

# Breakdown line through (-50 C, 60.1 V) and (20 C, 67.2 V).
slope = (67.2 - 60.1) / 70.0
print("v_br(0 C)            ", 67.2 + slope * (0 - 20))
print("v_ex(62.2, 18, 20 C) ", 62.2 + 18 / 2 - 67.2)
print("v_dc for 9.5 V       ", 9.5 + 67.2 - 18 / 2)

# Unity-gain EQE: (I/P) * h c / (e lambda).
resp = k.e * 1550e-9 / (k.h * k.c)
print("unity responsivity   ", resp)
print("eqe(169 nA, 196 nW)  ", 169e-9 / 196e-9 / resp)

# Efficiency estimator inversion and the saturation law.
r = 20e6 * (1 - math.exp(-0.05))
print("r for eta=0.5        ", r)
print("rate(mu eta=0.05)    ", 500e6 * (1 - math.exp(-0.05)))

# Poisson thinning of the photon pulse.
print("click(0.1,0.69,0.8)  ", 1 - math.exp(-0.1 * 0.69 * 0.80))

# Non-paralysable dead time at 10 Mcps, 10 ns.
R, tau = 10e6, 10e-9
print("kept rate            ", R / (1 + R * tau), "loss", 1 - 1 / (1 + R * tau))

# De-trapping ratio with the shipped Arrhenius constant.
T0, T1 = 293.15, 223.15
print("tau(-50)/tau(20)     ", math.exp(1504 * (1 / T1 - 1 / T0)))

# Difference-of-exponentials pulse peak (rise 50 ps, fall 150 ps).
rise, fall = 50.0, 150.0
tp = math.log(fall / rise) * rise * fall / (fall - rise)
print("pulse peak time      ", tp, "shape", math.exp(-tp / fall) - math.exp(-tp / rise))
