"""Gated self-differencing InGaAs APD simulator."""

from ._core import (
    CharacterizationResult,
    ConfigError,
    DeviceParams,
    DomainError,
    Estimate,
    GateConfig,
    InfeasibleTarget,
    IoError,
    OpticalConfig,
    RunConfig,
    apply_dead_time,
    bias_search,
    breakdown_voltage,
    calibrate,
    characterize,
    dark_rate,
    dc_bias_for_excess,
    eqe_from_photocurrent,
    excess_voltage,
    expected_rate,
    jitter_rms,
    self_difference_residual,
    simulate,
    spde,
    spde_model,
)

CAUSES = ("photon", "dark", "afterpulse", "unlabeled")
