"""History matching and Bayesian calibration over emulated simulator outputs."""

from .history import (
    HistoryMatchingResult,
    HMSchedule,
    NroyCloud,
    WaveRecord,
    emulator_moments,
    hm_wave,
    implausibility,
    run_history_matching,
    train_emulators,
)
from .mcmc import (
    Chain,
    calibration_log_posterior,
    ensemble_mcmc,
    log_likelihood,
    map_estimate,
    nearest_plausible,
    stretch_acceptance,
    stretch_sampler,
)
from .space import (
    C_FIXED_KPA,
    Observation,
    Parameter,
    ParameterPoint,
    ParameterSpace,
    alpha_space,
    lhs_design,
    maximin_select,
    sobol_design,
    table1_space,
)

__all__ = [
    "C_FIXED_KPA", "Chain", "HMSchedule", "HistoryMatchingResult", "NroyCloud", "Observation",
    "Parameter", "ParameterPoint", "ParameterSpace", "WaveRecord", "alpha_space",
    "calibration_log_posterior", "emulator_moments", "ensemble_mcmc", "hm_wave", "implausibility",
    "lhs_design", "log_likelihood", "map_estimate", "maximin_select", "nearest_plausible",
    "run_history_matching", "sobol_design", "stretch_acceptance", "stretch_sampler", "table1_space",
    "train_emulators",
]
