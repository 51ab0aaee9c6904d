"""Annealed importance sampling with constant-rate schedules."""

from .annealing import AnnealingPath, DivergenceSpec, divergence_table, estimate_f_divergence
from .kernels import HmcConfig, RwmConfig, hmc_step, rwm_step
from .numerics import DegenerateWeightsError, RngStream, ess, logsumexp
from .sampler import (
    ParticleEnsemble,
    RunReport,
    resample_multinomial,
    resample_systematic,
    run_adaptive_ais,
    run_cr_ais,
    run_cr_smc,
    run_fixed_schedule_ais,
)
from .schedules import ScheduleState, constant_rate_update, heuristic_schedule, interpolate_schedule
from .targets import DensityModel, make_2d_benchmark, make_highdim_benchmark, make_standard_normal

__version__ = "0.1.0"

__all__ = [
    "AnnealingPath",
    "DivergenceSpec",
    "divergence_table",
    "estimate_f_divergence",
    "HmcConfig",
    "RwmConfig",
    "hmc_step",
    "rwm_step",
    "DegenerateWeightsError",
    "RngStream",
    "ess",
    "logsumexp",
    "ParticleEnsemble",
    "RunReport",
    "resample_multinomial",
    "resample_systematic",
    "run_adaptive_ais",
    "run_cr_ais",
    "run_cr_smc",
    "run_fixed_schedule_ais",
    "ScheduleState",
    "constant_rate_update",
    "heuristic_schedule",
    "interpolate_schedule",
    "DensityModel",
    "make_2d_benchmark",
    "make_highdim_benchmark",
    "make_standard_normal",
]
