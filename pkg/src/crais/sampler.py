"""Annealed importance sampling engines.

Four drivers share the same bookkeeping:

* :func:`run_fixed_schedule_ais` - AIS on a given schedule.
* :func:`run_cr_ais` - constant-rate tuning, the schedule is grown on the fly
  from the weighted variance of ``g(u)``.
* :func:`run_cr_smc` - the constant-rate loop plus adaptive resampling.
* :func:`run_adaptive_ais` - ESS/CESS bisection baseline.

``ParticleEnsemble.logw`` always holds the importance log-weight of each
particle for the *current* bridge ``q_t``:
``logw = log q_t(z) - log q0(z0) + sum of kernel ratios``, i.e. the running
AIS weight. At ``t = 1`` these are the final AIS log-weights.

Target-evaluation accounting (``RunReport.evals``):

* ``weights`` - one evaluation per particle per annealing step. All bridges
  and tuning statistics at a position are derived from that one evaluation.
* ``search`` - one evaluation per particle for every probed annealing value
  inside the adaptive bisection.
* ``kernel`` - one per particle per point the transition kernel queries
  (start point plus each leapfrog point for HMC).
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .annealing import AnnealingPath, DivergenceSpec, divergence_table, log_u_ratio
from .kernels import HmcConfig, RwmConfig, hmc_move, rwm_move
from .numerics import (
    DegenerateWeightsError,
    RngStream,
    ess,
    logsumexp,
    normalized_weights,
    self_normalized_mean,
    self_normalized_variance,
)
from .schedules import (
    ScheduleState,
    TuningStats,
    adaptive_search_step,
    cess,
    check_schedule,
    constant_rate_update,
    interpolate_schedule,
)

__all__ = [
    "ParticleEnsemble",
    "RunReport",
    "estimate_log_z",
    "resample_multinomial",
    "resample_systematic",
    "run_fixed_schedule_ais",
    "run_cr_ais",
    "run_cr_smc",
    "run_adaptive_ais",
    "TAU_DONE",
]

KernelConfig = Union[HmcConfig, RwmConfig]

# schedules reaching this value close straight to the target
TAU_DONE = 1.0 - 1e-9

# child stream indices under a run's root stream
_INIT, _MOVE, _RESAMPLE = 0, 1, 2
_TUNE, _TEST = 10, 11


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    logw: np.ndarray
    iteration: int = 0
    t_current: float = 0.0

    def __post_init__(self):
        if self.positions.shape[0] != self.logw.shape[0]:
            raise ValueError("one log-weight per particle required")

    @property
    def n(self) -> int:
        return self.logw.shape[0]


@dataclass
class RunReport:
    sampler: str
    seed: int
    n_particles: int
    log_z_lower: float
    log_z_is: float
    ess_final: float
    ess_pre_final: float
    M: int
    target_evals: int
    evals: dict
    schedule: list
    termination: str
    acceptance_rate: float
    tune_evals: int = 0
    divergence_trace: Optional[list] = None
    trace: list = field(default_factory=list)
    resample_events: list = field(default_factory=list)

    @property
    def comput(self) -> float:
        """Target evaluations per particle outside the kernel, the budget usually quoted for annealing methods."""
        return (self.evals.get("weights", 0) + self.evals.get("search", 0) + self.tune_evals) / self.n_particles

    def to_dict(self) -> dict:
        d = asdict(self)
        d["comput"] = self.comput
        return _json_safe(d)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def estimate_log_z(ensemble: ParticleEnsemble) -> tuple[float, float]:
    """Return ``(mean log w, log mean w)``: the stochastic lower bound and the
    importance-sampling estimate of ``log Z``."""
    logw = np.asarray(ensemble.logw, dtype=float)
    m = logw.max()
    if not np.isfinite(m) or np.isnan(logw).any():
        raise DegenerateWeightsError("cannot estimate log Z from degenerate weights")
    if np.isneginf(logw).any():
        lower = -math.inf
    else:
        lower = float(m + np.mean(logw - m))
    is_est = float(m + np.log(np.mean(np.exp(logw - m))))
    return lower, is_est


def _resample(ensemble: ParticleEnsemble, idx: np.ndarray) -> ParticleEnsemble:
    n = ensemble.n
    level = logsumexp(ensemble.logw) - math.log(n)
    return replace(
        ensemble,
        positions=ensemble.positions[idx],
        logw=np.full(n, level),
    )


def resample_multinomial(ensemble: ParticleEnsemble, rng: RngStream) -> ParticleEnsemble:
    """Draw N offspring with replacement proportionally to the weights.

    All new log-weights equal ``logsumexp(logw) - log N``, which keeps the
    running normalizing-constant estimate unchanged.
    """
    w = normalized_weights(ensemble.logw)
    counts = rng.generator().multinomial(ensemble.n, w / w.sum())
    return _resample(ensemble, np.repeat(np.arange(ensemble.n), counts))


def resample_systematic(ensemble: ParticleEnsemble, rng: RngStream) -> ParticleEnsemble:
    w = normalized_weights(ensemble.logw)
    n = ensemble.n
    u = (rng.generator().random() + np.arange(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return _resample(ensemble, np.searchsorted(cdf, u, side="right").clip(0, n - 1))


_RESAMPLERS = {"multinomial": resample_multinomial, "systematic": resample_systematic}


class _Run:
    """Mutable state shared by the drivers for a single run."""

    def __init__(self, path: AnnealingPath, n: int, rng: RngStream, kernel: KernelConfig, workers: int,
                 divergence: Optional[DivergenceSpec], resample_trigger: Optional[float] = None,
                 resampling: str = "multinomial"):
        if n < 1:
            raise ValueError("need at least one particle")
        if path.proposal.true_log_z is None or not path.proposal.is_samplable:
            raise ValueError("the proposal must be samplable with a known normalizer")
        if resample_trigger is not None and not 0.0 < resample_trigger <= 1.0:
            raise ValueError("resample_trigger must lie in (0, 1]")
        if resampling not in _RESAMPLERS:
            raise ValueError(f"unknown resampling scheme {resampling!r}")
        self.path = path
        self.n = n
        self.rng = rng
        self.kernel = kernel
        self.workers = workers
        self.div = divergence if divergence is not None else divergence_table(path.alpha)
        self.trigger = resample_trigger
        self.resampler = _RESAMPLERS[resampling]
        self.evals = {"weights": 0, "search": 0, "kernel": 0}
        self.trace: list[dict] = []
        self.resample_events: list[dict] = []
        self.accepted = 0
        self.proposed = 0
        self.ess_ref = float(n)
        self.n_moves = 0
        self.n_resamples = 0
        self.ess_pre = float(n)

        z = path.proposal.sample(rng.split(_INIT), n)
        # log q~_0(z) - log q_0(z) with q_0 normalized
        self.ens = ParticleEnsemble(z, np.full(n, float(path.proposal.true_log_z)))
        self.lt = self.lq = None
        self.evaluate()

    @contextmanager
    def guard(self):
        """Attach the trace collected so far to a numerical abort."""
        try:
            yield
        except (DegenerateWeightsError, FloatingPointError) as exc:
            exc.partial_trace = list(self.trace)
            raise

    def evaluate(self):
        z = self.ens.positions
        self.lt = np.asarray(self.path.target.log_density(z), dtype=float)
        self.lq = np.asarray(self.path.proposal.log_density(z), dtype=float)
        self.evals["weights"] += self.n

    def bridge(self, t: float) -> np.ndarray:
        return self.path.log_bridge_parts(t, self.lt, self.lq)

    def record(self, it: int, t: float, lb: np.ndarray, extra: Optional[dict] = None) -> dict:
        """Compute the tuning statistics at the current state and log a trace row."""
        logw = self.ens.logw
        with np.errstate(all="ignore"):
            log_u, log_r = log_u_ratio(logw, self.lt, lb)
            v = self_normalized_variance(logw, self.div.g_from_log(log_u))
            fdiv = self_normalized_mean(logw, self.div.f_from_log(log_u))
        row = {
            "iter": it,
            "tau": t,
            "beta": 1.0 - t,
            "r": math.exp(log_r) if log_r < 700 else math.inf,
            "log_r": log_r,
            "v": v,
            "ess": ess(logw),
            "f_div_estimate": fdiv,
        }
        if extra:
            row.update(extra)
        self.trace.append(row)
        return row

    def f_div(self, lb: np.ndarray) -> float:
        log_u, _ = log_u_ratio(self.ens.logw, self.lt, lb)
        with np.errstate(all="ignore"):
            return self_normalized_mean(self.ens.logw, self.div.f_from_log(log_u))

    def reweight(self, lb_new: np.ndarray, lb_old: np.ndarray, t_new: float):
        self.ess_pre = ess(self.ens.logw)
        logw = self.ens.logw + (lb_new - lb_old)
        if not np.isfinite(logsumexp(logw)):
            raise DegenerateWeightsError(
                f"all importance weights vanished when moving to t={t_new:.6g} "
                f"(iteration {self.ens.iteration})"
            )
        self.ens = replace(self.ens, logw=logw, t_current=t_new, iteration=self.ens.iteration + 1)

    def move(self, t: float):
        stream = self.rng.split(_MOVE).split(self.n_moves)
        self.n_moves += 1
        z = self.ens.positions
        if isinstance(self.kernel, HmcConfig):
            z_new, acc = hmc_move(z, lambda x: self.path.log_density_and_grad(t, x), self.kernel, stream,
                                  self.workers)
        else:
            z_new, acc = rwm_move(z, lambda x: self.path.log_bridge(t, x), self.kernel, stream, self.workers)
        self.evals["kernel"] += self.n * self.kernel.evals_per_particle
        self.accepted += int(acc.sum())
        self.proposed += acc.size
        self.ens = replace(self.ens, positions=z_new)

    def maybe_resample(self, it: int):
        if self.trigger is None:
            return
        cur = ess(self.ens.logw)
        if cur < self.trigger * self.ess_ref:
            before = logsumexp(self.ens.logw) - math.log(self.n)
            stream = self.rng.split(_RESAMPLE).split(self.n_resamples)
            self.n_resamples += 1
            self.ens = self.resampler(self.ens, stream)
            after = logsumexp(self.ens.logw) - math.log(self.n)
            self.ess_ref = ess(self.ens.logw)
            self.resample_events.append(
                {"iter": it, "ess_before": cur, "log_z_is_before": before, "log_z_is_after": after,
                 "ess_after": self.ess_ref}
            )

    def close(self, t: float):
        """Apply the last increment from the bridge at ``t`` to the target."""
        if t < 1.0:
            self.reweight(self.lt, self.bridge(t), 1.0)

    def report(self, sampler: str, schedule: Sequence[float], termination: str,
               divergence_trace: Optional[list] = None) -> RunReport:
        lower, is_est = estimate_log_z(self.ens)
        return RunReport(
            sampler=sampler,
            seed=self.rng.seed,
            n_particles=self.n,
            log_z_lower=lower,
            log_z_is=is_est,
            ess_final=ess(self.ens.logw),
            ess_pre_final=self.ess_pre,
            M=len(schedule),
            target_evals=int(sum(self.evals.values())),
            evals=dict(self.evals),
            schedule=[float(t) for t in schedule],
            termination=termination,
            acceptance_rate=self.accepted / self.proposed if self.proposed else 1.0,
            divergence_trace=divergence_trace,
            trace=self.trace,
            resample_events=self.resample_events,
        )


def run_fixed_schedule_ais(
    path: AnnealingPath,
    taus: Sequence[float],
    kernel: KernelConfig = HmcConfig(),
    n_particles: int = 1024,
    rng: RngStream = RngStream(0),
    workers: int = 1,
    divergence: Optional[DivergenceSpec] = None,
    resample_trigger: Optional[float] = None,
) -> tuple[ParticleEnsemble, RunReport]:
    """AIS along a fixed schedule ``taus`` (increasing, ending at 1).

    Step ``i`` reweights by ``q_{t_i}(z) / q_{t_{i-1}}(z)`` at the pre-move
    position and then moves the particles with a kernel invariant for
    ``q_{t_i}``. No move follows the final reweighting.
    """
    taus = check_schedule(taus)
    run = _Run(path, n_particles, rng, kernel, workers, divergence, resample_trigger)
    t_prev = 0.0
    with run.guard():
        for i, t in enumerate(taus):
            lb = run.bridge(t_prev)
            run.record(i, t_prev, lb)
            run.reweight(run.bridge(float(t)), lb, float(t))
            t_prev = float(t)
            if i == len(taus) - 1:
                break
            run.move(t_prev)
            run.maybe_resample(i)
            run.evaluate()
    return run.ens, run.report("fixed", taus.tolist(), "schedule")


def _cr_loop(run: _Run, state: ScheduleState, variance_threshold: float, max_steps: int,
             sampler: str) -> tuple[ParticleEnsemble, RunReport, ScheduleState]:
    termination = "max_steps"
    div_trace = []
    with run.guard():
        for i in range(max_steps):
            tau = state.tau
            lb = run.bridge(tau)
            row = run.record(i, tau, lb)
            row["beta"] = state.beta
            div_trace.append(row["f_div_estimate"])
            v = row["v"]
            if not math.isfinite(v):
                raise FloatingPointError(f"non-finite variance estimate at iteration {i} (tau={tau:.6g})")
            if v < variance_threshold:
                termination = "variance"
                break
            state = constant_rate_update(state, TuningStats(row["log_r"], v))
            tau_new = state.tau
            final = tau_new >= TAU_DONE
            if final:
                tau_new = 1.0
                state = replace(state, taus=state.taus[:-1] + (1.0,), log_beta=-math.inf)
            lb_new = run.bridge(tau_new)
            run.reweight(lb_new, lb, tau_new)
            # same particles on both sides, so the difference is not swamped by Monte Carlo noise
            row["f_div_decrement"] = row["f_div_estimate"] - run.f_div(lb_new)
            if final:
                termination = "tau"
                break
            run.move(tau_new)
            run.maybe_resample(i)
            run.evaluate()
        schedule = list(state.taus[1:])
        if termination != "tau":
            run.close(state.tau)
            schedule.append(1.0)
    return run.ens, run.report(sampler, schedule, termination, div_trace), state


def run_cr_ais(
    path: AnnealingPath,
    divergence: Optional[DivergenceSpec] = None,
    delta: float = 1.0 / 32,
    max_step: float = 1.0 / 16,
    min_step: float = 1e-6,
    variance_threshold: float = 1e-3,
    max_steps: int = 10_000,
    n_particles: int = 1024,
    rng: RngStream = RngStream(0),
    kernel: KernelConfig = HmcConfig(),
    workers: int = 1,
    two_phase: bool = False,
    test_steps: Optional[int] = None,
) -> tuple[ParticleEnsemble, RunReport, ScheduleState]:
    """Constant-rate AIS.

    Each iteration estimates ``r = Z_pi / Z_qt`` and the weighted variance
    ``v`` of ``g(u)`` from the current particles, advances
    ``beta <- beta exp(-delta / (v r^alpha))`` and moves to ``tau = 1 - beta``
    on the power-mean path. The loop stops when ``v`` drops below
    ``variance_threshold``, when ``tau`` reaches 1, or after ``max_steps``
    iterations, and then closes to the target.

    With ``two_phase=True`` the tuned schedule is frozen (and interpolated to
    ``test_steps`` if given) and a fresh particle set runs fixed-schedule AIS
    on it. The returned report then describes the test phase and
    ``tune_evals`` holds the tuning cost.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    tune_rng = rng.split(_TUNE) if two_phase else rng
    run = _Run(path, n_particles, tune_rng, kernel, workers, divergence)
    state = ScheduleState(delta=delta, max_step=max_step, min_step=min_step, alpha=path.alpha)
    ens, report, state = _cr_loop(run, state, variance_threshold, max_steps, "cr_ais")
    report.seed = rng.seed
    if not two_phase:
        return ens, report, state
    schedule = report.schedule if test_steps is None else interpolate_schedule(report.schedule, test_steps)
    ens_t, rep_t = run_fixed_schedule_ais(path, schedule, kernel, n_particles, rng.split(_TEST), workers, divergence)
    rep_t.sampler = "cr_ais_two_phase"
    rep_t.seed = rng.seed
    rep_t.tune_evals = report.target_evals
    rep_t.divergence_trace = report.divergence_trace
    return ens_t, rep_t, state


def run_cr_smc(
    path: AnnealingPath,
    divergence: Optional[DivergenceSpec] = None,
    delta: float = 1.0 / 32,
    resample_trigger: float = 0.9,
    max_step: float = 1.0 / 16,
    min_step: float = 1e-6,
    variance_threshold: float = 1e-3,
    max_steps: int = 10_000,
    n_particles: int = 1024,
    rng: RngStream = RngStream(0),
    kernel: KernelConfig = HmcConfig(),
    workers: int = 1,
    resampling: str = "multinomial",
) -> tuple[ParticleEnsemble, RunReport]:
    """Constant-rate SMC: :func:`run_cr_ais` with resampling whenever the ESS
    falls below ``resample_trigger`` times the ESS right after the previous
    resampling (initially N)."""
    run = _Run(path, n_particles, rng, kernel, workers, divergence, resample_trigger, resampling)
    state = ScheduleState(delta=delta, max_step=max_step, min_step=min_step, alpha=path.alpha)
    ens, report, _ = _cr_loop(run, state, variance_threshold, max_steps, "cr_smc")
    return ens, report


def run_adaptive_ais(
    path: AnnealingPath,
    mode: str = "cess_ratio",
    target_ratio: float = 0.7,
    max_step: float = 1.0 / 128,
    min_step: float = 1e-6,
    tol: float = 1e-6,
    max_steps: int = 10_000,
    kernel: KernelConfig = HmcConfig(),
    n_particles: int = 1024,
    rng: RngStream = RngStream(0),
    workers: int = 1,
    divergence: Optional[DivergenceSpec] = None,
    resample_trigger: Optional[float] = None,
) -> tuple[ParticleEnsemble, RunReport]:
    """Adaptive AIS: each next annealing value is found by bisection so the
    (C)ESS ratio of the incremental weights stays at ``target_ratio``."""
    run = _Run(path, n_particles, rng, kernel, workers, divergence, resample_trigger)
    taus: list[float] = []
    t = 0.0
    termination = "max_steps"
    with run.guard():
        for i in range(max_steps):
            lb = run.bridge(t)

            def probe(t_try):
                run.evals["search"] += run.n
                return run.bridge(t_try)

            t_new = adaptive_search_step(t, run.ens.logw, lb, probe, mode, target_ratio, max_step, tol, min_step)
            if t_new >= TAU_DONE:
                t_new = 1.0
            lb_new = run.bridge(t_new)
            incr = lb_new - lb
            if mode == "cess_ratio":
                achieved = cess(run.ens.logw, incr) / run.n
            else:
                achieved = ess(run.ens.logw + incr) / ess(run.ens.logw)
            run.record(i, t, lb, {"search_ratio": achieved, "capped": t_new >= min(1.0, t + max_step)})
            run.reweight(lb_new, lb, t_new)
            taus.append(t_new)
            t = t_new
            if t_new == 1.0:
                termination = "tau"
                break
            run.move(t)
            run.maybe_resample(i)
            run.evaluate()
        if termination != "tau":
            run.close(t)
            taus.append(1.0)
    return run.ens, run.report("adaptive", taus, termination)


