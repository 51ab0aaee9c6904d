"""Annealing schedules: fixed heuristics, the constant-rate recursion and
search-based adaptive steps.

A schedule is the sequence ``tau_1 < ... < tau_M = 1``; the starting point
``tau_0 = 0`` is implicit everywhere except in :class:`ScheduleState`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .numerics import ess, logsumexp, normalized_weights, _as_logw

__all__ = [
    "ScheduleState",
    "TuningStats",
    "heuristic_schedule",
    "constant_rate_update",
    "cess",
    "adaptive_search_step",
    "interpolate_schedule",
    "check_schedule",
    "save_schedule_csv",
    "load_schedule_csv",
]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def heuristic_schedule(kind: str, M: int, eps: Optional[float] = None, c: float = 10.0) -> list[float]:
    """Linear ``i/M``, exponential ``1 - eps^i`` or sigmoidal ``sigma(c(i/M - 1/2))``.

    The exponential and sigmoidal forms are rescaled affinely so the schedule
    runs from exactly 0 to exactly 1. ``eps`` defaults to ``0.01 ** (1/M)``.
    """
    if M < 1:
        raise ValueError("schedule length M must be >= 1")
    i = np.arange(M + 1, dtype=float)
    if kind == "linear":
        t = i / M
    elif kind == "exponential":
        if eps is None:
            eps = 0.01 ** (1.0 / M)
        if not 0.0 < eps < 1.0:
            raise ValueError("exponential schedule needs 0 < eps < 1")
        t = -np.expm1(i * math.log(eps))
        t = t / t[-1]
    elif kind == "sigmoidal":
        if not c > 0:
            raise ValueError("sigmoidal schedule needs c > 0")
        s = _sigmoid(c * (i / M - 0.5))
        t = (s - s[0]) / (s[-1] - s[0])
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    t[-1] = 1.0
    return t[1:].tolist()


@dataclass(frozen=True)
class TuningStats:
    """Per-iteration statistics: ``log_r`` estimates ``log Z_pi - log Z_qt``,
    ``v`` is the weighted variance of ``g(u)``."""

    log_r: float
    v: float
    evals: int = 0

    @property
    def r(self) -> float:
        return math.exp(self.log_r)


@dataclass(frozen=True)
class ScheduleState:
    taus: tuple = (0.0,)
    log_beta: float = 0.0
    delta: float = 1.0 / 32
    max_step: float = 1.0 / 16
    min_step: float = 1e-6
    alpha: float = 0.0

    @property
    def beta(self) -> float:
        return math.exp(self.log_beta)

    @property
    def tau(self) -> float:
        return self.taus[-1]


def constant_rate_update(state: ScheduleState, stats: TuningStats) -> ScheduleState:
    """One step of ``beta <- beta * exp(-delta / (v r^alpha))``, ``tau = 1 - beta``.

    The tau increment is clamped into ``[min_step, max_step]``; when a clamp
    binds, beta is reset to ``1 - tau`` so the recursion continues from the
    bridge actually used.
    """
    if not stats.v > 0 or not math.isfinite(stats.v):
        raise ValueError(f"constant-rate update needs finite v > 0, got {stats.v}")
    # delta / (v r^alpha), evaluated in log space
    exponent = math.exp(math.log(state.delta) - math.log(stats.v) - state.alpha * stats.log_r)
    log_beta = state.log_beta - exponent
    tau_prop = -math.expm1(log_beta)
    tau_last = state.tau
    step = tau_prop - tau_last
    clamped = min(max(step, state.min_step), state.max_step)
    if clamped != step:
        tau_new = tau_last + clamped
        if tau_new >= 1.0:
            tau_new, log_beta = 1.0, -math.inf
        else:
            log_beta = math.log1p(-tau_new)
    else:
        tau_new = tau_prop
    return replace(state, taus=state.taus + (tau_new,), log_beta=log_beta)


def cess(logw, log_incr) -> float:
    """Conditional ESS ``N (sum W u)^2 / sum W u^2`` with ``u = exp(log_incr)``."""
    logw = _as_logw(logw)
    log_incr = np.asarray(log_incr, dtype=float).reshape(-1)
    if log_incr.shape != logw.shape:
        raise ValueError("log_incr must match logw in length")
    w = normalized_weights(logw)
    lw = np.log(w, where=w > 0, out=np.full_like(w, -np.inf))
    num = 2.0 * logsumexp(lw + log_incr)
    den = logsumexp(lw + 2.0 * log_incr)
    n = logw.size
    return float(min(n * math.exp(num - den), n))


def adaptive_search_step(
    current_t: float,
    logw,
    current_log_bridge,
    log_bridge_at: Callable[[float], np.ndarray],
    mode: str = "cess_ratio",
    target_ratio: float = 0.7,
    max_step: float = 1.0 / 128,
    tol: float = 1e-6,
    min_step: float = 1e-6,
    max_iter: int = 30,
) -> float:
    """Binary search for the next annealing parameter.

    ``log_bridge_at(t)`` returns the particles' bridge log-densities at ``t``;
    every call is one probe. Returns the largest probed ``t'`` in
    ``(current_t, current_t + max_step]`` whose ratio stays at or above
    ``target_ratio`` (the lower end of the final bracket), floored at
    ``current_t + min_step``.
    """
    if not 0.0 < target_ratio < 1.0:
        raise ValueError("target_ratio must lie in (0, 1)")
    if not max_step > 0:
        raise ValueError("max_step must be positive")
    if mode not in ("cess_ratio", "ess_ratio"):
        raise ValueError(f"unknown adaptive mode {mode!r}")
    logw = _as_logw(logw)
    current_log_bridge = np.asarray(current_log_bridge, dtype=float)
    n = logw.size
    base_ess = ess(logw) if mode == "ess_ratio" else None

    def ratio(t):
        incr = np.asarray(log_bridge_at(t), dtype=float) - current_log_bridge
        if mode == "cess_ratio":
            return cess(logw, incr) / n
        new = logw + incr
        if not np.isfinite(logsumexp(new)):
            return 0.0
        return ess(new) / base_ess

    hi = min(1.0, current_t + max_step)
    if ratio(hi) >= target_ratio:
        return hi
    lo = current_t
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        if ratio(mid) >= target_ratio:
            lo = mid
        else:
            hi = mid
    return min(max(lo, current_t + min_step), 1.0)


def check_schedule(taus: Sequence[float]) -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("schedule must be a non-empty 1-D sequence")
    if taus[0] <= 0.0 or np.any(np.diff(taus) <= 0):
        raise ValueError("schedule must be strictly increasing and start above 0")
    if taus[-1] != 1.0:
        raise ValueError(f"schedule must end at exactly 1, ends at {taus[-1]}")
    return taus


def interpolate_schedule(taus: Sequence[float], M: int) -> list[float]:
    """Stretch or shrink a schedule to ``M`` steps.

    ``tau`` is treated as a piecewise-linear function of the normalized index
    ``k/K`` (anchored at ``(0, 0)``) and resampled on the grid ``j/M``.
    """
    taus = check_schedule(taus)
    if M < 1:
        raise ValueError("M must be >= 1")
    k = taus.size
    if M == k:
        return taus.tolist()
    xp = np.arange(k + 1) / k
    fp = np.concatenate([[0.0], taus])
    out = np.interp(np.arange(1, M + 1) / M, xp, fp)
    out[-1] = 1.0
    # interpolating across gaps of a few ulps can produce ties; nudge them apart from the end
    for i in range(M - 2, -1, -1):
        if out[i] >= out[i + 1]:
            out[i] = np.nextafter(out[i + 1], 0.0)
    return check_schedule(out).tolist()


def save_schedule_csv(taus: Sequence[float], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        for t in taus:
            w.writerow([repr(float(t))])


def load_schedule_csv(path) -> list[float]:
    with Path(path).open(newline="") as fh:
        taus = [float(row[0]) for row in csv.reader(fh) if row]
    return check_schedule(taus).tolist()
