"""Bridging densities between a proposal and a target, and the alpha-divergence table.

``alpha == 0`` selects the geometric path ``(1-t) log q0 + t log pi``; any
other alpha selects the power mean ``(t pi^a + (1-t) q0^a)^(1/a)``, which is
always evaluated through a two-term logsumexp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import logsumexp, self_normalized_mean
from .targets import DensityModel

__all__ = ["AnnealingPath", "DivergenceSpec", "divergence_table", "estimate_f_divergence", "log_u_ratio"]

T_EPS = 1e-12


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"annealing parameter must lie in [0, 1], got {t}")
    return t


@dataclass(frozen=True)
class AnnealingPath:
    proposal: DensityModel
    target: DensityModel
    alpha: float = 0.0

    def __post_init__(self):
        if self.proposal.dim != self.target.dim:
            raise ValueError(
                f"proposal dim {self.proposal.dim} != target dim {self.target.dim}"
            )

    @property
    def dim(self) -> int:
        return self.target.dim

    def log_bridge_parts(self, t: float, log_target, log_proposal):
        """Bridge log-density from precomputed endpoint log-densities."""
        t = _check_t(t)
        lt = np.asarray(log_target, dtype=float)
        lq = np.asarray(log_proposal, dtype=float)
        if t == 0.0:
            return lq.copy() if lq.ndim else float(lq)
        if t == 1.0:
            return lt.copy() if lt.ndim else float(lt)
        a = self.alpha
        # written as lq + correction so equal endpoints give lq bit-for-bit
        if a == 0.0:
            return lq + t * (lt - lq)
        tc = min(max(t, T_EPS), 1.0 - T_EPS)
        with np.errstate(invalid="ignore"):
            corr = np.logaddexp(math.log(tc) + a * (lt - lq), math.log1p(-tc)) / a
        out = np.where(lt == lq, lq, lq + corr)
        return out if out.ndim else float(out)

    def bridge_weights(self, t: float, log_target, log_proposal):
        """Gradient mixing weights ``(w_target, w_proposal)`` of the bridge at ``t``."""
        t = _check_t(t)
        lt = np.asarray(log_target, dtype=float)
        lq = np.asarray(log_proposal, dtype=float)
        a = self.alpha
        if t == 0.0 or t == 1.0 or a == 0.0:
            return np.full(lt.shape, t), np.full(lq.shape, 1.0 - t)
        tc = min(max(t, T_EPS), 1.0 - T_EPS)
        x = math.log(tc) + a * lt
        y = math.log1p(-tc) + a * lq
        m = np.maximum(x, y)
        ex, ey = np.exp(x - m), np.exp(y - m)
        s = ex + ey
        return ex / s, ey / s

    def log_bridge(self, t: float, z):
        return self.log_bridge_parts(
            t, self.target.log_density(z), self.proposal.log_density(z)
        )

    def grad_log_bridge(self, t: float, z):
        t = _check_t(t)
        z = np.asarray(z, dtype=float)
        gt = self.target.grad_log_density(z)
        gq = self.proposal.grad_log_density(z)
        if t == 0.0:
            return gq
        if t == 1.0:
            return gt
        if self.alpha == 0.0:
            return (1.0 - t) * gq + t * gt
        wt, wq = self.bridge_weights(t, self.target.log_density(z), self.proposal.log_density(z))
        return np.asarray(wt)[..., None] * gt + np.asarray(wq)[..., None] * gq

    def log_density_and_grad(self, t: float, z):
        """Joint evaluation used by the kernels: one pass over each endpoint."""
        z = np.asarray(z, dtype=float)
        lt = self.target.log_density(z)
        lq = self.proposal.log_density(z)
        gt = self.target.grad_log_density(z)
        gq = self.proposal.grad_log_density(z)
        wt, wq = self.bridge_weights(t, lt, lq)
        return (
            self.log_bridge_parts(t, lt, lq),
            np.asarray(wt)[..., None] * gt + np.asarray(wq)[..., None] * gq,
        )


@dataclass(frozen=True)
class DivergenceSpec:
    """An alpha-divergence: its generator ``f`` and ``g(u) = u f'(u) - f(u)``.

    ``g`` is shifted so that ``g(1) = 0`` for alpha not in {0, 1}; additive
    constants do not change the variance that drives the schedule.
    """

    alpha: float
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    # g evaluated directly from log u, avoids exp overflow for large |alpha log u|
    g_from_log: Callable[[np.ndarray], np.ndarray]
    f_from_log: Callable[[np.ndarray], np.ndarray]


def divergence_table(alpha: float) -> DivergenceSpec:
    a = float(alpha)
    if a == 1.0:
        return DivergenceSpec(
            a,
            f=lambda u: u * np.log(u),
            g=lambda u: np.asarray(u, dtype=float),
            g_from_log=np.exp,
            f_from_log=lambda lu: np.exp(lu) * lu,
        )
    if a == 0.0:
        return DivergenceSpec(
            a,
            f=lambda u: -np.log(u),
            g=lambda u: np.log(u) - 1.0,
            g_from_log=lambda lu: lu - 1.0,
            f_from_log=lambda lu: -np.asarray(lu, dtype=float),
        )
    return DivergenceSpec(
        a,
        f=lambda u: (u**a - a * u) / (a * (a - 1.0)) + 1.0 / a,
        g=lambda u: (u**a - 1.0) / a,
        g_from_log=lambda lu: np.expm1(a * lu) / a,
        f_from_log=lambda lu: (np.exp(a * lu) - a * np.exp(lu)) / (a * (a - 1.0)) + 1.0 / a,
    )


def log_u_ratio(logw, log_target, log_bridge):
    """Self-normalized log density ratio ``log u_j = log pi(z_j) - log q_t(z_j) - log r``.

    ``logw`` are importance weights of the particles for the bridge ``q_t``.
    Returns ``(log_u, log_r)`` where ``r`` estimates ``Z_pi / Z_qt``.
    """
    logw = np.asarray(logw, dtype=float)
    diff = np.asarray(log_target, dtype=float) - np.asarray(log_bridge, dtype=float)
    log_r = logsumexp(logw + diff) - logsumexp(logw)
    return diff - log_r, log_r


def estimate_f_divergence(spec: DivergenceSpec, logw, log_target, log_bridge) -> float:
    """Self-normalized Monte Carlo estimate of ``D_f(pi || q_t) = E_qt[f(u)]``."""
    log_u, _ = log_u_ratio(logw, log_target, log_bridge)
    return self_normalized_mean(logw, spec.f_from_log(log_u))
