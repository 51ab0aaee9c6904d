"""Metropolis-corrected transition kernels (HMC and random-walk Metropolis).

Both kernels act on a batch of particles. All randomness for one call is drawn
up front from a single :class:`RngStream`, then particles are processed in
fixed-size row chunks, optionally on a thread pool. Because the chunking does
not depend on the number of workers, results are bit-identical for any
worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .numerics import RngStream

__all__ = ["HmcConfig", "RwmConfig", "hmc_step", "hmc_move", "rwm_step", "rwm_move", "CHUNK_ROWS"]

CHUNK_ROWS = 1024

Energy = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class HmcConfig:
    step_size: float = 0.5
    n_leapfrog: int = 1

    def __post_init__(self):
        if not self.step_size >= 0:
            raise ValueError("HMC step size must be non-negative")
        if self.n_leapfrog < 1:
            raise ValueError("HMC needs at least one leapfrog step")

    @property
    def evals_per_particle(self) -> int:
        """Target queries per particle per move: the start point plus each leapfrog point."""
        return self.n_leapfrog + 1


@dataclass(frozen=True)
class RwmConfig:
    proposal_sd: float = 0.5

    def __post_init__(self):
        if not self.proposal_sd >= 0:
            raise ValueError("proposal_sd must be non-negative")

    @property
    def evals_per_particle(self) -> int:
        return 2


def _run_chunked(fn, n: int, workers: int):
    bounds = [(s, min(s + CHUNK_ROWS, n)) for s in range(0, n, CHUNK_ROWS)]
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    z = np.concatenate([p[0] for p in parts], axis=0)
    acc = np.concatenate([p[1] for p in parts], axis=0)
    return z, acc


def _hmc_chunk(z, energy: Energy, momentum, log_u, step_size: float, n_leapfrog: int):
    lp0, g0 = energy(z)
    if not np.all(np.isfinite(lp0)):
        raise FloatingPointError("HMC started from a point with non-finite log-density")
    eps = step_size
    with np.errstate(all="ignore"):
        p = momentum + 0.5 * eps * g0
        x = z
        for l in range(n_leapfrog):
            x = x + eps * p
            lp, g = energy(x)
            if l < n_leapfrog - 1:
                p = p + eps * g
        p = p + 0.5 * eps * g
        log_accept = (
            lp - lp0 - 0.5 * np.sum(p**2, axis=1) + 0.5 * np.sum(momentum**2, axis=1)
        )
        ok = np.isfinite(log_accept) & np.all(np.isfinite(x), axis=1)
        accept = ok & (log_u < np.where(ok, log_accept, -np.inf))
    return np.where(accept[:, None], x, z), accept


def hmc_move(z, energy: Energy, cfg: HmcConfig, rng: RngStream, workers: int = 1):
    """HMC transition for a batch ``z`` of shape ``(n, d)``.

    ``energy(x)`` returns ``(log_density, grad_log_density)`` for a batch.
    Returns ``(z_new, accepted)``; rejected rows are returned unchanged.
    """
    z = np.asarray(z, dtype=float)
    n, d = z.shape
    gen = rng.generator()
    momentum = gen.standard_normal((n, d))
    log_u = np.log(gen.random(n))

    def chunk(a, b):
        return _hmc_chunk(z[a:b], energy, momentum[a:b], log_u[a:b], cfg.step_size, cfg.n_leapfrog)

    return _run_chunked(chunk, n, workers)


def hmc_step(z, log_density, grad, cfg: HmcConfig, rng: RngStream, workers: int = 1):
    """One HMC proposal (``cfg.n_leapfrog`` leapfrog steps) with Metropolis correction.

    Accepts a single point ``(d,)`` or a batch ``(n, d)``; returns the new
    point(s) and the acceptance flag(s).
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zb = z[None, :] if single else z

    def energy(x):
        return np.asarray(log_density(x), dtype=float), np.asarray(grad(x), dtype=float)

    out, acc = hmc_move(zb, energy, cfg, rng, workers)
    if single:
        return out[0], bool(acc[0])
    return out, acc


def _rwm_chunk(z, log_density, noise, log_u, sd: float):
    lp0 = np.asarray(log_density(z), dtype=float)
    if not np.all(np.isfinite(lp0)):
        raise FloatingPointError("random-walk Metropolis started from a non-finite log-density")
    with np.errstate(all="ignore"):
        x = z + sd * noise
        lp = np.asarray(log_density(x), dtype=float)
        log_accept = lp - lp0
        ok = np.isfinite(log_accept)
        accept = ok & (log_u < np.where(ok, log_accept, -np.inf))
    return np.where(accept[:, None], x, z), accept


def rwm_move(z, log_density, cfg: RwmConfig, rng: RngStream, workers: int = 1):
    z = np.asarray(z, dtype=float)
    n, d = z.shape
    gen = rng.generator()
    noise = gen.standard_normal((n, d))
    log_u = np.log(gen.random(n))

    def chunk(a, b):
        return _rwm_chunk(z[a:b], log_density, noise[a:b], log_u[a:b], cfg.proposal_sd)

    return _run_chunked(chunk, n, workers)


def rwm_step(z, log_density, proposal_sd: float, rng: RngStream, workers: int = 1):
    """Gaussian random-walk Metropolis step for a point or a batch."""
    cfg = RwmConfig(proposal_sd)
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    out, acc = rwm_move(z[None, :] if single else z, log_density, cfg, rng, workers)
    if single:
        return out[0], bool(acc[0])
    return out, acc
