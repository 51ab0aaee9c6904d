"""Log-space primitives, self-normalized weighted statistics and seeded RNG streams.

Zero importance weights are encoded as ``-inf`` log-weights throughout.
All functions are pure; reductions run over the full vector in a fixed order
so results never depend on how the caller parallelised the work that
produced the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateWeightsError",
    "RngStream",
    "logsumexp",
    "normalized_weights",
    "self_normalized_mean",
    "self_normalized_variance",
    "ess",
    "log_ess",
    "rng_split",
]

_MASK64 = (1 << 64) - 1


class DegenerateWeightsError(ValueError):
    """Raised when every log-weight is ``-inf`` (or the weights are NaN)."""


def _as_logw(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        v = v.reshape(-1)
    if v.size == 0:
        raise ValueError("log-weight vector must be non-empty")
    if np.isnan(v).any():
        raise DegenerateWeightsError("log-weights contain NaN")
    return v


def logsumexp(v) -> float:
    """Return ``log(sum(exp(v)))`` using a max shift.

    Returns ``-inf`` iff every entry is ``-inf``.
    """
    v = _as_logw(v)
    m = v.max()
    if m == -np.inf:
        return -np.inf
    if m == np.inf:
        return np.inf
    return float(m + np.log(np.sum(np.exp(v - m))))


def normalized_weights(logw) -> np.ndarray:
    """Self-normalized weights ``exp(logw - logsumexp(logw))``."""
    logw = _as_logw(logw)
    lse = logsumexp(logw)
    if not np.isfinite(lse):
        raise DegenerateWeightsError("no finite log-weight to normalize")
    return np.exp(logw - lse)


def _check_lengths(logw: np.ndarray, h) -> np.ndarray:
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.shape != logw.shape:
        raise ValueError(f"length mismatch: {logw.size} weights vs {h.size} values")
    return h


def self_normalized_mean(logw, h) -> float:
    """Weighted mean ``sum_j W_j h_j`` with normalized weights ``W``.

    Entries with zero weight never contribute, even if ``h_j`` is not finite.
    """
    logw = _as_logw(logw)
    h = _check_lengths(logw, h)
    w = normalized_weights(logw)
    live = w > 0
    return float(np.sum(w[live] * h[live]))


def self_normalized_variance(logw, h) -> float:
    """Weighted variance ``sum_j W_j (h_j - m)^2`` around the weighted mean."""
    logw = _as_logw(logw)
    h = _check_lengths(logw, h)
    w = normalized_weights(logw)
    live = w > 0
    w, h = w[live], h[live]
    m = np.sum(w * h)
    return float(max(np.sum(w * (h - m) ** 2), 0.0))


def log_ess(logw) -> float:
    """Log of the Kong effective sample size, ``2 lse(logw) - lse(2 logw)``."""
    logw = _as_logw(logw)
    lse = logsumexp(logw)
    if not np.isfinite(lse):
        raise DegenerateWeightsError("effective sample size undefined for all-zero weights")
    # shift first so 2*logw cannot overflow
    shifted = logw - lse
    return float(-logsumexp(2.0 * shifted))


def ess(logw) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``, in ``[1, N]``."""
    n = _as_logw(logw).size
    return float(min(max(np.exp(log_ess(logw)), 1.0), n))


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Streams are backed by the counter-based Philox generator, keyed through
    ``numpy.random.SeedSequence``, so distinct ids give independent streams.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed & _MASK64, self.stream_id & _MASK64])
        return np.random.Generator(np.random.Philox(ss))

    def split(self, child_index: int) -> "RngStream":
        return rng_split(self, child_index)


def rng_split(parent: RngStream, child_index: int) -> RngStream:
    """Deterministically derive a child stream from ``parent``."""
    if child_index < 0:
        raise ValueError("child_index must be non-negative")
    ss = np.random.SeedSequence(
        [parent.seed & _MASK64, parent.stream_id & _MASK64, child_index & _MASK64, 0x5EED]
    )
    child_id = int(ss.generate_state(1, dtype=np.uint64)[0])
    return RngStream(parent.seed, child_id)
