"""Unnormalized densities used as annealing endpoints.

Every model evaluates a batch of points at once: ``z`` of shape ``(n, d)``
gives ``(n,)`` log-densities and ``(n, d)`` gradients, while a single point of
shape ``(d,)`` gives a scalar and a ``(d,)`` gradient.

Parameterizations of the 2D benchmarks (fixed here so runs are reproducible):

* ``narrow_gaussian``: N(0, 0.01 I).
* ``ring``: radial Gaussian shell, ``log p = -(|z| - 5)^2 / (2 * 0.5^2)``.
* ``bananas``: equal mixture of two mirrored banana-warped Gaussians,
  ``z1 ~ N(0, 1)``, ``z2 | z1 ~ N(s * (0.5 z1^2 + 1.5), 0.4^2)`` with
  ``s = +1`` and ``s = -1``, so the two arms open away from each other. The warp is volume preserving, so log Z = 0.
* ``mixture4``: equal mixture of unit-variance Gaussians at ``(+-2, +-2)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .numerics import RngStream

__all__ = [
    "DensityModel",
    "LogisticRegressionData",
    "make_gaussian",
    "make_standard_normal",
    "make_gaussian_mixture",
    "make_laplace",
    "make_student_t",
    "make_2d_benchmark",
    "make_highdim_benchmark",
    "BENCHMARKS_2D",
    "load_logistic_dataset",
    "make_logistic_posterior",
    "synthetic_logistic_path",
]

LOG_2PI = math.log(2.0 * math.pi)


def _batched(fn):
    def wrapper(z):
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            return fn(z[None, :])[0]
        return fn(z)

    return wrapper


@dataclass(frozen=True)
class DensityModel:
    """An unnormalized density with its gradient and, optionally, its log Z."""

    dim: int
    log_density_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    grad_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    true_log_z: Optional[float] = None
    sample_fn: Optional[Callable[[np.random.Generator, int], np.ndarray]] = field(
        default=None, repr=False
    )
    name: str = ""

    def log_density(self, z):
        return _batched(self.log_density_fn)(z)

    def grad_log_density(self, z):
        return _batched(self.grad_fn)(z)

    @property
    def is_samplable(self) -> bool:
        return self.sample_fn is not None

    def sample(self, rng, n: int) -> np.ndarray:
        """Draw ``n`` exact samples; ``rng`` is an RngStream or numpy Generator."""
        if self.sample_fn is None:
            raise TypeError(f"model {self.name!r} cannot be sampled directly")
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        return self.sample_fn(gen, n)


def make_gaussian(mean, diag_var, normalized: bool = False, name: str = "gaussian") -> DensityModel:
    """Diagonal Gaussian.

    By default the normalizer is left out of the density and reported as
    ``true_log_z``. With ``normalized=True`` the density is a proper pdf and
    ``true_log_z`` is 0.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.atleast_1d(np.asarray(diag_var, dtype=float))
    if var.shape != mean.shape:
        var = np.broadcast_to(var, mean.shape).copy()
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        raise ValueError("Gaussian variances must be positive and finite")
    log_norm = float(0.5 * np.sum(np.log(2.0 * np.pi * var)))
    offset = log_norm if normalized else 0.0
    sd = np.sqrt(var)

    def logp(z):
        return -0.5 * np.sum((z - mean) ** 2 / var, axis=1) - offset

    def grad(z):
        return -(z - mean) / var

    def sample(gen, n):
        return mean + sd * gen.standard_normal((n, mean.size))

    return DensityModel(
        dim=mean.size,
        log_density_fn=logp,
        grad_fn=grad,
        true_log_z=0.0 if normalized else log_norm,
        sample_fn=sample,
        name=name,
    )


def make_standard_normal(dim: int) -> DensityModel:
    """Normalized N(0, I), the default annealing proposal."""
    return make_gaussian(np.zeros(dim), np.ones(dim), normalized=True, name="standard_normal")


def make_gaussian_mixture(weights, means, diag_vars, name: str = "mixture") -> DensityModel:
    """Mixture of normalized diagonal Gaussians, so ``true_log_z == 0``."""
    weights = np.asarray(weights, dtype=float).reshape(-1)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    if weights.size == 0 or means.shape[0] == 0:
        raise ValueError("mixture needs at least one component")
    diag_vars = np.broadcast_to(np.asarray(diag_vars, dtype=float), means.shape).copy()
    if means.shape[0] != weights.size:
        raise ValueError("one mean row per mixture weight required")
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-10:
        raise ValueError("mixture weights must be positive and sum to 1")
    if np.any(diag_vars <= 0):
        raise ValueError("mixture variances must be positive")
    k, d = means.shape
    log_w = np.log(weights) - 0.5 * np.sum(np.log(2.0 * np.pi * diag_vars), axis=1)
    sds = np.sqrt(diag_vars)

    def comp_logp(z):
        # (n, k)
        diff = z[:, None, :] - means[None, :, :]
        return log_w[None, :] - 0.5 * np.sum(diff**2 / diag_vars[None, :, :], axis=2)

    def logp(z):
        lc = comp_logp(z)
        m = lc.max(axis=1, keepdims=True)
        return (m + np.log(np.sum(np.exp(lc - m), axis=1, keepdims=True)))[:, 0]

    def grad(z):
        lc = comp_logp(z)
        resp = np.exp(lc - lc.max(axis=1, keepdims=True))
        resp /= resp.sum(axis=1, keepdims=True)
        comp_grad = -(z[:, None, :] - means[None, :, :]) / diag_vars[None, :, :]
        return np.einsum("nk,nkd->nd", resp, comp_grad)

    def sample(gen, n):
        idx = gen.choice(k, size=n, p=weights)
        return means[idx] + sds[idx] * gen.standard_normal((n, d))

    return DensityModel(d, logp, grad, 0.0, sample, name)


def make_laplace(scale: float, dim: int) -> DensityModel:
    """Factorized Laplace, ``log p = -sum |z_k| / b``."""
    if not scale > 0 or dim < 1:
        raise ValueError("Laplace needs scale > 0 and dim >= 1")

    def logp(z):
        return -np.sum(np.abs(z), axis=1) / scale

    def grad(z):
        return -np.sign(z) / scale

    def sample(gen, n):
        return gen.laplace(0.0, scale, size=(n, dim))

    return DensityModel(dim, logp, grad, dim * math.log(2.0 * scale), sample, "laplace")


def make_student_t(dof: float, dim: int) -> DensityModel:
    """Factorized Student-t, ``log p = -(nu+1)/2 sum log(1 + z_k^2 / nu)``."""
    if not dof > 0 or dim < 1:
        raise ValueError("Student-t needs dof > 0 and dim >= 1")
    nu = float(dof)
    per_dim = math.lgamma(nu / 2.0) + 0.5 * math.log(nu * math.pi) - math.lgamma((nu + 1.0) / 2.0)

    def logp(z):
        return -0.5 * (nu + 1.0) * np.sum(np.log1p(z**2 / nu), axis=1)

    def grad(z):
        return -(nu + 1.0) * z / (nu + z**2)

    def sample(gen, n):
        return gen.standard_t(nu, size=(n, dim))

    return DensityModel(dim, logp, grad, dim * per_dim, sample, "student_t")


def _ring(radius: float = 5.0, width: float = 0.5) -> DensityModel:
    s2 = width**2
    # int_0^inf r exp(-(r-R)^2 / 2s^2) dr, times 2*pi
    radial = s2 * math.exp(-(radius**2) / (2 * s2)) + radius * width * math.sqrt(
        2 * math.pi
    ) * 0.5 * (1.0 + math.erf(radius / (width * math.sqrt(2.0))))
    log_z = math.log(2 * math.pi * radial)

    def logp(z):
        r = np.sqrt(np.sum(z**2, axis=1))
        return -((r - radius) ** 2) / (2 * s2)

    def grad(z):
        r = np.sqrt(np.sum(z**2, axis=1))
        safe = np.where(r > 0, r, 1.0)
        scale = np.where(r > 0, -(r - radius) / (s2 * safe), 0.0)
        return scale[:, None] * z

    def sample(gen, n):
        # rejection from the radial density r * N(r; R, s^2) on r > 0
        out = np.empty(0)
        bound = radius + 8 * width
        while out.size < n:
            r = radius + width * gen.standard_normal(2 * n)
            keep = (r > 0) & (gen.uniform(size=2 * n) * bound < r)
            out = np.concatenate([out, r[keep]])
        r = out[:n]
        theta = gen.uniform(0, 2 * math.pi, size=n)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)

    return DensityModel(2, logp, grad, log_z, sample, "ring")


def _bananas(sd1: float = 1.0, sd2: float = 0.4, curv: float = 0.5, shift: float = 1.5) -> DensityModel:
    signs = np.array([1.0, -1.0])
    log_c = math.log(0.5) - LOG_2PI - math.log(sd1 * sd2)

    def comp(z):
        x1, x2 = z[:, :1], z[:, 1:2]
        m = signs[None, :] * (curv * x1**2 + shift)
        e = (x2 - m) / sd2
        return log_c - 0.5 * (x1 / sd1) ** 2 - 0.5 * e**2, e

    def logp(z):
        lc, _ = comp(z)
        return np.logaddexp(lc[:, 0], lc[:, 1])

    def grad(z):
        lc, e = comp(z)
        resp = np.exp(lc - lc.max(axis=1, keepdims=True))
        resp /= resp.sum(axis=1, keepdims=True)
        x1 = z[:, :1]
        g1 = -x1 / sd1**2 + (e / sd2) * signs[None, :] * 2 * curv * x1
        g2 = -e / sd2
        return np.stack([np.sum(resp * g1, axis=1), np.sum(resp * g2, axis=1)], axis=1)

    def sample(gen, n):
        s = signs[gen.integers(0, 2, size=n)]
        x1 = sd1 * gen.standard_normal(n)
        x2 = s * (curv * x1**2 + shift) + sd2 * gen.standard_normal(n)
        return np.stack([x1, x2], axis=1)

    return DensityModel(2, logp, grad, 0.0, sample, "bananas")


MIXTURE4_MEANS = np.array([[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]])


def _mixture4() -> DensityModel:
    return make_gaussian_mixture(np.full(4, 0.25), MIXTURE4_MEANS, np.ones((4, 2)), "mixture4")


BENCHMARKS_2D = {
    "narrow_gaussian": lambda: make_gaussian(np.zeros(2), np.full(2, 0.01), name="narrow_gaussian"),
    "ring": _ring,
    "bananas": _bananas,
    "mixture4": _mixture4,
}


def make_2d_benchmark(name: str) -> DensityModel:
    try:
        return BENCHMARKS_2D[name]()
    except KeyError:
        raise ValueError(f"unknown 2D benchmark {name!r}; choose from {sorted(BENCHMARKS_2D)}") from None


def make_highdim_benchmark(name: str, dim: int, seed: int = 0) -> DensityModel:
    """High-dimensional targets: ``normal`` N(0, 0.01 I), ``mixture`` (8 unit
    components, means uniform on [-3, 3]^d from a fixed seed), ``laplace``
    (b = 1) and ``student_t`` (nu = 3)."""
    if name == "normal":
        return make_gaussian(np.zeros(dim), np.full(dim, 0.01), name="normal")
    if name == "mixture":
        means = np.random.default_rng(seed).uniform(-3.0, 3.0, size=(8, dim))
        return make_gaussian_mixture(np.full(8, 1 / 8), means, np.ones((8, dim)), "mixture")
    if name == "laplace":
        return make_laplace(1.0, dim)
    if name == "student_t":
        return make_student_t(3.0, dim)
    raise ValueError(f"unknown high-dimensional benchmark {name!r}")


@dataclass(frozen=True)
class LogisticRegressionData:
    features: np.ndarray
    labels: np.ndarray
    standardized: bool = False

    @property
    def n_data(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_logistic_dataset(path, standardize: bool = True, add_bias: bool = False) -> LogisticRegressionData:
    """Read a CSV of numeric features with a trailing {0,1} label column.

    A first row containing any non-numeric cell is treated as a header.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(
            f"dataset not found at {path}: expected CSV with numeric feature "
            "columns and a final 0/1 label column"
        )
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    try:
        arr = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: could not parse numeric value ({exc})") from None
    except Exception:
        raise ValueError(f"{path}: rows have inconsistent column counts") from None
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"{path}: rows have inconsistent column counts")
    x, y = arr[:, :-1], arr[:, -1]
    if not np.all((y == 0) | (y == 1)):
        bad = sorted(set(y[(y != 0) & (y != 1)].tolist()))[:5]
        raise ValueError(f"{path}: labels must be 0 or 1, found {bad}")
    if standardize:
        sd = x.std(axis=0)
        if np.any(sd == 0):
            cols = np.flatnonzero(sd == 0).tolist()
            raise ValueError(f"{path}: cannot standardize constant column(s) {cols}")
        x = (x - x.mean(axis=0)) / sd
    if add_bias:
        x = np.hstack([x, np.ones((x.shape[0], 1))])
    return LogisticRegressionData(x, y.astype(int), standardize)


def synthetic_logistic_path() -> Path:
    """Path of the bundled 50-row synthetic logistic-regression dataset."""
    return Path(__file__).with_name("data") / "synthetic_logistic.csv"


def make_logistic_posterior(data: LogisticRegressionData, prior_var: float = 5.0) -> DensityModel:
    """Unnormalized posterior of Bayesian logistic regression (no intercept).

    The prior N(0, prior_var I) is kept normalized, so log Z is the log
    marginal likelihood.
    """
    if not prior_var > 0:
        raise ValueError("prior variance must be positive")
    x = np.asarray(data.features, dtype=float)
    y = np.asarray(data.labels, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError("features must be (n_data, d) with one label per row")
    d = x.shape[1]
    prior_norm = 0.5 * d * math.log(2 * math.pi * prior_var)

    def logp(z):
        if z.shape[1] != d:
            raise ValueError(f"expected points of dimension {d}, got {z.shape[1]}")
        a = np.einsum("nd,kd->kn", x, z)
        # y log s(a) + (1-y) log(1-s(a)) = y a - log(1 + e^a)
        loglik = np.sum(y[None, :] * a - np.logaddexp(0.0, a), axis=1)
        return loglik - 0.5 * np.sum(z**2, axis=1) / prior_var - prior_norm

    def grad(z):
        a = np.einsum("nd,kd->kn", x, z)
        resid = y[None, :] - 0.5 * (1.0 + np.tanh(0.5 * a))
        return np.einsum("kn,nd->kd", resid, x) - z / prior_var

    true_log_z = 0.0 if x.shape[0] == 0 else None
    return DensityModel(d, logp, grad, true_log_z, None, "logistic")
