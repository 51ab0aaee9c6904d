import numpy as np
import pytest


def fd_grad(fn, z, h=1e-5):
    """Central finite differences of a scalar function at a single point."""
    z = np.asarray(z, dtype=float)
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (fn(z + e) - fn(z - e)) / (2 * h)
    return g


def grad_rel_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(analytic)), 1.0))


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
