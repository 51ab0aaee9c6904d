import math

import numpy as np
import pytest

from crais.kernels import CHUNK_ROWS, HmcConfig, RwmConfig, hmc_move, hmc_step, rwm_move, rwm_step
from crais.numerics import RngStream


def std_normal_logp(x):
    return -0.5 * np.sum(x**2, axis=-1)


def std_normal_grad(x):
    return -x


def std_normal_energy(x):
    return std_normal_logp(x), -x


def test_config_validation():
    with pytest.raises(ValueError):
        HmcConfig(step_size=-0.1)
    with pytest.raises(ValueError):
        HmcConfig(n_leapfrog=0)
    with pytest.raises(ValueError):
        RwmConfig(proposal_sd=-1.0)
    assert HmcConfig(n_leapfrog=5).evals_per_particle == 6


def test_zero_step_is_identity():
    z = np.array([0.3, -1.2])
    z2, acc = hmc_step(z, std_normal_logp, std_normal_grad, HmcConfig(0.0, 3), RngStream(0))
    np.testing.assert_array_equal(z2, z)
    assert acc is True


def test_flat_density_drifts_by_momentum():
    z = np.zeros((4, 3))
    eps = 0.1
    flat = lambda x: (np.zeros(x.shape[0]), np.zeros_like(x))
    rng = RngStream(5)
    z2, acc = hmc_move(z, flat, HmcConfig(eps, 1), rng)
    p = rng.generator().standard_normal((4, 3))
    assert acc.all()
    np.testing.assert_allclose(z2, z + eps * p, rtol=0, atol=1e-15)


def test_small_step_acceptance():
    z = np.array([0.5])
    acc_count = 0
    root = RngStream(1)
    for i in range(10_000):
        z, acc = hmc_step(z, std_normal_logp, std_normal_grad, HmcConfig(0.01, 1), root.split(i))
        acc_count += acc
    assert acc_count / 10_000 > 0.99


@pytest.mark.parametrize("kernel", ["hmc", "rwm"])
def test_invariance_of_standard_normal(kernel):
    n = 10_000
    root = RngStream(2)
    z = root.split(0).generator().standard_normal((n, 1))
    for i in range(10):
        if kernel == "hmc":
            z, _ = hmc_move(z, std_normal_energy, HmcConfig(0.5, 1), root.split(i + 1))
        else:
            z, _ = rwm_move(z, std_normal_logp, RwmConfig(0.5), root.split(i + 1))
    assert abs(z.mean()) < 4 / math.sqrt(n)
    assert abs(z.var() - 1.0) < 4 * math.sqrt(2.0 / n)


def test_rejected_rows_unchanged():
    z = np.random.default_rng(0).standard_normal((500, 2)) * 3
    z2, acc = hmc_move(z, std_normal_energy, HmcConfig(2.5, 3), RngStream(3))
    assert (~acc).any() and acc.any()
    np.testing.assert_array_equal(z2[~acc], z[~acc])


@pytest.mark.parametrize("workers", [2, 3, 8])
def test_worker_count_bit_identical(workers):
    n = 3 * CHUNK_ROWS + 17
    z = np.random.default_rng(0).standard_normal((n, 4))
    ref, acc_ref = hmc_move(z, std_normal_energy, HmcConfig(0.5, 3), RngStream(9), workers=1)
    got, acc = hmc_move(z, std_normal_energy, HmcConfig(0.5, 3), RngStream(9), workers=workers)
    np.testing.assert_array_equal(got, ref)
    np.testing.assert_array_equal(acc, acc_ref)
    ref, _ = rwm_move(z, std_normal_logp, RwmConfig(0.7), RngStream(9), workers=1)
    got, _ = rwm_move(z, std_normal_logp, RwmConfig(0.7), RngStream(9), workers=workers)
    np.testing.assert_array_equal(got, ref)


def test_fixed_stream_deterministic():
    z = np.random.default_rng(0).standard_normal((64, 2))
    a, _ = hmc_move(z, std_normal_energy, HmcConfig(), RngStream(4).split(2))
    b, _ = hmc_move(z, std_normal_energy, HmcConfig(), RngStream(4).split(2))
    np.testing.assert_array_equal(a, b)


def test_nonfinite_start_raises():
    with pytest.raises(FloatingPointError):
        hmc_step(np.array([0.0]), lambda x: np.full(x.shape[0], -np.inf), std_normal_grad, HmcConfig(), RngStream(0))
    with pytest.raises(FloatingPointError):
        rwm_step(np.array([0.0]), lambda x: np.full(x.shape[0], np.nan), 0.5, RngStream(0))


def test_nonfinite_proposal_rejected():
    def logp(x):
        return np.where(x[:, 0] < 1.0, -0.5 * x[:, 0] ** 2, -np.inf)

    def energy(x):
        return logp(x), -x

    z = np.full((2000, 1), 0.9)
    z2, acc = hmc_move(z, energy, HmcConfig(1.0, 1), RngStream(0))
    assert np.all(z2[:, 0] < 1.0)
    assert not acc.all()
    z3, acc3 = rwm_move(z, logp, RwmConfig(1.0), RngStream(0))
    assert np.all(z3[:, 0] < 1.0) and not acc3.all()


def test_rwm_null_proposal():
    z = np.array([1.0, 2.0])
    z2, acc = rwm_step(z, std_normal_logp, 0.0, RngStream(0))
    np.testing.assert_array_equal(z2, z)
    assert acc is True


def test_rwm_mirror_symmetry():
    # symmetric density: acceptance from z and from -z must have equal probability
    n = 20_000
    z = np.vstack([np.full((n, 2), [0.8, -0.3]), np.full((n, 2), [-0.8, 0.3])])
    _, acc = rwm_move(z, std_normal_logp, RwmConfig(1.0), RngStream(11))
    p1, p2 = acc[:n].mean(), acc[n:].mean()
    se = math.sqrt(p1 * (1 - p1) / n + p2 * (1 - p2) / n)
    assert abs(p1 - p2) < 4 * se
