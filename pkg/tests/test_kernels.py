"""Ground-truth kernels: printed-formula values, symmetry, PSD, stationarity."""

import numpy as np
import pytest

from gnp.kernels import KernelSpec, kernel_matrix, kernel_diag


def k_scalar(spec, x, y):
    return kernel_matrix(spec, [x], [y])[0, 0]


def test_eq_zero_distance_is_variance():
    spec = KernelSpec("eq", {"variance": 1.0, "lengthscale": 1.0})
    assert k_scalar(spec, 0.0, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_eq_unit_distance():
    spec = KernelSpec("eq", {"variance": 1.0, "lengthscale": 1.0})
    # direct evaluation: exp(-0.5 * 1^2)
    assert k_scalar(spec, 0.0, 1.0) == pytest.approx(np.exp(-0.5), rel=1e-12)
    assert k_scalar(spec, 0.0, 1.0) == pytest.approx(0.606531, abs=1e-6)


def test_matern52_unit_distance():
    spec = KernelSpec.default("matern52")
    # direct evaluation of (1 + r + r^2/3) exp(-r) at r=1: (7/3) e^-1
    expected = (7.0 / 3.0) * np.exp(-1.0)
    assert k_scalar(spec, 0.0, 1.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.8583853, abs=1e-7)


def test_noisy_mixture_zero_distance_sums_variances():
    spec = KernelSpec.default("noisy_mixture")
    assert k_scalar(spec, 0.0, 0.0) == pytest.approx(2.0, abs=1e-15)


def test_weakly_periodic_at_one_period():
    spec = KernelSpec.default("weakly_periodic")
    # sin(pi * r / p) = sin(pi) = 0 at r = p: only the EQ factor remains
    expected = np.exp(-0.03125)
    assert k_scalar(spec, 0.0, 0.25) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.969233, abs=1e-6)


def test_weakly_periodic_product_structure():
    spec = KernelSpec.default("weakly_periodic")
    r = 0.37
    eq = np.exp(-0.5 * r**2)
    periodic = np.exp(-2.0 * np.sin(np.pi * r / 0.25) ** 2)
    assert k_scalar(spec, 0.1, 0.1 + r) == pytest.approx(eq * periodic, rel=1e-12)


@pytest.mark.parametrize("kind", ["eq", "matern52", "noisy_mixture", "weakly_periodic"])
def test_symmetry_exact(kind):
    rng = np.random.default_rng(5)
    spec = KernelSpec.default(kind)
    x = rng.uniform(-2, 2, 17)
    k = kernel_matrix(spec, x, x)
    np.testing.assert_array_equal(k, k.T)


@pytest.mark.parametrize("kind", ["eq", "matern52", "noisy_mixture", "weakly_periodic"])
def test_psd_on_random_inputs(kind):
    spec = KernelSpec.default(kind)
    for seed in range(30):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-2, 2, int(rng.integers(2, 21)))
        k = kernel_matrix(spec, x, x) + 1e-10 * np.eye(x.shape[0])
        assert np.linalg.eigvalsh(k).min() >= 0.0


@pytest.mark.parametrize("kind", ["eq", "matern52", "noisy_mixture", "weakly_periodic"])
def test_stationarity_under_shift(kind):
    rng = np.random.default_rng(9)
    spec = KernelSpec.default(kind)
    x = rng.uniform(-2, 2, 11)
    y = rng.uniform(-2, 2, 7)
    base = kernel_matrix(spec, x, y)
    shifted = kernel_matrix(spec, x + 1.37, y + 1.37)
    np.testing.assert_allclose(shifted, base, atol=1e-12)


def test_cross_matrix_shape_and_diag():
    spec = KernelSpec.default("noisy_mixture")
    k = kernel_matrix(spec, np.arange(3.0), np.arange(5.0))
    assert k.shape == (3, 5)
    np.testing.assert_allclose(kernel_diag(spec, np.arange(4.0)), 2.0)


def test_rejects_nonpositive_params():
    with pytest.raises(ValueError):
        KernelSpec("eq", {"variance": 0.0, "lengthscale": 1.0})
    with pytest.raises(ValueError):
        KernelSpec("eq", {"variance": 1.0, "lengthscale": -2.0})


def test_rejects_unknown_kind_and_params():
    with pytest.raises(ValueError):
        KernelSpec("brownian", {})
    with pytest.raises(ValueError):
        KernelSpec("eq", {"variance": 1.0, "lengthscale": 1.0, "period": 2.0})
    with pytest.raises(ValueError):
        KernelSpec.from_dict({"kind": "eq", "params": {}, "extra": 1})


def test_roundtrip_dict():
    spec = KernelSpec.default("weakly_periodic")
    assert KernelSpec.from_dict(spec.to_dict()) == spec
