import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastsmooth.bandwidth import cv_fit
from fastsmooth.config import RunConfig
from fastsmooth.errors import InputError, UnidentifiableVarianceError
from fastsmooth.gridding import make_grid
from fastsmooth.kernels import KernelSpec
from fastsmooth.poly import fit_single_bandwidth
from fastsmooth.variance import (
    confidence_interval,
    fit_variance_direct,
    fit_variance_log,
    kappa_hat,
    squared_residuals,
    z_quantile,
)
from oracles import mean_log_chisq1, normal_quantile_bisect

LL = RunConfig(order=1)


def test_squared_residuals_examples():
    np.testing.assert_array_equal(squared_residuals([1.0, 2.0], [0.0, 4.0]), [1.0, 4.0])
    np.testing.assert_array_equal(squared_residuals([3 + 4j], [0j]), [25.0])
    with pytest.raises(InputError):
        squared_residuals([1.0], [1.0, 2.0])


def test_kappa_examples():
    assert kappa_hat([1.0, 1.0], [0.0, 0.0]) == 1.0
    assert kappa_hat([2.0, 4.0], [math.log(2), math.log(4)]) == pytest.approx(1.0)
    with pytest.raises(UnidentifiableVarianceError):
        kappa_hat([0.0, 0.0], [0.0, 0.0])


@given(st.floats(0.01, 100))
def test_kappa_homogeneity(c):
    r = np.array([0.5, 1.5, 2.0])
    nu = np.array([0.1, -0.2, 0.3])
    assert kappa_hat(c * r, nu) == pytest.approx(kappa_hat(r, nu) / c, rel=1e-12)


def test_kappa_for_gaussian_noise_matches_log_chisq_constant():
    # with nu = E[log r] exactly, kappa estimates exp(E[log eps^2])
    e = np.random.default_rng(0).standard_normal(200_000)
    k = kappa_hat(e * e, np.zeros_like(e) + mean_log_chisq1())
    target = math.exp(mean_log_chisq1())
    assert target == pytest.approx(0.2807, abs=5e-4)
    assert k == pytest.approx(target, rel=0.01)


def test_z_quantile_against_bisection():
    for p in (0.5, 0.6, 0.9, 0.975, 0.995, 1e-6):
        assert z_quantile(p) == pytest.approx(normal_quantile_bisect(p), abs=1e-10)
    assert z_quantile(0.5) == 0.0
    assert z_quantile(0.975) == pytest.approx(1.959963985, abs=1e-9)
    with pytest.raises(InputError):
        z_quantile(1.0)


@given(st.floats(1e-6, 0.5))
def test_z_quantile_symmetry(p):
    assert z_quantile(p) == pytest.approx(-z_quantile(1 - p), abs=1e-9)


def _homoscedastic(n=5000, sigma=2.0, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (n, 1))
    y = np.sin(4 * x[:, 0]) + sigma * rng.standard_normal(n)
    return x, y


def test_log_route_recovers_constant_variance():
    x, y = _homoscedastic()
    mean = cv_fit(x, y, "log:0.01:1:20", LL)
    r = squared_residuals(y, mean.fitted[:, 0])
    v = fit_variance_log(x, r, "log:0.01:1:20")
    inner = slice(len(v.sigma2) // 10, -len(v.sigma2) // 10)
    assert np.all(v.sigma2 > 0)
    assert np.max(np.abs(v.sigma2[inner] / 4.0 - 1)) < 0.10


def test_direct_route_reproduces_constant_residuals():
    x = np.random.default_rng(1).uniform(0, 1, (500, 1))
    v = fit_variance_direct(x, np.full(500, 0.7), "log:0.05:1:5")
    np.testing.assert_allclose(v.sigma2, 0.7, atol=1e-9)
    assert v.negative_count == 0


def test_direct_route_flags_negative_values():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 1, (400, 1))
    r = np.where(x[:, 0] < 0.5, 0.0, 10.0) * rng.random(400) ** 8
    v = fit_variance_direct(x, r, [0.02], RunConfig(order=2, calc_dof=False))
    assert v.negative_count == int(np.sum(v.sigma2 < 0))


def test_all_zero_residuals_raise():
    x = np.random.default_rng(3).uniform(0, 1, (100, 1))
    with pytest.raises(UnidentifiableVarianceError):
        fit_variance_log(x, np.zeros(100), "log:0.05:1:5")


def test_routes_agree_on_constant_variance():
    x, y = _homoscedastic(n=8000, seed=4)
    mean = cv_fit(x, y, "log:0.01:1:20", LL)
    r = squared_residuals(y, mean.fitted[:, 0])
    a = fit_variance_log(x, r, "log:0.01:1:20")
    b = fit_variance_direct(x, r, "log:0.01:1:20")
    inner = slice(len(a.sigma2) // 10, -len(a.sigma2) // 10)
    assert np.max(np.abs(a.sigma2[inner] / b.sigma2[inner] - 1)) < 0.20
    assert abs(np.mean(a.sigma2[inner]) / np.mean(b.sigma2[inner]) - 1) < 0.10


def test_variance_predict_matches_grid():
    x, y = _homoscedastic(n=2000, seed=5)
    r = squared_residuals(y, cv_fit(x, y, "log:0.05:1:8", LL).fitted[:, 0])
    v = fit_variance_log(x, r, "log:0.05:1:8")
    nodes = v.grid.nodes(original=True)
    np.testing.assert_allclose(v.predict(nodes), v.sigma2, rtol=1e-12)


# bands -------------------------------------------------------------------------------


def _mean_surface():
    x = np.random.default_rng(6).uniform(0, 1, (300, 1))
    g = make_grid(x, M=40)
    return fit_single_bandwidth(x, np.sin(3 * x[:, 0]), g, KernelSpec.make("gaussian", 0.2, 1), 1)


def test_zero_variance_band_collapses():
    m = _mean_surface()
    band = confidence_interval(m, 0.0)
    np.testing.assert_array_equal(band.lower, m.values)
    np.testing.assert_array_equal(band.upper, m.values)


def test_band_width_and_symmetry():
    m = _mean_surface()
    band = confidence_interval(m, 4.0, alpha=0.05)
    np.testing.assert_allclose(band.upper - band.lower, 2 * 2.0 * z_quantile(0.975))
    np.testing.assert_allclose(band.upper - m.values, m.values - band.lower, atol=1e-12)


def test_bands_nest_in_alpha():
    m = _mean_surface()
    v = np.linspace(0.1, 2, m.values.shape[1])
    narrow = confidence_interval(m, v, alpha=0.2)
    wide = confidence_interval(m, v, alpha=0.01)
    assert np.all(wide.lower <= narrow.lower) and np.all(wide.upper >= narrow.upper)


def test_negative_variance_needs_clamp():
    m = _mean_surface()
    v = np.ones(m.values.shape[1])
    v[3] = -0.1
    with pytest.raises(InputError):
        confidence_interval(m, v)
    band = confidence_interval(m, v, clamp=True)
    assert band.lower[0, 3] == band.upper[0, 3]
    with pytest.raises(InputError):
        confidence_interval(m, 1.0, alpha=1.5)


@pytest.mark.property
@settings(max_examples=20, deadline=None)
@given(st.floats(0.001, 0.999), st.floats(0, 100))
def test_property_band_contains_center(alpha, var):
    m = _mean_surface()
    band = confidence_interval(m, var, alpha=alpha)
    assert np.all(band.lower <= band.center) and np.all(band.center <= band.upper)
