import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastsmooth.errors import DeconvolutionOverflowError, DegenerateDimensionError, GridRangeError, InputError
from fastsmooth.gridding import (
    GridSpec,
    SpreadConfig,
    ceil_root,
    grid_counts,
    make_grid,
    nextpow2,
    nufft_type1,
    spread_points,
)
from oracles import node_histogram, nudft_type1


def _phases(grid, x):
    return grid.to_phase(grid.to_index(x))


# nextpow2 / make_grid ---------------------------------------------------


@pytest.mark.parametrize("n, expected", [(100, 128), (128, 128), (1, 1), (129, 256), (2, 2), (3, 4)])
def test_nextpow2(n, expected):
    assert nextpow2(n) == expected


def test_nextpow2_rejects_zero():
    with pytest.raises(ValueError):
        nextpow2(0)


@given(st.integers(1, 10**7), st.integers(1, 4))
def test_ceil_root_is_exact(n, d):
    r = ceil_root(n, d)
    assert r**d >= n and (r - 1) ** d < n


def test_make_grid_default_count_2d():
    x = np.random.default_rng(0).random((8100, 2))
    g = make_grid(x)
    assert g.counts == (90, 90)


def test_make_grid_override_padding():
    x = np.linspace(0, 1, 50)[:, None]
    g = make_grid(x, M=100, pad=True, upsample=2)
    assert g.counts == (100,) and g.padded == (128,) and g.fft_shape == (256,)
    g1 = make_grid(x, M=100, pad=False, upsample=1)
    assert g1.padded == (100,) and g1.fft_shape == (100,)


def test_make_grid_dth_root_1d():
    # d-th root with d = 1 gives one node per sample
    x = np.random.default_rng(1).random(1000)
    assert make_grid(x).counts == (1000,)


def test_make_grid_scale_is_sample_std():
    x = np.random.default_rng(2).normal(3, 5, size=(500, 2))
    g = make_grid(x, M=20)
    np.testing.assert_allclose(g.scale, x.std(axis=0, ddof=1))
    np.testing.assert_allclose(g.lower, (x / g.scale).min(axis=0))


def test_make_grid_degenerate_dimension():
    x = np.column_stack([np.linspace(0, 1, 10), np.zeros(10)])
    with pytest.raises(DegenerateDimensionError):
        make_grid(x)


def test_make_grid_rejects_tiny_grid():
    with pytest.raises(InputError):
        make_grid(np.linspace(0, 1, 10), M=1)


def test_phase_round_trip():
    g = make_grid(np.random.default_rng(3).random((200, 2)), M=(17, 33))
    c = np.random.default_rng(4).random((50, 2)) * (np.asarray(g.counts) - 1)
    assert np.max(np.abs(g.from_phase(g.to_phase(c)) - c)) < 1e-12
    x = g.from_index(c)
    assert np.max(np.abs(g.to_index(x) - c)) < 1e-9


def test_gridspec_dict_round_trip():
    g = make_grid(np.random.default_rng(5).random((100, 2)), M=12)
    assert GridSpec.from_dict(g.to_dict()) == g


def test_spread_config_validation():
    with pytest.raises(InputError):
        SpreadConfig(digits=0)
    with pytest.raises(InputError):
        SpreadConfig(digits=13)
    assert SpreadConfig(digits=7).msp == 7


def test_tau_matches_rule_of_thumb():
    # 12 points per side with 2x spreading oversampling gives about 12 / Mr^2
    cfg = SpreadConfig(digits=12)
    mr = 256
    assert abs(cfg.tau_gauss(mr) * mr**2 - 12 * np.pi / 3) < 1e-9


# spreading ---------------------------------------------------------------


def test_on_node_point_peaks_symmetrically():
    x = np.linspace(0, 1, 11)[:, None]
    g = make_grid(x, M=11)
    node = g.from_index(np.array([[5.0]]))
    f = spread_points(node, None, g, SpreadConfig(digits=6), with_unit=True)
    vals = f.values[0]
    peak = 5 * 2
    assert np.argmax(vals) == peak
    np.testing.assert_allclose(vals[peak - 3 : peak], vals[peak + 1 : peak + 4][::-1], rtol=1e-12)
    assert abs(vals.sum() - 1.0) < 1e-6


def test_single_point_at_origin_flat_spectrum():
    x = np.linspace(0, 1, 20)[:, None]
    g = make_grid(x, M=20)
    origin = g.from_index(np.array([[0.0]]))
    F = nufft_type1(origin, np.ones(1), g, SpreadConfig(digits=12)).coefficients[0]
    np.testing.assert_allclose(F, 1.0 / g.fft_shape[0], atol=1e-13)


def test_point_outside_grid_rejected():
    x = np.linspace(0, 1, 20)[:, None]
    g = make_grid(x, M=20)
    with pytest.raises(GridRangeError):
        spread_points(np.array([[2.0]]), np.ones(1), g)


def test_deconvolution_overflow_is_named():
    x = np.linspace(0, 1, 20)[:, None]
    g = make_grid(x, M=20)
    with pytest.raises(DeconvolutionOverflowError) as info:
        nufft_type1(x, np.ones(20), g, SpreadConfig(digits=6, tau=50.0))
    assert "k=" in str(info.value)


@pytest.mark.parametrize("digits, tol", [(12, 1e-10), (8, 1e-7), (4, 1e-3)])
def test_nufft_matches_direct_nudft(digits, tol):
    x = np.random.default_rng(6).random((50, 1))
    g = make_grid(x, M=64)
    w = np.ones(50)
    spec = nufft_type1(x, w, g, SpreadConfig(digits=digits))
    ref = nudft_type1(_phases(g, x), w, spec.frequencies)
    assert np.max(np.abs(spec.coefficients[0] - ref)) < tol


def test_nufft_error_shrinks_with_digits():
    x = np.random.default_rng(7).random((80, 1))
    g = make_grid(x, M=40)
    errs = []
    for digits in (1, 12):
        spec = nufft_type1(x, np.ones(80), g, SpreadConfig(digits=digits))
        ref = nudft_type1(_phases(g, x), np.ones(80), spec.frequencies)
        errs.append(np.max(np.abs(spec.coefficients[0] - ref)))
    assert errs[0] > 1e-3 and errs[1] < 1e-10


def test_nufft_2d_complex_weights():
    rng = np.random.default_rng(8)
    x = rng.random((60, 2))
    w = rng.standard_normal(60) + 1j * rng.standard_normal(60)
    g = make_grid(x, M=(12, 10))
    spec = nufft_type1(x, w, g, SpreadConfig(digits=12))
    ref = nudft_type1(_phases(g, x), w, spec.frequencies)
    assert np.max(np.abs(spec.coefficients[0] - ref)) < 1e-10


def test_nufft_scales_linearly():
    x = np.random.default_rng(9).random((40, 1))
    g = make_grid(x, M=30)
    a = nufft_type1(x, np.ones(40), g).coefficients
    b = nufft_type1(x, 3.5 * np.ones(40), g).coefficients
    np.testing.assert_allclose(b, 3.5 * a, rtol=1e-13, atol=1e-15)


# gridded fields -------------------------------------------------------------


def test_on_node_points_give_histogram():
    rng = np.random.default_rng(10)
    x_axis = np.linspace(-1, 2, 16)
    idx = rng.integers(0, 16, size=(300, 1))
    idx[0], idx[1] = 0, 15
    x = x_axis[idx]
    g = make_grid(x, M=16)
    f = grid_counts(x, None, g, SpreadConfig(digits=12))
    hist = node_histogram(np.rint(g.to_index(x)).astype(int), np.ones(300), g.counts)
    assert np.max(np.abs(f.u[:16] - hist)) < 1e-10


def test_padding_region_carries_no_mass_for_on_node_data():
    # u is the trigonometric interpolant of the point masses; with every
    # sample on a node it is the histogram, so nodes past the data are empty
    rng = np.random.default_rng(11)
    x = np.linspace(0, 1, 100)[rng.integers(0, 100, size=500)][:, None]
    x[:2, 0] = 0.0, 1.0
    g = make_grid(x, M=100)
    f = grid_counts(x, None, g, SpreadConfig(digits=6))
    assert np.max(np.abs(f.u[100:])) < 1e-6 * 500


def test_gridding_mass_and_response_sums():
    rng = np.random.default_rng(12)
    x = rng.random((400, 2))
    y = rng.standard_normal((400, 2))
    g = make_grid(x, M=20)
    f = grid_counts(x, y, g, SpreadConfig(digits=6))
    assert abs(f.u.sum() - 400) < 1e-6 * 400
    np.testing.assert_allclose(f.v.sum(axis=(1, 2)), y.sum(axis=0), rtol=1e-6, atol=1e-6 * np.abs(y).sum())


def test_grid_counts_rejects_complex():
    x = np.random.default_rng(13).random((10, 1))
    with pytest.raises(InputError):
        grid_counts(x, np.ones(10) * 1j, make_grid(x, M=8))


def test_column_chunking_is_invisible():
    rng = np.random.default_rng(14)
    x = rng.random((100, 1))
    y = rng.standard_normal((100, 7))
    g = make_grid(x, M=30)
    a = grid_counts(x, y, g, column_chunk=3).spectra
    b = grid_counts(x, y, g, column_chunk=64).spectra
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


# properties -------------------------------------------------------------------


points_1d2d = st.integers(1, 2).flatmap(
    lambda d: st.tuples(st.just(d), st.integers(3, 200), st.integers(0, 2**31 - 1))
)


@pytest.mark.property
@settings(max_examples=25, deadline=None)
@given(points_1d2d, st.sampled_from([4, 8, 12]))
def test_property_roundtrip_against_nudft(params, digits):
    d, n, seed = params
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    w = rng.standard_normal(n)
    g = make_grid(x, M=16 if d == 2 else 40)
    spec = nufft_type1(x, w, g, SpreadConfig(digits=digits))
    ref = nudft_type1(_phases(g, x), w, spec.frequencies)
    scale = max(1.0, np.abs(w).sum() / g.size)
    assert np.max(np.abs(spec.coefficients[0] - ref)) < 10.0 ** (-digits + 1) * scale


@pytest.mark.property
@settings(max_examples=30, deadline=None)
@given(points_1d2d, st.integers(1, 12), st.booleans())
def test_property_mass_conservation(params, digits, complex_weights):
    d, n, seed = params
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    w = rng.standard_normal(n)
    if complex_weights:
        w = w + 1j * rng.standard_normal(n)
    g = make_grid(x, M=12)
    f = spread_points(x, w, g, SpreadConfig(digits=digits), with_unit=True)
    total = f.values.reshape(2, -1).sum(axis=1)
    for got, want, ref in zip(total, f.total_mass, [n, np.abs(w).sum()]):
        assert abs(got - want) <= 10.0 ** (-digits) * max(abs(want), ref)


@pytest.mark.property
@settings(max_examples=20, deadline=None)
@given(points_1d2d)
def test_property_permutation_invariance(params):
    d, n, seed = params
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    y = rng.standard_normal(n)
    g = make_grid(x, M=10)
    perm = rng.permutation(n)
    a = grid_counts(x, y, g)
    b = grid_counts(x[perm], y[perm], g)
    scale = max(1.0, np.abs(a.spectra).max())
    assert np.max(np.abs(a.spectra - b.spectra)) < 1e-12 * scale


@pytest.mark.property
@settings(max_examples=20, deadline=None)
@given(points_1d2d, st.floats(-5, 5), st.floats(-5, 5))
def test_property_linearity_in_responses(params, a, b):
    d, n, seed = params
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    y1, y2 = rng.standard_normal(n), rng.standard_normal(n)
    g = make_grid(x, M=10)
    lhs = grid_counts(x, a * y1 + b * y2, g).v[0]
    rhs = a * grid_counts(x, y1, g).v[0] + b * grid_counts(x, y2, g).v[0]
    scale = max(1.0, np.abs(lhs).max())
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * scale
