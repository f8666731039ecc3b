"""Binned local polynomial smoothing on the tensor grid.

For a bandwidth ``h`` the kernel moment grids ``K_h(g) g^gamma`` are
FFT-convolved with the gridded count field ``u`` (giving ``s_gamma``,
``|gamma| <= 2*order``) and the response fields ``v`` (giving
``t_alpha``, ``|alpha| <= order``).  At each grid node the local normal
equations ``S beta = t`` are solved and the intercept is kept.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .errors import InputError
from .gridding import GriddedFields, GridSpec, SpreadConfig, grid_counts
from .kernels import KernelSpec
from .predict import InterpPolicy, fill_masked, interpolate, interpolate_grid

# relative eigenvalue threshold of the equilibrated local system
RANK_TOL = 1e-10
DENSITY_FLOOR = 1e-8


@dataclass(frozen=True)
class MultiIndexSet:
    """Exponent vectors with total degree <= ``order`` in graded-lex order."""

    d: int
    order: int
    indices: tuple[tuple[int, ...], ...]

    @property
    def p(self) -> int:
        return len(self.indices)

    def position(self, alpha: tuple[int, ...]) -> int:
        return self.indices.index(tuple(alpha))


def monomial_basis(d: int, order: int) -> MultiIndexSet:
    """Graded-lex monomial exponents; the quadratic block follows vech(x x^T)."""
    if d < 1 or order < 0:
        raise InputError(f"need d >= 1 and order >= 0, got d={d}, order={order}")
    out = []
    for degree in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(d), degree):
            alpha = [0] * d
            for axis in combo:
                alpha[axis] += 1
            out.append(tuple(alpha))
    return MultiIndexSet(d=d, order=order, indices=tuple(out))


def _axis_offsets(grid: GridSpec, axis: int) -> np.ndarray:
    mr = grid.fft_shape[axis]
    return np.rint(np.fft.fftfreq(mr, 1.0 / mr)) * grid.spacing[axis]


def _axis_factor(grid: GridSpec, kernel: KernelSpec, axis: int, power: int) -> np.ndarray:
    o = _axis_offsets(grid, axis)
    f = kernel.axis_weights(o, axis) * o**power
    mr = grid.fft_shape[axis]
    if power % 2 == 1 and mr % 2 == 0:
        # the Nyquist node is its own mirror image
        f[mr // 2] = 0.0
    return f


def kernel_moment_grids(grid: GridSpec, kernel: KernelSpec, orders: Sequence[tuple[int, ...]]) -> dict:
    """Moment grids ``K_h(o) o^gamma`` on the periodic ``Mr`` grid.

    Offsets use FFT layout: index 0 is the origin and negative offsets wrap
    to the end of each axis.
    """
    out = {}
    for gamma in orders:
        factors = [_axis_factor(grid, kernel, j, g) for j, g in enumerate(gamma)]
        g = factors[0]
        for f in factors[1:]:
            g = np.multiply.outer(g, f)
        out[tuple(gamma)] = g
    return out


def moment_spectra(grid: GridSpec, kernel: KernelSpec, orders: Sequence[tuple[int, ...]]) -> dict:
    """``rfftn`` of each moment grid, assembled from separable 1-d transforms."""
    d = grid.d
    cache = {}

    def axis_spec(j, power):
        key = (j, power)
        if key not in cache:
            f = _axis_factor(grid, kernel, j, power)
            cache[key] = np.fft.rfft(f) if j == d - 1 else np.fft.fft(f)
        return cache[key]

    out = {}
    for gamma in orders:
        s = axis_spec(0, gamma[0])
        for j in range(1, d):
            s = np.multiply.outer(s, axis_spec(j, gamma[j]))
        out[tuple(gamma)] = s
    return out


@dataclass
class MomentFields:
    """Kernel-weighted moment sums on the (cropped) data grid.

    ``s`` maps each exponent with degree <= 2*order to a field of shape M;
    ``t`` maps each basis exponent to fields of shape (q, *M).
    """

    s: dict
    t: dict
    n_points: int


def _crop(a: np.ndarray, grid: GridSpec) -> np.ndarray:
    sl = tuple(slice(0, m) for m in grid.counts)
    return a[(Ellipsis, *sl)]


def convolve_moments(
    fields: GriddedFields,
    kernel: KernelSpec,
    basis: MultiIndexSet,
    columns: Sequence[int] | slice | None = None,
    spectra: dict | None = None,
    with_s: bool = True,
) -> MomentFields:
    """FFT convolution of the moment grids with ``u`` and selected ``v`` columns."""
    grid = fields.grid
    d = grid.d
    axes = tuple(range(-d, 0))
    s_orders = monomial_basis(d, 2 * basis.order).indices
    if spectra is None:
        spectra = moment_spectra(grid, kernel, s_orders)
    s = {}
    if with_s:
        u_hat = fields.spectra[0]
        for gamma in s_orders:
            s[gamma] = _crop(sfft.irfftn(spectra[gamma] * u_hat, s=grid.fft_shape, axes=axes, workers=-1), grid)
    if columns is None:
        columns = slice(0, fields.q)
    v_hat = fields.spectra[1:][columns]
    t = {}
    for alpha in basis.indices:
        t[alpha] = _crop(sfft.irfftn(spectra[alpha] * v_hat, s=grid.fft_shape, axes=axes, workers=-1), grid)
    return MomentFields(s=s, t=t, n_points=fields.n_points)


def density_mask(s0: np.ndarray, grid: GridSpec, n_points: int, digits: int = 12) -> np.ndarray:
    """Nodes whose local sample mass is below the floor.

    ``s0 * cell_volume`` is the expected count per cell; the floor is
    ``max(1e-8, 10**-digits) * N / prod(M)``, i.e. never below the gridding
    noise level.
    """
    floor = max(DENSITY_FLOOR, 10.0 ** (-digits)) * n_points / grid.size
    return ~(s0 * grid.cell_volume >= floor)


def _solve_local(moments: MomentFields, basis: MultiIndexSet, mask: np.ndarray):
    """Intercepts of the local systems; returns (values (k, *M), fallback mask)."""
    s0 = moments.s[(0,) * basis.d]
    t0 = moments.t[(0,) * basis.d]
    shape = s0.shape
    ok = ~mask
    with np.errstate(divide="ignore", invalid="ignore"):
        nw = t0 / np.where(ok, s0, np.nan)
    fallback = np.zeros(shape, dtype=bool)
    if basis.order == 0:
        return nw, fallback

    p = basis.p
    k = t0.shape[0]
    flat_ok = ok.ravel()
    G = int(flat_ok.sum())
    S = np.empty((G, p, p))
    for a, alpha in enumerate(basis.indices):
        for b in range(a, p):
            beta = basis.indices[b]
            gamma = tuple(x + y for x, y in zip(alpha, beta))
            vals = moments.s[gamma].ravel()[flat_ok]
            S[:, a, b] = vals
            S[:, b, a] = vals
    T = np.empty((G, p, k))
    for a, alpha in enumerate(basis.indices):
        T[:, a, :] = moments.t[alpha].reshape(k, -1)[:, flat_ok].T
    diag = np.sqrt(np.abs(np.einsum("gii->gi", S)))
    diag[diag == 0] = 1.0
    Sn = S / (diag[:, :, None] * diag[:, None, :])
    Tn = T / diag[:, :, None]
    eig = np.linalg.eigvalsh(Sn)
    good = eig[:, 0] > RANK_TOL * np.abs(eig[:, -1])
    beta = np.full((G, k), np.nan)
    if good.any():
        sol = np.linalg.solve(Sn[good], Tn[good])
        beta[good] = sol[:, 0, :] / diag[good, 0][:, None]
    out = nw.reshape(k, -1).copy()
    idx = np.nonzero(flat_ok)[0]
    out[:, idx[good]] = beta[good].T
    fb = np.zeros(flat_ok.shape, dtype=bool)
    fb[idx[~good]] = True
    return out.reshape((k,) + shape), fb.reshape(shape)


@dataclass
class FitSurface:
    """Fitted values on the data grid.

    ``values`` has shape (q, *M).  ``mask`` marks nodes that fell below
    the density floor and were filled from their neighbours; ``fallback``
    marks nodes whose local system was rank deficient and used the
    order-0 ratio instead.
    """

    grid: GridSpec
    values: np.ndarray
    order: int
    kernel: KernelSpec
    mask: np.ndarray
    fallback: np.ndarray
    density: np.ndarray | None = None
    policy: InterpPolicy = field(default_factory=InterpPolicy)
    fill_policy: str = "neighbour-average"
    warnings: list = field(default_factory=list)
    # per-column bandwidths when columns were selected independently
    column_h: np.ndarray | None = None

    @property
    def bandwidth(self) -> tuple[float, ...]:
        return self.kernel.bandwidth

    @property
    def q(self) -> int:
        return self.values.shape[0]

    def predict(self, x, policy: InterpPolicy | None = None) -> np.ndarray:
        return interpolate(self, x, policy)


def local_solve(
    moments: MomentFields,
    basis: MultiIndexSet,
    grid: GridSpec,
    kernel: KernelSpec,
    digits: int = 12,
    policy: InterpPolicy = InterpPolicy(),
) -> FitSurface:
    """Solve the per-node local systems and fill masked nodes."""
    s0 = moments.s[(0,) * basis.d]
    mask = density_mask(s0, grid, moments.n_points, digits)
    values, fallback = _solve_local(moments, basis, mask)
    bad = ~np.all(np.isfinite(values), axis=0)
    mask = mask | bad
    values, _ = fill_masked(values, mask)
    return FitSurface(
        grid=grid,
        values=values,
        order=basis.order,
        kernel=kernel,
        mask=mask,
        fallback=fallback,
        density=s0,
        policy=policy,
        warnings=bandwidth_warnings(grid, kernel),
    )


def bandwidth_warnings(grid: GridSpec, kernel: KernelSpec) -> list[str]:
    out = []
    for j, (h, tau) in enumerate(zip(kernel.bandwidth, grid.spacing)):
        if h < tau:
            out.append(f"bandwidth {h:.4g} below grid spacing {tau:.4g} in dimension {j} (undersmoothing)")
    return out


def split_complex(y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Complex (N, q) responses -> real (N, 2q) with real parts first."""
    if np.iscomplexobj(y):
        return np.concatenate([y.real, y.imag], axis=1), True
    return np.asarray(y, dtype=np.float64), False


def merge_complex(values: np.ndarray, is_complex: bool) -> np.ndarray:
    if not is_complex:
        return values
    q = values.shape[0] // 2
    return values[:q] + 1j * values[q:]


@dataclass
class PipelineStats:
    """Structural counters for the shared-work guarantees."""

    gridding_passes: int = 0
    trace_passes: int = 0
    moment_builds: int = 0
    convolutions: int = 0


class KernelSmoother:
    """Binned local polynomial smoother bound to one grid.

    Gridding is bandwidth independent: grid the data once with
    :meth:`grid_data`, then call :meth:`fit_columns` for as many
    bandwidths as needed.
    """

    def __init__(
        self,
        grid: GridSpec,
        kernel: str = "gaussian",
        order: int = 0,
        spread: SpreadConfig = SpreadConfig(),
        policy: InterpPolicy = InterpPolicy(),
        column_chunk: int = 64,
    ):
        if order < 0:
            raise InputError(f"order must be >= 0, got {order}")
        if order > 2:
            warnings.warn(f"local polynomial order {order} > 2 may be numerically unstable", stacklevel=2)
        self.grid = grid
        self.family = kernel
        self.order = order
        self.spread = spread
        self.policy = policy
        self.column_chunk = max(1, int(column_chunk))
        self.basis = monomial_basis(grid.d, order)
        self.stats = PipelineStats()
        self._spectra_key = None
        self._spectra = None
        self._s_key = None
        self._s = None
        self._mask = None

    def kernel(self, h) -> KernelSpec:
        return KernelSpec.make(self.family, h, self.grid.d)

    def grid_data(self, x, weights) -> GriddedFields:
        self.stats.gridding_passes += 1
        return grid_counts(x, weights, self.grid, self.spread, self.column_chunk)

    def spectra(self, kernel: KernelSpec) -> dict:
        key = (kernel.family, kernel.bandwidth)
        if key != self._spectra_key:
            orders = monomial_basis(self.grid.d, 2 * self.order).indices
            self._spectra = moment_spectra(self.grid, kernel, orders)
            self._spectra_key = key
            self.stats.moment_builds += 1
        return self._spectra

    def density_moments(self, fields: GriddedFields, kernel: KernelSpec):
        """Cached ``s_gamma`` fields and density mask for (fields, kernel)."""
        key = (id(fields), kernel.family, kernel.bandwidth)
        if key != self._s_key:
            spectra = self.spectra(kernel)
            mom = convolve_moments(fields, kernel, self.basis, columns=[], spectra=spectra)
            self.stats.convolutions += 1
            self._s = mom.s
            s0 = mom.s[(0,) * self.grid.d]
            self._mask = density_mask(s0, self.grid, fields.n_points, self.spread.digits)
            self._s_key = key
        return self._s, self._mask

    def fit_values(self, fields: GriddedFields, h, columns: Sequence[int]):
        """Raw local solve for a block of columns -> (values, mask, fallback).

        Values at masked nodes are not filled.
        """
        kernel = self.kernel(h)
        spectra = self.spectra(kernel)
        s, mask = self.density_moments(fields, kernel)
        cols = np.asarray(columns, dtype=np.int64)
        mom = convolve_moments(fields, kernel, self.basis, columns=cols, spectra=spectra, with_s=False)
        self.stats.convolutions += 1
        mom.s = s
        vals, fallback = _solve_local(mom, self.basis, mask)
        return vals, mask, fallback

    def fit_columns(self, fields: GriddedFields, h, columns: Sequence[int] | None = None) -> FitSurface:
        """Fit real response columns of ``fields`` at bandwidth ``h``."""
        kernel = self.kernel(h)
        cols = np.arange(fields.q) if columns is None else np.asarray(columns, dtype=np.int64)
        blocks = []
        s, mask = self.density_moments(fields, kernel)
        fallback = np.zeros(self.grid.counts, dtype=bool)
        for start in range(0, len(cols), self.column_chunk):
            vals, _, fallback = self.fit_values(fields, h, cols[start : start + self.column_chunk])
            blocks.append(vals)
        if blocks:
            values = np.concatenate(blocks, axis=0)
            mask = mask | ~np.all(np.isfinite(values), axis=0)
        else:
            values = np.zeros((0,) + tuple(self.grid.counts))
        values, _ = fill_masked(values, mask)
        return FitSurface(
            grid=self.grid,
            values=values,
            order=self.order,
            kernel=kernel,
            mask=mask,
            fallback=fallback,
            density=s[(0,) * self.grid.d],
            policy=self.policy,
            warnings=bandwidth_warnings(self.grid, kernel),
        )

    def predict_columns(self, values: np.ndarray, x) -> np.ndarray:
        return interpolate_grid(values, self.grid, x, self.policy)


def fit_single_bandwidth(
    x,
    y,
    grid: GridSpec,
    kernel: KernelSpec,
    order: int = 0,
    spread: SpreadConfig = SpreadConfig(),
    policy: InterpPolicy = InterpPolicy(),
    column_chunk: int = 64,
) -> FitSurface:
    """Grid, convolve and solve at one bandwidth; complex responses allowed."""
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    yr, is_complex = split_complex(y)
    sm = KernelSmoother(grid, kernel.family, order, spread, policy, column_chunk)
    fields = sm.grid_data(x, yr)
    surf = sm.fit_columns(fields, kernel.bandwidth)
    surf.values = merge_complex(surf.values, is_complex)
    return surf
