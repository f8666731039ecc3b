"""Tensor grids and Gaussian-gridding type-1 NUFFT.

Scattered samples are spread onto an oversampled periodic grid with a
truncated Gaussian, transformed with an FFT, and the Gaussian is divided
out in the frequency domain.  The resulting Fourier coefficients agree with
the direct non-uniform DFT to roughly ``digits`` significant digits, and
their inverse transform gives the gridded count field ``u`` and response
fields ``v`` used by the smoother.

Coordinate conventions
----------------------
* Locations are first divided by their per-dimension sample standard
  deviation ("normalized" coordinates); bandwidths live on that scale.
* The data grid has ``M`` nodes spanning ``[min, max]`` of the normalized
  locations.  Fields live on a periodic grid of ``Mr`` nodes with the same
  spacing; nodes ``M..Mr-1`` are zero padding.
* Node coordinate ``c`` maps to phase ``2*pi*c/Mr`` in ``[0, 2*pi)``.
* Spreading uses a finer grid of ``oversample * Mr`` nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .errors import (
    DeconvolutionOverflowError,
    DegenerateDimensionError,
    GridRangeError,
    InputError,
)

# bincount buffers are built for at most this many (point, node) pairs at once
_SPREAD_CHUNK = 1 << 22


def nextpow2(n: int) -> int:
    """Smallest power of two that is >= ``n``."""
    n = int(n)
    if n < 1:
        raise ValueError(f"nextpow2 needs n >= 1, got {n}")
    return 1 << (n - 1).bit_length()


def ceil_root(n: int, d: int) -> int:
    """Exact ``ceil(n ** (1/d))`` for positive integers."""
    r = max(1, int(round(n ** (1.0 / d))))
    while r**d < n:
        r += 1
    while r > 1 and (r - 1) ** d >= n:
        r -= 1
    return r


@dataclass(frozen=True)
class GridSpec:
    """Per-dimension tensor grid in normalized coordinates.

    ``counts`` are the data-grid sizes M_j, ``padded`` the zero-padded
    lengths L_j and ``fft_shape`` the FFT lengths Mr_j of the periodic
    field grid.  ``scale`` holds the standard deviations that map original
    coordinates to normalized ones.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]
    padded: tuple[int, ...]
    fft_shape: tuple[int, ...]
    upsample: int
    scale: tuple[float, ...]

    def __post_init__(self):
        for j, m in enumerate(self.counts):
            if m < 2:
                raise InputError(f"grid needs at least 2 nodes per dimension (dim {j} has {m})")
            if not self.upper[j] > self.lower[j]:
                raise DegenerateDimensionError(j)

    @property
    def d(self) -> int:
        return len(self.counts)

    @property
    def spacing(self) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return (hi - lo) / (np.asarray(self.counts) - 1)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self, original: bool = False) -> list[np.ndarray]:
        out = []
        for j in range(self.d):
            ax = self.lower[j] + np.arange(self.counts[j]) * self.spacing[j]
            if original:
                ax = ax * self.scale[j]
            out.append(ax)
        return out

    def nodes(self, original: bool = False) -> np.ndarray:
        """All grid nodes as an array of shape (prod(M), d), C order."""
        mesh = np.meshgrid(*self.axes(original), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def normalize(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) / np.asarray(self.scale)

    def to_index(self, x, original: bool = True) -> np.ndarray:
        """Fractional node coordinates of locations ``x`` (N, d)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None] if self.d == 1 else x[None, :]
        if x.shape[1] != self.d:
            raise InputError(f"expected {self.d}-dimensional locations, got {x.shape[1]}")
        z = self.normalize(x) if original else x
        return (z - np.asarray(self.lower)) / self.spacing

    def from_index(self, c, original: bool = True) -> np.ndarray:
        z = np.asarray(self.lower) + np.asarray(c, dtype=np.float64) * self.spacing
        return z * np.asarray(self.scale) if original else z

    def to_phase(self, c) -> np.ndarray:
        """Node coordinates to phases in [0, 2*pi) of the periodic field grid."""
        return 2.0 * np.pi * np.asarray(c, dtype=np.float64) / np.asarray(self.fft_shape)

    def from_phase(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64) * np.asarray(self.fft_shape) / (2.0 * np.pi)

    def to_dict(self) -> dict:
        return {
            "lower": list(self.lower),
            "upper": list(self.upper),
            "counts": list(self.counts),
            "padded": list(self.padded),
            "fft_shape": list(self.fft_shape),
            "upsample": self.upsample,
            "scale": list(self.scale),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(
            lower=tuple(float(v) for v in data["lower"]),
            upper=tuple(float(v) for v in data["upper"]),
            counts=tuple(int(v) for v in data["counts"]),
            padded=tuple(int(v) for v in data["padded"]),
            fft_shape=tuple(int(v) for v in data["fft_shape"]),
            upsample=int(data["upsample"]),
            scale=tuple(float(v) for v in data["scale"]),
        )


def make_grid(
    x,
    R: float = 1,
    M: int | Sequence[int] | None = None,
    pad: bool = True,
    upsample: int = 2,
) -> GridSpec:
    """Build the data grid for locations ``x`` (N, d) in original units.

    Without an explicit ``M`` every dimension gets ``R * ceil(N ** (1/d))``
    nodes.  ``pad`` rounds the field length up to the next power of two and
    ``upsample=2`` doubles it again, which leaves enough zero padding that
    circular convolution never wraps data onto data.
    """
    x = np.asarray(getattr(x, "x", x), dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2:
        raise InputError(f"need at least 2 samples to build a grid, got {n}")
    if upsample not in (1, 2):
        raise InputError(f"upsample must be 1 or 2, got {upsample}")

    lo_raw, hi_raw = x.min(axis=0), x.max(axis=0)
    for j in range(d):
        if not hi_raw[j] > lo_raw[j]:
            raise DegenerateDimensionError(j)
    scale = x.std(axis=0, ddof=1)
    z = x / scale
    lower, upper = z.min(axis=0), z.max(axis=0)

    if M is None:
        counts = [int(round(R * ceil_root(n, d)))] * d
    else:
        counts = [int(m) for m in np.broadcast_to(np.asarray(M), (d,))]
    for j, m in enumerate(counts):
        if m < 2:
            raise InputError(f"grid size for dimension {j} is {m}; need at least 2")
    padded = [nextpow2(m) if pad else m for m in counts]
    fft_shape = [upsample * L for L in padded]
    return GridSpec(
        lower=tuple(float(v) for v in lower),
        upper=tuple(float(v) for v in upper),
        counts=tuple(counts),
        padded=tuple(padded),
        fft_shape=tuple(fft_shape),
        upsample=upsample,
        scale=tuple(float(v) for v in scale),
    )


@dataclass(frozen=True)
class SpreadConfig:
    """Accuracy controls for Gaussian gridding.

    ``digits`` sets the stencil half-width (nearest nodes per side).  The
    Gaussian variance defaults to ``digits*pi / (Mr**2 * s*(s - 1/2))`` for
    spreading oversampling ``s``; ``tau`` overrides it.
    """

    digits: int = 6
    deconvolve: bool = True
    oversample: int = 2
    tau: float | None = None

    def __post_init__(self):
        if not 1 <= int(self.digits) <= 12:
            raise InputError(f"digits must be in [1, 12], got {self.digits}")
        if self.oversample < 2:
            raise InputError("spreading oversample must be >= 2")
        if self.tau is not None and not (self.tau > 0 and math.isfinite(self.tau)):
            raise InputError(f"tau must be positive and finite, got {self.tau}")

    @property
    def msp(self) -> int:
        return int(self.digits)

    def tau_gauss(self, n_modes: int) -> float:
        if self.tau is not None:
            return float(self.tau)
        s = self.oversample
        return self.msp * np.pi / (n_modes**2 * s * (s - 0.5))


@dataclass
class SpreadField:
    """Spread values on the oversampled grid, one slab per weight column.

    Values are normalized so each slab sums to its total weight.
    """

    values: np.ndarray
    total_mass: np.ndarray
    has_unit: bool = False


@dataclass
class SpectrumField:
    """Fourier coefficients ``F(k) = (1/prod(Mr)) sum_i w_i exp(-i k.theta_i)``.

    ``coefficients`` has shape (q, *Mr) in FFT index order; ``frequencies``
    lists the integer frequencies per axis in the same order.
    """

    coefficients: np.ndarray
    frequencies: list[np.ndarray]
    deconvolved: bool


def _spread_shape(grid: GridSpec, cfg: SpreadConfig) -> tuple[int, ...]:
    return tuple(cfg.oversample * mr for mr in grid.fft_shape)


def _check_index(c: np.ndarray, grid: GridSpec) -> np.ndarray:
    upper = np.asarray(grid.counts) - 1.0
    tol = 1e-9 * np.maximum(upper, 1.0)
    bad = (c < -tol) | (c > upper + tol)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise GridRangeError(
            f"point {i} lies outside the grid in dimension {j} "
            f"(node coordinate {c[i, j]:.6g}, valid [0, {upper[j]:g}])"
        )
    return np.clip(c, 0.0, upper)


def _axis_stencil(c: np.ndarray, mr: int, cfg: SpreadConfig):
    """Spread-grid indices and normalized Gaussian weights along one axis."""
    s = cfg.oversample
    ms = s * mr
    msp = cfg.msp
    tau = cfg.tau_gauss(mr)
    h = 2.0 * np.pi / ms
    p = c * s
    base = np.floor(p).astype(np.int64) - msp + 1
    nodes = base[:, None] + np.arange(2 * msp)
    dist = (p[:, None] - nodes) * h
    w = np.exp(-(dist * dist) / (4.0 * tau)) * (h / math.sqrt(4.0 * np.pi * tau))
    return np.mod(nodes, ms), w


def _spread_real(c: np.ndarray, weights: np.ndarray, grid: GridSpec, cfg: SpreadConfig) -> np.ndarray:
    """Spread real weight columns (N, k) onto the oversampled grid -> (k, *shape)."""
    shape = _spread_shape(grid, cfg)
    n, d = c.shape
    k = weights.shape[1]
    total = int(np.prod(shape))
    out = np.zeros((k, total))
    strides = np.cumprod((1,) + shape[::-1])[:-1][::-1]
    stencil = (2 * cfg.msp) ** d
    chunk = max(1, _SPREAD_CHUNK // stencil)
    for start in range(0, n, chunk):
        sl = slice(start, min(n, start + chunk))
        flat = None
        wprod = None
        for j in range(d):
            idx, w = _axis_stencil(c[sl, j], grid.fft_shape[j], cfg)
            expand = (slice(None),) + (None,) * j + (slice(None),)
            idx = idx[expand] * strides[j]
            w = w[expand]
            flat = idx if flat is None else flat[..., None] + idx
            wprod = w if wprod is None else wprod[..., None] * w
        m = flat.shape[0]
        flat = flat.reshape(m, -1)
        wprod = wprod.reshape(m, -1)
        flat_r = flat.ravel()
        for col in range(k):
            out[col] += np.bincount(
                flat_r, weights=(wprod * weights[sl, col][:, None]).ravel(), minlength=total
            )
    return out.reshape((k,) + shape)


def _as_columns(weights, n: int) -> np.ndarray:
    w = np.asarray(weights)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape[0] != n:
        raise InputError(f"{n} points but {w.shape[0]} weights")
    return w


def spread_points(points, weights, grid: GridSpec, cfg: SpreadConfig = SpreadConfig(), with_unit: bool = True) -> SpreadField:
    """Gaussian-grid scattered ``points`` (original units) with ``weights``.

    Returns one slab per weight column, preceded by the unit-weight
    (point-mass) slab when ``with_unit``.  Complex weights are supported.
    """
    c = _check_index(grid.to_index(points), grid)
    n = c.shape[0]
    w = _as_columns(weights, n) if weights is not None else np.zeros((n, 0))
    if with_unit:
        w = np.concatenate([np.ones((n, 1), dtype=w.dtype), w], axis=1)
    if np.iscomplexobj(w):
        re = _spread_real(c, np.ascontiguousarray(w.real), grid, cfg)
        im = _spread_real(c, np.ascontiguousarray(w.imag), grid, cfg)
        values = re + 1j * im
    else:
        values = _spread_real(c, w.astype(np.float64), grid, cfg)
    return SpreadField(values=values, total_mass=w.sum(axis=0), has_unit=with_unit)


def deconvolution_factors(grid: GridSpec, cfg: SpreadConfig, frequencies: list[np.ndarray]) -> list[np.ndarray]:
    """Per-axis factors ``exp(k^2 tau)`` that undo the spreading Gaussian."""
    out = []
    for j, k in enumerate(frequencies):
        tau = cfg.tau_gauss(grid.fft_shape[j])
        with np.errstate(over="ignore"):
            f = np.exp(k.astype(np.float64) ** 2 * tau)
        if not np.all(np.isfinite(f)):
            bad = int(k[np.argmax(~np.isfinite(f))])
            raise DeconvolutionOverflowError(j, bad, tau)
        out.append(f)
    return out


def _outer(factors: list[np.ndarray]) -> np.ndarray:
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


def nufft_type1(points, weights, grid: GridSpec, cfg: SpreadConfig = SpreadConfig()) -> SpectrumField:
    """Type-1 NUFFT of weighted point masses onto the ``Mr`` retained frequencies."""
    field_ = spread_points(points, weights, grid, cfg, with_unit=False)
    d = grid.d
    axes = tuple(range(1, d + 1))
    spec = sfft.fftn(field_.values, axes=axes, workers=-1)
    freqs = []
    for j, mr in enumerate(grid.fft_shape):
        k = np.rint(np.fft.fftfreq(mr, 1.0 / mr)).astype(np.int64)
        ms = cfg.oversample * mr
        spec = np.take(spec, np.mod(k, ms), axis=j + 1)
        freqs.append(k)
    if cfg.deconvolve:
        spec = spec * _outer(deconvolution_factors(grid, cfg, freqs))
        if not np.all(np.isfinite(spec)):
            raise DeconvolutionOverflowError(0, int(np.max(np.abs(freqs[0]))), cfg.tau_gauss(grid.fft_shape[0]))
    spec = spec / float(np.prod(grid.fft_shape))
    return SpectrumField(coefficients=spec, frequencies=freqs, deconvolved=cfg.deconvolve)


def _half_spectra(values: np.ndarray, grid: GridSpec, cfg: SpreadConfig) -> np.ndarray:
    """Real spread slabs -> deconvolved half spectra on the ``Mr`` grid.

    The output is the ``rfftn`` layout of a real field of shape ``Mr``;
    Nyquist planes use the symmetric (averaged) convention so that the
    array is exactly Hermitian-consistent.
    """
    d = grid.d
    axes = tuple(range(1, d + 1))
    spec = sfft.rfftn(values, axes=axes, workers=-1)
    s = cfg.oversample
    freqs = []
    for j, mr in enumerate(grid.fft_shape[:-1]):
        k = np.rint(np.fft.fftfreq(mr, 1.0 / mr)).astype(np.int64)
        ms = s * mr
        taken = np.take(spec, np.mod(k, ms), axis=j + 1)
        if mr % 2 == 0:
            nyq = [slice(None)] * taken.ndim
            nyq[j + 1] = mr // 2
            other = np.take(spec, [mr // 2], axis=j + 1)
            taken[tuple(nyq)] = 0.5 * (taken[tuple(nyq)] + np.squeeze(other, axis=j + 1))
        spec = taken
        freqs.append(k)
    mr = grid.fft_shape[-1]
    klast = np.arange(mr // 2 + 1)
    spec = spec[..., : mr // 2 + 1].copy()
    if mr % 2 == 0:
        nyq = spec[..., -1]
        flipped = np.conj(nyq)
        for ax in range(1, d):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        spec[..., -1] = 0.5 * (nyq + flipped)
    freqs.append(klast)
    if cfg.deconvolve:
        spec *= _outer(deconvolution_factors(grid, cfg, freqs))
    return spec


@dataclass
class GriddedFields:
    """Deconvolved spectra of the count field (column 0) and response fields."""

    grid: GridSpec
    spectra: np.ndarray
    n_points: int
    _fields: np.ndarray | None = field(default=None, repr=False)

    def _real_fields(self) -> np.ndarray:
        if self._fields is None:
            axes = tuple(range(1, self.grid.d + 1))
            self._fields = sfft.irfftn(self.spectra, s=self.grid.fft_shape, axes=axes, workers=-1)
        return self._fields

    @property
    def u(self) -> np.ndarray:
        """Gridded point-mass field on the padded ``Mr`` grid."""
        return self._real_fields()[0]

    @property
    def v(self) -> np.ndarray:
        """Gridded response fields, shape (q, *Mr)."""
        return self._real_fields()[1:]

    @property
    def q(self) -> int:
        return self.spectra.shape[0] - 1


def grid_counts(
    points,
    weights,
    grid: GridSpec,
    cfg: SpreadConfig = SpreadConfig(),
    column_chunk: int = 64,
) -> GriddedFields:
    """Gridded count field ``u`` and response fields ``v`` via the type-1 NUFFT.

    ``weights`` must be real, shape (N,) or (N, q), or None for counts only.
    """
    c = _check_index(grid.to_index(points), grid)
    n = c.shape[0]
    w = _as_columns(weights, n) if weights is not None else np.zeros((n, 0))
    if np.iscomplexobj(w):
        raise InputError("grid_counts takes real weights; split complex responses first")
    w = np.concatenate([np.ones((n, 1)), w.astype(np.float64)], axis=1)
    chunks = []
    for start in range(0, w.shape[1], column_chunk):
        block = _spread_real(c, np.ascontiguousarray(w[:, start : start + column_chunk]), grid, cfg)
        chunks.append(_half_spectra(block, grid, cfg))
    spectra = chunks[0] if len(chunks) == 1 else np.concatenate(chunks, axis=0)
    return GriddedFields(grid=grid, spectra=spectra, n_points=n)
