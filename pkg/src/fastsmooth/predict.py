"""Evaluation of gridded surfaces at scattered query locations.

Interpolation is separable on the uniform grid.  ``linear`` is
multilinear; ``cubic`` is four-point Lagrange per axis (exact for cubics,
with the stencil shifted inward on the boundary intervals).  Outside the
grid hull the ``extrapolation`` policy applies per axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySurfaceError, InputError

INTERP_METHODS = ("linear", "cubic")
EXTRAP_METHODS = ("linear", "nearest", "constant")


@dataclass(frozen=True)
class InterpPolicy:
    method: str = "cubic"
    extrapolation: str = "linear"
    fill_value: float = float("nan")

    def __post_init__(self):
        if self.method not in INTERP_METHODS:
            raise InputError(f"interpolation method must be one of {INTERP_METHODS}, got {self.method!r}")
        if self.extrapolation not in EXTRAP_METHODS:
            raise InputError(
                f"extrapolation method must be one of {EXTRAP_METHODS}, got {self.extrapolation!r}"
            )


def complex_embed(z) -> np.ndarray:
    """Complex locations -> (N, 2) real array of (Re z, Im z)."""
    z = np.asarray(z).ravel()
    return np.column_stack([z.real, z.imag]).astype(np.float64)


def _lagrange4(t: np.ndarray) -> np.ndarray:
    """Weights of nodes 0..3 for position ``t`` measured from node 0."""
    w = np.empty(t.shape + (4,))
    for j in range(4):
        acc = np.ones_like(t)
        for k in range(4):
            if k != j:
                acc = acc * (t - k) / (j - k)
        w[..., j] = acc
    return w


def _axis_weights(c: np.ndarray, m: int, policy: InterpPolicy):
    """Node indices and weights along one axis for fractional coordinates ``c``."""
    outside = (c < 0) | (c > m - 1)
    if policy.extrapolation == "nearest":
        c = np.clip(c, 0, m - 1)
    i0 = np.clip(np.floor(c).astype(np.int64), 0, m - 2)
    t = c - i0
    if policy.method == "linear" or m < 4:
        idx = np.stack([i0, i0 + 1], axis=-1)
        w = np.stack([1.0 - t, t], axis=-1)
        return idx, w, outside
    start = np.clip(i0 - 1, 0, m - 4)
    idx = start[:, None] + np.arange(4)
    w = _lagrange4(c - start)
    if policy.extrapolation == "linear" and np.any(outside):
        lin = np.zeros_like(w)
        pos = i0 - start
        rows = np.nonzero(outside)[0]
        lin[rows, pos[rows]] = 1.0 - t[rows]
        lin[rows, pos[rows] + 1] = t[rows]
        w[rows] = lin[rows]
    return idx, w, outside


class GridInterpolator:
    """Precomputed interpolation stencils for a fixed set of query locations.

    Reusing one instance across many fields (bandwidth sweeps, probe
    columns) avoids recomputing the per-axis weights.
    """

    def __init__(self, grid, queries, policy: InterpPolicy = InterpPolicy(), original: bool = True):
        self.grid = grid
        self.policy = policy
        c = grid.to_index(queries, original=original)
        self.n_queries = c.shape[0]
        self._axes = [_axis_weights(c[:, j], grid.counts[j], policy) for j in range(grid.d)]
        outside = np.zeros(c.shape[0], dtype=bool)
        for ax in self._axes:
            outside |= ax[2]
        self.outside = outside
        # flattened tensor stencils: (P, S) node offsets and weights
        strides = np.cumprod((1,) + tuple(grid.counts[::-1]))[:-1][::-1]
        flat = None
        wts = None
        for j, (idx, w, _) in enumerate(self._axes):
            if flat is None:
                flat, wts = idx * strides[j], w
            else:
                flat = (flat[:, :, None] + idx[:, None, :] * strides[j]).reshape(c.shape[0], -1)
                wts = (wts[:, :, None] * w[:, None, :]).reshape(c.shape[0], -1)
        self._flat = flat
        self._w = wts

    def __call__(self, values: np.ndarray) -> np.ndarray:
        """Interpolate stacked fields (k, *M) -> (P, k)."""
        values = np.asarray(values)
        grid = self.grid
        if values.ndim != grid.d + 1 or values.shape[1:] != tuple(grid.counts):
            raise InputError(f"values shape {values.shape} does not match grid {grid.counts}")
        k = values.shape[0]
        flatv = values.reshape(k, -1)
        out = np.empty((self.n_queries, k), dtype=values.dtype)
        for col in range(k):
            out[:, col] = np.einsum("ps,ps->p", flatv[col][self._flat], self._w)
        if self.policy.extrapolation == "constant":
            out[self.outside] = self.policy.fill_value
        return out


def interpolate_grid(values: np.ndarray, grid, queries, policy: InterpPolicy = InterpPolicy(), original: bool = True) -> np.ndarray:
    """Interpolate stacked grid fields ``values`` (k, *M) at ``queries`` -> (P, k)."""
    return GridInterpolator(grid, queries, policy, original)(values)


def interpolate(surface, queries, policy: InterpPolicy | None = None) -> np.ndarray:
    """Evaluate a fitted surface at query locations (original units) -> (P, q)."""
    queries = np.asarray(queries)
    if np.iscomplexobj(queries):
        queries = complex_embed(queries)
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim == 1:
        queries = queries[:, None] if surface.grid.d == 1 else queries[None, :]
    if queries.shape[1] != surface.grid.d:
        raise InputError(f"surface is {surface.grid.d}-dimensional but queries have {queries.shape[1]} columns")
    return interpolate_grid(surface.values, surface.grid, queries, policy or surface.policy)


def fill_masked(values: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Fill masked nodes by repeated averaging of unmasked axis neighbours.

    ``values`` has shape (k, *M) and ``mask`` shape M.  Returns the filled
    copy and the number of sweeps used.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return values, 0
    if mask.all():
        raise EmptySurfaceError("every grid node is masked; nothing to fill from")
    values = values.copy()
    known = ~mask
    sweeps = 0
    while not known.all():
        total = np.zeros_like(values)
        count = np.zeros(mask.shape)
        for ax in range(mask.ndim):
            for shift in (1, -1):
                src = [slice(None)] * mask.ndim
                dst = [slice(None)] * mask.ndim
                if shift == 1:
                    src[ax], dst[ax] = slice(None, -1), slice(1, None)
                else:
                    src[ax], dst[ax] = slice(1, None), slice(None, -1)
                k_src = known[tuple(src)]
                count[tuple(dst)] += k_src
                total[(slice(None), *dst)] += np.where(k_src, values[(slice(None), *src)], 0)
        newly = (~known) & (count > 0)
        values[:, newly] = total[:, newly] / count[newly]
        known = known | newly
        sweeps += 1
    return values, sweeps
