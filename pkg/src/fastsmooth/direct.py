"""Direct O(N * P) local polynomial smoother.

Used as the reference for the binned engine and for small benchmarks.
Locations and evaluation points are in original units; the kernel acts on
normalized coordinates ``x / scale``.
"""

from __future__ import annotations

import numpy as np

from .kernels import KernelSpec
from .poly import monomial_basis

_BLOCK = 1 << 20


def direct_local_poly(
    x,
    y,
    at,
    kernel: KernelSpec,
    order: int = 0,
    scale=None,
) -> np.ndarray:
    """Local polynomial intercepts at ``at`` (P, d) -> (P, q).

    ``scale`` divides every coordinate before the kernel is applied
    (defaults to one).  Rank-deficient local systems fall back to the
    kernel-weighted mean.
    """
    x = np.asarray(x, dtype=np.float64)
    at = np.asarray(at, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if at.ndim == 1:
        at = at[:, None]
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    n, d = x.shape
    s = np.ones(d) if scale is None else np.asarray(scale, dtype=np.float64)
    xn, an = x / s, at / s
    basis = monomial_basis(d, order)
    exps = np.asarray(basis.indices)
    out = np.empty((an.shape[0], y.shape[1]), dtype=np.result_type(y.dtype, np.float64))
    rows = max(1, _BLOCK // max(n, 1))
    for start in range(0, an.shape[0], rows):
        a = an[start : start + rows]
        off = xn[None, :, :] - a[:, None, :]
        w = kernel(off)
        X = np.prod(off[:, :, None, :] ** exps[None, None, :, :], axis=-1)
        XtW = X.transpose(0, 2, 1) * w[:, None, :]
        S = XtW @ X
        T = XtW @ y
        for i in range(a.shape[0]):
            try:
                beta = np.linalg.solve(S[i], T[i])
                if not np.all(np.isfinite(beta)):
                    raise np.linalg.LinAlgError
                out[start + i] = beta[0]
            except np.linalg.LinAlgError:
                out[start + i] = T[i, 0] / S[i, 0, 0]
    return out
