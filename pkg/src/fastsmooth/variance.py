"""Conditional variance estimation and pointwise bands.

Two routes are provided.  The log route smooths ``log(r + 1/N)`` of the
squared residuals ``r`` to get ``nu(x)``, rescales with

    kappa = 1 / mean(r_i * exp(-nu(x_i)))

and returns ``sigma2 = exp(nu) / kappa`` (positive by construction).  The
direct route smooths ``r`` itself with a local linear fit and can go
negative; negative nodes are counted, not hidden.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .bandwidth import CvResult, TraceEstimate, cv_fit
from .config import RunConfig
from .errors import InputError, UnidentifiableVarianceError
from .gridding import GridSpec
from .poly import FitSurface
from .predict import GridInterpolator, InterpPolicy


def squared_residuals(y, fitted) -> np.ndarray:
    """``|y - fitted|**2`` elementwise (squared modulus for complex data)."""
    y = np.asarray(y)
    fitted = np.asarray(fitted)
    if y.shape != fitted.shape:
        raise InputError(f"responses {y.shape} and fitted values {fitted.shape} differ in shape")
    e = y - fitted
    if np.iscomplexobj(e):
        return e.real**2 + e.imag**2
    return e * e


def kappa_hat(r, nu) -> float:
    """``1 / mean(r * exp(-nu))``; raises when every residual is zero."""
    r = np.asarray(r, dtype=np.float64).ravel()
    nu = np.asarray(nu, dtype=np.float64).ravel()
    if r.shape != nu.shape:
        raise InputError(f"{r.size} residuals but {nu.size} log-variance values")
    if not np.any(r > 0):
        raise UnidentifiableVarianceError("all squared residuals are zero; variance is not identifiable")
    return float(1.0 / np.mean(r * np.exp(-nu)))


@dataclass
class VarianceFit:
    """Gridded conditional variance.

    ``sigma2`` has shape M.  For the log route ``nu`` is the smoothed log
    residual field and ``kappa`` the rescaling constant; for the direct
    route ``nu`` is None and ``kappa`` is 1.
    """

    grid: GridSpec
    sigma2: np.ndarray
    route: str
    bandwidth: tuple[float, ...]
    kappa: float = 1.0
    nu: np.ndarray | None = None
    negative_count: int = 0
    cv: CvResult | None = field(default=None, repr=False)

    def predict(self, x, policy=None) -> np.ndarray:
        interp = GridInterpolator(self.grid, _as_locations(x, self.grid.d), policy or self.cv.smoother.policy)
        if self.route == "log":
            return np.exp(interp(self.nu[None])[:, 0]) / self.kappa
        return interp(self.sigma2[None])[:, 0]


def _as_locations(x, d: int) -> np.ndarray:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        x = np.column_stack([x.ravel().real, x.ravel().imag])
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if d == 1 else x[None, :]
    return x


def fit_variance_log(
    x,
    r,
    hlist,
    config: RunConfig = RunConfig(order=1),
    trace: TraceEstimate | None = None,
    grid: GridSpec | None = None,
) -> VarianceFit:
    """Positive variance estimate from log squared residuals."""
    r = np.asarray(r, dtype=np.float64).ravel()
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise InputError("squared residuals must be finite and non-negative")
    n = r.size
    res = cv_fit(x, np.log(r + 1.0 / n), hlist, config, trace=trace, grid=grid)
    nu_grid = res.surface.values[0]
    nu_samples = res.fitted[:, 0]
    kappa = kappa_hat(r, nu_samples)
    return VarianceFit(
        grid=res.grid,
        sigma2=np.exp(nu_grid) / kappa,
        route="log",
        bandwidth=_selected_h(res),
        kappa=kappa,
        nu=nu_grid,
        cv=res,
    )


def fit_variance_direct(
    x,
    r,
    hlist,
    config: RunConfig = RunConfig(order=1),
    trace: TraceEstimate | None = None,
    grid: GridSpec | None = None,
) -> VarianceFit:
    """Local (linear by default) smooth of the squared residuals themselves."""
    r = np.asarray(r, dtype=np.float64).ravel()
    if not np.all(np.isfinite(r)):
        raise InputError("squared residuals must be finite")
    res = cv_fit(x, r, hlist, config, trace=trace, grid=grid)
    s2 = res.surface.values[0]
    return VarianceFit(
        grid=res.grid,
        sigma2=s2,
        route="direct",
        bandwidth=_selected_h(res),
        negative_count=int(np.sum(s2 < 0)),
        cv=res,
    )


def _selected_h(res: CvResult) -> tuple[float, ...]:
    if res.surface.column_h is None:
        return res.surface.kernel.bandwidth
    return tuple(float(v) for v in res.surface.column_h[0])


def z_quantile(p: float) -> float:
    """Standard normal quantile."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise InputError(f"quantile level must be in (0, 1), got {p}")
    return float(ndtri(p))


@dataclass
class IntervalBand:
    """Pointwise band ``m +- z * sqrt(variance)`` on the grid, shape (q, *M)."""

    grid: GridSpec
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    z: float
    center: np.ndarray

    def predict(self, x, policy=None) -> tuple[np.ndarray, np.ndarray]:
        interp = GridInterpolator(self.grid, _as_locations(x, self.grid.d), policy or InterpPolicy())
        return interp(self.lower), interp(self.upper)


def confidence_interval(
    mean: FitSurface,
    variance,
    alpha: float = 0.05,
    clamp: bool = False,
) -> IntervalBand:
    """Pointwise ``1 - alpha`` band from a variance field or a scalar.

    These are prediction-style bands built from the conditional variance,
    not sampling bands for the mean estimate.  A direct-route variance
    with negative nodes is rejected unless ``clamp`` is set, in which case
    negatives are treated as zero.
    """
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must be in (0, 1), got {alpha}")
    z = z_quantile(1.0 - alpha / 2.0)
    if isinstance(variance, VarianceFit):
        if variance.grid.counts != mean.grid.counts:
            raise InputError("variance and mean surfaces live on different grids")
        var = np.asarray(variance.sigma2, dtype=np.float64)
    else:
        var = np.asarray(variance, dtype=np.float64)
        if var.ndim == 0:
            var = np.full(mean.values.shape[1:], float(var))
    if not np.all(np.isfinite(var)):
        raise InputError("variance contains non-finite values")
    if np.any(var < 0):
        if not clamp:
            raise InputError(f"variance is negative at {int(np.sum(var < 0))} nodes; pass clamp=True to clip at zero")
        var = np.maximum(var, 0.0)
    half = z * np.sqrt(var)
    center = mean.values
    return IntervalBand(
        grid=mean.grid,
        lower=center - half,
        upper=center + half,
        alpha=alpha,
        z=z,
        center=center,
    )
