"""Bandwidth candidates, Monte-Carlo degrees of freedom and GCV selection.

The smoother is linear, ``y_hat = S_h y``.  The trace of ``I - S_h`` is
estimated from Gaussian probes ``w`` pushed through the same binned
pipeline, ``(1/N) tr(I - S_h) ~ mean_p w_p.(w_p - S_h w_p) / w_p.w_p``.
Probes only depend on the locations, so one estimate serves every
response column; in practice the probes are gridded in the same pass as
the responses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import InputError, NoValidCandidateError
from .gridding import GridSpec, make_grid
from .poly import FitSurface, KernelSmoother, bandwidth_warnings, merge_complex, split_complex
from .predict import GridInterpolator, fill_masked
from .samples import SampleSet

MAX_COMBINATIONS = 10_000
HLIST_RULES = ("log", "lin")


@dataclass(frozen=True)
class BandwidthGrid:
    """Per-dimension candidate lists on the normalized scale.

    ``joint`` sweeps the lists index by index (equal lengths); otherwise
    the cartesian product is used.  A single list is applied to every
    dimension (isotropic bandwidths).
    """

    lists: tuple[tuple[float, ...], ...]
    rule: str = "log"
    joint: bool = True

    def __post_init__(self):
        if not self.lists:
            raise InputError("bandwidth grid needs at least one list")
        for j, values in enumerate(self.lists):
            a = np.asarray(values, dtype=np.float64)
            if a.size == 0 or not np.all(np.isfinite(a)) or not np.all(a > 0):
                raise InputError(f"bandwidths for dimension {j} must be positive and finite")
            if np.any(np.diff(a) <= 0):
                raise InputError(f"bandwidths for dimension {j} must be strictly increasing")

    def candidates(self, d: int) -> np.ndarray:
        """Candidate bandwidth vectors, shape (C, d)."""
        lists = self.lists
        if len(lists) == 1:
            return np.repeat(np.asarray(lists[0], dtype=np.float64)[:, None], d, axis=1)
        if len(lists) != d:
            raise InputError(f"{len(lists)} bandwidth lists for {d}-dimensional data")
        lengths = {len(v) for v in lists}
        if self.joint and len(lengths) == 1:
            return np.column_stack([np.asarray(v, dtype=np.float64) for v in lists])
        total = math.prod(len(v) for v in lists)
        if total > MAX_COMBINATIONS:
            raise InputError(f"cartesian bandwidth sweep has {total} candidates (limit {MAX_COMBINATIONS})")
        mesh = np.meshgrid(*[np.asarray(v, dtype=np.float64) for v in lists], indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def make_hlist(counts, ranges, rule: str = "log", joint: bool = True) -> BandwidthGrid:
    """Evenly spaced (log or linear) candidate lists, endpoints included.

    >>> make_hlist(3, (0.01, 1)).lists
    ((0.01, 0.1, 1.0),)
    """
    counts = np.atleast_1d(np.asarray(counts, dtype=np.int64))
    ranges = np.asarray(ranges, dtype=np.float64)
    if ranges.ndim == 1:
        ranges = ranges[None, :]
    if ranges.shape[0] == 1 and counts.size > 1:
        ranges = np.repeat(ranges, counts.size, axis=0)
    if counts.size == 1 and ranges.shape[0] > 1:
        counts = np.repeat(counts, ranges.shape[0])
    if counts.size != ranges.shape[0] or ranges.shape[1] != 2:
        raise InputError("counts and ranges must describe the same number of dimensions")
    if rule not in HLIST_RULES:
        raise InputError(f"bandwidth rule must be one of {HLIST_RULES}, got {rule!r}")
    lists = []
    for n, (lo, hi) in zip(counts, ranges):
        if n < 1:
            raise InputError(f"bandwidth count must be >= 1, got {n}")
        if not lo > 0:
            raise InputError(f"bandwidth range must start above zero, got {lo}")
        if n == 1:
            if hi < lo:
                raise InputError(f"invalid bandwidth range [{lo}, {hi}]")
            lists.append((float(lo),))
            continue
        if not hi > lo:
            raise InputError(f"invalid bandwidth range [{lo}, {hi}]")
        if rule == "log":
            v = np.logspace(math.log10(lo), math.log10(hi), int(n))
        else:
            v = np.linspace(lo, hi, int(n))
        v[0], v[-1] = lo, hi
        lists.append(tuple(float(x) for x in v))
    return BandwidthGrid(lists=tuple(lists), rule=rule, joint=joint)


def parse_hlist(text: str) -> BandwidthGrid:
    """Parse ``rule:lo:hi:n[,rule:lo:hi:n...]`` (one item per dimension)."""
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise InputError("empty bandwidth list specification")
    lists = []
    rules = set()
    for part in parts:
        fields_ = part.split(":")
        if len(fields_) != 4:
            raise InputError(f"bandwidth spec {part!r} is not of the form rule:lo:hi:n")
        rule = fields_[0].lower()
        if rule == "linear":
            rule = "lin"
        try:
            lo, hi, n = float(fields_[1]), float(fields_[2]), int(fields_[3])
        except ValueError:
            raise InputError(f"bandwidth spec {part!r} has non-numeric fields") from None
        lists.append(make_hlist(n, (lo, hi), rule).lists[0])
        rules.add(rule)
    return BandwidthGrid(lists=tuple(lists), rule=rules.pop() if len(rules) == 1 else "mixed")


def as_bandwidth_grid(hlist) -> BandwidthGrid:
    if isinstance(hlist, BandwidthGrid):
        return hlist
    if isinstance(hlist, str):
        return parse_hlist(hlist)
    a = np.asarray(hlist, dtype=np.float64)
    if a.ndim == 0:
        return BandwidthGrid(lists=((float(a),),))
    if a.ndim == 1:
        return BandwidthGrid(lists=(tuple(float(v) for v in a),))
    # (C, d) array of explicit candidate vectors, swept jointly
    return BandwidthGrid(lists=tuple(tuple(float(v) for v in col) for col in a.T), joint=True)


def probe_matrix(n: int, n_probes: int, seed: int) -> np.ndarray:
    """Standard normal probes (N, Np); column ``p`` depends only on (seed, p)."""
    out = np.empty((n, n_probes))
    for p in range(n_probes):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), p])))
        out[:, p] = rng.standard_normal(n)
    return out


@dataclass
class TraceEstimate:
    """Per-candidate estimates of ``(1/N) tr(I - S_h)`` and ``dof = tr(S_h)``.

    ``trials`` holds the per-probe ratios, shape (C, Np).
    """

    h: np.ndarray
    ratio: np.ndarray
    dof: np.ndarray
    trials: np.ndarray
    n_points: int
    Np: int
    seed: int
    order: int = 0
    kernel: str = "gaussian"
    exact: bool = False

    @property
    def trial_std(self) -> np.ndarray:
        if self.trials.shape[1] < 2:
            return np.zeros(len(self.ratio))
        return self.trials.std(axis=1, ddof=1)

    @classmethod
    def from_trials(cls, h, trials, n_points, seed, order=0, kernel="gaussian") -> "TraceEstimate":
        trials = np.asarray(trials, dtype=np.float64)
        ratio = trials.mean(axis=1)
        return cls(
            h=np.asarray(h, dtype=np.float64),
            ratio=ratio,
            dof=n_points * (1.0 - ratio),
            trials=trials,
            n_points=n_points,
            Np=trials.shape[1],
            seed=seed,
            order=order,
            kernel=kernel,
        )

    @classmethod
    def from_dof(cls, h, dof, n_points, order=0, kernel="gaussian") -> "TraceEstimate":
        """Wrap exactly computed traces ``tr(S_h)``."""
        dof = np.asarray(dof, dtype=np.float64)
        ratio = 1.0 - dof / n_points
        return cls(
            h=np.asarray(h, dtype=np.float64),
            ratio=ratio,
            dof=dof,
            trials=ratio[:, None],
            n_points=n_points,
            Np=0,
            seed=-1,
            order=order,
            kernel=kernel,
            exact=True,
        )

    def matches(self, h: np.ndarray, n_points: int, order: int, kernel: str) -> bool:
        return (
            self.n_points == n_points
            and self.order == order
            and self.kernel == kernel
            and self.h.shape == h.shape
            and bool(np.all(self.h == h))
        )


def gcv_score(sse, trace_ratio, n: int):
    """GCV = (sse / N) / ratio**2; NaN where ``ratio <= 0`` (invalid candidate)."""
    sse = np.asarray(sse, dtype=np.float64)
    r = np.asarray(trace_ratio, dtype=np.float64)
    if n < 1:
        raise InputError(f"N must be >= 1, got {n}")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (sse / n) / (r * r)
    out = np.where(r > 0, out, np.nan)
    return out[()] if out.ndim == 0 else out


def select_bandwidth(gcv, h=None, dstd: float = 0.0) -> int:
    """Index of the selected candidate.

    ``dstd = 0`` gives the argmin (ties go to the larger bandwidth).  With
    ``dstd > 0`` the largest bandwidth whose GCV is within ``dstd``
    standard deviations (over valid candidates) of the minimum is chosen.
    Bandwidth vectors are ordered by the product of their components.
    """
    gcv = np.asarray(gcv, dtype=np.float64)
    valid = np.isfinite(gcv)
    if not valid.any():
        raise NoValidCandidateError("no bandwidth candidate has a finite GCV score")
    if h is None:
        size = np.arange(len(gcv), dtype=np.float64)
    else:
        h = np.asarray(h, dtype=np.float64)
        size = h if h.ndim == 1 else np.prod(h, axis=1)
    best = np.min(gcv[valid])
    thresh = best
    if dstd > 0 and valid.sum() > 1:
        thresh = best + dstd * np.std(gcv[valid], ddof=1)
    ok = valid & (gcv <= thresh)
    idx = np.nonzero(ok)[0]
    # largest bandwidth; among equal sizes the later candidate
    return int(idx[np.lexsort((idx, size[idx]))[-1]])


@dataclass
class CvReport:
    """Per-candidate GCV table.

    ``gcv`` and ``mse`` have shape (C, Q) for Q response columns; ``ratio``
    and ``dof`` are shared by all columns.  ``selected`` has one index per
    column (empty when no selection was made).
    """

    h: np.ndarray
    gcv: np.ndarray
    mse: np.ndarray
    ratio: np.ndarray
    dof: np.ndarray
    selected: np.ndarray
    dstd: float
    Np: int
    n_points: int
    scale: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.gcv)

    def selected_h(self, column: int = 0) -> np.ndarray:
        return self.h[self.selected[column]]

    def rows(self, column: int = 0) -> list[dict]:
        """Plain rows for tabular output."""
        out = []
        sel = self.selected[column] if len(self.selected) else -1
        for i in range(len(self.h)):
            row = {f"h{j + 1}": float(v) for j, v in enumerate(self.h[i])}
            row.update({f"h{j + 1}_original": float(v) for j, v in enumerate(self.h[i] * self.scale)})
            row.update(
                gcv=float(self.gcv[i, column]),
                mse=float(self.mse[i, column]),
                trace_ratio=float(self.ratio[i]),
                dof=float(self.dof[i]),
                selected=int(i == sel),
            )
            out.append(row)
        return out


@dataclass
class CvResult:
    """Output of :func:`cv_fit`.

    ``surface`` holds every response column at its own selected bandwidth
    (``surface.column_h``).  ``surfaces`` maps candidate index to a fitted
    surface for every candidate that was refit or retained.
    """

    report: CvReport
    trace: TraceEstimate | None
    surface: FitSurface | None
    surfaces: dict
    grid: GridSpec
    smoother: KernelSmoother
    fitted: np.ndarray | None = None

    @property
    def stats(self):
        return self.smoother.stats


def _column_sse(pred: np.ndarray, y: np.ndarray, is_complex: bool) -> np.ndarray:
    """Squared error per response column; complex columns are stored split."""
    err = (pred - y) ** 2
    sse = err.sum(axis=0)
    if is_complex:
        q = sse.shape[0] // 2
        sse = sse[:q] + sse[q:]
    return sse


def fmc_trace(x, hlist, config: RunConfig = RunConfig(), grid: GridSpec | None = None) -> TraceEstimate:
    """Monte-Carlo trace estimate for every candidate on its own gridding pass.

    :func:`cv_fit` computes the same quantity while sharing the gridding
    pass with the responses; this entry point is for standalone use.
    """
    samples = SampleSet.from_arrays(x)
    res = cv_fit(samples.x, np.zeros((samples.n, 0)), hlist, config.replace(calc_dof=True), grid=grid)
    return res.trace


def exact_trace(x, hlist, config: RunConfig = RunConfig(), grid: GridSpec | None = None) -> TraceEstimate:
    """``tr(S_h)`` from the binned pipeline applied to every unit vector.

    Costs N smoothing columns per candidate; meant for N up to a few
    thousand.
    """
    samples = SampleSet.from_arrays(x)
    n = samples.n
    grid = grid or make_grid(samples.x, config.R, config.M, config.flag_power2, config.upsample)
    sm = KernelSmoother(grid, config.kernel, config.order, config.spread, config.policy, config.chunk_size)
    interp = GridInterpolator(grid, samples.x, config.policy)
    bw = as_bandwidth_grid(hlist)
    H = bw.candidates(grid.d)
    dof = np.zeros(len(H))
    chunk = config.chunk_size
    for start in range(0, n, chunk):
        cols = np.arange(start, min(n, start + chunk))
        E = np.zeros((n, len(cols)))
        E[cols, np.arange(len(cols))] = 1.0
        fields = sm.grid_data(samples.x, E)
        for c, h in enumerate(H):
            vals, mask, _ = sm.fit_values(fields, h, np.arange(len(cols)))
            vals, _ = fill_masked(vals, mask | ~np.all(np.isfinite(vals), axis=0))
            pred = interp(vals)
            dof[c] += pred[cols, np.arange(len(cols))].sum()
    return TraceEstimate.from_dof(H, dof, n, config.order, config.kernel)


def cv_fit(
    x,
    y,
    hlist,
    config: RunConfig = RunConfig(),
    trace: TraceEstimate | None = None,
    grid: GridSpec | None = None,
    keep_surfaces: bool = False,
) -> CvResult:
    """Sweep candidate bandwidths, score them by GCV and fit at the selection.

    Parameters
    ----------
    x : array_like
        Locations (N, d) or a complex N-vector.
    y : array_like
        Responses (N,) or (N, q), real or complex.
    hlist : str, BandwidthGrid or array_like
        Candidates on the normalized scale.
    config : RunConfig
        Fitting, gridding and selection settings.
    trace : TraceEstimate, optional
        Reuse an earlier estimate (same locations, order and kernel).
    grid : GridSpec, optional
        Reuse an existing grid.
    keep_surfaces : bool
        Keep the surface of every candidate (implied by ``calc_dof=False``).

    Returns
    -------
    CvResult
    """
    samples = SampleSet.from_arrays(x, y)
    n = samples.n
    yv = samples.y if samples.y is not None else np.zeros((n, 0))
    yr, is_complex = split_complex(yv)
    q_real = yr.shape[1]
    q = yv.shape[1]
    grid = grid or make_grid(samples.x, config.R, config.M, config.flag_power2, config.upsample)
    sm = KernelSmoother(grid, config.kernel, config.order, config.spread, config.policy, config.chunk_size)
    bw = as_bandwidth_grid(hlist)
    H = bw.candidates(grid.d)
    family = config.kernel.lower()

    if trace is not None and not trace.matches(H, n, config.order, family):
        raise InputError("supplied trace estimate does not match these candidates, locations or smoother")
    need_probes = config.calc_dof and trace is None
    n_probes = config.Np if need_probes else 0
    weights = yr
    if need_probes:
        weights = np.concatenate([yr, probe_matrix(n, n_probes, config.seed)], axis=1)
    fields = sm.grid_data(samples.x, weights)
    interp = GridInterpolator(grid, samples.x, config.policy)

    keep = keep_surfaces or not config.calc_dof
    C = len(H)
    sse = np.zeros((C, q))
    trials = np.zeros((C, n_probes))
    surfaces = {}
    total_cols = q_real + n_probes
    for c, h in enumerate(H):
        blocks = []
        for start in range(0, total_cols, config.chunk_size):
            cols = np.arange(start, min(total_cols, start + config.chunk_size))
            vals, mask, _ = sm.fit_values(fields, h, cols)
            full_mask = mask | ~np.all(np.isfinite(vals), axis=0)
            vals, _ = fill_masked(vals, full_mask)
            pred = interp(vals)
            ycols = cols[cols < q_real]
            pcols = cols[cols >= q_real]
            if len(pcols):
                w = weights[:, pcols]
                wh = pred[:, len(ycols) :]
                trials[c, pcols - q_real] = np.einsum("np,np->p", w, w - wh) / np.einsum("np,np->p", w, w)
            if len(ycols):
                blocks.append((ycols, pred[:, : len(ycols)], vals[: len(ycols)], full_mask))
        if blocks:
            pred_y = np.concatenate([b[1] for b in blocks], axis=1)
            sse[c] = _column_sse(pred_y, yr, is_complex)
        if keep and q_real:
            vals = np.concatenate([b[2] for b in blocks], axis=0)
            m = np.logical_or.reduce([b[3] for b in blocks])
            surfaces[c] = _surface(sm, h, merge_complex(vals, is_complex), m)
    if need_probes:
        trace = TraceEstimate.from_trials(H, trials, n, config.seed, config.order, family)
        sm.stats.trace_passes += 1

    notes = []
    if trace is not None:
        gcv = gcv_score(sse, trace.ratio[:, None], n)
        ratio, dof, Np = trace.ratio, trace.dof, trace.Np
    else:
        gcv = np.full((C, q), np.nan)
        ratio = dof = np.full(C, np.nan)
        Np = 0
        notes.append("degrees of freedom not computed; no bandwidth selection made")
    selected = np.zeros(0, dtype=np.int64)
    if trace is not None and q:
        selected = np.array([select_bandwidth(gcv[:, j], H, config.dstd) for j in range(q)], dtype=np.int64)
        if np.any(selected == 0) or np.any(selected == C - 1):
            notes.append("selected bandwidth lies on the edge of the candidate range")
    report = CvReport(
        h=H,
        gcv=gcv,
        mse=sse / n,
        ratio=ratio,
        dof=dof,
        selected=selected,
        dstd=config.dstd,
        Np=Np,
        n_points=n,
        scale=np.asarray(grid.scale),
        warnings=notes,
    )

    surface = None
    fitted = None
    if len(selected):
        for c in np.unique(selected):
            if c in surfaces:
                continue
            cols = np.nonzero(selected == c)[0]
            rcols = np.concatenate([cols, cols + q]) if is_complex else cols
            fit = sm.fit_columns(fields, H[c], rcols)
            sub = fit
            sub.values = merge_complex(fit.values, is_complex)
            surfaces[int(c)] = sub if len(cols) == q else _partial(sub, cols, q)
        surface = _assemble(surfaces, selected, H, q)
        fitted = interp(surface.values)
    elif not config.calc_dof and len(surfaces) == 1:
        surface = surfaces[0]
    return CvResult(
        report=report,
        trace=trace,
        surface=surface,
        surfaces=surfaces,
        grid=grid,
        smoother=sm,
        fitted=fitted,
    )


def _surface(sm: KernelSmoother, h, values, mask) -> FitSurface:
    kernel = sm.kernel(h)
    return FitSurface(
        grid=sm.grid,
        values=values,
        order=sm.order,
        kernel=kernel,
        mask=mask,
        fallback=np.zeros(sm.grid.counts, dtype=bool),
        policy=sm.policy,
        warnings=bandwidth_warnings(sm.grid, kernel),
    )


def _partial(surface: FitSurface, cols, q: int) -> FitSurface:
    """Place a subset of columns into a q-column surface (others NaN)."""
    values = np.full((q,) + surface.values.shape[1:], np.nan, dtype=surface.values.dtype)
    values[cols] = surface.values
    surface.values = values
    return surface


def _assemble(surfaces: dict, selected: np.ndarray, H: np.ndarray, q: int) -> FitSurface:
    first = surfaces[int(selected[0])]
    values = np.empty((q,) + first.values.shape[1:], dtype=np.result_type(*[surfaces[int(c)].values for c in selected]))
    mask = np.zeros(first.values.shape[1:], dtype=bool)
    fallback = np.zeros_like(mask)
    notes = []
    for j, c in enumerate(selected):
        s = surfaces[int(c)]
        values[j] = s.values[j]
        mask |= s.mask
        fallback |= s.fallback
        notes.extend(w for w in s.warnings if w not in notes)
    return FitSurface(
        grid=first.grid,
        values=values,
        order=first.order,
        kernel=first.kernel,
        mask=mask,
        fallback=fallback,
        density=first.density,
        policy=first.policy,
        warnings=notes,
        column_h=H[selected],
    )
