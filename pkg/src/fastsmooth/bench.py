"""Runtime scaling harness.

For each sample size the fixed-bandwidth pipeline (no degrees of
freedom) is timed stage by stage: spreading, FFT work (half spectra and
moment convolutions), local solve and interpolation back to the samples.
Each stage reports the median of ``repeats`` runs.  Small sizes are also
checked against the direct O(N * M) smoother.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .direct import direct_local_poly
from .errors import ResourceLimitError
from .gridding import SpreadConfig, _check_index, _half_spectra, _spread_real, GriddedFields, make_grid
from .kernels import KernelSpec
from .poly import _solve_local, convolve_moments, density_mask, monomial_basis, moment_spectra
from .predict import GridInterpolator, InterpPolicy

STAGES = ("spread", "fft", "solve", "interpolate")


@dataclass
class BenchRow:
    n: int
    times: dict
    total: float
    oracle_error: float | None = None

    def as_dict(self) -> dict:
        out = {"n": self.n}
        out.update({f"{k}_s": v for k, v in self.times.items()})
        out["total_s"] = self.total
        out["oracle_rel_error"] = "" if self.oracle_error is None else self.oracle_error
        return out


@dataclass
class BenchResult:
    rows: list
    config: dict = field(default_factory=dict)

    def slope(self, stage: str = "spread", min_n: int = 0) -> float:
        """Least-squares log-log slope of a stage's median time against N."""
        ns = np.array([r.n for r in self.rows if r.n >= min_n], dtype=float)
        ts = np.array([r.times[stage] for r in self.rows if r.n >= min_n], dtype=float)
        return float(np.polyfit(np.log10(ns), np.log10(np.maximum(ts, 1e-9)), 1)[0])


def estimate_bytes(n: int, d: int, M: int, digits: int) -> int:
    """Rough peak working set of one benchmark size."""
    per_point = 8 * (d + 2) + 8 * 4 * (2 * digits) ** d
    grid = 16 * (4 * M) ** d * 8
    return int(n * per_point + grid)


def bench_data(n: int, seed: int = 0, d: int = 1):
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    y = np.sin(2 * np.pi * x).sum(axis=1) + 0.1 * rng.standard_normal(n)
    return x, y


def _median_time(fn, repeats: int):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), out


def run_bench(
    sizes,
    M: int = 100,
    digits: int = 1,
    h: float = 0.05,
    order: int = 0,
    repeats: int = 10,
    oracle_cap: int = 10_000,
    memory_budget: float = 4e9,
    seed: int = 0,
    interp: str = "linear",
) -> BenchResult:
    """Time the fixed-bandwidth smooth over ``sizes`` (1-d data)."""
    cfg = SpreadConfig(digits=digits)
    policy = InterpPolicy(method=interp, extrapolation="linear")
    rows = []
    for n in sizes:
        n = int(n)
        need = estimate_bytes(n, 1, M, digits)
        if need > memory_budget:
            raise ResourceLimitError(
                f"N={n} needs about {need / 1e9:.2f} GB, over the {memory_budget / 1e9:.2f} GB budget"
            )
        x, y = bench_data(n, seed)
        grid = make_grid(x, M=M)
        kernel = KernelSpec.make("gaussian", h, 1)
        basis = monomial_basis(1, order)
        c = _check_index(grid.to_index(x), grid)
        w = np.column_stack([np.ones(n), y])

        t_spread, spread = _median_time(lambda: _spread_real(c, w, grid, cfg), repeats)

        def fft_stage():
            spectra = _half_spectra(spread, grid, cfg)
            fields = GriddedFields(grid=grid, spectra=spectra, n_points=n)
            ms = moment_spectra(grid, kernel, monomial_basis(1, 2 * order).indices)
            return convolve_moments(fields, kernel, basis, spectra=ms)

        t_fft, mom = _median_time(fft_stage, repeats)
        mask = density_mask(mom.s[(0,)], grid, n, digits)
        t_solve, solved = _median_time(lambda: _solve_local(mom, basis, mask)[0], repeats)
        interp_obj = GridInterpolator(grid, x, policy)
        t_interp, _ = _median_time(lambda: interp_obj(np.nan_to_num(solved)), repeats)
        times = {"spread": t_spread, "fft": t_fft, "solve": t_solve, "interpolate": t_interp}

        err = None
        if n <= oracle_cap:
            ref = direct_local_poly(x, y, grid.nodes(original=True), kernel, order, grid.scale)[:, 0]
            ok = ~mask
            span = float(np.ptp(y))
            err = float(np.max(np.abs(solved[0][ok] - ref[ok])) / span)
        rows.append(BenchRow(n=n, times=times, total=float(sum(times.values())), oracle_error=err))
    return BenchResult(
        rows=rows,
        config={
            "M": M,
            "accuracy": digits,
            "h": h,
            "order": order,
            "repeats": repeats,
            "oracle_cap": oracle_cap,
            "interp": interp,
            "calc_dof": False,
            "seed": seed,
        },
    )
