"""Command line interface.

Commands: ``fit``, ``predict``, ``interval``, ``gcv-curve``, ``synth`` and
``bench``.  Exit codes: 0 success, 2 input error, 3 numerical failure,
4 resource guard.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bandwidth import cv_fit
from .bench import STAGES, run_bench
from .config import RunConfig
from .errors import FastSmoothError, InputError
from .io import (
    load_locations,
    load_table,
    read_surface,
    read_surface_document,
    response_table,
    surface_extras,
    write_json,
    write_rows,
    write_surface,
    write_table,
)
from .poly import FitSurface
from .predict import InterpPolicy, interpolate
from .synth import GENERATORS, generate
from .variance import confidence_interval, kappa_hat, squared_residuals

# flag name -> RunConfig field
_CONFIG_FLAGS = {
    "y_type": "y_type",
    "kernel": "kernel",
    "order": "order",
    "R": "R",
    "M": "M",
    "power2": "flag_power2",
    "accuracy": "accuracy",
    "deconv": "nufft_deconv",
    "upsample": "upsample",
    "dstd": "dstd",
    "calc_dof": "calc_dof",
    "Np": "Np",
    "interp": "interp",
    "extrap": "extrap",
    "compact": "compact",
    "seed": "seed",
    "hlist": "hlist",
    "chunk_size": "chunk_size",
}


def _parse_m(text: str):
    parts = [int(p) for p in text.split(",") if p.strip()]
    return parts[0] if len(parts) == 1 else tuple(parts)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (defaults from RunConfig)")
    g.add_argument("--config", help="JSON config or run manifest to start from")
    g.add_argument("--y-type", dest="y_type", choices=["mean", "variance"])
    g.add_argument("--kernel")
    g.add_argument("--order", type=int, choices=[0, 1, 2])
    g.add_argument("--R", type=float)
    g.add_argument("--M", type=_parse_m, help="grid size, scalar or comma list per dimension")
    g.add_argument("--power2", dest="power2", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--accuracy", type=int)
    g.add_argument("--deconv", dest="deconv", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--upsample", type=int, choices=[1, 2])
    g.add_argument("--dstd", type=float)
    g.add_argument("--calc-dof", dest="calc_dof", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--Np", type=int)
    g.add_argument("--interp", choices=["linear", "cubic"])
    g.add_argument("--extrap", choices=["linear", "nearest", "constant"])
    g.add_argument("--compact", dest="compact", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--seed", type=int)
    g.add_argument("--hlist", help="rule:lo:hi:n[,rule:lo:hi:n...], rule is log or lin")
    g.add_argument("--chunk-size", dest="chunk_size", type=int)


def resolve_config(args) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot load config {args.config}: {exc}") from None
        base = data.get("config", data)
    for flag, name in _CONFIG_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            base[name] = v
    return RunConfig.from_dict(base)


def _surface_names(table, surface: FitSurface):
    return table.response_columns if len(table.response_columns) == surface.q else None


def cmd_fit(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    t0 = time.perf_counter()
    table = load_table(args.data)
    samples = table.samples
    t_load = time.perf_counter() - t0
    extras = {}
    route = None
    y = samples.y
    if cfg.y_type == "variance":
        route = args.route
        if args.mean_surface:
            mean = read_surface(args.mean_surface)
            y = squared_residuals(samples.y, interpolate(mean, samples.x))
        else:
            if np.iscomplexobj(y) or np.any(y < 0):
                raise InputError("variance fits need non-negative squared residuals (or pass --mean-surface)")
        r = np.real(y)
        y = np.log(r + 1.0 / samples.n) if route == "log" else r
    t1 = time.perf_counter()
    res = cv_fit(samples.x, y, cfg.hlist, cfg)
    t_fit = time.perf_counter() - t1
    surface = res.surface
    names = None
    if surface is not None:
        names = _surface_names(table, surface)
        if cfg.y_type == "variance":
            if route == "log":
                nu = surface.values
                kappa = np.array([kappa_hat(r[:, j], res.fitted[:, j]) for j in range(r.shape[1])])
                extras["nu"] = nu
                extras["kappa"] = kappa.tolist()
                surface.values = np.exp(nu) / kappa.reshape((-1,) + (1,) * surface.grid.d)
            extras["variance_route"] = route
            extras["negative_nodes"] = int(np.sum(surface.values < 0))
        write_surface(out / "surface.json", surface, compact=cfg.compact, extras=extras, names=names)
    elif res.surfaces:
        for c, s in sorted(res.surfaces.items()):
            write_surface(out / f"surface_h{c + 1:03d}.json", s, compact=cfg.compact, names=_surface_names(table, s))
    write_rows(out / "cv_report.csv", _report_rows(res.report, table.response_columns))
    t_total = time.perf_counter() - t0
    manifest = {
        "tool": "fastsmooth",
        "version": __version__,
        "command": "fit",
        "data": str(args.data),
        "n_samples": samples.n,
        "dimensions": samples.d,
        "responses": table.response_columns,
        "complex_locations": samples.complex_locations,
        "complex_responses": samples.is_complex,
        "config": cfg.to_dict(),
        "variance_route": route,
        "grid": res.grid.to_dict(),
        "selected": _selection_summary(res.report, table.response_columns),
        "stages": {"fmc": bool(cfg.calc_dof), "trace_passes": res.stats.trace_passes, "gridding_passes": res.stats.gridding_passes},
        "timing_s": {"load": t_load, "fit": t_fit, "total": t_total},
        "warnings": list(res.report.warnings) + (list(surface.warnings) if surface is not None else []),
    }
    write_json(out / "manifest.json", manifest)
    for row in manifest["selected"]:
        print(
            f"{row['response']}: selected candidate {row['index'] + 1} of {len(res.report.h)}; "
            f"normalized h = {_fmt_h(row['h'])}; original h = {_fmt_h(row['h_original'])}"
        )
    return 0


def _fmt_h(h) -> str:
    return ", ".join(f"{v:.5g}" for v in h)


def _selection_summary(report, names) -> list:
    out = []
    for j, idx in enumerate(report.selected):
        h = report.h[idx]
        out.append(
            {
                "response": names[j] if j < len(names) else f"y{j + 1}",
                "index": int(idx),
                "h": h.tolist(),
                "h_original": (h * report.scale).tolist(),
                "gcv": float(report.gcv[idx, j]),
                "dof": float(report.dof[idx]),
            }
        )
    return out


def _report_rows(report, names) -> list:
    rows = []
    q = report.gcv.shape[1]
    for j in range(q):
        for row in report.rows(j):
            row = {"response": names[j] if j < len(names) else f"y{j + 1}", **row}
            rows.append(row)
    return rows


def cmd_gcv_curve(args) -> int:
    cfg = resolve_config(args)
    table = load_table(args.data)
    res = cv_fit(table.samples.x, table.samples.y, cfg.hlist, cfg.replace(calc_dof=True))
    write_rows(args.out, _report_rows(res.report, table.response_columns))
    return 0


def cmd_predict(args) -> int:
    doc = read_surface_document(args.surface)
    surface = read_surface(args.surface)
    x = load_locations(args.queries)
    policy = surface.policy
    if args.interp or args.extrap:
        policy = InterpPolicy(method=args.interp or policy.method, extrapolation=args.extrap or policy.extrapolation)
    values = interpolate(surface, x, policy)
    extras = surface_extras(doc)
    if "nu" in extras and extras.get("variance_route") == "log":
        # interpolate the log field and map back, keeping predictions positive
        tmp = FitSurface(surface.grid, extras["nu"], surface.order, surface.kernel, surface.mask, surface.fallback)
        kappa = np.asarray(extras["kappa"])
        values = np.exp(interpolate(tmp, x, policy)) / kappa
    write_table(args.out, response_table(x, values, doc["responses"], args_complex(args.queries)))
    return 0


def args_complex(path) -> bool:
    with open(path) as fh:
        header = fh.readline()
    return "z_re" in header


def cmd_interval(args) -> int:
    mean = read_surface(args.mean)
    if (args.variance is None) == (args.variance_value is None):
        raise InputError("give exactly one of --variance (surface file) or --variance-value (scalar)")
    if args.variance is not None:
        vdoc = read_surface_document(args.variance)
        vs = read_surface(args.variance)
        if vs.q != 1 and vs.q != mean.q:
            raise InputError("variance surface must have one column or one per mean column")
        variance = vs.values if vs.q == mean.q else np.broadcast_to(vs.values, mean.values.shape)
        if np.iscomplexobj(variance):
            raise InputError("variance surface must be real")
        extras = surface_extras(vdoc)
        route = extras.get("variance_route", "direct")
    else:
        variance = float(args.variance_value)
        route = "scalar"
    band = confidence_interval(mean, np.asarray(variance), args.alpha, clamp=args.clamp)
    out = Path(args.out)
    lower = FitSurface(mean.grid, band.lower, mean.order, mean.kernel, mean.mask, mean.fallback, policy=mean.policy)
    upper = FitSurface(mean.grid, band.upper, mean.order, mean.kernel, mean.mask, mean.fallback, policy=mean.policy)
    write_surface(out / "lower.json", lower, extras={"alpha": args.alpha, "z": band.z, "variance_route": route})
    write_surface(out / "upper.json", upper, extras={"alpha": args.alpha, "z": band.z, "variance_route": route})
    if args.at:
        x = load_locations(args.at)
        lo = interpolate(lower, x)
        hi = interpolate(upper, x)
        m = interpolate(mean, x)
        cols = response_table(x, m, [f"m{j + 1}" for j in range(mean.q)], args_complex(args.at))
        for j in range(mean.q):
            cols[f"lower{j + 1}"] = lo[:, j].real
            cols[f"upper{j + 1}"] = hi[:, j].real
        write_table(out / "interval.csv", cols)
    return 0


def cmd_synth(args) -> int:
    x, y, truth = generate(args.name, args.n, args.seed)
    names = [f"y{j + 1}" for j in range(y.shape[1])]
    if np.iscomplexobj(x):
        xs = np.column_stack([x.real, x.imag])
        cols = response_table(xs, y, ["y"] if y.shape[1] == 1 else names, complex_locations=True)
    else:
        cols = response_table(x, y, names)
    if args.truth:
        for j in range(truth["mean"].shape[1]):
            v = truth["mean"][:, j]
            if np.iscomplexobj(v):
                cols[f"true{j + 1}_re"], cols[f"true{j + 1}_im"] = v.real, v.imag
            else:
                cols[f"true{j + 1}"] = v
        if "variance" in truth:
            cols["true_variance"] = truth["variance"]
    write_table(args.out, cols)
    return 0


def _parse_sizes(text: str) -> list[int]:
    try:
        return [int(float(s)) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"cannot parse sizes {text!r}") from None


def cmd_bench(args) -> int:
    res = run_bench(
        _parse_sizes(args.sizes),
        M=args.M,
        digits=args.accuracy,
        h=args.h,
        order=args.order,
        repeats=args.repeats,
        oracle_cap=args.oracle_cap,
        memory_budget=args.memory_budget * 1e9,
        seed=args.seed,
    )
    write_rows(args.out, [r.as_dict() for r in res.rows])
    for r in res.rows:
        stages = "  ".join(f"{s}={r.times[s]:.4g}s" for s in STAGES)
        print(f"N={r.n:>10d}  {stages}")
    if len(res.rows) > 1:
        print(f"spread log-log slope: {res.slope('spread'):.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fastsmooth", description="Fast binned kernel regression on scattered data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="select a bandwidth by GCV and fit a surface")
    f.add_argument("data", help="input table")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--mean-surface", help="with --y-type variance: compute squared residuals against this surface")
    f.add_argument("--route", choices=["log", "direct"], default="log", help="variance route")
    _add_config_flags(f)
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("gcv-curve", help="write the per-bandwidth GCV table")
    g.add_argument("data")
    g.add_argument("--out", required=True, help="output CSV")
    _add_config_flags(g)
    g.set_defaults(func=cmd_gcv_curve)

    pr = sub.add_parser("predict", help="evaluate a surface at query locations")
    pr.add_argument("surface")
    pr.add_argument("queries", help="table with x1..xd or z_re, z_im")
    pr.add_argument("--out", required=True)
    pr.add_argument("--interp", choices=["linear", "cubic"])
    pr.add_argument("--extrap", choices=["linear", "nearest", "constant"])
    pr.set_defaults(func=cmd_predict)

    iv = sub.add_parser("interval", help="pointwise bands from a mean and a variance")
    iv.add_argument("mean", help="mean surface file")
    iv.add_argument("--variance", help="variance surface file")
    iv.add_argument("--variance-value", type=float, help="constant variance")
    iv.add_argument("--alpha", type=float, default=0.05)
    iv.add_argument("--clamp", action="store_true", help="treat negative variance as zero")
    iv.add_argument("--at", help="optional query table; writes interval.csv")
    iv.add_argument("--out", required=True, help="output directory")
    iv.set_defaults(func=cmd_interval)

    s = sub.add_parser("synth", help="write a synthetic data set")
    s.add_argument("name", choices=sorted(GENERATORS))
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--truth", action="store_true", help="also write the noise-free columns")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("bench", help="runtime scaling of the fixed-bandwidth smooth")
    b.add_argument("--sizes", default="1e3,1e4,1e5,1e6,1e7")
    b.add_argument("--M", type=int, default=100)
    b.add_argument("--accuracy", type=int, default=1)
    b.add_argument("--h", type=float, default=0.05)
    b.add_argument("--order", type=int, default=0)
    b.add_argument("--repeats", type=int, default=10)
    b.add_argument("--oracle-cap", dest="oracle_cap", type=int, default=10_000)
    b.add_argument("--memory-budget", dest="memory_budget", type=float, default=4.0, help="GB")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except FastSmoothError as exc:
        print(f"fastsmooth: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MemoryError as exc:
        print(f"fastsmooth: error: out of memory ({exc})", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
