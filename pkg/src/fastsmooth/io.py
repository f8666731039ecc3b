"""Delimited-table input, surface files, reports and manifests.

Table schema: a header row, location columns ``x1 .. xd`` (or the pair
``z_re, z_im`` for complex locations), then response columns.  A response
given as the pair ``<name>_re, <name>_im`` is complex.

Surfaces are JSON documents holding the grid description, the axes in
original units and the values in row-major order.  Floats are written with
``repr`` precision, so reading a surface back is bit-exact.  Every file
is written to a temporary sibling and moved into place.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, TableFormatError
from .gridding import GridSpec
from .kernels import KernelSpec
from .poly import FitSurface
from .predict import InterpPolicy
from .samples import SampleSet

SURFACE_FORMAT = "fastsmooth-surface"
SURFACE_VERSION = 1
_X_COL = re.compile(r"^x(\d+)$")


@dataclass
class Table:
    """Parsed table plus the role of every column."""

    samples: SampleSet
    location_columns: list
    response_columns: list
    n_rows: int
    extra: dict = field(default_factory=dict)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sniff_delimiter(header_line: str) -> str:
    for delim in (",", "\t", ";"):
        if delim in header_line:
            return delim
    return ","


def read_rows(path):
    """Header and numeric rows of a delimited file; errors name 1-based data rows."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise TableFormatError(f"{path} is empty")
    delim = _sniff_delimiter(lines[0])
    reader = csv.reader(lines, delimiter=delim)
    header = [h.strip() for h in next(reader)]
    if len(set(header)) != len(header):
        raise TableFormatError(f"duplicate column names in header of {path}")
    rows = []
    for i, raw in enumerate(reader, start=1):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != len(header):
            raise TableFormatError(f"expected {len(header)} fields, found {len(raw)}", row=i)
        vals = []
        for name, cell in zip(header, raw):
            try:
                v = float(cell)
            except ValueError:
                raise TableFormatError(f"non-numeric value {cell.strip()!r}", row=i, column=name) from None
            if not math.isfinite(v):
                raise TableFormatError(f"non-finite value {cell.strip()!r}", row=i, column=name)
            vals.append(v)
        rows.append(vals)
    if not rows:
        raise TableFormatError(f"{path} has a header but no data rows")
    return header, np.asarray(rows, dtype=np.float64)


def split_columns(header: list[str]):
    """Classify columns -> (location names, complex-location flag, response specs).

    Response specs are ``(name, real column, imag column or None)``.
    """
    if "z_re" in header or "z_im" in header:
        if not ("z_re" in header and "z_im" in header):
            raise TableFormatError("complex locations need both z_re and z_im columns")
        loc = ["z_re", "z_im"]
        complex_loc = True
    else:
        loc = sorted((h for h in header if _X_COL.match(h)), key=lambda h: int(_X_COL.match(h).group(1)))
        complex_loc = False
        if not loc:
            raise TableFormatError("no location columns (expected x1, x2, ... or z_re, z_im)")
        expected = [f"x{j}" for j in range(1, len(loc) + 1)]
        if loc != expected:
            raise TableFormatError(f"location columns must be {expected}, found {loc}")
    responses = []
    used = set(loc)
    for h in header:
        if h in used:
            continue
        if h.endswith("_re") and h[:-3] + "_im" in header:
            base = h[:-3]
            responses.append((base, h, base + "_im"))
            used.update({h, base + "_im"})
        elif h.endswith("_im") and h[:-3] + "_re" in header:
            continue
        else:
            responses.append((h, h, None))
            used.add(h)
    return loc, complex_loc, responses


def load_table(path, require_responses: bool = True) -> Table:
    """Read a sample table (see module docstring for the schema)."""
    header, data = read_rows(path)
    loc, complex_loc, responses = split_columns(header)
    col = {h: i for i, h in enumerate(header)}
    if complex_loc:
        x = data[:, col["z_re"]] + 1j * data[:, col["z_im"]]
    else:
        x = data[:, [col[h] for h in loc]]
    if require_responses and not responses:
        raise TableFormatError("no response columns")
    y = None
    if responses:
        is_complex = any(im is not None for _, _, im in responses)
        y = np.empty((data.shape[0], len(responses)), dtype=np.complex128 if is_complex else np.float64)
        for j, (_, re_col, im_col) in enumerate(responses):
            y[:, j] = data[:, col[re_col]]
            if im_col is not None:
                y[:, j] += 1j * data[:, col[im_col]]
    samples = SampleSet.from_arrays(x, y)
    return Table(
        samples=samples,
        location_columns=loc,
        response_columns=[r[0] for r in responses],
        n_rows=data.shape[0],
    )


def load_locations(path) -> np.ndarray:
    """Query locations from a table (responses, if any, are ignored)."""
    t = load_table(path, require_responses=False)
    return t.samples.x


def format_table(columns: dict) -> str:
    """CSV text from ordered ``name -> 1-d array``; floats keep full precision."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    lines = [",".join(names)]
    for i in range(len(arrays[0]) if arrays else 0):
        lines.append(",".join(_fmt(a[i]) for a in arrays))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (str, bytes)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_table(path, columns: dict) -> None:
    atomic_write(path, format_table(columns))


def response_table(x: np.ndarray, values: np.ndarray, names: list[str], complex_locations: bool = False) -> dict:
    """Columns dict for locations plus (possibly complex) values."""
    cols = {}
    if complex_locations:
        cols["z_re"], cols["z_im"] = x[:, 0], x[:, 1]
    else:
        for j in range(x.shape[1]):
            cols[f"x{j + 1}"] = x[:, j]
    for j, name in enumerate(names):
        v = values[:, j]
        if np.iscomplexobj(v):
            cols[f"{name}_re"], cols[f"{name}_im"] = v.real, v.imag
        else:
            cols[name] = v
    return cols


def write_rows(path, rows: list[dict]) -> None:
    if not rows:
        atomic_write(path, "")
        return
    names = list(rows[0])
    write_table(path, {n: [r[n] for r in rows] for n in names})


# surfaces --------------------------------------------------------------


def _encode(a: np.ndarray) -> dict:
    a = np.asarray(a)
    out = {"shape": list(a.shape)}
    if np.iscomplexobj(a):
        out["re"] = a.real.ravel().tolist()
        out["im"] = a.imag.ravel().tolist()
    elif a.dtype == bool:
        out["bool"] = a.ravel().astype(int).tolist()
    else:
        out["re"] = a.astype(np.float64).ravel().tolist()
    return out


def _decode(d: dict) -> np.ndarray:
    shape = tuple(d["shape"])
    if "bool" in d:
        return np.asarray(d["bool"], dtype=bool).reshape(shape)
    re_ = np.asarray(d["re"], dtype=np.float64)
    if "im" in d:
        return (re_ + 1j * np.asarray(d["im"], dtype=np.float64)).reshape(shape)
    return re_.reshape(shape)


def surface_document(surface: FitSurface, compact: bool = True, extras: dict | None = None, names=None) -> dict:
    """JSON-ready description of a fitted surface.

    ``compact`` keeps only what prediction needs; otherwise the density,
    mask and fallback fields are included as well.
    """
    doc = {
        "format": SURFACE_FORMAT,
        "version": SURFACE_VERSION,
        "grid": surface.grid.to_dict(),
        "axes": [ax.tolist() for ax in surface.grid.axes(original=True)],
        "values": _encode(surface.values),
        "responses": list(names) if names is not None else [f"y{j + 1}" for j in range(surface.q)],
        "order": surface.order,
        "kernel": surface.kernel.family,
        "bandwidth": list(surface.kernel.bandwidth),
        "bandwidth_original": [h * s for h, s in zip(surface.kernel.bandwidth, surface.grid.scale)],
        "column_bandwidth": None if surface.column_h is None else np.asarray(surface.column_h).tolist(),
        "policy": {"method": surface.policy.method, "extrapolation": surface.policy.extrapolation},
        "fill_policy": surface.fill_policy,
        "masked_nodes": int(np.sum(surface.mask)),
        "fallback_nodes": int(np.sum(surface.fallback)),
        "warnings": list(surface.warnings),
        "compact": bool(compact),
    }
    if not compact:
        doc["mask"] = _encode(surface.mask)
        doc["fallback"] = _encode(surface.fallback)
        if surface.density is not None:
            doc["density"] = _encode(surface.density)
    if extras:
        doc["extras"] = {k: (_encode(v) if isinstance(v, np.ndarray) else v) for k, v in extras.items()}
    return doc


def write_surface(path, surface: FitSurface, compact: bool = True, extras: dict | None = None, names=None) -> None:
    atomic_write(path, json.dumps(surface_document(surface, compact, extras, names)))


def read_surface_document(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None
    if doc.get("format") != SURFACE_FORMAT:
        raise InputError(f"{path} is not a surface file")
    return doc


def surface_from_document(doc: dict) -> FitSurface:
    grid = GridSpec.from_dict(doc["grid"])
    values = _decode(doc["values"])
    shape = tuple(grid.counts)
    mask = _decode(doc["mask"]) if "mask" in doc else np.zeros(shape, dtype=bool)
    fallback = _decode(doc["fallback"]) if "fallback" in doc else np.zeros(shape, dtype=bool)
    density = _decode(doc["density"]) if "density" in doc else None
    col_h = doc.get("column_bandwidth")
    return FitSurface(
        grid=grid,
        values=values,
        order=int(doc["order"]),
        kernel=KernelSpec(family=doc["kernel"], bandwidth=tuple(doc["bandwidth"])),
        mask=mask,
        fallback=fallback,
        density=density,
        policy=InterpPolicy(**doc["policy"]),
        fill_policy=doc.get("fill_policy", "neighbour-average"),
        warnings=list(doc.get("warnings", [])),
        column_h=None if col_h is None else np.asarray(col_h, dtype=np.float64),
    )


def read_surface(path) -> FitSurface:
    return surface_from_document(read_surface_document(path))


def surface_extras(doc: dict) -> dict:
    return {k: (_decode(v) if isinstance(v, dict) and "shape" in v else v) for k, v in doc.get("extras", {}).items()}


def write_json(path, data: dict) -> None:
    atomic_write(path, json.dumps(data, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")
