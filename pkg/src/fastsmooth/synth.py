"""Synthetic data sets used in examples, tests and benchmarks.

Each generator returns ``(x, y, truth)`` where ``truth`` is a dict with
the noise-free mean (and the noise variance when it varies).
"""

from __future__ import annotations

import numpy as np
from scipy.special import j1

from .errors import InputError


def sinc(n: int | None = None, seed: int = 0, noise: float = 0.1):
    """``sin(x)/x`` on ``x = -100, -99.8, ..., 100`` (1001 points) plus N(0, noise^2).

    The location set is fixed; ``n`` is accepted for a uniform signature
    and ignored.
    """
    rng = np.random.default_rng(seed)
    x = np.arange(-500, 501) * 0.2
    m = np.sinc(x / np.pi)
    y = m + noise * rng.standard_normal(x.size)
    return x[:, None], y[:, None], {"mean": m[:, None]}


def bessel1(n: int = 200, seed: int = 0):
    """``J_1(x)`` at uniform ``x`` on [0, 20] with noise ``0.1 * std(J_1(x))``."""
    rng = np.random.default_rng(seed)
    x = 20.0 * rng.random(n)
    m = j1(x)
    y = m + 0.1 * np.std(m, ddof=1) * rng.standard_normal(n)
    return x[:, None], y[:, None], {"mean": m[:, None]}


def cubic_hetero(n: int = 10_000, seed: int = 0):
    """``x**3`` on [-2, 2] with variance ``(1 + 4 exp(-x^2)) * var(x^3) / 2``."""
    rng = np.random.default_rng(seed)
    x = 4.0 * (rng.random(n) - 0.5)
    m = x**3
    s2 = (1.0 + 4.0 * np.exp(-(x**2))) * 0.5 * np.var(m, ddof=1)
    y = m + np.sqrt(s2) * rng.standard_normal(n)
    return x[:, None], y[:, None], {"mean": m[:, None], "variance": s2}


def peaks3_functions(x1, x2):
    f1 = (
        3 * (1 - x1) ** 2 * np.exp(-(x1**2) - (x2 + 1) ** 2)
        - 10 * (x1 / 5 - x1**3 - x2**5) * np.exp(-(x1**2) - x2**2)
        - 1 / 3 * np.exp(-((x1 + 1) ** 2) - x2**2)
    )
    f2 = (30 + (5 * x1 + 5) * np.sin(5 * x1 + 5)) * (4 + np.exp(-((2.5 * x2 + 2.5) ** 2)))
    f3 = (np.cos(x1) + np.cos(x2)) * np.exp(-np.abs(x1)) + 1
    return np.column_stack([f1, f2, f3])


def peaks3(n: int = 8100, seed: int = 0):
    """Three responses on shared uniform locations in [-3, 3]^2, noise 0.2 * std per column."""
    rng = np.random.default_rng(seed)
    x = 6.0 * (rng.random((n, 2)) - 0.5)
    m = peaks3_functions(x[:, 0], x[:, 1])
    y = m + 0.2 * np.std(m, axis=0, ddof=1) * rng.standard_normal(m.shape)
    return x, y, {"mean": m}


def complex_log(n: int = 10_000, seed: int = 0):
    """``log(z)`` at uniform ``z`` with Re z in [0.1, 2.1], Im z in [-2, 2].

    Real and imaginary parts get independent noise of 0.1 times their
    standard deviations.  Locations are returned as a complex vector.
    """
    rng = np.random.default_rng(seed)
    z = (2.0 * rng.random(n) + 0.1) + 1j * (4.0 * rng.random(n) - 2.0)
    m = np.log(z)
    y = (
        m
        + 0.1 * np.std(m.real, ddof=1) * rng.standard_normal(n)
        + 0.1j * np.std(m.imag, ddof=1) * rng.standard_normal(n)
    )
    return z, y[:, None], {"mean": m[:, None]}


GENERATORS = {
    "sinc": sinc,
    "bessel1": bessel1,
    "cubic-hetero": cubic_hetero,
    "peaks3": peaks3,
    "complex-log": complex_log,
}


def generate(name: str, n: int | None = None, seed: int = 0):
    """Dispatch by name; ``n=None`` uses the generator's default size."""
    try:
        fn = GENERATORS[name]
    except KeyError:
        raise InputError(f"unknown data set {name!r}; choose from {sorted(GENERATORS)}") from None
    return fn(seed=seed) if n is None else fn(n, seed=seed)
