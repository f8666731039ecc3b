"""Scattered sample container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .predict import complex_embed


@dataclass(frozen=True)
class SampleSet:
    """Scattered locations ``x`` of shape (N, d) with optional responses ``y`` of shape (N, q).

    Complex locations (a 1-d complex vector) are embedded as two real
    coordinates on construction; complex responses are kept complex.
    """

    x: np.ndarray
    y: np.ndarray | None = None
    complex_locations: bool = False

    @classmethod
    def from_arrays(cls, x, y=None) -> "SampleSet":
        x = np.asarray(x)
        complex_locations = np.iscomplexobj(x)
        if complex_locations:
            x = complex_embed(x.ravel())
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise InputError(f"locations must be 1-d or 2-d, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InputError("locations contain non-finite values")
        if y is not None:
            y = np.asarray(y)
            if y.ndim == 1:
                y = y[:, None]
            if y.shape[0] != x.shape[0]:
                raise InputError(f"{x.shape[0]} locations but {y.shape[0]} responses")
            y = y.astype(np.complex128 if np.iscomplexobj(y) else np.float64)
            if not np.all(np.isfinite(y)):
                raise InputError("responses contain non-finite values")
        return cls(x=x, y=y, complex_locations=complex_locations)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return 0 if self.y is None else self.y.shape[1]

    @property
    def is_complex(self) -> bool:
        return self.y is not None and np.iscomplexobj(self.y)
