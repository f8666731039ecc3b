"""Run configuration shared by the library entry points and the CLI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import InputError
from .gridding import SpreadConfig
from .kernels import KERNELS
from .predict import EXTRAP_METHODS, INTERP_METHODS, InterpPolicy

Y_TYPES = ("mean", "variance")


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a fitting run, with its default.

    Parameters
    ----------
    y_type : {'mean', 'variance'}
        ``variance`` fits the log of squared residuals and rescales
        (positive by construction).
    kernel : str
        Kernel family.
    order : int
        Local polynomial order (0 NW, 1 local linear, 2 local quadratic).
    R : float
        Grid ratio; each dimension gets ``R * ceil(N ** (1/d))`` nodes.
    M : int, tuple of int or None
        Explicit grid size; overrides ``R``.
    flag_power2 : bool
        Zero-pad each dimension to a power of two.
    accuracy : int
        Gridding accuracy in digits (spreading half-width).
    nufft_deconv : bool
        Divide out the spreading Gaussian.
    upsample : int
        1 or 2; field period relative to the padded length.
    dstd : float
        GCV relaxation in standard deviations (0 gives plain argmin).
    calc_dof : bool
        Estimate degrees of freedom and select the bandwidth.  When false
        every candidate's surface is kept and no selection happens.
    Np : int
        Monte-Carlo probes for the trace estimate.
    interp, extrap : str
        Prediction policy.
    compact : bool
        Store only what prediction needs in surface files.
    seed : int
        Probe generator seed.
    hlist : str
        Candidate bandwidths, e.g. ``log:0.01:1:20`` or one spec per dimension
        separated by commas.
    chunk_size : int
        Response/probe columns processed together.
    """

    y_type: str = "mean"
    kernel: str = "gaussian"
    order: int = 0
    R: float = 1.0
    M: int | tuple[int, ...] | None = None
    flag_power2: bool = True
    accuracy: int = 6
    nufft_deconv: bool = True
    upsample: int = 2
    dstd: float = 0.0
    calc_dof: bool = True
    Np: int = 10
    interp: str = "cubic"
    extrap: str = "linear"
    compact: bool = True
    seed: int = 0
    hlist: str = "log:0.01:1:20"
    chunk_size: int = 64

    def __post_init__(self):
        if self.y_type not in Y_TYPES:
            raise InputError(f"y_type must be one of {Y_TYPES}, got {self.y_type!r}")
        if self.kernel.lower() not in KERNELS:
            raise InputError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")
        if self.order < 0:
            raise InputError(f"order must be >= 0, got {self.order}")
        if not self.R > 0:
            raise InputError(f"R must be positive, got {self.R}")
        if not 1 <= self.accuracy <= 12:
            raise InputError(f"accuracy must be in [1, 12], got {self.accuracy}")
        if self.upsample not in (1, 2):
            raise InputError(f"upsample must be 1 or 2, got {self.upsample}")
        if self.dstd < 0:
            raise InputError(f"dstd must be >= 0, got {self.dstd}")
        if self.Np < 1:
            raise InputError(f"Np must be >= 1, got {self.Np}")
        if self.interp not in INTERP_METHODS:
            raise InputError(f"interp must be one of {INTERP_METHODS}, got {self.interp!r}")
        if self.extrap not in EXTRAP_METHODS:
            raise InputError(f"extrap must be one of {EXTRAP_METHODS}, got {self.extrap!r}")
        if self.chunk_size < 1:
            raise InputError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if isinstance(self.M, list):
            object.__setattr__(self, "M", tuple(int(m) for m in self.M))

    @property
    def spread(self) -> SpreadConfig:
        return SpreadConfig(digits=self.accuracy, deconvolve=self.nufft_deconv)

    @property
    def policy(self) -> InterpPolicy:
        return InterpPolicy(method=self.interp, extrapolation=self.extrap)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if isinstance(out["M"], tuple):
            out["M"] = list(out["M"])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InputError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)
