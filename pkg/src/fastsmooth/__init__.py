"""Fast multivariate kernel regression on scattered data.

Samples are binned onto a tensor grid with a Gaussian-gridding type-1
NUFFT, kernel moments are convolved by FFT, and local polynomial systems
are solved per grid node.  Bandwidths are chosen by GCV with Monte-Carlo
degrees of freedom; conditional variance and pointwise bands are
available on top of the mean fit.
"""

__version__ = "0.1.0"

from .bandwidth import (
    BandwidthGrid,
    CvReport,
    CvResult,
    TraceEstimate,
    cv_fit,
    exact_trace,
    fmc_trace,
    gcv_score,
    make_hlist,
    parse_hlist,
    select_bandwidth,
)
from .config import RunConfig
from .direct import direct_local_poly
from .errors import (
    DeconvolutionOverflowError,
    DegenerateDimensionError,
    EmptySurfaceError,
    FastSmoothError,
    GridRangeError,
    InputError,
    NoValidCandidateError,
    NumericalError,
    ResourceLimitError,
    TableFormatError,
    UnidentifiableVarianceError,
)
from .gridding import (
    GridSpec,
    SpreadConfig,
    grid_counts,
    make_grid,
    nextpow2,
    nufft_type1,
    spread_points,
)
from .kernels import KernelSpec
from .poly import (
    FitSurface,
    KernelSmoother,
    MomentFields,
    MultiIndexSet,
    convolve_moments,
    fit_single_bandwidth,
    kernel_moment_grids,
    local_solve,
    monomial_basis,
)
from .predict import InterpPolicy, complex_embed, interpolate
from .samples import SampleSet
from .synth import generate as generate_data
from .variance import (
    IntervalBand,
    VarianceFit,
    confidence_interval,
    fit_variance_direct,
    fit_variance_log,
    kappa_hat,
    squared_residuals,
    z_quantile,
)
