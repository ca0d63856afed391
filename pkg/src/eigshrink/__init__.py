"""Robust shrinkage M-estimators of scatter with automatic shrinkage tuning.

The package is organized in layers:

``numerics``
    chi-squared distribution functions and kurtosis estimates.
``elliptical``
    elliptical (Gaussian and t) data generation, radial laws and data I/O.
``mest``
    weight functions, fixed-point M-estimators and consistency factors.
``shrinkage``
    sphericity estimates, shrinkage coefficients and the end-to-end
    estimators.
``harness``
    Monte Carlo studies, validation suites and the command line interface.
"""

__version__ = "0.1.0"

from .elliptical import (
    DataMatrix,
    GeneratorSpec,
    RadialDistribution,
    ScatterSpec,
    build_scatter,
    read_data_csv,
    sample,
    write_data_csv,
)
from .errors import (
    ConditioningError,
    ConfigError,
    DegenerateInputError,
    DivergenceError,
    DomainError,
    EigshrinkError,
    InsufficientSampleError,
    PreconditionError,
    RootBracketError,
)
from .mest import ScatterEstimate, WeightSpec, fixed_point, one_step, scm, solve_sigma
from .shrinkage import (
    ShrinkageReport,
    beta_general,
    beta_rscm,
    beta_tyler,
    cwh,
    estimate,
    estimate_dof,
    rscm_cv,
    shrink,
    sphericity_ell1,
    sphericity_ell2,
)

__all__ = [
    "ConditioningError",
    "ConfigError",
    "DataMatrix",
    "DegenerateInputError",
    "DivergenceError",
    "DomainError",
    "EigshrinkError",
    "GeneratorSpec",
    "InsufficientSampleError",
    "PreconditionError",
    "RadialDistribution",
    "RootBracketError",
    "ScatterEstimate",
    "ScatterSpec",
    "ShrinkageReport",
    "WeightSpec",
    "beta_general",
    "beta_rscm",
    "beta_tyler",
    "build_scatter",
    "cwh",
    "estimate",
    "estimate_dof",
    "fixed_point",
    "one_step",
    "read_data_csv",
    "rscm_cv",
    "sample",
    "scm",
    "shrink",
    "solve_sigma",
    "sphericity_ell1",
    "sphericity_ell2",
    "write_data_csv",
]
