"""Partial-correlation networks for multivariate Gaussian processes."""

__version__ = "0.1.0"

from .covmodels import (  # noqa: E402
    LMC,
    DiscretizedConvolution,
    InsideOut,
    Kernel,
    LocationSet,
    ParsimoniousMatern,
    ProcessConvolution,
    Separable,
    SigmaPair,
    build_joint_cov,
    cross_cov_entry,
)
from .gaussian import FieldSample, condition, loglik, predict, sample_field  # noqa: E402
from .netcalc import (  # noqa: E402
    effective_range,
    lmc_ci_check,
    marginal_cross_corr,
    partial_coeff,
    partial_cross_corr,
)
from .specialfn import MaternParams, bessel_k, gamma_factor, matern_corr  # noqa: E402

__all__ = [
    "__version__",
    "LMC",
    "DiscretizedConvolution",
    "InsideOut",
    "Kernel",
    "LocationSet",
    "ParsimoniousMatern",
    "ProcessConvolution",
    "Separable",
    "SigmaPair",
    "build_joint_cov",
    "cross_cov_entry",
    "FieldSample",
    "condition",
    "loglik",
    "predict",
    "sample_field",
    "effective_range",
    "lmc_ci_check",
    "marginal_cross_corr",
    "partial_coeff",
    "partial_cross_corr",
    "MaternParams",
    "bessel_k",
    "gamma_factor",
    "matern_corr",
]
