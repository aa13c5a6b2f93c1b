"""Heavy-tailed distribution fitting, goodness-of-fit and scaling analysis
for high-frequency return series."""

__version__ = "0.1.0"

from .distributions import (  # noqa: E402
    FAMILIES,
    GaussianParams,
    GHParams,
    NIGParams,
    SkewTParams,
    StableParams,
    family_cdf,
    family_logpdf,
    family_pdf,
    family_sample,
)
from .estimation import FitResult, LrtResult, lr_test, mle_fit, stable_quantile_init  # noqa: E402
from .ingest import ReturnSeries, SessionSpec  # noqa: E402

__all__ = [
    "FAMILIES",
    "GaussianParams",
    "GHParams",
    "NIGParams",
    "SkewTParams",
    "StableParams",
    "family_cdf",
    "family_logpdf",
    "family_pdf",
    "family_sample",
    "FitResult",
    "LrtResult",
    "lr_test",
    "mle_fit",
    "stable_quantile_init",
    "ReturnSeries",
    "SessionSpec",
]
