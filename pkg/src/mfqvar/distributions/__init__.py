from .gaussian import (
    ConstraintProjector,
    PrecisionGaussian,
    constrained_gaussian_sample,
    inverse_wishart_sample,
    precision_gaussian_sample,
)
from .gig import GigParams, gig_moment, gig_rvs, gig_sample
from .laplace import (
    AlParams,
    MalParams,
    al_logpdf,
    al_sample,
    check_loss,
    mal_logpdf,
    mal_sample,
)
from .slice import WidthAdapter, slice_sample_step

__all__ = [
    "AlParams",
    "ConstraintProjector",
    "GigParams",
    "MalParams",
    "PrecisionGaussian",
    "WidthAdapter",
    "al_logpdf",
    "al_sample",
    "check_loss",
    "constrained_gaussian_sample",
    "gig_moment",
    "gig_rvs",
    "gig_sample",
    "inverse_wishart_sample",
    "mal_logpdf",
    "mal_sample",
    "precision_gaussian_sample",
    "slice_sample_step",
]
