"""Mixed-frequency quantile VAR with multivariate asymmetric Laplace errors.

The package fits the model by Gibbs sampling with a banded precision sampler
for the missing monthly values, and turns the posterior draws into quantile
nowcasts, report tables and counterfactuals.
"""

from importlib import metadata as _metadata

from .chain import PosteriorChain, load_chains, save_chains
from .config import RunSettings, load_config
from .data import (
    MixedFrequencyPanel,
    NowcastClass,
    SeriesSpec,
    assemble_panel,
    classify_nowcast,
    load_vintage,
    validate_vintage,
)
from .gibbs import PriorSpec, SamplerSettings, default_prior, run_chain, run_chains
from .model import QvarParams, make_quantile_config
from .nowcast import (
    CounterfactualSpec,
    NowcastResult,
    SyntheticDgp,
    counterfactual,
    nowcast,
    simulate_dgp,
)

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "CounterfactualSpec",
    "MixedFrequencyPanel",
    "NowcastClass",
    "NowcastResult",
    "PosteriorChain",
    "PriorSpec",
    "QvarParams",
    "RunSettings",
    "SamplerSettings",
    "SeriesSpec",
    "SyntheticDgp",
    "assemble_panel",
    "classify_nowcast",
    "counterfactual",
    "default_prior",
    "load_chains",
    "load_config",
    "load_vintage",
    "make_quantile_config",
    "nowcast",
    "run_chain",
    "run_chains",
    "save_chains",
    "simulate_dgp",
    "validate_vintage",
]
