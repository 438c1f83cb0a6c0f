"""Plug-and-play inference for partially observed Markov processes.

Particle filtering and fixed-lag smoothing, iterated-filtering maximum
likelihood (IF1, IF2, IS2, momentum, accelerated, averaged), and particle
MCMC (PMMH and its score-drifted variant), validated against exact Kalman
oracles on the bundled benchmark models.
"""

from .bayes import Chain, ProposalSpec, ess, pif, pmmh
from .benchmarks import (
    GOMPERTZ_DEFAULT,
    OU2_TRUTH,
    gompertz_data,
    gompertz_exact_loglik,
    gompertz_model,
    ou2_data,
    ou2_kalman,
    ou2_kalman_loglik,
    ou2_mle_alpha23,
    ou2_model,
)
from .core import ModelSpec, ParamVector, TimeSeriesData, simulate
from .errors import (
    ConfigValidationError,
    FilteringFailure,
    FilteringLimitExceeded,
    ModelContractError,
    PompkitError,
)
from .filtering import FilterResult, pfilter, pfilter_perturbed
from .harness import ExperimentConfig, run, summarize
from .kalman import kalman_filter_smoother
from .optimizers import (
    AccelSequences,
    OptimizerTrace,
    aif,
    avif,
    cooling,
    if1,
    if2,
    is2,
    momentum_mif,
    score_estimate,
)
from .perturb import PerturbationSpec
from .resample import (
    multinomial_resample,
    normalize_log_weights,
    normalize_weights,
    systematic_resample,
)
from .rng import RngStream
from .smoothing import SmoothResult, psmooth, psmooth_perturbed, trace_ancestry

__version__ = "0.1.0"

__all__ = [
    "AccelSequences",
    "Chain",
    "ConfigValidationError",
    "ExperimentConfig",
    "FilterResult",
    "FilteringFailure",
    "FilteringLimitExceeded",
    "GOMPERTZ_DEFAULT",
    "ModelContractError",
    "ModelSpec",
    "OU2_TRUTH",
    "OptimizerTrace",
    "ParamVector",
    "PerturbationSpec",
    "PompkitError",
    "ProposalSpec",
    "RngStream",
    "SmoothResult",
    "TimeSeriesData",
    "aif",
    "avif",
    "cooling",
    "ess",
    "gompertz_data",
    "gompertz_exact_loglik",
    "gompertz_model",
    "if1",
    "if2",
    "is2",
    "kalman_filter_smoother",
    "momentum_mif",
    "multinomial_resample",
    "normalize_log_weights",
    "normalize_weights",
    "ou2_data",
    "ou2_kalman",
    "ou2_kalman_loglik",
    "ou2_mle_alpha23",
    "ou2_model",
    "pfilter",
    "pfilter_perturbed",
    "pif",
    "pmmh",
    "psmooth",
    "psmooth_perturbed",
    "run",
    "score_estimate",
    "simulate",
    "summarize",
    "systematic_resample",
    "trace_ancestry",
]
