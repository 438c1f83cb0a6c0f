"""Weight normalization and resampling kernels.

Weights travel through the filters in log space; ``normalize_log_weights``
is the primary entry point and exponentiates after a max shift so that
near-impossible observations do not underflow. The linear-scale
``normalize_weights`` is provided for callers that already hold densities.
"""

from __future__ import annotations

import numpy as np

from .errors import FilteringFailure, ModelContractError
from .rng import RngStream

__all__ = [
    "normalize_weights",
    "normalize_log_weights",
    "systematic_resample",
    "multinomial_resample",
]


def normalize_weights(w: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalize nonnegative weights; return them with ``log(mean(w))``.

    The log mean is the step's conditional log-likelihood contribution.
    Raises :class:`FilteringFailure` when every weight is zero.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ModelContractError("weights must be finite and nonnegative")
    total = w.sum()
    if total == 0.0:
        raise FilteringFailure()
    return w / total, float(np.log(total / w.size))


def normalize_log_weights(logw: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalize weights given in log space (max-shifted exponentiation)."""
    logw = np.asarray(logw, dtype=float)
    if logw.ndim != 1 or logw.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if np.any(np.isnan(logw)) or np.any(logw == np.inf):
        raise ModelContractError("log-weights must be finite or -inf")
    m = logw.max()
    if m == -np.inf:
        raise FilteringFailure()
    w = np.exp(logw - m)
    total = w.sum()
    return w / total, float(m + np.log(total) - np.log(logw.size))


def _check_normalized(w_norm: np.ndarray) -> np.ndarray:
    w_norm = np.asarray(w_norm, dtype=float)
    if abs(w_norm.sum() - 1.0) > 1e-9 or np.any(w_norm < 0):
        raise ValueError("weights must be normalized")
    return w_norm


def systematic_resample(
    w_norm: np.ndarray, rng: RngStream | np.random.Generator, n: int | None = None
) -> np.ndarray:
    """Low-variance systematic resampling.

    Returns ``n`` sorted ancestor indices (defaulting to one per weight);
    index ``m`` appears either ``floor(n*w[m])`` or ``ceil(n*w[m])`` times.
    """
    w_norm = _check_normalized(w_norm)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    n = w_norm.size if n is None else int(n)
    points = (gen.random() + np.arange(n)) / n
    cum = np.cumsum(w_norm)
    cum[-1] = 1.0
    return np.searchsorted(cum, points, side="right").astype(np.intp)


def multinomial_resample(
    w_norm: np.ndarray, rng: RngStream | np.random.Generator, n: int | None = None
) -> np.ndarray:
    """I.i.d. categorical resampling; returns sorted ancestor indices."""
    w_norm = _check_normalized(w_norm)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    n = w_norm.size if n is None else int(n)
    cum = np.cumsum(w_norm)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, gen.random(n), side="right")
    idx.sort()
    return idx.astype(np.intp)


RESAMPLERS = {
    "systematic": systematic_resample,
    "multinomial": multinomial_resample,
}
