"""Fixed-lag particle smoothing via ancestor tracing.

The smoother runs the bootstrap filter while keeping a depth ``L+1`` ring
buffer of filtered particles and ancestor rows. The smoothed estimate for
time ``n <= N - L`` is read from the time ``n+L`` cloud traced back ``L``
generations; later times reuse the final cloud at shorter lags.

Two conventions are offered for splitting the total log-likelihood into
per-step terms: ``"lag_shifted"`` attributes to time ``n`` the mean weight
of the cloud that smoothed it (time ``min(n+L, N)``), ``"filter"`` is the
standard one-step decomposition. They coincide at ``L = 0``; for positive
lags only the ``"filter"`` total matches the plain filter's estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelSpec, ParamVector, TimeSeriesData, _theta_matrix
from .filtering import _PassRaw, _particle_pass
from .perturb import PerturbationSpec
from .rng import RngStream

__all__ = ["SmoothResult", "trace_ancestry", "psmooth", "psmooth_perturbed"]


def trace_ancestry(anc: np.ndarray, n: int, lag: int, j) -> np.ndarray | np.intp:
    """Index of the time ``n - lag`` ancestor of particle ``j`` at time ``n``.

    ``anc`` is an ``(N, J)`` matrix whose row ``n-1`` (time ``n``, 1-based)
    maps each post-resampling particle to its parent in the time ``n-1``
    cloud. Composes ``lag`` parent lookups; ``lag = 0`` returns ``j``.
    """
    anc = np.asarray(anc)
    N = anc.shape[0]
    if not 1 <= n <= N:
        raise IndexError(f"time index {n} outside 1..{N}")
    if lag < 0 or n - lag < 1:
        raise IndexError(f"lag {lag} exceeds available history at time {n}")
    out = np.asarray(j)
    for r in range(n, n - lag, -1):
        out = anc[r - 1][out]
    return out


@dataclass(frozen=True)
class SmoothResult:
    """Output of a fixed-lag smoothing pass.

    State means cover every time step; ``param_smooth_means`` and the
    per-time smoothed covariance matrices ``param_smooth_vars`` are present
    only for perturbed runs (estimation scale).
    """

    loglik: float
    cond_loglik: np.ndarray
    lag: int
    cond_mode: str
    step_log_means: np.ndarray
    state_smooth_means: np.ndarray
    state_filter_means: np.ndarray
    n_failures: int
    param_smooth_means: np.ndarray | None = None
    param_smooth_vars: np.ndarray | None = None
    swarm_means: np.ndarray | None = None
    final_swarm: np.ndarray | None = None

    def cond_loglik_as(self, mode: str) -> np.ndarray:
        return _condense(self.step_log_means, self.lag, mode)

    def to_csv(self, path) -> None:
        n = len(self.cond_loglik)
        cols = ["n", "cond_loglik"]
        arrays = [np.arange(1, n + 1), self.cond_loglik]
        if self.param_smooth_means is not None:
            p = self.param_smooth_means.shape[1]
            cols += [f"theta_smooth_{i + 1}" for i in range(p)]
            arrays += [self.param_smooth_means[:, i] for i in range(p)]
            cols += [f"V_{i + 1}" for i in range(p)]
            arrays += [self.param_smooth_vars[:, i, i] for i in range(p)]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for row in zip(*arrays):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _condense(log_means: np.ndarray, lag: int, mode: str) -> np.ndarray:
    N = len(log_means)
    if mode == "filter" or lag == 0:
        return log_means.copy()
    if mode == "lag_shifted":
        idx = np.minimum(np.arange(1, N + 1) + lag, N) - 1
        return log_means[idx]
    raise ValueError(f"unknown cond_loglik mode {mode!r}")


def _build(raw: _PassRaw, lag: int, cond_mode: str, perturbed: bool) -> SmoothResult:
    cond = _condense(raw.log_means, lag, cond_mode)
    return SmoothResult(
        loglik=float(cond.sum()),
        cond_loglik=cond,
        lag=lag,
        cond_mode=cond_mode,
        step_log_means=raw.log_means,
        state_smooth_means=raw.state_smooth_means,
        state_filter_means=raw.state_filter_means,
        n_failures=raw.n_failures,
        param_smooth_means=raw.param_smooth_means if perturbed else None,
        param_smooth_vars=raw.param_smooth_vars if perturbed else None,
        swarm_means=raw.swarm_means if perturbed else None,
        final_swarm=raw.final_swarm if perturbed else None,
    )


def psmooth(
    model: ModelSpec,
    theta: ParamVector | np.ndarray,
    data: TimeSeriesData,
    J: int,
    lag: int,
    rng: RngStream,
    *,
    cond_mode: str = "lag_shifted",
    max_fail: float = np.inf,
    resampler: str = "systematic",
) -> SmoothResult:
    """Fixed-lag particle smoother for the latent states.

    With ``lag = 0`` this degenerates to the bootstrap filter and returns
    the identical log-likelihood for the same stream.
    """
    theta_nat = _theta_matrix(model, theta, 1)[0]
    raw = _particle_pass(
        model,
        data,
        J,
        rng,
        theta_nat=theta_nat,
        lag=lag,
        record_states=True,
        max_fail=max_fail,
        resampler=resampler,
    )
    return _build(raw, lag, cond_mode, perturbed=False)


def psmooth_perturbed(
    model: ModelSpec,
    theta_center: ParamVector | np.ndarray,
    pert: PerturbationSpec,
    m: int,
    data: TimeSeriesData,
    J: int,
    rng: RngStream,
    *,
    init_sd: np.ndarray | None = None,
    cond_mode: str = "lag_shifted",
    max_fail: float = np.inf,
    resampler: str = "systematic",
) -> SmoothResult:
    """Perturbed fixed-lag smoother: smoothed parameter means and
    covariances at lag ``pert.L``, as consumed by second-order iterated
    smoothing and the score estimators."""
    theta_nat = _theta_matrix(model, theta_center, 1)[0]
    center_eta = model.to_estimation_scale(theta_nat)
    default_init, walk = pert.scales_at(model, m)
    raw = _particle_pass(
        model,
        data,
        J,
        rng,
        swarm_base=center_eta,
        center_eta=center_eta,
        init_sd=np.asarray(init_sd, dtype=float) if init_sd is not None else default_init,
        walk_sd=walk,
        lag=pert.L,
        record_states=True,
        record_smooth_params=True,
        max_fail=max_fail,
        resampler=resampler,
    )
    return _build(raw, pert.L, cond_mode, perturbed=True)
