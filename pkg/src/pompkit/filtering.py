"""Bootstrap particle filter and its parameter-perturbed variant.

One vectorized particle pass underlies the plain filter, the perturbed
filter used by the iterated optimizers, and (via the ``lag`` argument) the
fixed-lag smoother. Per-particle parameters, when present, live on the
estimation scale (see ``ModelSpec.transforms``) and are mapped back to the
natural scale before each hook call.

Random draws are organized as one substream per (time step, purpose), so a
run is bit-reproducible for a given :class:`~pompkit.rng.RngStream` and
turning perturbations off leaves the state-propagation and resampling
draws untouched.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import ModelSpec, ParamVector, TimeSeriesData, _theta_matrix
from .errors import FilteringFailure, FilteringLimitExceeded, ModelContractError
from .perturb import PerturbationSpec
from .resample import RESAMPLERS, normalize_log_weights
from .rng import RngStream

__all__ = ["FilterResult", "pfilter", "pfilter_perturbed"]

# Conditional log-likelihood assigned to a zero-weight step before the
# uniform-weight fallback continues the run.
FAILURE_FLOOR = float(np.log(1e-300))


@dataclass(frozen=True)
class FilterResult:
    """Output of one particle-filter pass.

    ``filter_means`` through ``final_swarm`` are populated only by perturbed
    runs and are expressed on the estimation scale. ``swarm_means`` holds the
    unweighted post-resampling parameter means with the initial swarm in row
    zero, which is what the initial-value-parameter updates read.
    """

    loglik: float
    cond_loglik: np.ndarray
    n_failures: int
    failed_steps: tuple[int, ...] = ()
    filter_means: np.ndarray | None = None
    pred_variances: np.ndarray | None = None
    swarm_means: np.ndarray | None = None
    final_swarm: np.ndarray | None = None

    def __post_init__(self):
        if self.pred_variances is not None and np.any(self.pred_variances < 0):
            raise ValueError("prediction variances must be nonnegative")

    def summary_json(self) -> str:
        return json.dumps(
            {"loglik": self.loglik, "n_failures": self.n_failures, "failed_steps": list(self.failed_steps)}
        )

    def to_csv(self, path) -> None:
        n = len(self.cond_loglik)
        cols = ["n", "cond_loglik"]
        arrays = [np.arange(1, n + 1), self.cond_loglik]
        if self.filter_means is not None:
            p = self.filter_means.shape[1]
            cols += [f"theta_bar_{i + 1}" for i in range(p)]
            arrays += [self.filter_means[:, i] for i in range(p)]
        if self.pred_variances is not None:
            p = self.pred_variances.shape[1]
            cols += [f"V_{i + 1}" for i in range(p)]
            arrays += [self.pred_variances[:, i] for i in range(p)]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for row in zip(*arrays):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


@dataclass
class _PassRaw:
    """Everything a particle pass can record; wrappers slice what they need."""

    log_means: np.ndarray
    n_failures: int
    failed_steps: list[int]
    ess_fracs: np.ndarray | None = None
    filter_means: np.ndarray | None = None
    pred_variances: np.ndarray | None = None
    swarm_means: np.ndarray | None = None
    final_swarm: np.ndarray | None = None
    state_filter_means: np.ndarray | None = None
    state_smooth_means: np.ndarray | None = None
    param_smooth_means: np.ndarray | None = None
    param_smooth_vars: np.ndarray | None = None
    param_smooth_cross: np.ndarray | None = None


def _check_logdens(logw, J: int, n: int) -> np.ndarray:
    logw = np.asarray(logw, dtype=float).reshape(-1)
    if logw.shape != (J,):
        raise ModelContractError(f"dmeasure returned shape {logw.shape}, expected ({J},)")
    if np.any(np.isnan(logw)) or np.any(logw == np.inf):
        raise ModelContractError(f"dmeasure returned NaN or +inf at step {n}")
    return logw


def _particle_pass(
    model: ModelSpec,
    data: TimeSeriesData,
    J: int,
    rng: RngStream,
    *,
    theta_nat: np.ndarray | None = None,
    swarm_base: np.ndarray | None = None,
    center_eta: np.ndarray | None = None,
    init_sd: np.ndarray | None = None,
    walk_sd: np.ndarray | None = None,
    white_noise: bool = False,
    lag: int = 0,
    record_states: bool = False,
    record_smooth_params: bool = False,
    max_fail: float = np.inf,
    resampler: str = "systematic",
) -> _PassRaw:
    if J < 1:
        raise ValueError("need at least one particle")
    data.check_matches(model)
    try:
        resample = RESAMPLERS[resampler]
    except KeyError:
        raise ValueError(f"unknown resampler {resampler!r}") from None
    N, p, dx = model.n_times, model.n_params, model.dim_state
    if not 0 <= lag <= N - 1:
        raise ValueError(f"lag must lie in [0, {N - 1}]")
    perturbed = swarm_base is not None
    smoothing = record_states or record_smooth_params

    if perturbed:
        if swarm_base.ndim == 1:
            th_eta = np.tile(swarm_base, (J, 1))
        else:
            if swarm_base.shape != (J, p):
                raise ValueError("parameter swarm must have shape (J, p)")
            th_eta = np.array(swarm_base, dtype=float, copy=True)
        init_mask = init_sd > 0
        if init_mask.any():
            gen = rng.substream("swarm").generator()
            th_eta[:, init_mask] += init_sd[init_mask] * gen.standard_normal((J, int(init_mask.sum())))
        walk_mask = (walk_sd > 0) & ~model.ivp_mask
        theta_bar0 = center_eta if center_eta is not None else swarm_base.mean(axis=0)
        th_nat = model.from_estimation_scale(th_eta)
    else:
        th_eta = None
        walk_mask = np.zeros(p, dtype=bool)
        th_nat = np.tile(np.asarray(theta_nat, dtype=float), (J, 1))

    x = np.asarray(model.rinit(th_nat, rng.substream("init").generator()), dtype=float)
    if x.shape != (J, dx):
        raise ModelContractError(f"rinit returned shape {x.shape}, expected ({J}, {dx})")

    raw = _PassRaw(log_means=np.empty(N), n_failures=0, failed_steps=[], ess_fracs=np.empty(N))
    if perturbed:
        raw.filter_means = np.empty((N, p))
        raw.pred_variances = np.empty((N, p))
        raw.swarm_means = np.empty((N + 1, p))
        raw.swarm_means[0] = th_eta.mean(axis=0)
        walk_var = np.where(walk_mask, walk_sd, 0.0) ** 2
        v_next = walk_var + ((th_eta - theta_bar0) ** 2).mean(axis=0)
    if record_states:
        raw.state_filter_means = np.empty((N, dx))
        raw.state_smooth_means = np.empty((N, dx))
    if record_smooth_params:
        if not perturbed:
            raise ValueError("smoothed parameter moments require a perturbed run")
        raw.param_smooth_means = np.empty((N, p))
        raw.param_smooth_vars = np.empty((N, p, p))
        raw.param_smooth_cross = np.zeros((lag + 1, p, p))

    # Ring buffers for lag-L ancestor tracing: after step s they hold the
    # filtered slices for times s-L..s and ancestor rows for times s-L+1..s.
    if smoothing and lag > 0:
        x_hist: deque = deque(maxlen=lag + 1)
        th_hist: deque = deque(maxlen=lag + 1)
        anc_hist: deque = deque(maxlen=lag + 1)
        x_hist.append(x.copy())
        if perturbed:
            th_hist.append(th_eta.copy())

    def chain_values(back: int, w_norm, xP, thP):
        """Per-chain state and parameter values 0..`back` generations behind
        the current cloud (whose weights are `w_norm`), newest first. Also
        returns each chain's identity in the prediction cloud at the deepest
        generation (which names its distinct parameter draw there)."""
        xs = [xP]
        ths = [thP]
        c = np.arange(J)
        for depth in range(1, back + 1):
            if depth >= 2:
                c = anc_hist[len(anc_hist) - depth][c]
            xs.append(x_hist[len(x_hist) - 1 - depth][c])
            if perturbed:
                ths.append(th_hist[len(th_hist) - 1 - depth][c])
        pred_id = c if back == 0 else anc_hist[len(anc_hist) - 1 - back][c]
        return xs, ths, pred_id

    def record_smoothed(target: int, back: int, w_norm, xP, thP) -> None:
        xs, ths, pred_id = chain_values(back, w_norm, xP, thP)
        if record_states:
            raw.state_smooth_means[target - 1] = w_norm @ xs[back]
        if record_smooth_params:
            vals = ths[back]
            mean = w_norm @ vals
            dev = vals - mean
            raw.param_smooth_means[target - 1] = mean
            raw.param_smooth_vars[target - 1] = dev.T @ (dev * w_norm[:, None])
            # Effective-sample (Bessel) correction for the same-epoch slice:
            # lineage duplication shrinks the weighted variance by exactly
            # 1 - sum of squared aggregated per-draw weights.
            if back == 0:
                ess_inv = float(w_norm @ w_norm)
            else:
                agg = np.bincount(pred_id, weights=w_norm, minlength=J)
                ess_inv = float(agg @ agg)
            scale = 1.0 / max(1.0 - ess_inv, 0.05)
            raw.param_smooth_cross[0] += scale * raw.param_smooth_vars[target - 1]
            for d in range(1, back + 1):
                other = ths[back - d]
                dev_o = other - w_norm @ other
                raw.param_smooth_cross[d] += dev.T @ (dev_o * w_norm[:, None])

    t_prev = model.t0
    w_norm = xP = th_prop = None
    for n, t_next in enumerate(model.times, start=1):
        if perturbed:
            raw.pred_variances[n - 1] = v_next
            th_prop = th_eta.copy()
            if walk_mask.any():
                gen = rng.substream("perturb", n).generator()
                noise = walk_sd[walk_mask] * gen.standard_normal((J, int(walk_mask.sum())))
                if white_noise:
                    th_prop[:, walk_mask] = center_eta[walk_mask] + noise
                else:
                    th_prop[:, walk_mask] += noise
            th_nat = model.from_estimation_scale(th_prop)

        xP = np.asarray(
            model.rprocess(x, th_nat, (t_prev, t_next), rng.substream("prop", n).generator()),
            dtype=float,
        )
        logw = _check_logdens(model.dmeasure(data.observations[n - 1], xP, th_nat), J, n)

        try:
            w_norm, log_mean = normalize_log_weights(logw)
        except FilteringFailure:
            raw.n_failures += 1
            raw.failed_steps.append(n)
            if raw.n_failures > max_fail:
                raise FilteringLimitExceeded(raw.n_failures, max_fail, n) from None
            w_norm = np.full(J, 1.0 / J)
            log_mean = FAILURE_FLOOR
        raw.log_means[n - 1] = log_mean
        raw.ess_fracs[n - 1] = 1.0 / (w_norm @ w_norm) / J

        idx = resample(w_norm, rng.substream("resample", n))
        x = xP[idx]
        if perturbed:
            mean_prop = w_norm @ th_prop
            raw.filter_means[n - 1] = mean_prop
            th_eta = th_prop[idx]
            raw.swarm_means[n] = th_eta.mean(axis=0)
            v_next = walk_var + w_norm @ (th_eta - mean_prop) ** 2
        if record_states:
            raw.state_filter_means[n - 1] = w_norm @ xP

        if smoothing:
            if lag == 0:
                record_smoothed(n, 0, w_norm, xP, th_prop)
            else:
                anc_hist.append(idx)
                x_hist.append(x.copy())
                if perturbed:
                    th_hist.append(th_eta.copy())
                if n - lag >= 1:
                    record_smoothed(n - lag, lag, w_norm, xP, th_prop)
        t_prev = t_next

    if smoothing and lag > 0:
        # Remaining times are smoothed from the final cloud at shorter lags.
        for target in range(max(N - lag + 1, 1), N + 1):
            record_smoothed(target, N - target, w_norm, xP, th_prop)

    if perturbed:
        raw.final_swarm = th_eta
    return raw


def pfilter(
    model: ModelSpec,
    theta: ParamVector | np.ndarray,
    data: TimeSeriesData,
    J: int,
    rng: RngStream,
    *,
    max_fail: float = np.inf,
    resampler: str = "systematic",
) -> FilterResult:
    """Bootstrap particle filter log-likelihood estimate."""
    theta_nat = _theta_matrix(model, theta, 1)[0]
    raw = _particle_pass(
        model, data, J, rng, theta_nat=theta_nat, max_fail=max_fail, resampler=resampler
    )
    return FilterResult(
        loglik=float(raw.log_means.sum()),
        cond_loglik=raw.log_means,
        n_failures=raw.n_failures,
        failed_steps=tuple(raw.failed_steps),
    )


def pfilter_perturbed(
    model: ModelSpec,
    theta_center: ParamVector | np.ndarray,
    pert: PerturbationSpec,
    m: int,
    data: TimeSeriesData,
    J: int,
    rng: RngStream,
    *,
    swarm_init: np.ndarray | None = None,
    init_sd: np.ndarray | None = None,
    white_noise: bool = False,
    max_fail: float = np.inf,
    resampler: str = "systematic",
) -> FilterResult:
    """Particle filter with random-walk parameter perturbations.

    The parameter swarm starts at ``N(center, (C a^(m-1) sigma_i)^2)`` and
    non-IVP coordinates take ``N(0, (a^(m-1) sigma_i)^2)`` steps before each
    observation; IVP coordinates are perturbed only at time zero. Filter
    means, prediction variances, and the final swarm are recorded on the
    estimation scale.

    ``swarm_init`` (estimation scale) replaces the point center as the base
    of the initial draw, ``init_sd`` overrides the initial-draw scales, and
    ``white_noise=True`` redraws walking coordinates around the center each
    step instead of stepping the swarm; these knobs serve the iterated
    algorithms.
    """
    theta_nat = _theta_matrix(model, theta_center, 1)[0]
    center_eta = model.to_estimation_scale(theta_nat)
    default_init, walk = pert.scales_at(model, m)
    if init_sd is None:
        init_sd = default_init
    raw = _particle_pass(
        model,
        data,
        J,
        rng,
        swarm_base=swarm_init if swarm_init is not None else center_eta,
        center_eta=center_eta,
        init_sd=np.asarray(init_sd, dtype=float),
        walk_sd=walk,
        white_noise=white_noise,
        max_fail=max_fail,
        resampler=resampler,
    )
    return FilterResult(
        loglik=float(raw.log_means.sum()),
        cond_loglik=raw.log_means,
        n_failures=raw.n_failures,
        failed_steps=tuple(raw.failed_steps),
        filter_means=raw.filter_means,
        pred_variances=raw.pred_variances,
        swarm_means=raw.swarm_means,
        final_swarm=raw.final_swarm,
    )
