"""Simulation-based maximum-likelihood algorithms.

Six optimizers share the perturbed particle pass: the classical iterated
filter (``if1``), the swarm-carrying variant (``if2``), second-order
iterated smoothing (``is2``), heavy-ball momentum (``momentum_mif``), an
accelerated scheme with midpoint white-noise perturbations (``aif``), and
within-pass averaging (``avif``). All updates run on the estimation scale
and only touch coordinates with a positive perturbation scale; initial
value parameters are re-estimated from the unweighted swarm mean at the
fixed lag.

Sign conventions are normalized to likelihood ascent: ``momentum_mif`` at
``gamma = 0`` reproduces ``if1`` step for step, and ``aif``/``is2`` move
along (approximately) the estimated score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ModelSpec, ParamVector, TimeSeriesData, _theta_matrix
from .filtering import _PassRaw, _particle_pass
from .perturb import PerturbationSpec, cooling
from .rng import RngStream

__all__ = [
    "AccelSequences",
    "OptimizerTrace",
    "cooling",
    "score_estimate",
    "if1",
    "if2",
    "is2",
    "momentum_mif",
    "aif",
    "avif",
]


@dataclass(frozen=True)
class AccelSequences:
    """Step-size and interpolation sequences for the accelerated method."""

    alphas: np.ndarray
    lambdas: np.ndarray
    betas: np.ndarray
    gammas: np.ndarray | None = None  # reserved input, unused

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        lam = np.asarray(self.lambdas, dtype=float)
        b = np.asarray(self.betas, dtype=float)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "betas", b)
        if not (len(a) == len(lam) == len(b)):
            raise ValueError("sequence lengths differ")
        if len(a) == 0 or a[0] != 1.0:
            raise ValueError("alpha_1 must equal 1")
        if np.any(a <= 0) or np.any(a > 1) or np.any(lam <= 0) or np.any(b <= 0):
            raise ValueError("need alpha in (0,1], lambda > 0, beta > 0")

    @classmethod
    def default(cls, M: int, lambda0: float = 1.0) -> "AccelSequences":
        m = np.arange(1, M + 1, dtype=float)
        lam = lambda0 / m
        return cls(alphas=2.0 / (m + 1.0), lambdas=lam, betas=lam / 2.0)


@dataclass
class OptimizerTrace:
    """Per-iteration record of an optimizer run (natural scale)."""

    param_names: tuple[str, ...]
    theta0: np.ndarray
    thetas: np.ndarray
    logliks: np.ndarray
    step_norms: np.ndarray
    n_failures: np.ndarray
    fallback: np.ndarray
    scores: np.ndarray | None = None
    informations: np.ndarray | None = None
    aux: dict = field(default_factory=dict)

    @property
    def theta_final(self) -> ParamVector:
        return ParamVector(self.param_names, self.thetas[-1])

    def iterate_average(self, m_start: int = 1) -> ParamVector:
        """Average of the iterates from ``m_start`` (1-based) to ``M``."""
        if not 1 <= m_start <= len(self.thetas):
            raise ValueError("m_start outside 1..M")
        return ParamVector(self.param_names, self.thetas[m_start - 1 :].mean(axis=0))

    def to_csv(self, path) -> None:
        p = len(self.param_names)
        cols = ["m", "loglik"] + [f"theta_{i + 1}" for i in range(p)] + ["step_norm", "fallback_flag"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for m in range(len(self.thetas)):
                row = [m + 1, self.logliks[m], *self.thetas[m], self.step_norms[m], int(self.fallback[m])]
                fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")


def score_estimate(
    swarm_stats: np.ndarray,
    theta_center: np.ndarray,
    psi_diag: np.ndarray,
    scale: float,
    mode: str = "theorem2",
) -> np.ndarray:
    """Score (log-likelihood gradient) estimate from perturbed-swarm means.

    ``mode="theorem1"`` uses the posterior mean of the time-zero swarm
    alone: ``scale^-2 Psi^-1 (mean0 - center)``. ``mode="theorem2"`` uses
    the time average ``(K+1)^-1 scale^-2 Psi^-1 sum_n (mean_n - center)``
    over the ``K`` per-step means (time zero contributes the zero term).
    Inputs and output live on the estimation scale.
    """
    psi_diag = np.asarray(psi_diag, dtype=float)
    if np.any(psi_diag <= 0) or np.any(~np.isfinite(psi_diag)):
        raise ValueError("Psi must be positive definite (positive diagonal)")
    center = np.asarray(theta_center, dtype=float)
    stats = np.asarray(swarm_stats, dtype=float)
    if mode == "theorem1":
        mean0 = stats.reshape(-1)
        return (mean0 - center) / psi_diag / scale**2
    if mode == "theorem2":
        stats = np.atleast_2d(stats)
        total = (stats - center).sum(axis=0)
        return total / psi_diag / scale**2 / (stats.shape[0] + 1)
    raise ValueError(f"unknown score mode {mode!r}")


@dataclass
class _Setup:
    model: ModelSpec
    center: np.ndarray  # estimation scale
    sigma: np.ndarray
    est: np.ndarray  # non-IVP coordinates being estimated
    ivp: np.ndarray  # IVP coordinates being estimated


def _setup(model: ModelSpec, theta0, pert: PerturbationSpec) -> _Setup:
    theta_nat = _theta_matrix(model, theta0, 1)[0]
    sigma = pert.sigma_vector(model)
    ivp_mask = model.ivp_mask
    return _Setup(
        model=model,
        center=model.to_estimation_scale(theta_nat),
        sigma=sigma,
        est=(sigma > 0) & ~ivp_mask,
        ivp=(sigma > 0) & ivp_mask,
    )


def _new_trace(model: ModelSpec, theta0_nat: np.ndarray, M: int, with_scores: bool = False) -> OptimizerTrace:
    p = model.n_params
    return OptimizerTrace(
        param_names=model.param_names,
        theta0=np.asarray(theta0_nat, dtype=float),
        thetas=np.empty((M, p)),
        logliks=np.empty(M),
        step_norms=np.empty(M),
        n_failures=np.zeros(M, dtype=int),
        fallback=np.zeros(M, dtype=bool),
        scores=np.full((M, p), np.nan) if with_scores else None,
    )


def _record(trace: OptimizerTrace, setup: _Setup, m: int, raw: _PassRaw, prev: np.ndarray, new: np.ndarray) -> None:
    trace.thetas[m - 1] = setup.model.from_estimation_scale(new)
    trace.logliks[m - 1] = raw.log_means.sum()
    trace.step_norms[m - 1] = float(np.linalg.norm(new - prev))
    trace.n_failures[m - 1] = raw.n_failures


def _if1_increment(raw: _PassRaw, center: np.ndarray, est: np.ndarray) -> np.ndarray:
    """Classical weighted-increment update over the estimated coordinates.

    ``V_1 * sum_n V_n^-1 (theta_bar_n - theta_bar_{n-1})`` with
    ``theta_bar_0`` equal to the iteration center.
    """
    means = raw.filter_means[:, est]
    V = raw.pred_variances[:, est]
    prev = np.vstack((center[est], means[:-1]))
    return V[0] * ((means - prev) / V).sum(axis=0)


def _ivp_update(theta_eta: np.ndarray, raw: _PassRaw, setup: _Setup, lag: int) -> np.ndarray:
    out = theta_eta.copy()
    if setup.ivp.any():
        out[setup.ivp] = raw.swarm_means[lag][setup.ivp]
    return out


def _rw_pass(setup: _Setup, data, J, rng, m, pert, *, swarm=None, init_scale_mode="C", **kw) -> _PassRaw:
    swarm_scale, walk_scale = cooling(pert.a, pert.C, m)
    init = (swarm_scale if init_scale_mode == "C" else walk_scale) * setup.sigma
    return _particle_pass(
        setup.model,
        data,
        J,
        rng,
        swarm_base=swarm if swarm is not None else setup.center,
        center_eta=setup.center,
        init_sd=init,
        walk_sd=walk_scale * setup.sigma,
        **kw,
    )


def if1(model, theta0, data: TimeSeriesData, M: int, J: int, pert: PerturbationSpec, rng: RngStream, **kw) -> OptimizerTrace:
    """Original iterated filtering with the weighted-increment update."""
    if M < 1:
        raise ValueError("need at least one iteration")
    setup = _setup(model, theta0, pert)
    trace = _new_trace(model, _theta_matrix(model, theta0, 1)[0], M)
    theta = setup.center.copy()
    for m in range(1, M + 1):
        setup.center = theta
        raw = _rw_pass(setup, data, J, rng.substream("iter", m), m, pert, **kw)
        new = theta.copy()
        if setup.est.any():
            new[setup.est] += _if1_increment(raw, theta, setup.est)
        new = _ivp_update(new, raw, setup, pert.L)
        _record(trace, setup, m, raw, theta, new)
        theta = new
    return trace


def momentum_mif(
    model, theta0, data: TimeSeriesData, M: int, J: int, pert: PerturbationSpec, gamma: float, rng: RngStream, **kw
) -> OptimizerTrace:
    """Iterated filtering with an accumulated velocity term.

    The velocity recursion runs in ascent form, so ``gamma = 0`` reproduces
    :func:`if1` exactly under the same stream.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if M < 1:
        raise ValueError("need at least one iteration")
    setup = _setup(model, theta0, pert)
    trace = _new_trace(model, _theta_matrix(model, theta0, 1)[0], M)
    theta = setup.center.copy()
    velocity = np.zeros(setup.est.sum())
    for m in range(1, M + 1):
        setup.center = theta
        raw = _rw_pass(setup, data, J, rng.substream("iter", m), m, pert, **kw)
        new = theta.copy()
        if setup.est.any():
            # Normalized form: the steady-state step stays on the if1 scale
            # instead of growing by 1/(1-gamma).
            velocity = gamma * velocity + (1.0 - gamma) * _if1_increment(raw, theta, setup.est)
            new[setup.est] += velocity
        new = _ivp_update(new, raw, setup, pert.L)
        _record(trace, setup, m, raw, theta, new)
        theta = new
    return trace


def if2(model, theta0, data: TimeSeriesData, M: int, J: int, pert: PerturbationSpec, rng: RngStream, **kw) -> OptimizerTrace:
    """Swarm-carrying iterated filtering.

    The parameter swarm that ends iteration ``m-1`` seeds iteration ``m``
    (re-dispersed by the cooled initial scales); the reported iterate is
    the swarm mean.
    """
    if M < 1:
        raise ValueError("need at least one iteration")
    setup = _setup(model, theta0, pert)
    trace = _new_trace(model, _theta_matrix(model, theta0, 1)[0], M)
    theta = setup.center.copy()
    swarm = np.tile(theta, (J, 1))
    for m in range(1, M + 1):
        setup.center = theta
        raw = _rw_pass(setup, data, J, rng.substream("iter", m), m, pert, swarm=swarm, **kw)
        swarm = raw.final_swarm
        new = swarm.mean(axis=0)
        _record(trace, setup, m, raw, theta, new)
        theta = new
    return trace


def avif(
    model,
    theta0,
    data: TimeSeriesData,
    M: int,
    J: int,
    pert: PerturbationSpec,
    rng: RngStream,
    k_start: int = 0,
    *,
    telescoped: bool = False,
    **kw,
) -> OptimizerTrace:
    """Average iterated filtering.

    The default update sets each estimated coordinate to the average of the
    per-step filter means past the warm start ``k_start``. The literal
    telescoped increment form, ``(theta_bar_N - theta_bar_{k_start}) /
    (N - k_start)``, is available behind ``telescoped=True``. Across-iteration
    averages are exposed via :meth:`OptimizerTrace.iterate_average`.
    """
    N = model.n_times
    if not 0 <= k_start < N:
        raise ValueError("k_start must lie in [0, N)")
    if M < 1:
        raise ValueError("need at least one iteration")
    setup = _setup(model, theta0, pert)
    trace = _new_trace(model, _theta_matrix(model, theta0, 1)[0], M)
    theta = setup.center.copy()
    for m in range(1, M + 1):
        setup.center = theta
        raw = _rw_pass(setup, data, J, rng.substream("iter", m), m, pert, **kw)
        new = theta.copy()
        if setup.est.any():
            means = raw.filter_means[:, setup.est]
            if telescoped:
                base = theta[setup.est] if k_start == 0 else means[k_start - 1]
                new[setup.est] = theta[setup.est] + (means[-1] - base) / (N - k_start)
            else:
                new[setup.est] = means[k_start:].mean(axis=0)
        new = _ivp_update(new, raw, setup, pert.L)
        _record(trace, setup, m, raw, theta, new)
        theta = new
    return trace


def is2(
    model,
    theta0,
    data: TimeSeriesData,
    M: int,
    J: int,
    pert: PerturbationSpec,
    rng: RngStream,
    damping: float = 1.0,
    step_cap: float = 10.0,
    **kw,
) -> OptimizerTrace:
    """Second-order iterated smoothing.

    Each iteration composes the scheme's two update lines. A random-walk
    pass first applies the classical weighted-increment move (which is what
    drags the iterate in from distant starting points); a second pass then
    redraws the swarm fresh around the moved iterate at the cooled scale
    ``c^(m-1) sigma_i`` every step and applies a second-order correction.
    Fresh draws are used for the correction pass because its
    variance-deficit estimate subtracts the flat prior variance
    ``c^2 Psi``, which a random walk's accumulation would swamp.

    The correction's score is the time average of the lag-``L`` smoothed
    mean displacements; the observed information is the matching average of
    smoothed-variance deficits plus within-lag cross-covariances, averaged
    across iterations and skipping weight-degenerate passes. The move is a
    Newton step damped by the swarm's prior precision (``damping`` scales
    the damper) and held inside ``step_cap`` swarm units per coordinate;
    ``fallback`` marks iterations whose curvature carried no usable signal.
    """
    if pert.L < 1:
        raise ValueError("is2 requires a fixed lag L >= 1")
    if M < 1:
        raise ValueError("need at least one iteration")
    setup = _setup(model, theta0, pert)
    trace = _new_trace(model, _theta_matrix(model, theta0, 1)[0], M, with_scores=True)
    est = setup.est
    pe = int(est.sum())
    trace.informations = np.full((M, pe, pe), np.nan)
    psi = setup.sigma[est] ** 2
    N = model.n_times
    theta = setup.center.copy()
    info_sum = np.zeros((pe, pe))
    info_count = 0
    for m in range(1, M + 1):
        setup.center = theta
        _, walk_scale = cooling(pert.a, pert.C, m)
        rw = _rw_pass(setup, data, J, rng.substream("iter", m, "walk"), m, pert, init_scale_mode="walk", **kw)
        moved = theta.copy()
        if pe:
            moved[est] += _if1_increment(rw, theta, est)

        setup.center = moved
        raw = _particle_pass(
            setup.model,
            data,
            J,
            rng.substream("iter", m, "smooth"),
            swarm_base=moved,
            center_eta=moved,
            init_sd=walk_scale * setup.sigma,
            walk_sd=walk_scale * setup.sigma,
            white_noise=True,
            lag=pert.L,
            record_states=True,
            record_smooth_params=True,
            **kw,
        )
        new = moved.copy()
        if pe:
            c2 = walk_scale**2
            S = (raw.param_smooth_means[:, est] - moved[est]).sum(axis=0) / psi / c2 / (N + 1)
            cross = raw.param_smooth_cross[:, est][:, :, est]
            # Variance deficits give the same-epoch curvature; the
            # within-lag cross-covariances carry the cross-epoch mass.
            centered = cross[0] - N * c2 * np.diag(psi)
            for d in range(1, len(cross)):
                centered += cross[d] + cross[d].T
            info = -(centered / (N + 1)) / np.outer(psi, psi) / c2**2
            if np.median(raw.ess_fracs) >= 0.02:
                info_sum += info
                info_count += 1
            averaged = info_sum / info_count if info_count else np.zeros((pe, pe))
            damper = damping / psi / c2 / (N + 1)
            step, used_fallback = _damped_newton(averaged, S, damper)
            # Trust region: the quadratic fit is sampled only within the
            # swarm spread; rescale steps that leave its vicinity.
            overshoot = np.max(np.abs(step) / (step_cap * walk_scale * setup.sigma[est]))
            if overshoot > 1.0:
                step = step / overshoot
            new[est] += step
            trace.scores[m - 1, est] = S
            trace.informations[m - 1] = info
            trace.fallback[m - 1] = used_fallback
        new = _ivp_update(new, raw, setup, pert.L)
        _record(trace, setup, m, raw, theta, new)
        theta = new
    return trace


def _damped_newton(info: np.ndarray, score: np.ndarray, damper: np.ndarray) -> tuple[np.ndarray, bool]:
    """Newton step guarded for indefinite, noise-dominated curvature.

    Symmetrizes and clips the spectrum at zero, then adds the swarm's own
    prior precision before solving, which is the posterior-mean
    displacement of the perturbed model under the local quadratic fit.
    When the curvature estimate carries no usable signal the step degrades
    into the damped (natural-)gradient move ``diag(1/damper) @ score``; the
    returned flag marks that regime. The step always has a nonnegative
    inner product with the score.
    """
    sym = 0.5 * (info + info.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    clipped = np.clip(eigvals, 0.0, None)
    fallback = bool(clipped[-1] <= np.max(damper))
    sym_pos = (eigvecs * clipped) @ eigvecs.T + np.diag(damper)
    return np.linalg.solve(sym_pos, score), fallback


def aif(
    model,
    theta0,
    data: TimeSeriesData,
    M: int,
    J: int,
    pert: PerturbationSpec,
    rng: RngStream,
    seqs: AccelSequences | None = None,
    **kw,
) -> OptimizerTrace:
    """Accelerated iterated filtering.

    Maintains the iterate, aggregate, and midpoint triple. Each iteration
    perturbs fresh around the midpoint (white noise, not a walk), estimates
    the score from the per-step filter means, and applies the two ascent
    updates with the iteration's step sizes. With ``pert.L >= 1`` the score
    uses lag-``L`` smoothed means instead.
    """
    if M < 1:
        raise ValueError("need at least one iteration")
    seqs = seqs if seqs is not None else AccelSequences.default(M)
    if len(seqs.alphas) < M:
        raise ValueError("sequences shorter than the number of iterations")
    setup = _setup(model, theta0, pert)
    trace = _new_trace(model, _theta_matrix(model, theta0, 1)[0], M, with_scores=True)
    est = setup.est
    psi = setup.sigma[est] ** 2
    theta = setup.center.copy()
    theta_ag = theta.copy()
    md_hist = np.empty((M, model.n_params))
    ag_hist = np.empty((M, model.n_params))
    use_lag = pert.L >= 1
    for m in range(1, M + 1):
        alpha, lam, beta = seqs.alphas[m - 1], seqs.lambdas[m - 1], seqs.betas[m - 1]
        theta_md = (1.0 - alpha) * theta_ag + alpha * theta
        setup.center = theta_md
        swarm_scale, walk_scale = cooling(pert.a, pert.C, m)
        raw = _particle_pass(
            setup.model,
            data,
            J,
            rng.substream("iter", m),
            swarm_base=theta_md,
            center_eta=theta_md,
            init_sd=swarm_scale * setup.sigma,
            walk_sd=walk_scale * setup.sigma,
            white_noise=True,
            lag=pert.L if use_lag else 0,
            record_states=use_lag,
            record_smooth_params=use_lag,
            **kw,
        )
        new = theta.copy()
        new_ag = theta_ag.copy()
        if est.any():
            means = raw.param_smooth_means if use_lag else raw.filter_means
            S = score_estimate(means[:, est], theta_md[est], psi, walk_scale, mode="theorem2")
            new[est] = theta[est] + lam * S
            new_ag[est] = theta_md[est] + beta * S
            trace.scores[m - 1, est] = S
        new = _ivp_update(new, raw, setup, pert.L)
        new_ag[setup.ivp] = new[setup.ivp]
        md_hist[m - 1] = setup.model.from_estimation_scale(theta_md)
        ag_hist[m - 1] = setup.model.from_estimation_scale(new_ag)
        _record(trace, setup, m, raw, theta, new)
        theta, theta_ag = new, new_ag
    trace.aux["theta_md"] = md_hist
    trace.aux["theta_ag"] = ag_hist
    return trace
