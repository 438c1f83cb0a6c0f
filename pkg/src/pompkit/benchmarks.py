"""Benchmark models with exact likelihood oracles.

Two models ship with the package:

* ``ou2``: a bivariate linear-Gaussian process. The transition applies
  x1' = a1*x1 + a3*x2 + s1*xi1, x2' = a2*x1 + a4*x2 + s2*xi1 + s3*xi2 with
  shared noise xi1, so the process covariance is L L' for the
  lower-triangular factor L = [[s1, 0], [s2, s3]]. Observations add
  N(0, tau^2) noise per coordinate.
* ``gompertz``: density regulation X' = K^(1-e^(-r dt)) X^(e^(-r dt)) eps
  with lognormal process and measurement noise; linear-Gaussian after a
  log transform.

Both admit an exact Kalman evaluation of the likelihood, implemented here
twice on purpose: ``ou2`` goes through the generic multivariate recursion
in :mod:`pompkit.kalman`, while the Gompertz oracle is an independent
scalar recursion (plus the log-observation Jacobian), so each checks the
other on transformed data.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.optimize import minimize

from .core import ModelSpec, ParamVector, TimeSeriesData
from .kalman import KalmanResult, kalman_filter_smoother

__all__ = [
    "OU2_PARAM_NAMES",
    "OU2_TRUTH",
    "GOMPERTZ_PARAM_NAMES",
    "GOMPERTZ_DEFAULT",
    "ou2_model",
    "gompertz_model",
    "ou2_kalman",
    "ou2_kalman_loglik",
    "gompertz_exact_loglik",
    "ou2_data",
    "gompertz_data",
    "ou2_mle_alpha23",
    "get_model",
]

_LOG2PI = float(np.log(2.0 * np.pi))

OU2_PARAM_NAMES = (
    "alpha.1", "alpha.2", "alpha.3", "alpha.4",
    "sigma.1", "sigma.2", "sigma.3",
    "tau", "x1.0", "x2.0",
)

# Generating parameters for the shipped ou2 dataset.
OU2_TRUTH = ParamVector.from_dict(
    {
        "alpha.1": 0.8, "alpha.2": -0.5, "alpha.3": 0.3, "alpha.4": 0.9,
        "sigma.1": 3.0, "sigma.2": -0.5, "sigma.3": 2.0,
        "tau": 1.0, "x1.0": -3.0, "x2.0": 4.0,
    },
    OU2_PARAM_NAMES,
)

GOMPERTZ_PARAM_NAMES = ("r", "K", "sigma", "tau", "X.0")

# Configuration default, not a paper value; recorded with every run.
GOMPERTZ_DEFAULT = ParamVector.from_dict(
    {"r": 0.1, "K": 1.0, "sigma": 0.1, "tau": 0.1, "X.0": 1.0},
    GOMPERTZ_PARAM_NAMES,
)


def _ou2_rinit(theta, rng):
    return theta[:, 8:10].copy()


def _ou2_rprocess(x, theta, t_interval, rng):
    xi = rng.standard_normal((x.shape[0], 2))
    x1 = theta[:, 0] * x[:, 0] + theta[:, 2] * x[:, 1] + theta[:, 4] * xi[:, 0]
    x2 = theta[:, 1] * x[:, 0] + theta[:, 3] * x[:, 1] + theta[:, 5] * xi[:, 0] + theta[:, 6] * xi[:, 1]
    return np.column_stack((x1, x2))


def _ou2_dmeasure(y, x, theta):
    tau = theta[:, 7]
    with np.errstate(over="ignore", invalid="ignore"):
        sq = (y[0] - x[:, 0]) ** 2 + (y[1] - x[:, 1]) ** 2
    ok = np.isfinite(sq) & (tau > 0)
    out = np.full(sq.shape, -np.inf)
    out[ok] = -_LOG2PI - 2.0 * np.log(tau[ok]) - 0.5 * sq[ok] / tau[ok] ** 2
    return out


def _ou2_rmeasure(x, theta, rng):
    return x + theta[:, 7:8] * rng.standard_normal(x.shape)


def ou2_model(N: int = 100, t0: float = 0.0) -> ModelSpec:
    """Bivariate linear-Gaussian benchmark observed at times 1..N."""
    return ModelSpec(
        dim_state=2,
        dim_obs=2,
        param_names=OU2_PARAM_NAMES,
        t0=t0,
        times=t0 + np.arange(1, N + 1, dtype=float),
        rprocess=_ou2_rprocess,
        dmeasure=_ou2_dmeasure,
        rinit=_ou2_rinit,
        rmeasure=_ou2_rmeasure,
        ivp_names=frozenset({"x1.0", "x2.0"}),
    )


def _gompertz_rinit(theta, rng):
    return theta[:, 4:5].copy()


def _gompertz_rprocess(x, theta, t_interval, rng):
    dt = t_interval[1] - t_interval[0]
    r, K, sigma = theta[:, 0], theta[:, 1], theta[:, 2]
    e = np.exp(-r * dt)
    eps = np.exp(sigma * rng.standard_normal(x.shape[0]))
    return (K ** (1.0 - e) * x[:, 0] ** e * eps)[:, None]


def _gompertz_dmeasure(y, x, theta):
    tau = theta[:, 3]
    xv = x[:, 0]
    out = np.full(xv.shape, -np.inf)
    ok = np.isfinite(xv) & (xv > 0) & (tau > 0)
    if y[0] <= 0 or not ok.any():
        return out
    logy = np.log(y[0])
    dev = logy - np.log(xv[ok])
    out[ok] = -logy - 0.5 * _LOG2PI - np.log(tau[ok]) - 0.5 * dev**2 / tau[ok] ** 2
    return out


def _gompertz_rmeasure(x, theta, rng):
    return x * np.exp(theta[:, 3:4] * rng.standard_normal(x.shape))


def _gompertz_dprior(theta):
    # Flat box over the sampled rates; positivity for the rest.
    r, K, sigma, tau, x0 = theta
    if 0.0 < r < 1.0 and 0.0 < sigma < 1.0 and 0.0 < tau < 1.0 and K > 0.0 and x0 > 0.0:
        return 0.0
    return -np.inf


def gompertz_model(N: int = 100, t0: float = 0.0) -> ModelSpec:
    """Stochastic Gompertz population model with lognormal errors."""
    return ModelSpec(
        dim_state=1,
        dim_obs=1,
        param_names=GOMPERTZ_PARAM_NAMES,
        t0=t0,
        times=t0 + np.arange(1, N + 1, dtype=float),
        rprocess=_gompertz_rprocess,
        dmeasure=_gompertz_dmeasure,
        rinit=_gompertz_rinit,
        rmeasure=_gompertz_rmeasure,
        dprior=_gompertz_dprior,
        ivp_names=frozenset({"X.0"}),
    )


def _as_dict(theta, names) -> dict:
    if isinstance(theta, ParamVector):
        return theta.to_dict()
    if isinstance(theta, dict):
        return dict(theta)
    return ParamVector(names, np.asarray(theta, dtype=float)).to_dict()


def ou2_kalman(theta, data: TimeSeriesData) -> KalmanResult:
    """Exact Kalman filter/smoother for the ou2 model."""
    d = _as_dict(theta, OU2_PARAM_NAMES)
    F = np.array([[d["alpha.1"], d["alpha.3"]], [d["alpha.2"], d["alpha.4"]]])
    L = np.array([[d["sigma.1"], 0.0], [d["sigma.2"], d["sigma.3"]]])
    Q = L @ L.T
    R = d["tau"] ** 2 * np.eye(2)
    x0 = np.array([d["x1.0"], d["x2.0"]])
    return kalman_filter_smoother(F, Q, np.eye(2), R, x0, np.zeros((2, 2)), data.observations)


def ou2_kalman_loglik(theta, data: TimeSeriesData) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact log-likelihood with filter and smoother mean trajectories."""
    res = ou2_kalman(theta, data)
    return res.loglik, res.filter_means, res.smooth_means


def gompertz_exact_loglik(theta, data: TimeSeriesData, t0: float | None = None) -> float:
    """Exact Gompertz log-likelihood via a scalar recursion on log scale.

    Runs the log-transformed AR(1) filter directly and adds the Jacobian
    of the log transform so the value is a density for Y, not log Y.
    ``t0`` defaults to one regular grid spacing before the first
    observation.
    """
    d = _as_dict(theta, GOMPERTZ_PARAM_NAMES)
    y = data.observations[:, 0]
    if np.any(y <= 0):
        raise ValueError("Gompertz observations must be positive")
    if t0 is None:
        spacing = data.times[1] - data.times[0] if len(data.times) > 1 else 1.0
        t0 = data.times[0] - spacing
    times = np.concatenate(([t0], data.times))
    r, K, sigma, tau = d["r"], d["K"], d["sigma"], d["tau"]
    if tau <= 0:
        raise ValueError("gompertz oracle requires tau > 0")
    logK = np.log(K)
    z = np.log(y)
    m, P = np.log(d["X.0"]), 0.0
    loglik = 0.0
    for n in range(len(z)):
        dt = times[n + 1] - times[n]
        phi = np.exp(-r * dt)
        m = (1.0 - phi) * logK + phi * m
        P = phi**2 * P + sigma**2
        S = P + tau**2
        resid = z[n] - m
        loglik += -0.5 * (_LOG2PI + np.log(S) + resid**2 / S) - z[n]
        gain = P / S
        m = m + gain * resid
        P = P - gain * P
    return float(loglik)


def _load_csv(name: str) -> TimeSeriesData:
    with resources.as_file(resources.files("pompkit").joinpath("data", name)) as path:
        return TimeSeriesData.from_csv(path)


def ou2_data() -> TimeSeriesData:
    """The shipped seed-1 ou2 dataset used by the acceptance runs."""
    return _load_csv("ou2_seed1.csv")


def gompertz_data() -> TimeSeriesData:
    return _load_csv("gompertz_seed1.csv")


@dataclass(frozen=True)
class _ModelEntry:
    build: callable
    defaults: ParamVector
    load_data: callable
    oracle: callable | None


def ou2_mle_alpha23(data: TimeSeriesData, truth: ParamVector = OU2_TRUTH) -> tuple[float, float, float]:
    """Maximize the exact ou2 log-likelihood over (alpha.2, alpha.3).

    All other parameters stay at `truth`. A coarse grid pass locates the
    basin and a simplex refinement polishes to about 1e-4.

    Returns ``(alpha.2, alpha.3, loglik)``.
    """

    def negll(ab):
        th = truth.replace(**{"alpha.2": float(ab[0]), "alpha.3": float(ab[1])})
        return -ou2_kalman(th, data).loglik

    grid_a2 = np.linspace(-1.0, 0.0, 21)
    grid_a3 = np.linspace(0.0, 1.0, 21)
    best, best_val = None, np.inf
    for a2 in grid_a2:
        for a3 in grid_a3:
            v = negll((a2, a3))
            if v < best_val:
                best, best_val = (a2, a3), v
    res = minimize(negll, best, method="Nelder-Mead", options={"xatol": 1e-5, "fatol": 1e-9})
    return float(res.x[0]), float(res.x[1]), float(-res.fun)


def _ou2_oracle(theta, data):
    return ou2_kalman(theta, data).loglik


def get_model(name: str):
    """Registry lookup used by the experiment harness."""
    registry = {
        "ou2": _ModelEntry(ou2_model, OU2_TRUTH, ou2_data, _ou2_oracle),
        "gompertz": _ModelEntry(gompertz_model, GOMPERTZ_DEFAULT, gompertz_data, gompertz_exact_loglik),
    }
    try:
        return registry[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(registry)}") from None
