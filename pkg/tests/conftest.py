"""Shared fixtures: small models with tractable likelihoods."""

from __future__ import annotations

import numpy as np
import pytest

import pompkit as pk

LOG2PI = float(np.log(2.0 * np.pi))


def drift_model(N=50, F=0.6, q=0.25, r=1.0):
    """Scalar AR(1) with an unknown drift: x' = F x + drift + N(0, q),
    y = x + N(0, r), x0 = 0. Exactly linear-Gaussian in the drift."""
    qs, rs = np.sqrt(q), np.sqrt(r)

    def rinit(th, rng):
        return np.zeros((th.shape[0], 1))

    def rproc(x, th, t, rng):
        noise = qs * rng.standard_normal(x.shape) if q > 0 else 0.0
        return F * x + th[:, 0:1] + noise

    def dmeas(y, x, th):
        return -0.5 * LOG2PI - np.log(rs) - 0.5 * (y[0] - x[:, 0]) ** 2 / r

    def rmeas(x, th, rng):
        return x + rs * rng.standard_normal(x.shape)

    return pk.ModelSpec(
        dim_state=1,
        dim_obs=1,
        param_names=("drift",),
        t0=0.0,
        times=np.arange(1.0, N + 1),
        rprocess=rproc,
        dmeasure=dmeas,
        rinit=rinit,
        rmeasure=rmeas,
    )


def drift_kalman_loglik(model_args: dict, data: pk.TimeSeriesData, drift: float) -> float:
    """Exact log-likelihood for ``drift_model`` at a drift value."""
    F = model_args.get("F", 0.6)
    q = model_args.get("q", 0.25)
    r = model_args.get("r", 1.0)
    mn, P, ll = 0.0, 0.0, 0.0
    for y in data.observations[:, 0]:
        mn = F * mn + drift
        P = F**2 * P + q
        S = P + r
        ll += -0.5 * (LOG2PI + np.log(S) + (y - mn) ** 2 / S)
        gain = P / S
        mn += gain * (y - mn)
        P -= gain * P
    return float(ll)


def flat_model(N=20):
    """One-parameter model whose dmeasure is identically zero (density one)."""

    def rinit(th, rng):
        return np.zeros((th.shape[0], 1))

    def rproc(x, th, t, rng):
        return x + rng.standard_normal(x.shape)

    def dmeas(y, x, th):
        return np.zeros(x.shape[0])

    def rmeas(x, th, rng):
        return x.copy()

    return pk.ModelSpec(
        dim_state=1,
        dim_obs=1,
        param_names=("mu",),
        t0=0.0,
        times=np.arange(1.0, N + 1),
        rprocess=rproc,
        dmeasure=dmeas,
        rinit=rinit,
        rmeasure=rmeas,
    )


@pytest.fixture(scope="session")
def ou2_setup():
    model = pk.ou2_model(N=100)
    data = pk.ou2_data()
    return model, data


@pytest.fixture(scope="session")
def gompertz_setup():
    return pk.gompertz_model(N=100), pk.gompertz_data()
