"""Exact filtering and smoothing for linear-Gaussian state-space models.

Used as the likelihood oracle the particle algorithms are validated
against. The model is ``x_n = F x_{n-1} + w_n``, ``y_n = H x_n + v_n`` with
``w ~ N(0, Q)``, ``v ~ N(0, R)``, and a Gaussian (possibly degenerate)
initial state at time zero; the first observation arrives after one
transition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["KalmanResult", "kalman_filter_smoother"]

_LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class KalmanResult:
    loglik: float
    cond_loglik: np.ndarray
    pred_means: np.ndarray
    pred_covs: np.ndarray
    filter_means: np.ndarray
    filter_covs: np.ndarray
    smooth_means: np.ndarray
    smooth_covs: np.ndarray


def _check_psd(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.allclose(mat, mat.T):
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(mat)
    if eigs.min() < -1e-10 * max(1.0, abs(eigs.max())):
        raise ValueError(f"{name} must be positive semidefinite")
    return mat


def kalman_filter_smoother(
    F: np.ndarray,
    Q: np.ndarray,
    H: np.ndarray,
    R: np.ndarray,
    x0: np.ndarray,
    P0: np.ndarray,
    ys: np.ndarray,
) -> KalmanResult:
    F = np.asarray(F, dtype=float)
    H = np.asarray(H, dtype=float)
    Q = _check_psd(Q, "Q")
    R = _check_psd(R, "R")
    P0 = _check_psd(P0, "P0")
    x0 = np.asarray(x0, dtype=float)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    N, dy = ys.shape
    dx = F.shape[0]

    pred_means = np.empty((N, dx))
    pred_covs = np.empty((N, dx, dx))
    filt_means = np.empty((N, dx))
    filt_covs = np.empty((N, dx, dx))
    cond = np.empty(N)

    m, P = x0, P0
    for n in range(N):
        m = F @ m
        P = F @ P @ F.T + Q
        pred_means[n], pred_covs[n] = m, P

        S = H @ P @ H.T + R
        resid = ys[n] - H @ m
        sign, logdet = np.linalg.slogdet(S)
        if sign <= 0:
            raise ValueError("innovation covariance is not positive definite")
        sol = np.linalg.solve(S, resid)
        cond[n] = -0.5 * (dy * _LOG2PI + logdet + resid @ sol)
        K = np.linalg.solve(S, H @ P).T
        m = m + K @ resid
        P = P - K @ S @ K.T
        P = 0.5 * (P + P.T)
        filt_means[n], filt_covs[n] = m, P

    smooth_means = np.empty((N, dx))
    smooth_covs = np.empty((N, dx, dx))
    smooth_means[-1], smooth_covs[-1] = filt_means[-1], filt_covs[-1]
    for n in range(N - 2, -1, -1):
        G = np.linalg.solve(pred_covs[n + 1], F @ filt_covs[n]).T
        smooth_means[n] = filt_means[n] + G @ (smooth_means[n + 1] - pred_means[n + 1])
        smooth_covs[n] = filt_covs[n] + G @ (smooth_covs[n + 1] - pred_covs[n + 1]) @ G.T

    return KalmanResult(
        loglik=float(cond.sum()),
        cond_loglik=cond,
        pred_means=pred_means,
        pred_covs=pred_covs,
        filter_means=filt_means,
        filter_covs=filt_covs,
        smooth_means=smooth_means,
        smooth_covs=smooth_covs,
    )
