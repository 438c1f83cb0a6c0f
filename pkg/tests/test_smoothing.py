import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pompkit as pk
from pompkit import PerturbationSpec, RngStream, pfilter, psmooth, psmooth_perturbed, trace_ancestry


def test_trace_identity_at_lag_zero():
    anc = RngStream(1).generator().integers(0, 5, size=(8, 5))
    for j in range(5):
        assert trace_ancestry(anc, 4, 0, j) == j


def test_trace_star_lineage():
    anc = np.zeros((6, 2), dtype=int)  # particle 0 is everyone's parent
    for n in range(2, 7):
        for lag in range(1, n):
            assert trace_ancestry(anc, n, lag, 1) == 0


def _naive_trace(anc, n, lag, j):
    # direct recursion: one lookup per generation
    if lag == 0:
        return j
    return _naive_trace(anc, n - 1, lag - 1, anc[n - 1][j])


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_trace_matches_recurrence_oracle(seed):
    gen = RngStream(seed).generator()
    N, J = 10, 5
    anc = gen.integers(0, J, size=(N, J))
    for n in range(1, N + 1):
        for lag in range(0, n):
            for j in range(J):
                assert trace_ancestry(anc, n, lag, j) == _naive_trace(anc, n, lag, j)


def test_trace_range_errors():
    anc = np.zeros((4, 3), dtype=int)
    with pytest.raises(IndexError):
        trace_ancestry(anc, 2, 2, 0)
    with pytest.raises(IndexError):
        trace_ancestry(anc, 5, 0, 0)
    with pytest.raises(IndexError):
        trace_ancestry(anc, 3, -1, 0)


def test_lag_zero_reduces_to_pfilter(ou2_setup):
    model, data = ou2_setup
    sm = psmooth(model, pk.OU2_TRUTH, data, 250, 0, RngStream(21))
    fl = pfilter(model, pk.OU2_TRUTH, data, 250, RngStream(21))
    assert sm.loglik == fl.loglik
    assert np.array_equal(sm.cond_loglik, fl.cond_loglik)
    assert np.array_equal(sm.cond_loglik_as("filter"), sm.cond_loglik_as("lag_shifted"))


def test_cond_loglik_conventions():
    model = pk.ou2_model(N=20)
    data, _ = pk.simulate(model, pk.OU2_TRUTH, RngStream(2))
    sm = psmooth(model, pk.OU2_TRUTH, data, 100, 4, RngStream(3))
    lag_shifted = sm.cond_loglik_as("lag_shifted")
    filt = sm.cond_loglik_as("filter")
    # the lag-shifted form reports the weights of the smoothing cloud
    assert np.array_equal(lag_shifted[: 20 - 4], filt[4:])
    assert np.all(lag_shifted[20 - 4 :] == filt[-1])
    assert np.isclose(sm.loglik, lag_shifted.sum())


def test_three_step_smoother_matches_exact_full_smoother():
    # Full-lag smoothing on a 3-step scalar model vs the closed-form
    # Kalman smoother mean at the first time.
    F, q, r = 0.7, 0.3, 0.2
    N = 3

    def rinit(th, rng):
        return np.zeros((th.shape[0], 1))

    def rproc(x, th, t, rng):
        return F * x + np.sqrt(q) * rng.standard_normal(x.shape)

    def dmeas(y, x, th):
        return -0.5 * np.log(2 * np.pi * r) - 0.5 * (y[0] - x[:, 0]) ** 2 / r

    model = pk.ModelSpec(1, 1, ("dummy",), 0.0, np.arange(1.0, N + 1), rproc, dmeas, rinit)
    theta = pk.ParamVector(("dummy",), np.array([0.0]))
    ys = np.array([[0.4], [-0.3], [0.8]])
    data = pk.TimeSeriesData(model.times, ys)

    exact = pk.kalman_filter_smoother(
        np.array([[F]]), np.array([[q]]), np.eye(1), np.array([[r]]), np.zeros(1), np.zeros((1, 1)), ys
    )
    J = 100_000
    sm = psmooth(model, theta, data, J, N - 1, RngStream(33))
    mc_sd = np.sqrt(exact.smooth_covs[0, 0, 0] / J)
    # traced lineages lose diversity, allow a generous multiple of the i.i.d. SE
    assert abs(sm.state_smooth_means[0, 0] - exact.smooth_means[0, 0]) < 3 * 10 * mc_sd


def test_smoothed_means_track_kalman_smoother(ou2_setup):
    model, data = ou2_setup
    kal = pk.ou2_kalman(pk.OU2_TRUTH, data)
    sm = psmooth(model, pk.OU2_TRUTH, data, 4000, 5, RngStream(40))
    rmse_vs_smoother = np.sqrt(np.mean((sm.state_smooth_means - kal.smooth_means) ** 2))
    rmse_vs_filter = np.sqrt(np.mean((sm.state_smooth_means - kal.filter_means) ** 2))
    # the smoothed estimates target the smoother trajectory, not the filter's
    assert rmse_vs_smoother < rmse_vs_filter


def test_smoothed_error_decreases_with_particle_count(ou2_setup):
    model, data = ou2_setup
    kal = pk.ou2_kalman(pk.OU2_TRUTH, data)
    med = []
    for J in (100, 1000, 10_000):
        errs = []
        for seed in range(3):
            sm = psmooth(model, pk.OU2_TRUTH, data, J, 5, RngStream(50).substream(J, seed))
            errs.append(np.median(np.abs(sm.state_smooth_means - kal.smooth_means)))
        med.append(np.median(errs))
    assert med[0] > med[1] > med[2]


def test_perturbed_smoother_outputs(ou2_setup):
    model, data = ou2_setup
    pert = PerturbationSpec(sigmas={"alpha.2": 0.02, "alpha.3": 0.02}, a=0.95, C=1.0, L=3)
    sm = psmooth_perturbed(model, pk.OU2_TRUTH, pert, 1, data, 200, RngStream(60))
    assert sm.param_smooth_means.shape == (100, 10)
    assert sm.param_smooth_vars.shape == (100, 10, 10)
    i2 = model.index_of("alpha.2")
    # smoothed variances are symmetric and nonnegative on the diagonal
    assert np.allclose(sm.param_smooth_vars, np.swapaxes(sm.param_smooth_vars, 1, 2))
    assert np.all(sm.param_smooth_vars[:, i2, i2] >= 0)


def test_smooth_result_csv(tmp_path, ou2_setup):
    model, data = ou2_setup
    pert = PerturbationSpec(sigmas={"alpha.2": 0.02}, a=0.95, C=1.0, L=2)
    sm = psmooth_perturbed(model, pk.OU2_TRUTH, pert, 1, data, 50, RngStream(61))
    path = tmp_path / "sm.csv"
    sm.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("n,cond_loglik,theta_smooth_1")
    assert header.endswith("V_10")
