import dataclasses

import numpy as np
import pytest

import pompkit as pk
from pompkit import PerturbationSpec, RngStream, pfilter, pfilter_perturbed
from pompkit.perturb import cooling

from conftest import flat_model


def test_constant_density_model_gives_zero_loglik():
    model = flat_model(N=12)
    theta = pk.ParamVector(("mu",), np.array([0.0]))
    data, _ = pk.simulate(model, theta, RngStream(1))
    res = pfilter(model, theta, data, 1, RngStream(2))
    assert res.loglik == 0.0
    assert np.all(res.cond_loglik == 0.0)


def test_seed_determinism_is_bitwise(ou2_setup):
    model, data = ou2_setup
    r1 = pfilter(model, pk.OU2_TRUTH, data, 200, RngStream(5))
    r2 = pfilter(model, pk.OU2_TRUTH, data, 200, RngStream(5))
    assert r1.loglik == r2.loglik
    assert np.array_equal(r1.cond_loglik, r2.cond_loglik)


def test_zero_perturbation_reduces_to_plain_filter(ou2_setup):
    model, data = ou2_setup
    plain = pfilter(model, pk.OU2_TRUTH, data, 300, RngStream(7))
    pert = PerturbationSpec(sigmas={}, a=0.95, C=1.0)
    perturbed = pfilter_perturbed(model, pk.OU2_TRUTH, pert, 1, data, 300, RngStream(7))
    assert perturbed.loglik == plain.loglik
    assert np.array_equal(perturbed.cond_loglik, plain.cond_loglik)
    assert np.allclose(perturbed.filter_means, np.tile(pk.OU2_TRUTH.values, (100, 1)))


def test_cond_loglik_bounded_by_max_dmeasure(ou2_setup):
    model, data = ou2_setup
    res = pfilter(model, pk.OU2_TRUTH, data, 100, RngStream(9))
    # each entry is a log-mean over particles, so <= 0 shifted by the max
    # attainable bivariate normal log-density at tau = 1
    assert np.all(res.cond_loglik <= -np.log(2 * np.pi) + 1e-12)


def test_flat_likelihood_prediction_variance_accumulates():
    # With no selection the prediction variance follows the random-walk
    # recursion (a^(m-1) sigma)^2 n + (C a^(m-1) sigma)^2.
    model = flat_model(N=30)
    theta = pk.ParamVector(("mu",), np.array([0.0]))
    data, _ = pk.simulate(model, theta, RngStream(1))
    sigma, C, a, m, J = 0.1, 2.0, 0.9, 2, 4000
    pert = PerturbationSpec(sigmas={"mu": sigma}, a=a, C=C)
    res = pfilter_perturbed(model, theta, pert, m, data, J, RngStream(3))
    walk = (a ** (m - 1) * sigma) ** 2
    swarm = (C * a ** (m - 1) * sigma) ** 2
    expected = walk * np.arange(1, 31) + swarm
    assert np.allclose(res.pred_variances[:, 0], expected, rtol=0.15)


def test_fig1_schedule_walk_sd():
    # geometric decay from 0.02 at m=1 to 0.011 at m=20
    a = (0.011 / 0.02) ** (1 / 19)
    assert np.isclose(a, 0.9691, atol=2e-4)
    swarm, walk = cooling(a, 1.0, 1)
    assert walk * 0.02 == 0.02
    _, walk20 = cooling(a, 1.0, 20)
    assert np.isclose(walk20 * 0.02, 0.011)


def test_perturbed_run_records_swarm_and_final(ou2_setup):
    model, data = ou2_setup
    pert = PerturbationSpec(sigmas={"alpha.2": 0.02, "alpha.3": 0.02}, a=0.95, C=1.0)
    res = pfilter_perturbed(model, pk.OU2_TRUTH, pert, 1, data, 150, RngStream(11))
    assert res.swarm_means.shape == (101, 10)
    assert res.final_swarm.shape == (150, 10)
    assert res.pred_variances.shape == (100, 10)
    fixed = [i for i, n in enumerate(model.param_names) if n not in ("alpha.2", "alpha.3")]
    assert np.allclose(res.final_swarm[:, fixed], pk.OU2_TRUTH.values[fixed])


def test_filtering_failure_fallback_and_limit():
    def impossible(y, x, th):
        return np.full(x.shape[0], -np.inf)

    model = dataclasses.replace(flat_model(N=5), dmeasure=impossible)
    theta = pk.ParamVector(("mu",), np.array([0.0]))
    data = pk.TimeSeriesData(model.times, np.zeros((5, 1)))
    res = pfilter(model, theta, data, 10, RngStream(1))
    assert res.n_failures == 5
    assert res.failed_steps == (1, 2, 3, 4, 5)
    assert np.allclose(res.cond_loglik, np.log(1e-300))
    with pytest.raises(pk.FilteringLimitExceeded):
        pfilter(model, theta, data, 10, RngStream(1), max_fail=2)


def test_nan_dmeasure_is_a_contract_error():
    def broken(y, x, th):
        return np.full(x.shape[0], np.nan)

    model = dataclasses.replace(flat_model(N=3), dmeasure=broken)
    theta = pk.ParamVector(("mu",), np.array([0.0]))
    data = pk.TimeSeriesData(model.times, np.zeros((3, 1)))
    with pytest.raises(pk.ModelContractError):
        pfilter(model, theta, data, 5, RngStream(1))


def test_filter_result_csv(tmp_path, ou2_setup):
    model, data = ou2_setup
    pert = PerturbationSpec(sigmas={"alpha.2": 0.02}, a=0.95, C=1.0)
    res = pfilter_perturbed(model, pk.OU2_TRUTH, pert, 1, data, 50, RngStream(1))
    path = tmp_path / "fr.csv"
    res.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("n,cond_loglik,theta_bar_1")
    assert header.endswith("V_10")


def test_gompertz_loglik_close_to_exact(gompertz_setup):
    model, data = gompertz_setup
    exact = pk.gompertz_exact_loglik(pk.GOMPERTZ_DEFAULT, data)
    res = pfilter(model, pk.GOMPERTZ_DEFAULT, data, 1000, RngStream(55))
    assert abs(res.loglik - exact) < 2.0


def test_mean_loglik_close_to_kalman_small(ou2_setup):
    # desk-scale version of the oracle cross-validation (A1 runs the full
    # one); J must be large enough that the estimator's downward bias
    # stays inside the band
    model, data = ou2_setup
    exact = pk.ou2_kalman(pk.OU2_TRUTH, data).loglik
    lls = [pfilter(model, pk.OU2_TRUTH, data, 10_000, RngStream(100 + k)).loglik for k in range(5)]
    assert abs(np.mean(lls) - exact) < 2.0
    assert np.std(lls) < 1.0
