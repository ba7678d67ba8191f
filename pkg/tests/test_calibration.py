import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from mhmvol.calibration import (
    FitResult,
    autocov_curve,
    empirical_variance_moments,
    fit_autocov_curve,
    fit_gamma_from_autocov,
    fit_returns,
    kappas_from_fit,
    ks_statistic,
)
from mhmvol.data_io import ReturnSeries
from mhmvol.distributions import BetaPrimeParams, GammaParams, InverseGammaParams, Model, ModelParams
from mhmvol.errors import DegenerateDataError, DomainError, InsufficientDataError
from mhmvol.sde import SimConfig, returns_at_lag, simulate

MHM = ModelParams.from_squares(0.05, 0.01, 0.02, 2e-4)


@pytest.fixture(scope="module")
def mhm_daily():
    path = simulate("mhm", MHM, SimConfig(dt=0.1, n_steps=10_000_000, burn_in=10_000, save_every=10, seed=21))
    return returns_at_lag(path, 1)


def test_ks_examples():
    assert ks_statistic([0.5], lambda x: np.clip(x, 0, 1)) == pytest.approx(0.5)
    n = 200
    q = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    assert ks_statistic(q, special.ndtr) == pytest.approx(1 / (2 * n), rel=1e-9)


def test_ks_normal_sample():
    x = np.sort(np.random.default_rng(0).standard_normal(10_000))
    d = ks_statistic(x, special.ndtr)
    assert d < 0.02
    assert d == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-14)


@settings(max_examples=30)
@given(st.floats(0.1, 100), st.floats(-50, 50))
def test_ks_invariant_under_increasing_maps(a, b):
    x = np.sort(np.random.default_rng(1).standard_normal(300))
    d0 = ks_statistic(x, special.ndtr)
    d1 = ks_statistic(a * x + b, lambda y: special.ndtr((y - b) / a))
    assert d1 == pytest.approx(d0, abs=1e-12)


def test_ks_input_errors():
    with pytest.raises(InsufficientDataError):
        ks_statistic([], special.ndtr)
    with pytest.raises(DomainError):
        ks_statistic([1.0, 0.0], special.ndtr)


def test_fit_rejects_tiny_samples():
    with pytest.raises(InsufficientDataError):
        fit_returns(ReturnSeries(np.random.default_rng(0).standard_normal(10) * 0.1), Model.MHM)
    with pytest.raises(DomainError):
        fit_returns(ReturnSeries(np.ones(100)), Model.MHM, method="ls")


def test_fit_warns_on_small_samples_and_improves_on_initializer():
    z = ReturnSeries(np.random.default_rng(2).standard_t(6, 300) * 0.1)
    with pytest.warns(UserWarning, match="recommended"):
        res = fit_returns(z, Model.MHM)
    assert res.ks <= res.initial_objective
    assert res.n == 300 and res.objective_evals > 0
    assert res.params.q > 1


@pytest.mark.parametrize("model", [Model.MM, Model.HM])
def test_fit_mle_is_no_worse_than_initializer(model):
    z = ReturnSeries(np.random.default_rng(3).standard_t(8, 2000) * 0.1)
    res = fit_returns(z, model, method="mle")
    assert res.method == "mle" and res.model is model
    assert 0 <= res.ks < 0.05


def _mm_mixture_sample(n, seed):
    # exact MM returns: v ~ IGa(shape 5, scale 0.04), z = sqrt(v) xi
    rng = np.random.default_rng(seed)
    v = stats.invgamma.rvs(5.0, scale=0.04, size=n, random_state=rng)
    return ReturnSeries(np.sqrt(v) * rng.standard_normal(n))


def test_mm_round_trip_likelihood():
    res = fit_returns(_mm_mixture_sample(200_000, 1), Model.MM, method="mle")
    law = res.params
    assert isinstance(law, InverseGammaParams)
    assert law.alpha / law.theta + 1 == pytest.approx(5.0, rel=0.10)
    assert law.theta == pytest.approx(0.01, rel=0.02)


def test_mm_round_trip_ks():
    # the KS estimate of the shape has a wider spread; check it loosely
    res = fit_returns(_mm_mixture_sample(200_000, 1), Model.MM)
    law = res.params
    assert law.alpha / law.theta + 1 == pytest.approx(5.0, rel=0.25)
    assert res.ks < 0.005 and res.ks <= res.initial_objective


def test_fit_result_derived_fields():
    r = FitResult(Model.MHM, BetaPrimeParams(5, 6, 0.01), 0.003, 1000, 1, True, 1, gamma=0.05)
    assert r.kappas() == pytest.approx((0.02, 2e-4))
    assert r.theta == pytest.approx(0.01)
    hm = FitResult(Model.HM, GammaParams(5, 0.01), 0.003, 1000, 1, True, 1).with_gamma(0.05)
    assert hm.to_dict()["kappa_H_sq"] == pytest.approx(2e-4)
    with pytest.raises(DomainError):
        FitResult(Model.HM, GammaParams(5, 0.01), 1.5, 1000, 1, True, 1)


def test_kappas_from_fit():
    assert kappas_from_fit(BetaPrimeParams(5, 6, 0.01), 0.05) == pytest.approx((0.02, 2e-4))
    with pytest.raises(DomainError):
        kappas_from_fit(BetaPrimeParams(5, 1, 0.01), 0.05)


def test_variance_moments_gaussian():
    n = 200_000
    z = ReturnSeries(np.random.default_rng(4).standard_normal(n) * 0.1)
    m = empirical_variance_moments(z, allow_negative=True)
    assert m.theta_hat == pytest.approx(0.01, rel=0.01)
    assert abs(m.var_v_hat) / m.theta_hat**2 < 5 / math.sqrt(n)


def test_variance_moments_errors():
    with pytest.raises(DegenerateDataError):
        empirical_variance_moments(ReturnSeries(np.zeros(1000)))
    # constant |z| has zero kurtosis excess below Gaussian: var_v_hat < 0
    with pytest.raises(DegenerateDataError):
        empirical_variance_moments(ReturnSeries(np.tile([0.1, -0.1], 500)))
    with pytest.raises(InsufficientDataError):
        empirical_variance_moments(ReturnSeries(np.ones(10)))


def test_variance_moments_simulated(mhm_daily):
    m = empirical_variance_moments(mhm_daily)
    assert m.ev2_hat == pytest.approx(MHM.second_variance_moment(), rel=0.10)
    assert m.theta_hat == pytest.approx(0.01, rel=0.02)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(1e-6, 1.0), st.floats(0.05, 5.0))
def test_noiseless_gamma_round_trip(gamma, theta, ratio):
    lags = np.arange(1, 101)
    var = ratio * theta**2
    c = theta**2 + var * np.exp(-gamma * lags)
    g = fit_autocov_curve(lags, c)
    assert g.gamma == pytest.approx(gamma, rel=1e-6)
    assert g.theta_hat == pytest.approx(theta, rel=1e-6)
    assert g.var_v_hat == pytest.approx(var, rel=1e-5)


def test_noiseless_gamma_example():
    lags = np.arange(1, 101)
    g = fit_autocov_curve(lags, 1e-8 + 3e-9 * np.exp(-0.042 * lags))
    assert abs(g.gamma - 0.042) < 1e-6
    assert g.lag_range == (1, 100)


def test_gamma_from_simulated_path(mhm_daily):
    g = fit_gamma_from_autocov(mhm_daily)
    assert g.gamma == pytest.approx(0.05, rel=0.15)


def test_gamma_fit_errors():
    with pytest.raises(DomainError):
        autocov_curve(ReturnSeries(np.ones(5000)), (0, 10))
    with pytest.raises(InsufficientDataError):
        autocov_curve(ReturnSeries(np.ones(50)), (1, 100))
    # constant |z|: flat autocovariance, no decay to fit
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(DegenerateDataError):
            fit_gamma_from_autocov(ReturnSeries(np.tile([1.0, -1.0], 5000)))
