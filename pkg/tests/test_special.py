import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mhmvol.errors import ConvergenceError, DomainError
from mhmvol.special import (
    QuadratureConfig,
    adaptive_quad,
    beta_function,
    erf,
    kummer_u,
    log_beta,
    log_gamma,
    log_kummer_u,
    normal_cdf,
    normal_sf,
    reg_incomplete_beta,
    reg_incomplete_gamma_lower,
    reg_incomplete_gamma_upper,
)

mp.mp.dps = 30


def u_oracle(a, b, z):
    """Brute-force U with t = u / (1 - u) on (0, 1), tolerances halved, split at the peak."""
    c = b - a - 1

    def g(u):
        if u <= 0 or u >= 1:
            return 0.0
        t = u / (1 - u)
        lg = -z * t + (a - 1) * math.log(t) + c * math.log1p(t) - math.lgamma(a)
        return math.exp(lg) / (1 - u) ** 2 if lg > -745 else 0.0

    grid = np.linspace(0, 1, 4001)[1:-1]
    u_peak = grid[np.argmax([g(u) for u in grid])]
    pts = sorted({0.0, u_peak, 1.0})
    return sum(integrate.quad(g, lo, hi, epsabs=0, epsrel=5e-11, limit=400)[0] for lo, hi in zip(pts, pts[1:]))


@pytest.mark.parametrize("x, expected", [(1.0, 0.0), (5.0, math.log(24.0)), (0.5, math.log(math.sqrt(math.pi)))])
def test_log_gamma_values(x, expected):
    assert log_gamma(x) == pytest.approx(expected, abs=1e-14)


def test_log_gamma_recurrence():
    x = np.geomspace(0.1, 1e4, 500)
    hi = log_gamma(x + 1)
    # ln Gamma reaches 8e4 here; one ulp of that is ~1.5e-11, so scale by magnitude
    err = np.abs(hi - log_gamma(x) - np.log(x)) / np.maximum(1.0, np.abs(hi))
    assert np.max(err) < 1e-12
    small = x <= 50
    assert np.max(np.abs(hi - log_gamma(x) - np.log(x))[small]) < 1e-12


@pytest.mark.parametrize("x", [0.0, -1.0, float("nan")])
def test_log_gamma_rejects_nonpositive(x):
    with pytest.raises(DomainError):
        log_gamma(x)


def test_beta_small_cases():
    assert beta_function(1, 1) == pytest.approx(1.0, rel=1e-15)
    assert beta_function(2, 3) == pytest.approx(1 / 12, rel=1e-14)


def test_beta_large_arguments_against_recurrence():
    # B(a, b) = B(a+1, b) (a+b)/a, climbed from a value small enough to compute directly
    a, b = 50.0, 60.0
    ref = float(mp.beta(a, b))
    assert beta_function(a, b) == pytest.approx(ref, rel=1e-12)
    chain = math.gamma(10.0) * math.gamma(60.0) / math.gamma(70.0)  # B(10, 60)
    for k in range(10, 50):
        chain = chain * k / (k + b)  # B(k+1, b) = B(k, b) k / (k + b)
    assert chain == pytest.approx(ref, rel=1e-11)


@given(st.floats(0.01, 500), st.floats(0.01, 500))
def test_beta_symmetric(a, b):
    assert beta_function(a, b) == beta_function(b, a)
    assert log_beta(a, b) == log_beta(b, a)


def test_incomplete_gamma_values():
    assert reg_incomplete_gamma_lower(1.0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert reg_incomplete_gamma_lower(2.5, 0.0) == 0.0
    ref = integrate.quad(lambda t: t**2.7 * math.exp(-t), 0, 2.2, epsabs=0, epsrel=1e-13)[0] / math.gamma(3.7)
    assert reg_incomplete_gamma_lower(3.7, 2.2) == pytest.approx(ref, rel=1e-11)


@given(st.floats(0.01, 200), st.floats(0, 400))
def test_incomplete_gamma_complement(s, x):
    assert reg_incomplete_gamma_lower(s, x) + reg_incomplete_gamma_upper(s, x) == pytest.approx(1.0, abs=1e-12)


def test_incomplete_beta_against_mpmath():
    rng = np.random.default_rng(1)
    for a, b, x in zip(rng.uniform(0.2, 30, 50), rng.uniform(0.2, 30, 50), rng.uniform(0, 1, 50)):
        ref = float(mp.betainc(a, b, 0, x, regularized=True))
        assert reg_incomplete_beta(a, b, x) == pytest.approx(ref, rel=1e-10, abs=1e-300)


def test_incomplete_beta_domain():
    with pytest.raises(DomainError):
        reg_incomplete_beta(1, 1, 1.5)


def test_erf_values():
    assert erf(0.0) == 0.0
    assert erf(1.0) == pytest.approx(float(mp.erf(1)), rel=1e-15)
    assert erf(1.0) == pytest.approx(0.8427008, abs=1e-7)
    x = np.linspace(-4, 4, 17)
    assert np.array_equal(erf(-x), -erf(x))


def test_normal_tails():
    assert normal_cdf(0.0) == 0.5
    assert normal_sf(10.0) == pytest.approx(float(mp.ncdf(-10)), rel=1e-13)
    assert normal_cdf(-3.0) == pytest.approx(normal_sf(3.0), rel=1e-15)


# -- Kummer U -------------------------------------------------------------------


def test_u_power_identity():
    assert kummer_u(1.0, 2.0, 2.0) == pytest.approx(0.5, rel=1e-12)
    for a, z in [(0.7, 0.3), (3.0, 5.0), (12.5, 0.05)]:
        assert kummer_u(a, a + 1.0, z) == pytest.approx(z**-a, rel=1e-10)


def test_u_exponential_integral():
    # U(1, 1, z) = e^z E1(z); E1 from its own integral
    e1 = integrate.quad(lambda t: math.exp(-t) / t, 1.0, np.inf, epsabs=0, epsrel=1e-13)[0]
    assert kummer_u(1.0, 1.0, 1.0) == pytest.approx(math.e * e1, rel=1e-10)
    assert kummer_u(1.0, 1.0, 1.0) == pytest.approx(0.5963474, abs=1e-7)


def test_u_awkward_point_against_brute_force():
    val = kummer_u(6.5, -3.5, 0.8)
    assert val == pytest.approx(u_oracle(6.5, -3.5, 0.8), rel=1e-8)
    assert val == pytest.approx(float(mp.hyperu(6.5, -3.5, 0.8)), rel=1e-10)


def test_u_random_against_brute_force():
    rng = np.random.default_rng(8)
    for a, b, z in zip(rng.uniform(1, 20, 25), rng.uniform(-10, 1, 25), np.exp(rng.uniform(np.log(0.01), np.log(50), 25))):
        assert kummer_u(a, b, z) == pytest.approx(u_oracle(a, b, z), rel=1e-8)


@pytest.mark.parametrize("a, b, z", [(1e5 + 0.5, -3.5, 1e-4), (1e5 + 0.5, -3.5, 1.0), (6.5, 1.5 - 1e4, 1e-3),
                                     (6.5, 1.5 - 1e4, 1e5), (0.6, 0.9, 1e-5)])
def test_u_extreme_parameters(a, b, z):
    ref = float(mp.log(mp.hyperu(a, b, z)))
    assert log_kummer_u(a, b, z) == pytest.approx(ref, rel=1e-12, abs=1e-10)


@pytest.mark.parametrize("a", [5e-4, 0.01, 0.3])
def test_u_small_a(a):
    # the integrand's left tail is ~60/a long in ln t
    for b, z in [(-10.0, 0.01), (-3.0, 1.0), (0.9, 50.0)]:
        assert kummer_u(a, b, z) == pytest.approx(float(mp.hyperu(a, b, z)), rel=1e-12)


def test_u_random_against_mpmath():
    rng = np.random.default_rng(20)
    worst = 0.0
    for a, b, z in zip(rng.uniform(1, 20, 200), rng.uniform(-10, 1, 200), np.exp(rng.uniform(np.log(0.01), np.log(50), 200))):
        ref = mp.log(mp.hyperu(a, b, z))
        worst = max(worst, abs(log_kummer_u(a, b, z) - float(ref)))
    assert worst < 1e-10


def _recurrence_error(a, b, z):
    # U(a-1) - (2a + z - b) U(a) + a (a - b + 1) U(a+1) = 0
    um, u0, up = (kummer_u(a + d, b, z) for d in (-1.0, 0.0, 1.0))
    terms = [um, (2 * a + z - b) * u0, a * (a - b + 1) * up]
    return abs(terms[0] - terms[1] + terms[2]) / max(abs(t) for t in terms)


@settings(max_examples=300, deadline=None)
@given(st.floats(2.0, 20.0), st.floats(-10.0, 1.0), st.floats(0.01, 50.0))
def test_u_recurrence(a, b, z):
    assert _recurrence_error(a, b, z) < 1e-8


def test_u_recurrence_sign_convention():
    # the opposite-sign arrangement does not vanish
    a, b, z = 3.0, -1.0, 2.0
    um, u0, up = (kummer_u(a + d, b, z) for d in (-1.0, 0.0, 1.0))
    assert abs(um - ((b - 2 * a - z) * u0 + a * (a - b + 1) * up)) > 1e-3 * um


@pytest.mark.parametrize("a, z", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
def test_u_domain(a, z):
    with pytest.raises(DomainError):
        kummer_u(a, 0.5, z)


def test_quadrature_budget_exhaustion():
    cfg = QuadratureConfig(abs_tol=1e-15, rel_tol=1e-15, max_subdivisions=2)
    with pytest.raises(ConvergenceError):
        adaptive_quad(lambda x: math.sin(50 * x) ** 2 / (x + 1e-3), 0.0, 10.0, cfg)


def test_quadrature_config_validation():
    with pytest.raises(DomainError):
        QuadratureConfig(abs_tol=0)
    with pytest.raises(DomainError):
        QuadratureConfig(max_subdivisions=0)
