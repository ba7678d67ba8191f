"""Fitting variance laws to return series and estimating the relaxation rate.

* :func:`fit_returns` fits MM / HM / MHM return densities by minimizing the
  Kolmogorov-Smirnov distance (default) or the negative log-likelihood.
* :func:`empirical_variance_moments` turns daily returns into estimates of
  theta, E[v^2] and var[v] using E[z^4] = 3 E[v^2] dt^2.
* :func:`fit_gamma_from_autocov` fits E[v_t v_{t+tau}] = theta^2 + var[v] exp(-gamma tau)
  to the lagged products of squared returns (lags >= 1).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .data_io import ReturnSeries
from .distributions import (
    BetaPrimeParams,
    GammaParams,
    InverseGammaParams,
    Model,
    VarianceLaw,
)
from .errors import DegenerateDataError, DomainError, InsufficientDataError
from .returns_density import ReturnDensitySpec, ReturnMixture

logger = logging.getLogger(__name__)

__all__ = [
    "FitResult",
    "GammaFit",
    "VarianceMoments",
    "ks_statistic",
    "fit_returns",
    "empirical_variance_moments",
    "autocov_curve",
    "fit_autocov_curve",
    "fit_gamma_from_autocov",
    "kappas_from_fit",
]

MIN_FIT_SAMPLES = 50
RECOMMENDED_FIT_SAMPLES = 500


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """D_n = max_i max(i/n - F(x_i), F(x_i) - (i-1)/n) for ascending samples."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n == 0:
        raise InsufficientDataError("KS statistic of an empty sample")
    if n > 1 and np.any(np.diff(x) < 0):
        raise DomainError("samples must be sorted ascending")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def kappas_from_fit(bp: BetaPrimeParams, gamma: float) -> tuple[float, float]:
    """(kappa_M^2, kappa_H^2) = (2 gamma / (q - 1), beta kappa_M^2)."""
    if not bp.q > 1:
        raise DomainError(f"q must be > 1, got {bp.q}")
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    km2 = 2.0 * gamma / (bp.q - 1.0)
    return km2, bp.beta * km2


@dataclass(frozen=True)
class FitResult:
    model: Model
    params: VarianceLaw
    ks: float
    n: int
    tau: float
    converged: bool
    objective_evals: int
    method: str = "ks"
    gamma: float | None = None
    initial_objective: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.ks <= 1.0:
            raise DomainError(f"ks must lie in [0, 1], got {self.ks}")
        if self.n < MIN_FIT_SAMPLES:
            raise DomainError(f"n must be >= {MIN_FIT_SAMPLES}")

    @property
    def theta(self) -> float:
        law = self.params
        if isinstance(law, BetaPrimeParams):
            return law.mean
        return law.theta

    def kappas(self) -> tuple[float | None, float | None]:
        if self.gamma is None:
            return None, None
        law = self.params
        if isinstance(law, BetaPrimeParams):
            return kappas_from_fit(law, self.gamma)
        k2 = 2.0 * self.gamma * law.theta / law.alpha
        return (k2, None) if isinstance(law, InverseGammaParams) else (None, k2)

    def with_gamma(self, gamma: float) -> "FitResult":
        return FitResult(self.model, self.params, self.ks, self.n, self.tau, self.converged,
                         self.objective_evals, self.method, gamma, self.initial_objective)

    def to_dict(self) -> dict:
        """Flat record; fields that do not apply to the model are None."""
        law = self.params
        is_bp = isinstance(law, BetaPrimeParams)
        km2, kh2 = self.kappas()
        return {
            "model": self.model.value,
            "p": law.p if is_bp else None,
            "q": law.q if is_bp else None,
            "beta": law.beta if is_bp else None,
            "alpha": None if is_bp else law.alpha,
            "theta": self.theta,
            "gamma": self.gamma,
            "kappa_M_sq": km2,
            "kappa_H_sq": kh2,
            "ks": self.ks,
            "n": self.n,
            "tau": self.tau,
            "converged": self.converged,
        }


# -- parameterization --------------------------------------------------------


def _law_from_x(model: Model, x: np.ndarray) -> VarianceLaw:
    e = [float(v) for v in np.exp(x)]
    if model is Model.MHM:
        return BetaPrimeParams(p=e[0], q=1.0 + e[1], beta=e[2])
    if model is Model.MM:
        return InverseGammaParams(alpha=e[0], theta=e[1])
    return GammaParams(alpha=1.0 + e[0], theta=e[1])


def _initial_x(model: Model, z: ReturnSeries) -> np.ndarray:
    theta0 = float(np.mean(z.z**2)) / z.tau
    if model is Model.MHM:
        return np.log([2.0, 3.0 - 1.0, theta0])
    if model is Model.MM:
        return np.log([2.0 * theta0, theta0])  # IGa shape alpha/theta + 1 = 3
    return np.log([2.0 - 1.0, theta0])


# p and q - 1 beyond this are numerically the nested limits (relative density
# change ~1e-4), and the likelihood is flat along them; bounding keeps the
# optimizer from walking that valley with ever narrower variance laws.
_SHAPE_CAP = 1e4
_MHM_BOUNDS = optimize.Bounds([math.log(1e-3), math.log(1e-3), -np.inf],
                              [math.log(_SHAPE_CAP), math.log(_SHAPE_CAP), np.inf])


def _bounds(model: Model):
    return _MHM_BOUNDS if model is Model.MHM else None


_JITTER = np.array([[0.0, 0.0, 0.0], [0.5, -0.5, 0.3], [-0.5, 0.5, -0.3]])


class _Tracked:
    """Objective wrapper remembering the best point evaluated."""

    def __init__(self, fun):
        self.fun = fun
        self.evals = 0
        self.best_x = None
        self.best_f = math.inf

    def __call__(self, x):
        self.evals += 1
        f = self.fun(x)
        if f < self.best_f:
            self.best_f, self.best_x = f, np.array(x, dtype=float)
        return f


def _nelder_mead(fun, x0, fatol, bounds=None, max_restarts=10):
    # restart from the incumbent with a fresh simplex until no further decrease
    opts = {"xatol": 1e-4, "fatol": fatol, "maxfev": 2000}
    res = optimize.minimize(fun, x0, method="Nelder-Mead", bounds=bounds, options=opts)
    for _ in range(max_restarts):
        nxt = optimize.minimize(fun, res.x, method="Nelder-Mead", bounds=bounds, options=opts)
        if not nxt.fun < res.fun - fatol:
            return nxt if nxt.fun <= res.fun else res, bool(nxt.success)
        res = nxt
    return res, False


def fit_returns(z: ReturnSeries, model: Model | str = Model.MHM, method: str = "ks",
                gamma: float | None = None) -> FitResult:
    """Fit the stationary variance law of ``model`` to tau-day returns.

    The likelihood is minimized first from three jittered starts around the
    moment initializer (theta from mean(z^2) = theta tau, p = 2, q = 3, beta =
    theta); with ``method="ks"`` the KS distance is then minimized from the
    likelihood optimum.  Both stages use Nelder-Mead in log coordinates,
    restarted until the objective stops improving.  For MHM, p and q - 1 are
    capped at 1e4, where the law is indistinguishable from its MM or HM
    limit.  The returned point is the best point seen for the final objective.
    """
    model = Model.parse(model)
    if method not in ("ks", "mle"):
        raise DomainError(f"method must be 'ks' or 'mle', got {method!r}")
    n = z.n
    if n < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"fit needs at least {MIN_FIT_SAMPLES} returns, got {n}")
    if n < RECOMMENDED_FIT_SAMPLES:
        warnings.warn(f"fitting {n} returns; at least {RECOMMENDED_FIT_SAMPLES} recommended", stacklevel=2)
    zs = np.sort(np.asarray(z.z, dtype=float))
    if not np.any(zs != 0):
        raise DegenerateDataError("all returns are zero")
    zmax = float(np.max(np.abs(zs)))
    i = np.arange(1, n + 1)

    def mixture(x):
        return ReturnMixture(ReturnDensitySpec(model, _law_from_x(model, x), z.tau), z_max=zmax)

    def ks_obj(x):
        try:
            F = mixture(x).tabulate(zs, kind="cdf")
        except (DomainError, ArithmeticError, ValueError, RuntimeError):
            return 1.0
        return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))

    def nll_obj(x):
        try:
            lp = mixture(x).tabulate(zs, kind="logpdf")
        except (DomainError, ArithmeticError, ValueError, RuntimeError):
            return math.inf
        val = -float(np.mean(lp))
        return val if math.isfinite(val) else 1e300

    x_init = _initial_x(model, z)
    dim = len(x_init)
    nll = _Tracked(nll_obj)
    best = None
    converged = False
    for jitter in _JITTER[:, :dim]:
        res, ok = _nelder_mead(nll, x_init + jitter, fatol=1e-9, bounds=_bounds(model))
        if best is None or res.fun < best.fun:
            best, converged = res, ok
    evals = nll.evals
    final_x = nll.best_x

    if method == "ks":
        ks = _Tracked(ks_obj)
        initial = ks(x_init)
        res, converged = _nelder_mead(ks, final_x, fatol=1e-7, bounds=_bounds(model))
        evals += ks.evals
        final_x = ks.best_x
        ks_value = ks.best_f
    else:
        initial = nll_obj(x_init)
        ks_value = ks_obj(final_x)

    law = _law_from_x(model, final_x)
    logger.info("fit %s tau=%s n=%d: %s ks=%.5f evals=%d", model.value, z.tau, n, law, ks_value, evals)
    return FitResult(model=model, params=law, ks=min(max(ks_value, 0.0), 1.0), n=n, tau=z.tau,
                     converged=bool(converged), objective_evals=evals, method=method, gamma=gamma,
                     initial_objective=initial)


# -- variance moments and relaxation rate ------------------------------------


class VarianceMoments(NamedTuple):
    theta_hat: float
    ev2_hat: float
    var_v_hat: float


def empirical_variance_moments(z1: ReturnSeries, allow_negative: bool = False) -> VarianceMoments:
    """theta = mean(z^2)/dt, E[v^2] = mean(z^4)/(3 dt^2), var[v] = E[v^2] - theta^2.

    dt is the return horizon ``z1.tau``.  A negative var[v] estimate raises
    unless ``allow_negative`` (it is legitimately near zero, and can fall
    below, for constant-variance data).
    """
    if z1.n < 100:
        raise InsufficientDataError(f"need at least 100 returns, got {z1.n}")
    dt = float(z1.tau)
    z2 = np.asarray(z1.z, dtype=float) ** 2
    theta = float(np.mean(z2)) / dt
    if not theta > 0:
        raise DegenerateDataError("returns are all zero")
    ev2 = float(np.mean(z2 * z2)) / (3.0 * dt * dt)
    var_v = ev2 - theta * theta
    if var_v <= 0 and not allow_negative:
        raise DegenerateDataError(f"estimated var[v] = {var_v:.3g} is not positive")
    return VarianceMoments(theta, ev2, var_v)


@dataclass(frozen=True)
class GammaFit:
    gamma: float
    theta_hat: float
    var_v_hat: float
    lag_range: tuple[int, int]
    sse: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be > 0")
        if self.lag_range[0] < 1:
            raise DomainError("lag_range must start at >= 1")


def autocov_curve(z1: ReturnSeries, lag_range: tuple[int, int] = (1, 100)) -> tuple[np.ndarray, np.ndarray]:
    """Lags and estimates of E[v_t v_{t+lag}] = mean(z_t^2 z_{t+lag}^2) / dt^2."""
    lo, hi = int(lag_range[0]), int(lag_range[1])
    if lo < 1 or hi < lo:
        raise DomainError(f"lag_range must satisfy 1 <= min <= max, got {lag_range}")
    if z1.n < 10 * hi:
        raise InsufficientDataError(f"{z1.n} returns are too few for lags up to {hi}")
    dt = float(z1.tau)
    y = np.asarray(z1.z, dtype=float) ** 2 / dt
    lags = np.arange(lo, hi + 1)
    c = np.array([np.dot(y[:-k], y[k:]) / (len(y) - k) for k in lags])
    return lags, c


def _profile(lags, c, log_g):
    # best A + B exp(-g lag) for fixed g: linear least squares
    basis = np.column_stack([np.ones_like(lags, dtype=float), np.exp(-math.exp(log_g) * lags)])
    coef, *_ = np.linalg.lstsq(basis, c, rcond=None)
    r = basis @ coef - c
    return float(r @ r), coef


def fit_autocov_curve(lags: Sequence[float], c: Sequence[float]) -> GammaFit:
    """Least-squares fit of c(lag) = theta^2 + var exp(-gamma lag)."""
    lags = np.asarray(lags, dtype=float)
    c = np.asarray(c, dtype=float)
    if len(lags) < 3:
        raise InsufficientDataError("need at least three lags")
    scale = float(np.max(np.abs(c)))
    cs = c / scale
    grid = np.linspace(math.log(1e-4), math.log(10.0), 200)
    sse = [_profile(lags, cs, g)[0] for g in grid]
    k = int(np.argmin(sse))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    r = optimize.minimize_scalar(lambda g: _profile(lags, cs, g)[0], bounds=(lo, hi), method="bounded",
                                 options={"xatol": 1e-12})
    _, (A, B) = _profile(lags, cs, r.x)
    if not (B > 0 and A > 0):
        raise DegenerateDataError("autocovariance of squared returns shows no positive decaying component")

    def resid(p):
        return p[0] + p[1] * np.exp(-math.exp(p[2]) * lags) - cs

    ls = optimize.least_squares(resid, [A, B, r.x], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    A, B, log_g = ls.x
    if not (B > 0 and A > 0):
        raise DegenerateDataError("autocovariance fit produced a non-positive component")
    res = resid(ls.x)
    return GammaFit(gamma=math.exp(log_g), theta_hat=math.sqrt(A * scale), var_v_hat=B * scale,
                    lag_range=(int(lags[0]), int(lags[-1])), sse=float(res @ res) * scale * scale)


def fit_gamma_from_autocov(z1: ReturnSeries, lag_range: tuple[int, int] = (1, 100)) -> GammaFit:
    """Relaxation rate from the decay of the squared-return autocorrelation.

    Lag 0 is excluded: there the product picks up the extra 2 E[v^2] dt^2
    contact term from the Gaussian fourth moment.
    """
    lags, c = autocov_curve(z1, lag_range)
    if np.all(c - np.mean(z1.z**2 / z1.tau) ** 2 <= 0):
        raise DegenerateDataError("no positive autocovariance of squared returns at any lag")
    return fit_autocov_curve(lags, c)
