"""Steady-state variance laws of the three volatility models.

The variance SDE

    dv = -gamma (v - theta) dt + sqrt(kappa_M^2 v^2 + kappa_H^2 v) dW

has a Beta Prime stationary law.  Switching off one noise term recovers the
multiplicative model (kappa_H = 0, Inverse Gamma law) or the Heston model
(kappa_M = 0, Gamma law).  Parameterizations used throughout:

* MHM:  BP(v; p, q, beta) with p = 2 gamma theta / kappa_H^2,
        q = 1 + 2 gamma / kappa_M^2, beta = kappa_H^2 / kappa_M^2.
* MM:   IGa(v; alpha/theta + 1, alpha), alpha = 2 gamma theta / kappa_M^2
        (shape alpha/theta + 1, scale alpha; mean theta).
* HM:   alpha * Ga(alpha v; alpha, theta), alpha = 2 gamma theta / kappa_H^2
        (shape alpha, scale theta/alpha; mean theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

import numpy as np

from . import special
from .errors import DegenerateModelError, DomainError, MomentNotFiniteError

__all__ = [
    "Model",
    "ModelParams",
    "BetaPrimeParams",
    "GammaParams",
    "InverseGammaParams",
    "VarianceLaw",
    "bp_from_model",
    "model_from_bp",
    "ga_from_model",
    "iga_from_model",
    "steady_state",
    "stratonovich_to_ito",
    "bp_pdf",
    "bp_logpdf",
    "bp_cdf",
    "bp_sf",
    "bp_moment",
    "ga_pdf",
    "ga_logpdf",
    "ga_cdf",
    "iga_pdf",
    "iga_logpdf",
    "iga_cdf",
    "variance_logpdf",
    "variance_pdf",
    "variance_cdf",
    "variance_moment",
    "variance_mode",
    "volatility_pdf",
]


class Model(str, Enum):
    MM = "MM"
    HM = "HM"
    MHM = "MHM"

    @classmethod
    def parse(cls, value: Union[str, "Model"]) -> "Model":
        if isinstance(value, Model):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise DomainError(f"unknown model {value!r}; expected one of mm, hm, mhm") from None


@dataclass(frozen=True)
class ModelParams:
    """SDE coefficients; units are days and squared daily returns."""

    gamma: float
    theta: float
    kappa_M: float
    kappa_H: float
    rho: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"gamma must be > 0, got {self.gamma}")
        if not self.theta > 0:
            raise DomainError(f"theta must be > 0, got {self.theta}")
        if not (self.kappa_M >= 0 and self.kappa_H >= 0):
            raise DomainError("kappa_M and kappa_H must be >= 0")
        if self.kappa_M == 0 and self.kappa_H == 0:
            raise DomainError("kappa_M and kappa_H cannot both be zero")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu}")

    @classmethod
    def from_squares(cls, gamma, theta, kappa_M_sq, kappa_H_sq, rho=0.0, mu=0.0) -> "ModelParams":
        if kappa_M_sq < 0 or kappa_H_sq < 0:
            raise DomainError("squared noise amplitudes must be >= 0")
        return cls(gamma, theta, math.sqrt(kappa_M_sq), math.sqrt(kappa_H_sq), rho, mu)

    @property
    def kappa_M_sq(self) -> float:
        return self.kappa_M**2

    @property
    def kappa_H_sq(self) -> float:
        return self.kappa_H**2

    @property
    def has_finite_fourth_moment(self) -> bool:
        return 2.0 * self.gamma > self.kappa_M_sq

    def second_variance_moment(self) -> float:
        """E[v^2] = (2 gamma theta^2 + kappa_H^2 theta) / (2 gamma - kappa_M^2)."""
        if not self.has_finite_fourth_moment:
            raise MomentNotFiniteError("E[v^2] requires 2*gamma > kappa_M^2")
        g, th = self.gamma, self.theta
        return (2 * g * th**2 + self.kappa_H_sq * th) / (2 * g - self.kappa_M_sq)


@dataclass(frozen=True)
class BetaPrimeParams:
    """Shape ``p`` (small-v power law), shape ``q`` (tail) and scale ``beta``.

    Any q > 0 gives a valid density; a finite mean (and hence a mapping back to
    SDE coefficients) needs q > 1.
    """

    p: float
    q: float
    beta: float

    def __post_init__(self):
        if not self.p > 0:
            raise DomainError(f"p must be > 0, got {self.p}")
        if not self.q > 0:
            raise DomainError(f"q must be > 0, got {self.q}")
        if not self.beta > 0:
            raise DomainError(f"beta must be > 0, got {self.beta}")

    @property
    def mean(self) -> float:
        if not self.q > 1:
            raise MomentNotFiniteError(f"mean is infinite for q = {self.q}")
        return self.p * self.beta / (self.q - 1.0)


@dataclass(frozen=True)
class GammaParams:
    """Heston steady state: shape ``alpha``, mean ``theta``."""

    alpha: float
    theta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not self.theta > 0:
            raise DomainError(f"theta must be > 0, got {self.theta}")

    @property
    def shape(self) -> float:
        return self.alpha

    @property
    def scale(self) -> float:
        return self.theta / self.alpha


@dataclass(frozen=True)
class InverseGammaParams:
    """Multiplicative-model steady state: shape ``alpha/theta + 1``, scale ``alpha``."""

    alpha: float
    theta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not self.theta > 0:
            raise DomainError(f"theta must be > 0, got {self.theta}")

    @property
    def shape(self) -> float:
        return self.alpha / self.theta + 1.0

    @property
    def scale(self) -> float:
        return self.alpha


VarianceLaw = Union[BetaPrimeParams, GammaParams, InverseGammaParams]


# -- parameter maps ----------------------------------------------------------


def bp_from_model(params: ModelParams) -> BetaPrimeParams:
    if params.kappa_M == 0 or params.kappa_H == 0:
        raise DegenerateModelError(
            "Beta Prime map needs kappa_M > 0 and kappa_H > 0; use ga_from_model / iga_from_model for the limits"
        )
    km2, kh2 = params.kappa_M_sq, params.kappa_H_sq
    return BetaPrimeParams(
        p=2.0 * params.gamma * params.theta / kh2,
        q=1.0 + 2.0 * params.gamma / km2,
        beta=kh2 / km2,
    )


def model_from_bp(bp: BetaPrimeParams, gamma: float, rho: float = 0.0, mu: float = 0.0) -> ModelParams:
    if not bp.q > 1:
        raise DomainError(f"q must be > 1, got {bp.q}")
    km2 = 2.0 * gamma / (bp.q - 1.0)
    return ModelParams.from_squares(
        gamma=gamma,
        theta=bp.p * bp.beta / (bp.q - 1.0),
        kappa_M_sq=km2,
        kappa_H_sq=bp.beta * km2,
        rho=rho,
        mu=mu,
    )


def ga_from_model(params: ModelParams) -> GammaParams:
    if params.kappa_H == 0:
        raise DegenerateModelError("Heston limit needs kappa_H > 0")
    return GammaParams(alpha=2.0 * params.gamma * params.theta / params.kappa_H_sq, theta=params.theta)


def iga_from_model(params: ModelParams) -> InverseGammaParams:
    if params.kappa_M == 0:
        raise DegenerateModelError("multiplicative limit needs kappa_M > 0")
    return InverseGammaParams(alpha=2.0 * params.gamma * params.theta / params.kappa_M_sq, theta=params.theta)


def steady_state(model: Model | str, params: ModelParams) -> VarianceLaw:
    """Stationary variance law of ``model`` driven by ``params``.

    For MM only kappa_M is used and for HM only kappa_H.
    """
    model = Model.parse(model)
    if model is Model.MHM:
        return bp_from_model(params)
    if model is Model.HM:
        return ga_from_model(params)
    return iga_from_model(params)


def stratonovich_to_ito(params: ModelParams) -> ModelParams:
    """Ito coefficients equivalent to reading the variance SDE in the Stratonovich sense.

    The noise-induced drift 0.5 * b b' = 0.5 kappa_M^2 v + 0.25 kappa_H^2 only
    renormalizes the mean-reversion constants:

        gamma' = gamma - kappa_M^2 / 2
        theta' = (gamma theta + kappa_H^2 / 4) / gamma'

    In the HM limit only theta moves; in the MM limit only gamma (gamma*theta is kept).
    """
    g_new = params.gamma - 0.5 * params.kappa_M_sq
    if not g_new > 0:
        raise DomainError("Stratonovich reading is not mean reverting: gamma <= kappa_M^2 / 2")
    th_new = (params.gamma * params.theta + 0.25 * params.kappa_H_sq) / g_new
    return ModelParams(g_new, th_new, params.kappa_M, params.kappa_H, params.rho, params.mu)


# -- Beta Prime --------------------------------------------------------------


def _as_v(v):
    arr = np.asarray(v, dtype=float)
    if np.any(~(arr >= 0)):
        raise DomainError("variance argument must be >= 0")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def bp_logpdf(v, bp: BetaPrimeParams):
    v = _as_v(v)
    x = v / bp.beta
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (bp.p - 1.0) * np.log(x) - (bp.p + bp.q) * np.log1p(x) - math.log(bp.beta) - special.log_beta(bp.p, bp.q)
    if bp.p == 1.0:
        out = np.where(x == 0, -math.log(bp.beta) - special.log_beta(bp.p, bp.q), out)
    return _out(out)


def bp_pdf(v, bp: BetaPrimeParams):
    """Beta Prime density.

    At v = 0 the value is 0 for p > 1, q/beta for p = 1 and +inf for p < 1.
    """
    return _out(np.exp(bp_logpdf(v, bp)))


def bp_cdf(v, bp: BetaPrimeParams):
    v = _as_v(v)
    with np.errstate(invalid="ignore"):
        x = np.where(np.isinf(v), 1.0, v / (v + bp.beta))
    return _out(special.reg_incomplete_beta(bp.p, bp.q, x))


def bp_sf(v, bp: BetaPrimeParams):
    v = _as_v(v)
    with np.errstate(invalid="ignore", divide="ignore"):
        y = np.where(np.isinf(v), 0.0, bp.beta / (v + bp.beta))
    return _out(special.reg_incomplete_beta(bp.q, bp.p, y))


def bp_moment(n: int, bp: BetaPrimeParams) -> float:
    """E[v^n] = beta^n prod_{k<n} (p + k) / (q - 1 - k), finite for n < q."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not n < bp.q:
        raise MomentNotFiniteError(f"E[v^{n}] is infinite for q = {bp.q} (needs n < q)")
    out = 1.0
    for k in range(int(n)):
        out *= bp.beta * (bp.p + k) / (bp.q - 1.0 - k)
    return out


# -- Gamma / Inverse Gamma ---------------------------------------------------


def ga_logpdf(v, ga: GammaParams):
    v = _as_v(v)
    k, s = ga.shape, ga.scale
    with np.errstate(divide="ignore"):
        out = (k - 1.0) * np.log(v) - v / s - special.log_gamma(k) - k * math.log(s)
    if k == 1.0:
        out = np.where(v == 0, -math.log(s), out)
    return _out(out)


def ga_pdf(v, ga: GammaParams):
    return _out(np.exp(ga_logpdf(v, ga)))


def ga_cdf(v, ga: GammaParams):
    v = _as_v(v)
    return special.reg_incomplete_gamma_lower(ga.shape, v / ga.scale)


def iga_logpdf(v, iga: InverseGammaParams):
    v = _as_v(v)
    a, b = iga.shape, iga.scale
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * math.log(b) - special.log_gamma(a) - (a + 1.0) * np.log(v) - b / v
    out = np.where(v == 0, -np.inf, out)
    return _out(out)


def iga_pdf(v, iga: InverseGammaParams):
    return _out(np.exp(iga_logpdf(v, iga)))


def iga_cdf(v, iga: InverseGammaParams):
    v = _as_v(v)
    y = np.divide(iga.scale, v, out=np.full(v.shape, np.inf), where=v > 0)
    return special.reg_incomplete_gamma_upper(iga.shape, y)


# -- dispatch over the three laws -------------------------------------------


def variance_logpdf(v, law: VarianceLaw):
    if isinstance(law, BetaPrimeParams):
        return bp_logpdf(v, law)
    if isinstance(law, GammaParams):
        return ga_logpdf(v, law)
    if isinstance(law, InverseGammaParams):
        return iga_logpdf(v, law)
    raise TypeError(f"unsupported variance law {type(law).__name__}")


def variance_pdf(v, law: VarianceLaw):
    return _out(np.exp(variance_logpdf(v, law)))


def variance_cdf(v, law: VarianceLaw):
    if isinstance(law, BetaPrimeParams):
        return bp_cdf(v, law)
    if isinstance(law, GammaParams):
        return ga_cdf(v, law)
    if isinstance(law, InverseGammaParams):
        return iga_cdf(v, law)
    raise TypeError(f"unsupported variance law {type(law).__name__}")


def variance_moment(n: int, law: VarianceLaw) -> float:
    """E[v^n] for any of the three laws."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    n = int(n)
    if isinstance(law, BetaPrimeParams):
        return bp_moment(n, law)
    if isinstance(law, GammaParams):
        return math.exp(n * math.log(law.scale) + special.log_gamma(law.shape + n) - special.log_gamma(law.shape))
    if isinstance(law, InverseGammaParams):
        if not n < law.shape:
            raise MomentNotFiniteError(f"E[v^{n}] is infinite for IGa shape {law.shape}")
        out = 1.0
        for k in range(1, n + 1):
            out *= law.scale / (law.shape - k)
        return out
    raise TypeError(f"unsupported variance law {type(law).__name__}")


def variance_mode(law: VarianceLaw) -> float:
    """Mode of the density of ln v (i.e. of v * f(v)); used to anchor quadratures."""
    if isinstance(law, BetaPrimeParams):
        return law.beta * law.p / law.q
    if isinstance(law, GammaParams):
        return law.theta
    if isinstance(law, InverseGammaParams):
        return law.scale / law.shape
    raise TypeError(f"unsupported variance law {type(law).__name__}")


def volatility_pdf(sigma, variance_pdf: Callable[[np.ndarray], np.ndarray]):
    """Density of sigma = sqrt(v) given the density of v: 2 sigma f(sigma^2)."""
    sigma = np.asarray(sigma, dtype=float)
    return _out(2.0 * sigma * np.asarray(variance_pdf(sigma * sigma), dtype=float))
