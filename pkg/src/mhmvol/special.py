"""Special functions used by the closed-form densities.

The classical functions (log-gamma, beta, incomplete gamma/beta, erf) are thin,
validated wrappers around :mod:`scipy.special`.  The confluent hypergeometric
function of the second kind, U(a, b, z), is evaluated here from its integral
representation

    U(a, b, z) = 1/Gamma(a) * int_0^inf exp(-z t) t^(a-1) (1+t)^(b-a-1) dt,

valid for a > 0 and z > 0 with no restriction on b.  The integral is taken in
s = ln t, where the integrand is unimodal with a closed-form mode; the range is
cut where the integrand has fallen by e^-60 on either side and split at the
mode, so the peak stays resolved even when a, |b| or 1/z are large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConvergenceError, DomainError

__all__ = [
    "QuadratureConfig",
    "DEFAULT_QUADRATURE",
    "log_gamma",
    "log_beta",
    "beta_function",
    "reg_incomplete_gamma_lower",
    "reg_incomplete_gamma_upper",
    "reg_incomplete_beta",
    "erf",
    "normal_cdf",
    "normal_sf",
    "adaptive_quad",
    "kummer_u",
    "log_kummer_u",
]


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for adaptive quadrature.

    ``max_subdivisions`` is the interval budget handed to each adaptive
    integration call; exhausting it raises :class:`ConvergenceError`.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError(f"abs_tol must be > 0, got {self.abs_tol}")
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be > 0, got {self.rel_tol}")
        if int(self.max_subdivisions) != self.max_subdivisions or self.max_subdivisions < 1:
            raise DomainError(f"max_subdivisions must be a positive integer, got {self.max_subdivisions}")


DEFAULT_QUADRATURE = QuadratureConfig()
_U_DROP = 60.0


def _positive(name, x):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} must be > 0, got {x}")
    return arr


def _scalar_or_array(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def log_gamma(x):
    """ln Gamma(x) for x > 0 (scalar or array)."""
    return _scalar_or_array(special.gammaln(_positive("x", x)))


def log_beta(a, b):
    """ln B(a, b) for a, b > 0."""
    return _scalar_or_array(special.betaln(_positive("a", a), _positive("b", b)))


def beta_function(a, b):
    """B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b), evaluated in log space."""
    return _scalar_or_array(np.exp(log_beta(a, b)))


def reg_incomplete_gamma_lower(s, x):
    """Regularized lower incomplete gamma P(s, x)."""
    s = _positive("s", s)
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)):
        raise DomainError(f"x must be >= 0, got {x}")
    return _scalar_or_array(special.gammainc(s, x))


def reg_incomplete_gamma_upper(s, x):
    """Regularized upper incomplete gamma Q(s, x) = 1 - P(s, x), computed directly."""
    s = _positive("s", s)
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)):
        raise DomainError(f"x must be >= 0, got {x}")
    return _scalar_or_array(special.gammaincc(s, x))


def reg_incomplete_beta(a, b, x):
    """Regularized incomplete beta I_x(a, b) for x in [0, 1]."""
    a = _positive("a", a)
    b = _positive("b", b)
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= 0) & (x <= 1))):
        raise DomainError(f"x must lie in [0, 1], got {x}")
    return _scalar_or_array(special.betainc(a, b, x))


def erf(x):
    """Error function."""
    return _scalar_or_array(special.erf(np.asarray(x, dtype=float)))


def normal_cdf(x):
    """Standard normal CDF."""
    return _scalar_or_array(special.ndtr(np.asarray(x, dtype=float)))


def normal_sf(x):
    """Standard normal survival function, accurate in the upper tail."""
    return _scalar_or_array(special.ndtr(-np.asarray(x, dtype=float)))


def _u_log_mode(a: float, b: float, z: float) -> float:
    # in s = ln t the log-integrand -z e^s + a s + (b-a-1) ln(1+e^s) is stationary where
    #   z t^2 + (z - b + 1) t - a = 0,
    # whose single positive root is the global maximum
    B = z - b + 1.0
    disc = math.sqrt(B * B + 4.0 * z * a)
    t = 2.0 * a / (B + disc) if B >= 0 else (disc - B) / (2.0 * z)
    return math.log(t)


def _drop_point(h, s0: float, target: float, direction: float) -> float:
    step = 1.0
    while h(s0 + direction * step) > target:
        step *= 2.0
        if step > 1e6:
            raise ConvergenceError("kummer_u integrand does not decay")
    lo, hi = sorted((s0 + direction * step / 2.0 if step > 1.0 else s0, s0 + direction * step))
    return optimize.brentq(lambda s: h(s) - target, lo, hi, xtol=1e-10)


def adaptive_quad(f, lo: float, hi: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Adaptive Gauss-Kronrod integral of f over [lo, hi] under ``cfg``; returns (value, error)."""
    val, err, info = integrate.quad(
        f, lo, hi, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=cfg.max_subdivisions, full_output=1
    )[:3]
    last = info.get("last", 0)
    if last >= cfg.max_subdivisions and err > max(cfg.abs_tol, cfg.rel_tol * abs(val)):
        raise ConvergenceError(
            f"quadrature on [{lo}, {hi}] exhausted {cfg.max_subdivisions} subdivisions (error estimate {err:.3g})"
        )
    return val, err


def log_kummer_u(a: float, b: float, z: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Natural log of U(a, b, z) for a > 0, z > 0, real b."""
    a, b, z = float(a), float(b), float(z)
    if not a > 0:
        raise DomainError(f"kummer_u requires a > 0, got a={a}")
    if not z > 0:
        raise DomainError(f"kummer_u requires z > 0, got z={z}")

    c = b - a - 1.0

    def h(s):
        if s > 700.0:
            return -math.inf
        t = math.exp(s)
        return -z * t + a * s + c * (s + math.log1p(1.0 / t) if s > 0 else math.log1p(t))

    s0 = _u_log_mode(a, b, z)
    h0 = h(s0)
    lo = _drop_point(h, s0, h0 - _U_DROP, -1.0)
    hi = _drop_point(h, s0, h0 - _U_DROP, 1.0)

    def integrand(s):
        return math.exp(h(s) - h0)

    # panels at distances 1, 4, 16, ... from the mode: for small a the left tail
    # is a slow exponential ~60/a long, which one panel would under-resolve
    total = 0.0
    for end in (lo, hi):
        span = abs(end - s0)
        marks = [d for d in 4.0 ** np.arange(0, 30) if d < span] + [span]
        edges = [s0] + [s0 + math.copysign(d, end - s0) for d in marks]
        total += sum(abs(adaptive_quad(integrand, x0, x1, cfg)[0]) for x0, x1 in zip(edges, edges[1:]))
    if not total > 0 or not math.isfinite(total):
        raise ConvergenceError(f"kummer_u({a}, {b}, {z}) quadrature returned {total}")
    return h0 + math.log(total) - math.lgamma(a)


def kummer_u(a: float, b: float, z: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Confluent hypergeometric function of the second kind, U(a, b, z).

    Examples
    --------
    >>> round(kummer_u(1.0, 2.0, 2.0), 12)
    0.5
    """
    return math.exp(log_kummer_u(a, b, z, cfg))
