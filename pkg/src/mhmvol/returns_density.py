"""Stock-return densities as normal mixtures over the stationary variance.

A tau-day return is modeled as z = sigma sqrt(tau) * N(0, 1) with sigma^2
drawn from the steady-state variance law f.  Working in w = ln v,

    pdf(z) = int h(w) phi(z; 0, e^w tau) dw,     h(w) = e^w f(e^w),

which is the product-distribution integral over sigma = e^(w/2).  For all
three laws ln h is concave in w, and so are the log-integrands below; that
makes the integrand support easy to bracket around its mode.

For the Beta Prime law the mixture has the closed form

    psi(z) = Gamma(q + 1/2) U(q + 1/2, 3/2 - p, z^2 / (2 beta tau))
             / (sqrt(2 pi beta tau) B(p, q)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special as sps
from scipy.interpolate import CubicHermiteSpline

from . import special
from .distributions import (
    BetaPrimeParams,
    GammaParams,
    InverseGammaParams,
    Model,
    VarianceLaw,
    bp_moment,
    variance_mode,
    variance_moment,
)
from .errors import ConvergenceError, DomainError, MomentNotFiniteError
from .special import DEFAULT_QUADRATURE, QuadratureConfig

__all__ = [
    "ReturnDensitySpec",
    "log_variance_density",
    "mhm_return_pdf",
    "mhm_return_logpdf",
    "pd_return_pdf",
    "return_cdf",
    "return_sf",
    "ReturnMixture",
    "mhm_even_moment",
    "even_return_moment",
    "reduced_moment",
]

_LOG_2PI = math.log(2.0 * math.pi)
_DROP = 50.0


@dataclass(frozen=True)
class ReturnDensitySpec:
    model: Model
    dist_params: VarianceLaw
    tau: float = 1.0

    def __post_init__(self):
        model = Model.parse(self.model)
        object.__setattr__(self, "model", model)
        expected = {Model.MHM: BetaPrimeParams, Model.HM: GammaParams, Model.MM: InverseGammaParams}[model]
        if not isinstance(self.dist_params, expected):
            raise DomainError(f"{model.value} needs {expected.__name__}, got {type(self.dist_params).__name__}")
        if not self.tau > 0:
            raise DomainError(f"tau must be > 0, got {self.tau}")

    @classmethod
    def for_law(cls, law: VarianceLaw, tau: float = 1.0) -> "ReturnDensitySpec":
        model = {BetaPrimeParams: Model.MHM, GammaParams: Model.HM, InverseGammaParams: Model.MM}[type(law)]
        return cls(model, law, tau)


def log_variance_density(w, law: VarianceLaw):
    """ln h(w), the log density of w = ln v, written to stay finite for any real w."""
    w = np.asarray(w, dtype=float)
    if isinstance(law, BetaPrimeParams):
        s = w - math.log(law.beta)
        return law.p * s - (law.p + law.q) * np.logaddexp(0.0, s) - special.log_beta(law.p, law.q)
    if isinstance(law, GammaParams):
        s = w - math.log(law.scale)
        return law.shape * s - np.exp(s) - special.log_gamma(law.shape)
    if isinstance(law, InverseGammaParams):
        s = math.log(law.scale) - w
        return law.shape * s - np.exp(s) - special.log_gamma(law.shape)
    raise TypeError(f"unsupported variance law {type(law).__name__}")


def _small_v_exponent(law: VarianceLaw) -> float:
    # ln h(w) ~ exponent * w as w -> -inf (inf for IGa: super-exponential decay)
    if isinstance(law, BetaPrimeParams):
        return law.p
    if isinstance(law, GammaParams):
        return law.shape
    return math.inf


# -- adaptive quadrature over w ----------------------------------------------


def _argmax_concave(f, w0: float) -> float:
    f0 = f(w0)
    lo, hi = w0 - 1.0, w0 + 1.0
    for d in (1.0, -1.0):
        if f(w0 + d) > f0:
            prev, cur, step = w0, w0 + d, 1.0
            while True:
                step *= 2.0
                nxt = cur + d * step
                if f(nxt) <= f(cur):
                    break
                prev, cur = cur, nxt
                if step > 1e4:
                    raise ConvergenceError("log-integrand has no interior maximum")
            lo, hi = sorted((prev, nxt))
            break
    res = optimize.minimize_scalar(lambda w: -f(w), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return float(res.x)


def _level_crossing(f, w_mode: float, f_max: float, direction: float, drop: float) -> float:
    target = f_max - drop
    step = 0.5
    w = w_mode + direction * step
    while f(w) > target:
        step *= 2.0
        w = w_mode + direction * step
        if step > 1e4:
            raise ConvergenceError("integrand does not decay")
    a, b = sorted((w_mode, w))
    return optimize.brentq(lambda s: f(s) - target, a, b, xtol=1e-8)


def _integrate_log_concave(logf, w0: float, cfg: QuadratureConfig) -> float:
    """log of int exp(logf(w)) dw for concave logf, anchored near w0."""
    wm = _argmax_concave(logf, w0)
    fmax = float(logf(wm))
    lo = _level_crossing(logf, wm, fmax, -1.0, _DROP)
    hi = _level_crossing(logf, wm, fmax, +1.0, _DROP)

    def g(w):
        return math.exp(float(logf(w)) - fmax)

    total = 0.0
    for a, b in ((lo, wm), (wm, hi)):
        val, _ = special.adaptive_quad(g, a, b, cfg)
        total += val
    return fmax + math.log(total)


# -- densities ---------------------------------------------------------------


def mhm_return_logpdf(z: float, bp: BetaPrimeParams, tau: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    z = abs(float(z))
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    bt = bp.beta * tau
    norm = -0.5 * (_LOG_2PI + math.log(bt)) - special.log_beta(bp.p, bp.q)
    a, b = bp.q + 0.5, 1.5 - bp.p
    if z == 0.0:
        # U(a, b, 0) = Gamma(1 - b) / Gamma(a - b + 1), finite for b < 1
        if bp.p <= 0.5:
            return math.inf
        return norm + math.lgamma(bp.p - 0.5) + math.lgamma(a) - math.lgamma(bp.p + bp.q)
    arg = z * z / (2.0 * bt)
    return norm + math.lgamma(a) + special.log_kummer_u(a, b, arg, cfg)


def mhm_return_pdf(z, bp: BetaPrimeParams, tau: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Closed-form MHM return density; +inf at z = 0 when p <= 1/2."""
    if np.ndim(z) == 0:
        return math.exp(mhm_return_logpdf(z, bp, tau, cfg))
    return np.array([math.exp(mhm_return_logpdf(zi, bp, tau, cfg)) for zi in np.ravel(z)]).reshape(np.shape(z))


def _pd_logpdf(z: float, law: VarianceLaw, tau: float, cfg: QuadratureConfig) -> float:
    z = abs(float(z))
    if z == 0.0 and _small_v_exponent(law) <= 0.5:
        return math.inf
    lt = math.log(tau)
    z2 = z * z

    def logf(w):
        return float(log_variance_density(w, law)) - 0.5 * (_LOG_2PI + w + lt) - 0.5 * z2 * math.exp(-w - lt)

    w0 = math.log(variance_mode(law))
    if z > 0:
        w0 = max(w0, math.log(z2 / tau))
    return _integrate_log_concave(logf, w0, cfg)


def pd_return_pdf(z, spec: ReturnDensitySpec, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Product-distribution return density by adaptive quadrature (any model)."""
    if np.ndim(z) == 0:
        return math.exp(_pd_logpdf(z, spec.dist_params, spec.tau, cfg))
    return np.array([math.exp(_pd_logpdf(zi, spec.dist_params, spec.tau, cfg)) for zi in np.ravel(z)]).reshape(
        np.shape(z))


def _pd_log_sf(z: float, law: VarianceLaw, tau: float, cfg: QuadratureConfig) -> float:
    # ln P(Z > z) for z > 0
    lt = math.log(tau)

    def logf(w):
        return float(log_variance_density(w, law)) + float(sps.log_ndtr(-z * math.exp(-0.5 * (w + lt))))

    w0 = max(math.log(variance_mode(law)), math.log(z * z / tau))
    return _integrate_log_concave(logf, w0, cfg)


def return_sf(z: float, spec: ReturnDensitySpec, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    z = float(z)
    if z == 0.0:
        return 0.5
    if z < 0:
        return 1.0 - return_sf(-z, spec, cfg)
    return math.exp(_pd_log_sf(z, spec.dist_params, spec.tau, cfg))


def return_cdf(z, spec: ReturnDensitySpec, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """CDF by symmetry: F(z) = 1/2 + sign(z) int_0^|z| pdf.

    The inner integral is exchanged with the mixture integral, so each call is
    one quadrature of the normal tail probability against h(w).
    """
    if np.ndim(z) == 0:
        z = float(z)
        if z == 0.0:
            return 0.5
        tail = math.exp(_pd_log_sf(abs(z), spec.dist_params, spec.tau, cfg))
        return tail if z < 0 else 1.0 - tail
    return np.array([return_cdf(float(zi), spec, cfg) for zi in np.ravel(z)]).reshape(np.shape(z))


# -- fixed-node mixture for bulk evaluation ----------------------------------


class ReturnMixture:
    """Trapezoid-rule normal mixture on a uniform grid in w = ln v.

    ln h is smooth and decays at least exponentially in w, so the trapezoid
    rule converges geometrically; nodes are spaced at a quarter of the local
    width of h.  ``z_max`` extends the grid with coarser nodes so the tail of
    the pdf is represented up to that return.  Intended for evaluating many points at once (fitting).
    """

    def __init__(self, spec: ReturnDensitySpec, z_max: float | None = None, drop: float = 45.0,
                 max_nodes: int = 4000):
        self.spec = spec
        law, tau = spec.dist_params, spec.tau

        def logh(w):
            return float(log_variance_density(w, law))

        wm = _argmax_concave(logh, math.log(variance_mode(law)))
        hmax = logh(wm)
        lo = _level_crossing(logh, wm, hmax, -1.0, drop)
        hi = _level_crossing(logh, wm, hmax, +1.0, drop)
        eps = 1e-3
        curv = (logh(wm + eps) - 2 * hmax + logh(wm - eps)) / (eps * eps)
        width = 1.0 / math.sqrt(-curv) if curv < 0 else 1.0
        dw = min(0.1, width / 4.0)
        n = int(min(max_nodes, max(64, math.ceil((hi - lo) / dw) + 1)))
        w = np.linspace(lo, hi, n)
        if z_max is not None and z_max > 0 and math.log(z_max * z_max / tau) + 2.0 > hi:
            # h is below exp(-drop) out here; coarse nodes suffice for far-tail returns
            ext = math.log(z_max * z_max / tau) + 2.0
            w = np.concatenate((w, np.linspace(hi, ext, max(2, math.ceil((ext - hi) / 0.1) + 1))[1:]))
        # trapezoid weights; uniform spacing in the core
        span = np.empty_like(w)
        span[1:-1] = 0.5 * (w[2:] - w[:-2])
        span[0], span[-1] = 0.5 * (w[1] - w[0]), 0.5 * (w[-1] - w[-2])
        weights = np.exp(log_variance_density(w, law) - hmax) * span
        self.w = w
        self.weights = weights / weights.sum()
        self.sigma = np.exp(0.5 * (w + math.log(tau)))

    def _blocks(self, z):
        z = np.asarray(z, dtype=float)
        flat = z.ravel()
        size = max(1, 2_000_000 // len(self.w))
        for i in range(0, len(flat), size):
            yield i, flat[i:i + size]

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        out = np.empty(z.size)
        for i, blk in self._blocks(z):
            u = blk[:, None] / self.sigma[None, :]
            out[i:i + len(blk)] = (np.exp(-0.5 * u * u) / self.sigma) @ self.weights
        return (out / math.sqrt(2 * math.pi)).reshape(z.shape)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        out = np.empty(z.size)
        for i, blk in self._blocks(z):
            # sum of tails for accuracy on both sides
            tail = sps.ndtr(-np.abs(blk)[:, None] / self.sigma[None, :]) @ self.weights
            out[i:i + len(blk)] = np.where(blk < 0, tail, 1.0 - tail)
        return out.reshape(z.shape)

    def _pdf_and_slope(self, z):
        # pdf and d pdf / dz on one pass over the nodes
        u = z[:, None] / self.sigma[None, :]
        k = np.exp(-0.5 * u * u) / self.sigma
        pdf = (k @ self.weights) / math.sqrt(2 * math.pi)
        dpdf = -((k * u / self.sigma) @ self.weights) / math.sqrt(2 * math.pi)
        return pdf, dpdf

    def tabulate(self, z, n_grid: int = 2048, kind: str = "cdf"):
        """Evaluate ``kind`` ('cdf' or 'logpdf') at many points through a dense asinh grid.

        Values between grid points come from cubic Hermite interpolation using
        the exact derivatives (the pdf for the cdf, pdf'/pdf for the log-pdf).
        """
        z = np.asarray(z, dtype=float)
        if kind not in ("cdf", "logpdf"):
            raise DomainError(f"unknown kind {kind!r}")
        if z.size <= 2 * n_grid:
            # direct evaluation is cheaper than the grid
            if kind == "cdf":
                return self.cdf(z)
            with np.errstate(divide="ignore"):
                return np.log(self.pdf(z))
        scale = math.sqrt(float(variance_mode(self.spec.dist_params)) * self.spec.tau)
        zmax = float(np.max(np.abs(z))) if z.size else 1.0
        s = np.sinh(np.linspace(0.0, math.asinh(zmax / scale) + 1e-9, n_grid)) * scale
        if kind == "cdf":
            grid = np.concatenate([-s[::-1], s[1:]])
            pdf, _ = self._pdf_and_slope(grid)
            return CubicHermiteSpline(grid, self.cdf(grid), pdf)(z)
        pdf, dpdf = self._pdf_and_slope(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = np.log(pdf)
            slope = dpdf / pdf
        if not (np.all(np.isfinite(lp)) and np.all(np.isfinite(slope))):
            return np.interp(np.abs(z), s, lp)
        return CubicHermiteSpline(s, lp, slope)(np.abs(z))


# -- moments -----------------------------------------------------------------


def mhm_even_moment(n: int, bp: BetaPrimeParams, tau: float) -> float:
    """E[z^2] = p beta tau / (q-1);  E[z^4] = 3 p (p+1) beta^2 tau^2 / ((q-1)(q-2))."""
    if n not in (1, 2):
        raise DomainError(f"n must be 1 or 2, got {n}")
    if not bp.q > n:
        raise MomentNotFiniteError(f"E[z^{2 * n}] needs q > {n}, got q = {bp.q}")
    if n == 1:
        return bp.p * bp.beta * tau / (bp.q - 1.0)
    return 3.0 * bp.p * (bp.p + 1.0) * bp.beta**2 * tau**2 / ((bp.q - 1.0) * (bp.q - 2.0))


def even_return_moment(n: int, law: VarianceLaw, tau: float) -> float:
    """E[z^(2n)] = (2n-1)!! E[v^n] tau^n for any of the three laws."""
    double_fact = math.prod(range(2 * n - 1, 0, -2))
    if isinstance(law, BetaPrimeParams):
        return double_fact * bp_moment(n, law) * tau**n
    return double_fact * variance_moment(n, law) * tau**n


def reduced_moment(empirical_z2n: float, theoretical_z2n: float, n: int) -> float:
    """(empirical / theoretical)^(1/(2n)); 1 when data match the model."""
    if not (empirical_z2n > 0 and theoretical_z2n > 0):
        raise DomainError("moments must be > 0")
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    return (empirical_z2n / theoretical_z2n) ** (1.0 / (2 * n))
