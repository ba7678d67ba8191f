"""Realized variance and the time dependence of its variance.

For a stationary variance with exponential autocorrelation exp(-gamma tau)

    var[(1/T) int_0^T v_t dt] = var[v] f(gamma T),
    f(x) = 2 (x - 1 + exp(-x)) / x^2,

which is flat (f = 1) for gamma T << 1 and decays as 2 / (gamma T) for
gamma T >> 1.

Realized variance from daily returns, RV_T = (1/T) sum z_t^2 / dt, also carries
the Gaussian sampling noise of z_t^2: var[RV_T] = var[v] f(gamma T) + 2 E[v^2] / T
(up to O(dt) corrections).  :func:`rv_variance_ratio_curve` removes that term by
default so the curve can be compared with f directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .calibration import empirical_variance_moments
from .data_io import ReturnSeries, Table
from .errors import DomainError, InsufficientDataError

__all__ = [
    "f_gamma_t",
    "RVSeries",
    "RatioCurve",
    "rv_series",
    "rv_series_from_path",
    "rv_variance_ratio_curve",
    "loglog_slopes",
]

_SERIES_CUTOFF = 1e-3
# f(x) = 2 sum_k (-x)^k / (k + 2)!
_SERIES = [2.0 * (-1) ** k / math.factorial(k + 2) for k in range(7)]


def f_gamma_t(gT):
    """f(gamma T) in (0, 1], elementwise for arrays."""
    x = np.asarray(gT, dtype=float)
    if np.any(~(x >= 0)):
        raise DomainError(f"gamma*T must be >= 0, got {gT}")
    small = x < _SERIES_CUTOFF
    out = np.empty_like(x)
    xs = x[small]
    out[small] = np.polynomial.polynomial.polyval(xs, _SERIES)
    xl = x[~small]
    out[~small] = 2.0 * (np.expm1(-xl) + xl) / (xl * xl)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RVSeries:
    window_T: int
    rv_values: np.ndarray
    overlapping: bool = True

    def __post_init__(self):
        if int(self.window_T) != self.window_T or self.window_T < 1:
            raise DomainError(f"window_T must be a positive integer, got {self.window_T}")
        rv = np.asarray(self.rv_values, dtype=float)
        if rv.size == 0:
            raise DomainError("rv_values must be nonempty")
        if np.any(rv < 0):
            raise DomainError("realized variance must be nonnegative")
        rv.flags.writeable = False
        object.__setattr__(self, "rv_values", rv)

    def variance(self) -> float:
        return float(np.var(self.rv_values))


def _window_means(y: np.ndarray, T: int, overlapping: bool) -> np.ndarray:
    c = np.concatenate(([0.0], np.cumsum(y)))
    stride = 1 if overlapping else T
    starts = np.arange(0, len(y) - T + 1, stride)
    return (c[starts + T] - c[starts]) / T


def _check_T(T, n):
    if int(T) != T or T < 1:
        raise DomainError(f"T must be a positive integer, got {T}")
    if n < 2 * T:
        raise InsufficientDataError(f"{n} daily values are too few for windows of {T} days (need {2 * T})")
    return int(T)


def rv_series(z1: ReturnSeries, T: int, overlapping: bool = True) -> RVSeries:
    """Per-window RV = (1/T) sum z_t^2 / dt over windows of T daily returns."""
    if z1.tau != 1:
        raise DomainError(f"rv_series needs daily returns (tau = 1), got tau = {z1.tau}")
    T = _check_T(T, z1.n)
    y = np.asarray(z1.z, dtype=float) ** 2 / z1.tau
    return RVSeries(T, _window_means(y, T, overlapping), overlapping)


def rv_series_from_path(path, T: int, overlapping: bool = True) -> RVSeries:
    """Window averages of the latent variance of a simulated path (no return noise)."""
    spd = 1.0 / path.dt
    steps = int(round(spd))
    if steps < 1 or not math.isclose(spd, steps, rel_tol=1e-9):
        raise DomainError(f"stored spacing {path.dt} does not divide one day")
    n_days = (len(path.v) - 1) // steps
    # left-point rule, one value per day
    daily = np.asarray(path.v[:n_days * steps]).reshape(n_days, steps).mean(axis=1)
    T = _check_T(T, n_days)
    return RVSeries(T, _window_means(daily, T, overlapping), overlapping)


@dataclass(frozen=True)
class RatioCurve:
    T: np.ndarray
    ratio: np.ndarray
    var_v_hat: float
    ev2_hat: float
    contact_corrected: bool

    def __len__(self):
        return len(self.T)

    def __iter__(self):
        return iter(zip(self.T.tolist(), self.ratio.tolist()))

    def table(self, gamma: float | None = None) -> Table:
        """``T, ratio, f_gamma_T`` (the last column is NaN without gamma)."""
        f = f_gamma_t(gamma * self.T) if gamma is not None else np.full(len(self.T), np.nan)
        return Table.from_columns(T=self.T, ratio=self.ratio, f_gamma_T=f)


def rv_variance_ratio_curve(z1: ReturnSeries, T_grid: Iterable[int], overlapping: bool = True,
                            contact_correction: bool = True) -> RatioCurve:
    """var(RV_T) / var[v] over ``T_grid``, var[v] estimated from mean(z^4).

    With ``contact_correction`` the noise term 2 E[v^2] / T is subtracted from
    var(RV_T) first; the T = 1 ratio is then exactly 1 by construction.
    """
    mom = empirical_variance_moments(z1)
    Ts = np.array(sorted({int(t) for t in T_grid}), dtype=int)
    if Ts.size == 0:
        raise DomainError("T_grid is empty")
    ratios = np.empty(len(Ts))
    for k, T in enumerate(Ts):
        var_rv = rv_series(z1, int(T), overlapping).variance()
        if contact_correction:
            var_rv -= 2.0 * mom.ev2_hat / T
        ratios[k] = var_rv / mom.var_v_hat
    return RatioCurve(Ts.astype(float), ratios, mom.var_v_hat, mom.ev2_hat, contact_correction)


def _ols_slope(T, r) -> float:
    if np.any(~(r > 0)):
        raise DomainError("ratio values must be positive for a log-log fit")
    return float(np.polyfit(np.log(T), np.log(r), 1)[0])


def loglog_slopes(curve: RatioCurve | Sequence[tuple[float, float]], split_T: float) -> tuple[float, float]:
    """OLS slopes of ln(ratio) against ln(T) below and above ``split_T``.

    The natural split is the crossover T = 1 / gamma.
    """
    if not split_T > 0:
        raise DomainError(f"split_T must be > 0, got {split_T}")
    pts = np.array(list(curve), dtype=float).reshape(-1, 2)
    T, r = pts[:, 0], pts[:, 1]
    lo, hi = T < split_T, T > split_T
    if lo.sum() < 3 or hi.sum() < 3:
        raise InsufficientDataError(
            f"need >= 3 points on each side of split_T={split_T}, got {int(lo.sum())} and {int(hi.sum())}"
        )
    return _ols_slope(T[lo], r[lo]), _ols_slope(T[hi], r[hi])
