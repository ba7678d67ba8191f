"""Euler-Maruyama simulation of the variance SDEs and the coupled log-return.

Variance (Ito):

    dv = -gamma (v - theta) dt + sqrt(kappa_M^2 v^2 + kappa_H^2 v) dW2

MM and HM are the kappa_H = 0 and kappa_M = 0 cases.  Detrended log return:

    ito:                     dx = sigma dW1
    stratonovich_corrected:  dx = -sigma^2/2 dt + sigma dW1

with dW2 = rho dW1 + sqrt(1 - rho^2) dZ.  Time is measured in days.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data_io import ReturnSeries
from .distributions import Model, ModelParams
from .errors import DomainError, InsufficientDataError, SimulationOverflowError

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


logger = logging.getLogger(__name__)

__all__ = ["Scheme", "ReturnDrift", "SimConfig", "SimPath", "simulate", "step_identity_check", "returns_at_lag"]

_CHUNK = 1 << 20


class Scheme(str, Enum):
    FULL_TRUNCATION = "full_truncation"
    REFLECTION = "reflection"


class ReturnDrift(str, Enum):
    ITO = "ito"
    STRATONOVICH_CORRECTED = "stratonovich_corrected"


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``burn_in`` steps are integrated and discarded.  The retained path starts at
    step ``burn_in`` (x reset to 0 there) and keeps every ``save_every``-th state.
    ``v0`` defaults to theta.  A variance above ``cap_factor * theta`` aborts the run.
    """

    dt: float = 0.01
    n_steps: int = 100_000
    burn_in: int = 0
    seed: int = 0
    scheme: Scheme = Scheme.FULL_TRUNCATION
    return_drift: ReturnDrift = ReturnDrift.ITO
    save_every: int = 1
    v0: float | None = None
    cap_factor: float = 1e12

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "return_drift", ReturnDrift(self.return_drift))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be a positive integer, got {self.n_steps}")
        if int(self.burn_in) != self.burn_in or not 0 <= self.burn_in < self.n_steps:
            raise DomainError(f"burn_in must satisfy 0 <= burn_in < n_steps, got {self.burn_in}")
        if int(self.save_every) != self.save_every or self.save_every < 1:
            raise DomainError(f"save_every must be a positive integer, got {self.save_every}")
        if self.v0 is not None and not self.v0 >= 0:
            raise DomainError(f"v0 must be >= 0, got {self.v0}")
        if not self.cap_factor > 1:
            raise DomainError(f"cap_factor must be > 1, got {self.cap_factor}")


@dataclass(frozen=True)
class SimPath:
    """Retained trajectory.  ``dt`` is the spacing between stored points."""

    v: np.ndarray
    x: np.ndarray
    dt: float
    step_dt: float = field(default=0.0)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if v.shape != x.shape or v.ndim != 1:
            raise DomainError("v and x must be 1-d arrays of equal length")
        if np.any(v < 0):
            raise DomainError("variance path must be nonnegative")
        v.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "x", x)
        if not self.step_dt:
            object.__setattr__(self, "step_dt", self.dt)

    def __len__(self):
        return len(self.v)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.v)) * self.dt


@njit(cache=True)
def _advance(v, x, dw1, dz, gamma, theta, km2, kh2, rho, dt, reflect, strat, cap, v_out, x_out):
    sq = math.sqrt(dt)
    rc = math.sqrt(1.0 - rho * rho)
    for i in range(dw1.shape[0]):
        vp = v if v > 0.0 else 0.0
        e2 = rho * dw1[i] + rc * dz[i]
        if strat:
            x += -0.5 * vp * dt
        x += math.sqrt(vp) * sq * dw1[i]
        v = v - gamma * (vp - theta) * dt + math.sqrt(km2 * vp * vp + kh2 * vp) * sq * e2
        if reflect and v < 0.0:
            v = -v
        if v > cap or v != v:
            return i, v, x
        v_out[i] = v if v > 0.0 else 0.0
        x_out[i] = x
    return -1, v, x


def _noise_coefficients(model: Model, params: ModelParams):
    if model is Model.MM:
        if params.kappa_M == 0:
            raise DomainError("MM simulation needs kappa_M > 0")
        return params.kappa_M_sq, 0.0
    if model is Model.HM:
        if params.kappa_H == 0:
            raise DomainError("HM simulation needs kappa_H > 0")
        return 0.0, params.kappa_H_sq
    return params.kappa_M_sq, params.kappa_H_sq


def simulate(model: Model | str, params: ModelParams, cfg: SimConfig) -> SimPath:
    """Integrate one trajectory.  Bit-identical for identical (model, params, cfg)."""
    model = Model.parse(model)
    km2, kh2 = _noise_coefficients(model, params)
    cap = cfg.cap_factor * params.theta
    # independent streams for dW1 and dZ; draws do not depend on chunking
    ss1, ss2 = np.random.SeedSequence(cfg.seed).spawn(2)
    rng1, rng2 = np.random.default_rng(ss1), np.random.default_rng(ss2)
    reflect = cfg.scheme is Scheme.REFLECTION
    strat = cfg.return_drift is ReturnDrift.STRATONOVICH_CORRECTED

    v = float(params.theta if cfg.v0 is None else cfg.v0)
    x = 0.0
    step = 0
    s = cfg.save_every
    n_keep = (cfg.n_steps - cfg.burn_in) // s + 1
    v_keep = np.empty(n_keep)
    x_keep = np.empty(n_keep)
    k = 0

    def run(n, v, x):
        nonlocal step
        dw1 = rng1.standard_normal(n)
        dz = rng2.standard_normal(n)
        v_out = np.empty(n)
        x_out = np.empty(n)
        bad, v, x = _advance(v, x, dw1, dz, params.gamma, params.theta, km2, kh2, params.rho, cfg.dt,
                             reflect, strat, cap, v_out, x_out)
        if bad >= 0:
            raise SimulationOverflowError(
                f"variance reached {v:.3g} (> cap {cap:.3g}) at step {step + bad + 1}; reduce dt or check parameters"
            )
        step += n
        return v, x, v_out, x_out

    while step < cfg.burn_in:
        v, x, _, _ = run(min(_CHUNK, cfg.burn_in - step), v, x)

    x = 0.0
    v_keep[0] = max(v, 0.0)
    x_keep[0] = 0.0
    k = 1
    chunk = max(s, (_CHUNK // s) * s)
    while k < n_keep:
        n = min(chunk, (n_keep - k) * s)
        v, x, v_out, x_out = run(n, v, x)
        m = n // s
        v_keep[k:k + m] = v_out[s - 1::s]
        x_keep[k:k + m] = x_out[s - 1::s]
        k += m

    logger.debug("simulated %s: %d steps, %d retained", model.value, step, n_keep)
    return SimPath(v=v_keep, x=x_keep, dt=cfg.dt * s, step_dt=cfg.dt)


def step_identity_check(path: SimPath, mu: float = 0.0, reduce: str = "max") -> float:
    """Per-step |(dS/S - d log S) - v dt / 2| along a path, reduced by max or mean.

    The price is rebuilt as S = S0 exp(x + mu t).  The leading residual is
    v dt (xi^2 - 1) / 2, so the result scales linearly with dt; a zero-variance
    path leaves only the drift term mu^2 dt^2 / 2.
    """
    if reduce not in ("max", "mean"):
        raise DomainError(f"reduce must be 'max' or 'mean', got {reduce!r}")
    if not math.isclose(path.dt, path.step_dt):
        raise DomainError("step_identity_check needs every integration step (save_every = 1)")
    if len(path) < 2:
        raise InsufficientDataError("path needs at least two points")
    y = np.diff(path.x) + mu * path.dt
    ds_over_s = np.expm1(y)
    residual = np.abs((ds_over_s - y) - 0.5 * path.v[:-1] * path.dt)
    return float(np.max(residual) if reduce == "max" else np.mean(residual))


def _steps_per_day(path: SimPath) -> int:
    spd = 1.0 / path.dt
    r = round(spd)
    if r < 1 or not math.isclose(spd, r, rel_tol=1e-9):
        raise DomainError(f"stored spacing {path.dt} does not divide one day")
    return int(r)


def returns_at_lag(path: SimPath, tau_days: int, overlapping: bool = True) -> ReturnSeries:
    """tau-day returns z_i = x(t_i + tau) - x(t_i); stride 1 day or tau days."""
    if int(tau_days) != tau_days or tau_days < 1:
        raise DomainError(f"tau_days must be a positive integer, got {tau_days}")
    spd = _steps_per_day(path)
    daily = path.x[::spd]
    if len(daily) <= tau_days:
        raise InsufficientDataError(f"path spans {len(daily) - 1} days, need more than {tau_days}")
    stride = 1 if overlapping else int(tau_days)
    z = daily[tau_days::stride] - daily[:-tau_days:stride]
    return ReturnSeries(z=z, tau=int(tau_days), mu_hat=0.0, overlapping=overlapping)
