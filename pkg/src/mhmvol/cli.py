"""Command-line interface: ``mhmvol {simulate,fit,density,moments,rv}``.

Settings come from built-in defaults, then an optional TOML file given by
``--config`` (top-level keys apply to every subcommand, a ``[simulate]`` style
table to one), then command-line flags.  Keys use the flag names with dashes
replaced by underscores.

Every run writes ``manifest.json`` next to its outputs with the resolved
settings and a SHA-256 of each artifact.

Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy.integrate import trapezoid

from . import __version__
from .calibration import fit_gamma_from_autocov, fit_returns
from .data_io import PriceSeries, Table, atomic_write_text, load_prices, make_returns, to_json, write_path_csv
from .data_io import write_prices, write_results
from .distributions import (
    BetaPrimeParams,
    GammaParams,
    InverseGammaParams,
    Model,
    ModelParams,
    model_from_bp,
    steady_state,
    variance_moment,
)
from .errors import (
    DataFormatError,
    DomainError,
    InsufficientDataError,
    MHMError,
    SimulationOverflowError,
)
from .realized import f_gamma_t, loglog_slopes, rv_variance_ratio_curve
from .returns_density import ReturnDensitySpec, even_return_moment, mhm_return_pdf, pd_return_pdf, reduced_moment
from .returns_density import return_sf
from .sde import SimConfig, simulate

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger("mhmvol")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Invalid flag or config value; maps to exit code 2."""


# -- option tables -----------------------------------------------------------
# name -> (type, default, help)

_COMMON = {
    "input": (str, None, "input prices CSV (date,close)"),
    "output_dir": (str, ".", "directory for outputs and manifest.json"),
    "seed": (int, 0, "random seed"),
    "format": (str, None, "main output format: json or csv"),
}

_MODEL = {
    "model": (str, None, "mm, hm or mhm"),
    "p": (float, None, "MHM steady-state shape p"),
    "q": (float, None, "MHM steady-state shape q (> 1)"),
    "beta": (float, None, "MHM steady-state scale beta"),
    "alpha": (float, None, "MM/HM steady-state parameter alpha"),
    "gamma": (float, None, "relaxation rate per day"),
    "theta": (float, None, "mean variance"),
    "kappa_m_sq": (float, None, "multiplicative noise kappa_M^2"),
    "kappa_h_sq": (float, None, "additive noise kappa_H^2"),
    "tau": (int, 1, "return horizon in days"),
}

_OPTIONS: dict[str, dict[str, tuple]] = {
    "simulate": {
        **_MODEL,
        "rho": (float, 0.0, "correlation of return and variance noise"),
        "mu": (float, 0.0, "log-price drift per day (for --emit-prices)"),
        "dt": (float, 0.01, "integration step in days"),
        "steps": (int, 100_000, "number of integration steps"),
        "burn_in": (int, 0, "steps discarded before recording"),
        "save_every": (int, 1, "keep every n-th state"),
        "scheme": (str, "full_truncation", "full_truncation or reflection"),
        "return_drift": (str, "ito", "ito or stratonovich_corrected"),
        "v0": (float, None, "initial variance (default theta)"),
        "emit_prices": (bool, False, "also write daily prices.csv"),
        "s0": (float, 100.0, "initial price for --emit-prices"),
        "start_date": (str, "2000-01-01", "first date for --emit-prices"),
    },
    "fit": {
        "model": (str, "mhm", "comma list of models, e.g. mhm,mm,hm"),
        "tau": (str, "1", "comma list of horizons in days"),
        "method": (str, "ks", "ks or mle"),
        "overlapping": (bool, True, "overlapping tau-day returns"),
        "detrend": (bool, True, "remove the global drift"),
        "gamma": (float, None, "relaxation rate; estimated from the data when omitted"),
        "lag_max": (int, 100, "largest lag for the gamma fit"),
    },
    "density": {
        **_MODEL,
        "z_max": (float, None, "grid half-width (default: tail mass below 1e-7)"),
        "n_points": (int, 2001, "number of grid points"),
        "method": (str, "auto", "closed (MHM only), pd, or auto"),
    },
    "moments": {**_MODEL},
    "rv": {
        "gamma": (float, None, "relaxation rate; estimated from the data when omitted"),
        "t_grid": (str, "1:200", "window lengths, e.g. 1:60 or 1,2,5,10"),
        "split_t": (float, None, "slope split (default 1/gamma)"),
        "overlapping": (bool, True, "overlapping windows"),
        "detrend": (bool, True, "remove the global drift"),
        "contact_correction": (bool, True, "subtract the 2 E[v^2]/T sampling term"),
        "lag_max": (int, 100, "largest lag for the gamma fit"),
    },
}

_DEFAULT_FORMAT = {"simulate": "csv", "fit": "json", "density": "csv", "moments": "json", "rv": "csv"}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mhmvol", description="Multiplicative-additive stochastic volatility tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in _OPTIONS.items():
        sp = sub.add_parser(cmd, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="TOML settings file")
        for name, (typ, default, text) in {**_COMMON, **opts}.items():
            hint = f"{text} (default: {default})" if default is not None else text
            if typ is bool:
                sp.add_argument(_flag(name), dest=name, action=argparse.BooleanOptionalAction, help=hint)
            else:
                sp.add_argument(_flag(name), dest=name, type=str, help=hint)
    return parser


def _convert(name: str, typ: type, raw: Any) -> Any:
    if raw is None:
        return None
    if typ is bool:
        if isinstance(raw, bool):
            return raw
        raise UsageError(f"{_flag(name)}: expected true/false, got {raw!r}")
    try:
        if typ is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError
            return int(raw)
        if typ is float:
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError
            return val
        return str(raw)
    except (TypeError, ValueError):
        raise UsageError(f"{_flag(name)}: expected {typ.__name__}, got {raw!r}") from None


def _resolve(cmd: str, explicit: dict[str, Any]) -> dict[str, Any]:
    opts = {**_COMMON, **_OPTIONS[cmd]}
    merged = {k: v[1] for k, v in opts.items()}
    cfg_path = explicit.pop("config", None)
    if cfg_path:
        try:
            with open(cfg_path, "rb") as fh:
                doc = tomllib.load(fh)
        except OSError as exc:
            raise UsageError(f"--config: cannot read {cfg_path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"--config: invalid TOML in {cfg_path}: {exc}") from None
        section = doc.get(cmd, {})
        top = {k: v for k, v in doc.items() if k not in _OPTIONS}
        for where, table in (("top level", top), (f"[{cmd}]", section)):
            if not isinstance(table, dict):
                raise UsageError(f"--config: [{cmd}] must be a table")
            for key, val in table.items():
                key_n = key.replace("-", "_")
                if key_n not in opts:
                    # top-level keys may target other subcommands
                    if where == "top level" and any(key_n in o for o in _OPTIONS.values()):
                        continue
                    raise UsageError(f"--config: unknown setting {key!r} in {where}")
                merged[key_n] = val
    merged.update(explicit)
    return {k: _convert(k, opts[k][0], v) for k, v in merged.items()}


# -- validation helpers ------------------------------------------------------


def _require(cfg, name):
    if cfg.get(name) is None:
        raise UsageError(f"{_flag(name)} is required")
    return cfg[name]


def _positive(cfg, name, allow_none=False):
    val = cfg.get(name)
    if val is None:
        if allow_none:
            return None
        raise UsageError(f"{_flag(name)} is required")
    if not val > 0:
        raise UsageError(f"{_flag(name)} must be > 0, got {val}")
    return val


def _choice(cfg, name, choices):
    val = cfg.get(name)
    if val not in choices:
        raise UsageError(f"{_flag(name)} must be one of {', '.join(choices)}, got {val!r}")
    return val


def _int_list(cfg, name, lo=1) -> list[int]:
    text = str(_require(cfg, name)).strip()
    out: list[int] = []
    try:
        for part in filter(None, (s.strip() for s in text.split(","))):
            if ":" in part:
                a, b = (int(s) for s in part.split(":", 1))
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise UsageError(f"{_flag(name)}: cannot parse {text!r} as integers") from None
    if not out:
        raise UsageError(f"{_flag(name)} is empty")
    bad = [v for v in out if v < lo]
    if bad:
        raise UsageError(f"{_flag(name)}: values must be >= {lo}, got {bad[0]}")
    return sorted(set(out))


def _model_spec(cfg, need_dynamics: bool):
    """(model, ModelParams or None, stationary law) from the model flags."""
    if cfg.get("model") is None:
        raise UsageError("--model is required (mm, hm or mhm)")
    try:
        model = Model.parse(cfg["model"])
    except DomainError:
        raise UsageError(f"--model must be one of mm, hm, mhm, got {cfg['model']!r}") from None
    for name in ("p", "q", "beta", "alpha", "gamma", "theta"):
        if cfg.get(name) is not None:
            _positive(cfg, name)
    for name in ("kappa_m_sq", "kappa_h_sq"):
        if cfg.get(name) is not None and cfg[name] < 0:
            raise UsageError(f"{_flag(name)} must be >= 0, got {cfg[name]}")
    rho, mu = cfg.get("rho", 0.0) or 0.0, cfg.get("mu", 0.0) or 0.0
    if not -1 <= rho <= 1:
        raise UsageError(f"--rho must lie in [-1, 1], got {rho}")
    gamma = cfg.get("gamma")
    params = None

    if model is Model.MHM:
        if cfg.get("p") is not None or cfg.get("q") is not None or cfg.get("beta") is not None:
            p, q, beta = _positive(cfg, "p"), _positive(cfg, "q"), _positive(cfg, "beta")
            if not q > 1:
                raise UsageError(f"--q must be > 1 (finite mean variance), got {q}")
            law = BetaPrimeParams(p, q, beta)
            if need_dynamics or gamma is not None:
                params = model_from_bp(law, _positive(cfg, "gamma"), rho, mu)
        else:
            g, th = _positive(cfg, "gamma"), _positive(cfg, "theta")
            km2, kh2 = _require(cfg, "kappa_m_sq"), _require(cfg, "kappa_h_sq")
            for name, val in (("kappa_m_sq", km2), ("kappa_h_sq", kh2)):
                if not val > 0:
                    raise UsageError(f"{_flag(name)} must be > 0 for mhm, got {val}")
            params = ModelParams.from_squares(g, th, km2, kh2, rho, mu)
            law = steady_state(model, params)
        return model, params, law

    kname = "kappa_m_sq" if model is Model.MM else "kappa_h_sq"
    th = _positive(cfg, "theta")
    if cfg.get("alpha") is not None:
        alpha = _positive(cfg, "alpha")
        law = InverseGammaParams(alpha, th) if model is Model.MM else GammaParams(alpha, th)
        if need_dynamics or gamma is not None:
            g = _positive(cfg, "gamma")
            k2 = 2.0 * g * th / alpha
            sq = (k2, 0.0) if model is Model.MM else (0.0, k2)
            params = ModelParams.from_squares(g, th, *sq, rho, mu)
    else:
        g = _positive(cfg, "gamma")
        k2 = _positive(cfg, kname)
        sq = (k2, 0.0) if model is Model.MM else (0.0, k2)
        params = ModelParams.from_squares(g, th, *sq, rho, mu)
        law = steady_state(model, params)
    return model, params, law


# -- artifacts ---------------------------------------------------------------


class _Run:
    def __init__(self, cmd: str, cfg: dict[str, Any]):
        self.cmd = cmd
        self.cfg = cfg
        self.out = Path(cfg["output_dir"])
        self.artifacts: dict[str, str] = {}
        self.extra: dict[str, Any] = {}

    def prepare(self):
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"--output-dir: cannot create {self.out}: {exc.strerror}") from None

    def record(self, path: Path):
        self.artifacts[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()

    def write(self, name: str, writer: Callable[[Path], None]) -> Path:
        path = self.out / name
        writer(path)
        self.record(path)
        return path

    def finish(self):
        manifest = {
            "command": self.cmd,
            "version": __version__,
            "seed": self.cfg["seed"],
            "config": self.cfg,
            **self.extra,
            "artifacts": self.artifacts,
        }
        atomic_write_text(self.out / "manifest.json", to_json(manifest))


def _fmt(cmd, cfg):
    fmt = cfg.get("format") or _DEFAULT_FORMAT[cmd]
    if fmt not in ("json", "csv"):
        raise UsageError(f"--format must be json or csv, got {fmt!r}")
    return fmt


def _load_input(cfg) -> PriceSeries:
    path = _require(cfg, "input")
    if not Path(path).is_file():
        raise UsageError(f"--input: no such file {path}")
    return load_prices(path)


def _estimate_gamma(prices, cfg, run: _Run) -> float | None:
    if cfg.get("gamma") is not None:
        run.extra["gamma_source"] = "flag"
        return _positive(cfg, "gamma")
    z1 = make_returns(prices, 1, True, cfg["detrend"])
    try:
        g = fit_gamma_from_autocov(z1, (1, cfg["lag_max"]))
    except (InsufficientDataError, MHMError, ValueError) as exc:
        logger.warning("gamma not estimated: %s", exc)
        run.extra["gamma_source"] = f"unavailable: {exc}"
        return None
    run.extra["gamma_source"] = "autocovariance fit"
    run.extra["gamma_fit"] = {"gamma": g.gamma, "theta_hat": g.theta_hat, "var_v_hat": g.var_v_hat,
                              "lag_range": list(g.lag_range), "sse": g.sse}
    return g.gamma


# -- subcommands -------------------------------------------------------------


def cmd_simulate(cfg) -> int:
    run = _Run("simulate", cfg)
    model, params, _ = _model_spec(cfg, need_dynamics=True)
    fmt = _fmt("simulate", cfg)
    if fmt != "csv":
        raise UsageError("--format: simulate writes CSV only")
    _positive(cfg, "dt")
    _positive(cfg, "steps")
    if not 0 <= cfg["burn_in"] < cfg["steps"]:
        raise UsageError(f"--burn-in must satisfy 0 <= burn-in < steps, got {cfg['burn_in']}")
    _positive(cfg, "save_every")
    _choice(cfg, "scheme", ("full_truncation", "reflection"))
    _choice(cfg, "return_drift", ("ito", "stratonovich_corrected"))
    if cfg.get("v0") is not None and cfg["v0"] < 0:
        raise UsageError(f"--v0 must be >= 0, got {cfg['v0']}")
    _positive(cfg, "s0")
    try:
        start = dt.date.fromisoformat(cfg["start_date"])
    except ValueError:
        raise UsageError(f"--start-date: invalid ISO date {cfg['start_date']!r}") from None
    sim = SimConfig(dt=cfg["dt"], n_steps=cfg["steps"], burn_in=cfg["burn_in"], seed=cfg["seed"],
                    scheme=cfg["scheme"], return_drift=cfg["return_drift"], save_every=cfg["save_every"],
                    v0=cfg.get("v0"))
    run.prepare()
    path = simulate(model, params, sim)
    run.write("path.csv", lambda p: write_path_csv(path, p))
    if cfg["emit_prices"]:
        spd = 1.0 / path.dt
        if not math.isclose(spd, round(spd)) or round(spd) < 1:
            raise UsageError("--emit-prices needs dt * save-every to divide one day")
        x = path.x[::int(round(spd))]
        days = np.arange(len(x))
        close = cfg["s0"] * np.exp(x + params.mu * days)
        dates = tuple(start + dt.timedelta(days=int(d)) for d in days)
        run.write("prices.csv", lambda p: write_prices(PriceSeries(dates, close), p))
    run.extra["params"] = {"model": model.value, "gamma": params.gamma, "theta": params.theta,
                           "kappa_M_sq": params.kappa_M_sq, "kappa_H_sq": params.kappa_H_sq,
                           "rho": params.rho, "mu": params.mu}
    run.extra["n_points"] = len(path)
    run.finish()
    return EXIT_OK


def cmd_fit(cfg) -> int:
    run = _Run("fit", cfg)
    fmt = _fmt("fit", cfg)
    models = []
    for m in str(cfg["model"]).split(","):
        try:
            models.append(Model.parse(m.strip()))
        except DomainError:
            raise UsageError(f"--model: unknown model {m.strip()!r}; expected mm, hm or mhm") from None
    taus = _int_list(cfg, "tau")
    _choice(cfg, "method", ("ks", "mle"))
    _positive(cfg, "lag_max")
    prices = _load_input(cfg)
    run.prepare()
    gamma = _estimate_gamma(prices, cfg, run)
    records = []
    for tau in taus:
        z = make_returns(prices, tau, cfg["overlapping"], cfg["detrend"])
        for model in models:
            res = fit_returns(z, model, method=cfg["method"], gamma=gamma)
            logger.info("tau=%d %s ks=%.4g", tau, model.value, res.ks)
            records.append(res.to_dict())
    run.write(f"fit.{fmt}", lambda p: write_results(records, p, fmt))
    run.finish()
    return EXIT_OK


def _density_zmax(spec: ReturnDensitySpec) -> float:
    z = 4.0 * math.sqrt(variance_moment(1, spec.dist_params) * spec.tau)
    while return_sf(z, spec) > 1e-7:
        z *= 1.5
    return z


def cmd_density(cfg) -> int:
    run = _Run("density", cfg)
    model, _, law = _model_spec(cfg, need_dynamics=False)
    fmt = _fmt("density", cfg)
    tau = _positive(cfg, "tau")
    n = _positive(cfg, "n_points")
    if n < 3:
        raise UsageError(f"--n-points must be >= 3, got {n}")
    method = _choice(cfg, "method", ("auto", "closed", "pd"))
    if method == "closed" and model is not Model.MHM:
        raise UsageError("--method closed is available for mhm only")
    spec = ReturnDensitySpec(model, law, float(tau))
    z_max = _positive(cfg, "z_max", allow_none=True)
    run.prepare()
    if z_max is None:
        z_max = _density_zmax(spec)
    z = np.linspace(-z_max, z_max, n)
    if model is Model.MHM and method != "pd":
        pdf = mhm_return_pdf(z, law, float(tau))
    else:
        pdf = pd_return_pdf(z, spec)
    table = Table.from_columns(z=z, pdf=pdf)
    run.write(f"density.{fmt}", lambda p: write_results(table, p, fmt))
    run.extra["trapezoid_mass"] = float(trapezoid(pdf, z)) if np.all(np.isfinite(pdf)) else None
    run.finish()
    return EXIT_OK


def cmd_moments(cfg) -> int:
    run = _Run("moments", cfg)
    model, _, law = _model_spec(cfg, need_dynamics=False)
    fmt = _fmt("moments", cfg)
    tau = _positive(cfg, "tau")
    theo = {}
    for n, key in ((1, "z2"), (2, "z4")):
        try:
            theo[key] = even_return_moment(n, law, float(tau))
        except DomainError:
            theo[key] = None
    out: dict[str, Any] = {"model": model.value, "tau": tau, "theoretical": theo, "empirical": None, "reduced": None}
    if cfg.get("input"):
        prices = _load_input(cfg)
        z = make_returns(prices, tau, True, True).z
        emp = {"z2": float(np.mean(z**2)), "z4": float(np.mean(z**4)), "n": int(len(z))}
        out["empirical"] = emp
        out["reduced"] = {k: (reduced_moment(emp[k], theo[k], n) if theo[k] else None)
                          for n, k in ((1, "z2"), (2, "z4"))}
    run.prepare()
    if fmt == "json":
        run.write("moments.json", lambda p: write_results(out, p, "json"))
    else:
        flat = {"model": out["model"], "tau": tau, **{f"theoretical_{k}": v for k, v in theo.items()}}
        for part in ("empirical", "reduced"):
            for k in ("z2", "z4"):
                flat[f"{part}_{k}"] = out[part][k] if out[part] else None
        run.write("moments.csv", lambda p: write_results(flat, p, "csv"))
    run.finish()
    return EXIT_OK


def cmd_rv(cfg) -> int:
    run = _Run("rv", cfg)
    fmt = _fmt("rv", cfg)
    grid = _int_list(cfg, "t_grid")
    _positive(cfg, "lag_max")
    if cfg.get("gamma") is not None:
        _positive(cfg, "gamma")
    split = _positive(cfg, "split_t", allow_none=True)
    prices = _load_input(cfg)
    run.prepare()
    gamma = _estimate_gamma(prices, cfg, run)
    z1 = make_returns(prices, 1, True, cfg["detrend"])
    if len(z1.z) < 2 * max(grid):
        raise InsufficientDataError(f"--t-grid: {len(z1.z)} daily returns are too few for T = {max(grid)}")
    curve = rv_variance_ratio_curve(z1, grid, cfg["overlapping"], cfg["contact_correction"])
    table = curve.table(gamma)
    run.write(f"rv_curve.{fmt}", lambda p: write_results(table, p, fmt))
    if split is None and gamma is not None:
        split = 1.0 / gamma
    slopes: dict[str, Any] = {"split_T": split, "slope_small": None, "slope_large": None,
                              "gamma": gamma, "var_v_hat": curve.var_v_hat}
    if split is None:
        slopes["error"] = "no split: give --split-t or --gamma"
    else:
        try:
            slopes["slope_small"], slopes["slope_large"] = loglog_slopes(curve, split)
        except (InsufficientDataError, DomainError) as exc:
            slopes["error"] = str(exc)
    if gamma is not None:
        slopes["f_gamma_T_max_rel_dev"] = float(np.max(np.abs(curve.ratio / f_gamma_t(gamma * curve.T) - 1)))
    run.write("rv_slopes.json", lambda p: write_results(slopes, p, "json"))
    run.finish()
    return EXIT_OK


_COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "density": cmd_density, "moments": cmd_moments,
             "rv": cmd_rv}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2), format="%(levelname)s %(message)s")
    explicit = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose")}
    try:
        cfg = _resolve(ns.command, explicit)
        return _COMMANDS[ns.command](cfg)
    except UsageError as exc:
        print(f"mhmvol {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, InsufficientDataError) as exc:
        print(f"mhmvol {ns.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"mhmvol {ns.command}: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MHMError, SimulationOverflowError, ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        print(f"mhmvol {ns.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
