"""Price ingestion, detrended multi-day returns, and result serialization."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DataFormatError, DomainError, InsufficientDataError

__all__ = [
    "PriceSeries",
    "ReturnSeries",
    "Table",
    "load_prices",
    "write_prices",
    "make_returns",
    "write_results",
    "write_path_csv",
    "read_path_csv",
    "atomic_write_text",
    "format_real",
]


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[dt.date, ...]
    close: np.ndarray

    def __post_init__(self):
        close = np.asarray(self.close, dtype=float)
        dates = tuple(self.dates)
        if len(dates) != len(close):
            raise DomainError("dates and close must have equal length")
        if np.any(~(close > 0)) or not np.all(np.isfinite(close)):
            raise DomainError("close prices must be finite and > 0")
        for i in range(1, len(dates)):
            if not dates[i] > dates[i - 1]:
                raise DomainError(f"dates must be strictly increasing (index {i})")
        close.flags.writeable = False
        object.__setattr__(self, "close", close)
        object.__setattr__(self, "dates", dates)

    def __len__(self):
        return len(self.close)


@dataclass(frozen=True)
class ReturnSeries:
    """tau-day log returns with the drift ``mu_hat`` (per day) removed."""

    z: np.ndarray
    tau: int = 1
    mu_hat: float = 0.0
    overlapping: bool = True

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 1:
            raise DomainError("z must be one-dimensional")
        if int(self.tau) != self.tau or self.tau < 1:
            raise DomainError(f"tau must be a positive integer, got {self.tau}")
        z.flags.writeable = False
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "tau", int(self.tau))

    @property
    def n(self) -> int:
        return len(self.z)

    def __len__(self):
        return len(self.z)


@dataclass(frozen=True)
class Table:
    """Column-oriented numeric table for CSV export."""

    columns: tuple[str, ...]
    data: np.ndarray  # shape (n_rows, n_columns)

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if data.size and data.shape[1] != len(self.columns):
            raise DomainError("table width does not match its header")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "columns", tuple(self.columns))

    @classmethod
    def from_columns(cls, **cols) -> "Table":
        names = tuple(cols)
        return cls(names, np.column_stack([np.asarray(c, dtype=float) for c in cols.values()]))

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


# -- input -------------------------------------------------------------------


def load_prices(path: str | os.PathLike, format: str = "csv") -> PriceSeries:
    """Read a ``date,close`` CSV (header names case-insensitive; extra columns ignored)."""
    if format != "csv":
        raise DomainError(f"unsupported price format {format!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file", row=1) from None
        names = [h.strip().lower() for h in header]
        for required in ("date", "close"):
            if required not in names:
                raise DataFormatError(f"missing {required!r} column in header", row=1)
        i_date, i_close = names.index("date"), names.index("close")
        dates: list[dt.date] = []
        close: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= max(i_date, i_close):
                raise DataFormatError("too few fields", row=lineno)
            raw_d, raw_c = row[i_date].strip(), row[i_close].strip()
            try:
                d = dt.date.fromisoformat(raw_d)
            except ValueError:
                raise DataFormatError(f"invalid ISO-8601 date {raw_d!r}", row=lineno, column="date") from None
            if not raw_c:
                raise DataFormatError("missing close", row=lineno, column="close")
            try:
                c = float(raw_c)
            except ValueError:
                raise DataFormatError(f"invalid number {raw_c!r}", row=lineno, column="close") from None
            if not (c > 0 and math.isfinite(c)):
                raise DataFormatError(f"close must be positive, got {raw_c}", row=lineno, column="close")
            if dates and not d > dates[-1]:
                raise DataFormatError(f"date {d} is not after {dates[-1]}", row=lineno, column="date")
            dates.append(d)
            close.append(c)
    return PriceSeries(tuple(dates), np.array(close))


def make_returns(prices: PriceSeries, tau: int = 1, overlapping: bool = True, detrend: bool = True) -> ReturnSeries:
    """Detrended tau-day log returns.

    r_t = ln(S_t / S_0) on consecutive trading days, x_t = r_t - mu_hat t with the
    global drift mu_hat = r_N / N (0 without detrending), z = x_{t+tau} - x_t.
    """
    if int(tau) != tau or tau < 1:
        raise DomainError(f"tau must be a positive integer, got {tau}")
    n_days = len(prices) - 1
    if n_days < tau:
        raise InsufficientDataError(f"{len(prices)} prices cannot give {tau}-day returns")
    r = np.log(prices.close / prices.close[0])
    mu_hat = r[-1] / n_days if detrend else 0.0
    x = r - mu_hat * np.arange(n_days + 1)
    stride = 1 if overlapping else int(tau)
    z = x[tau::stride] - x[:-tau:stride]
    return ReturnSeries(z=z, tau=int(tau), mu_hat=float(mu_hat), overlapping=overlapping)


# -- output ------------------------------------------------------------------


def format_real(x: float) -> str:
    """17 significant digits, so every double round-trips."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _to_plain(obj: Any) -> Any:
    if hasattr(obj, "to_dict"):
        return _to_plain(obj.to_dict())
    if isinstance(obj, Table):
        return [dict(zip(obj.columns, row)) for row in obj.data.tolist()]
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (dt.date, Path)):
        return str(obj)
    return obj


def _json(obj: Any, indent: int, level: int = 0) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, float)):
        return format_real(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json(str(k), indent)}: {_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = [f"{pad}{_json(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj: Any, indent: int = 2) -> str:
    return _json(_to_plain(obj), indent) + "\n"


def _table_rows(obj: Any) -> tuple[Sequence[str], Iterable[Sequence[Any]]]:
    if isinstance(obj, Table):
        return obj.columns, obj.data.tolist()
    plain = _to_plain(obj)
    if isinstance(plain, dict):
        plain = [plain]
    if isinstance(plain, list) and plain and all(isinstance(r, dict) for r in plain):
        cols = list(plain[0])
        return cols, [[r.get(c) for c in cols] for r in plain]
    raise TypeError(f"cannot write {type(obj).__name__} as CSV")


def to_csv(obj: Any) -> str:
    cols, rows = _table_rows(obj)
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join("" if v is None else (v if isinstance(v, str) else format_real(v)) for v in row))
    return "\n".join(lines) + "\n"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the target directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(result: Any, path: str | os.PathLike, format: str | None = None) -> None:
    """Serialize a FitResult, list of records, or Table as JSON or CSV.

    The format defaults to the file suffix.  Field order is preserved.
    """
    fmt = (format or Path(path).suffix.lstrip(".")).lower()
    if fmt == "json":
        text = to_json(result)
    elif fmt == "csv":
        text = to_csv(result)
    else:
        raise DomainError(f"unsupported output format {fmt!r}")
    atomic_write_text(path, text)


def write_prices(prices: PriceSeries, path: str | os.PathLike) -> None:
    lines = ["date,close"] + [f"{d.isoformat()},{format_real(c)}" for d, c in zip(prices.dates, prices.close)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_path_csv(path_obj, path: str | os.PathLike) -> None:
    """Dump a simulated path as ``step,v,x``."""
    lines = ["step,v,x"]
    lines += [f"{i},{format_real(v)},{format_real(x)}" for i, (v, x) in enumerate(zip(path_obj.v, path_obj.x))]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_path_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1].copy(), data[:, 2].copy()
