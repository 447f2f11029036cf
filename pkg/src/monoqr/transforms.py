"""Monotone maps from raw measurements to the unit interval and back."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .model import DomainError

__all__ = [
    "Linear",
    "PowerPareto",
    "LogNormal",
    "pareto_cdf",
    "pareto_quantile",
    "fit_lognormal",
    "apply",
    "transform_from_dict",
    "parse_transform",
    "read_columns",
    "write_sidecar",
    "read_sidecar",
]


def _first_bad(mask) -> int:
    return int(np.flatnonzero(mask)[0])


def pareto_cdf(y, a: float, sigma: float, k: float):
    """``1 - (1 + (y / sigma)^k)^(-a)`` for ``y > 0``."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("power-Pareto CDF needs y > 0", row=_first_bad(~(y > 0).ravel()) + 1)
    out = -np.expm1(-a * np.log1p((y / sigma) ** k))
    return float(out) if out.ndim == 0 else out


def pareto_quantile(u, a: float, sigma: float, k: float):
    """Inverse of :func:`pareto_cdf`: ``sigma ((1 - u)^(-1/a) - 1)^(1/k)``."""
    u = np.asarray(u, dtype=float)
    bad = ~((u > 0) & (u < 1))
    if np.any(bad):
        raise DomainError("power-Pareto quantile needs 0 < u < 1", row=_first_bad(bad.ravel()) + 1)
    out = sigma * np.expm1(-np.log1p(-u) / a) ** (1.0 / k)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Linear:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("linear transform needs hi > lo")

    def forward(self, v):
        v = np.asarray(v, dtype=float)
        bad = ~((v >= self.lo) & (v <= self.hi))
        if np.any(bad):
            i = _first_bad(bad.ravel())
            raise DomainError(f"value {float(v.ravel()[i])!r} outside [{self.lo}, {self.hi}]", row=i + 1)
        return (v - self.lo) / (self.hi - self.lo)

    def inverse(self, u):
        return self.lo + np.asarray(u, dtype=float) * (self.hi - self.lo)


@dataclass(frozen=True)
class PowerPareto:
    a: float
    sigma: float
    k: float

    def __post_init__(self):
        if not (self.a > 0 and self.sigma > 0 and self.k > 0):
            raise ValueError("power-Pareto parameters must be positive")

    def forward(self, v):
        return pareto_cdf(v, self.a, self.sigma, self.k)

    def inverse(self, u):
        return pareto_quantile(u, self.a, self.sigma, self.k)


@dataclass(frozen=True)
class LogNormal:
    mu: float
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("log-normal scale must be positive")

    def forward(self, v):
        v = np.asarray(v, dtype=float)
        bad = ~(v > 0)
        if np.any(bad):
            raise DomainError("log-normal transform needs positive values", row=_first_bad(bad.ravel()) + 1)
        return ndtr((np.log(v) - self.mu) / self.s)

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        bad = ~((u > 0) & (u < 1))
        if np.any(bad):
            raise DomainError("log-normal inverse needs 0 < u < 1", row=_first_bad(bad.ravel()) + 1)
        return np.exp(self.mu + self.s * ndtri(u))


def fit_lognormal(values) -> LogNormal:
    """Maximum-likelihood fit: mean and population standard deviation of the logs."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise ValueError("need at least two values")
    bad = ~(v > 0)
    if np.any(bad):
        raise DomainError("log-normal fit needs positive values", row=_first_bad(bad) + 1)
    logs = np.log(v)
    s = float(logs.std())
    if s == 0.0:
        raise ValueError("degenerate sample: all values equal")
    return LogNormal(float(logs.mean()), s)


def apply(transform, values, direction: str = "forward"):
    if direction == "forward":
        return transform.forward(values)
    if direction == "inverse":
        return transform.inverse(values)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


_KINDS = {"linear": Linear, "pareto": PowerPareto, "lognormal": LogNormal}


def _kind(t) -> str:
    return {Linear: "linear", PowerPareto: "pareto", LogNormal: "lognormal"}[type(t)]


def transform_to_dict(t) -> dict:
    return {"kind": _kind(t), **asdict(t)}


def transform_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    return _KINDS[kind](**d)


def parse_transform(spec: str):
    """``linear:LO,HI``, ``pareto:A,SIGMA,K``, ``lognormal:MU,S`` or ``identity``.

    ``lognormal`` without parameters means "fit to the data" and returns the
    string ``"lognormal"``.
    """
    spec = spec.strip()
    if spec == "identity":
        return Linear(0.0, 1.0)
    name, _, params = spec.partition(":")
    if name not in _KINDS:
        raise ValueError(f"unknown transform {name!r}")
    if not params:
        if name == "lognormal":
            return "lognormal"
        raise ValueError(f"transform {name!r} needs parameters")
    args = [float(p) for p in params.split(",")]
    return _KINDS[name](*args)


def read_columns(path, columns, where: dict | None = None) -> dict:
    """Numeric columns from a headed CSV, optionally filtered on exact matches.

    Rows are numbered from 1 (first data row) in error messages.
    """
    out = {c: [] for c in columns}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: missing header row")
        needed = list(columns) + list(where or {})
        for c in needed:
            if c not in reader.fieldnames:
                raise ValueError(f"{path}: no column {c!r} in header {reader.fieldnames}")
        for i, row in enumerate(reader, start=1):
            if where and any(row[k] != v for k, v in where.items()):
                continue
            for c in columns:
                try:
                    val = float(row[c])
                except (TypeError, ValueError):
                    raise DomainError(f"non-numeric {c}={row[c]!r}", row=i) from None
                if not math.isfinite(val):
                    raise DomainError(f"non-finite {c}={row[c]!r}", row=i)
                out[c].append(val)
    return {c: np.array(v) for c, v in out.items()}


def write_sidecar(path, x_transform, y_transform, extra: dict | None = None) -> None:
    """JSON record of the transforms applied, for later inversion."""

    def enc(t):
        if isinstance(t, dict):
            return {"kind": "per_x", "by_x": {repr(float(k)): transform_to_dict(v) for k, v in t.items()}}
        return transform_to_dict(t)

    doc = {"x": enc(x_transform), "y": enc(y_transform), **(extra or {})}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_sidecar(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))

    def dec(d):
        if d["kind"] == "per_x":
            return {float(k): transform_from_dict(v) for k, v in d["by_x"].items()}
        return transform_from_dict(d)

    return dec(doc["x"]), dec(doc["y"])
