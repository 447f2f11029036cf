"""Linear quantile regression ``Q(tau|x) = x xi1(tau) + (1 - x) xi2(tau)``.

Both curves are monotone splines whose coefficient spacings live on the unit
simplex. The conditional density of ``y`` given ``x`` is the reciprocal of
``dQ/dtau`` at the ``tau`` solving ``Q(tau|x) = y``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels
from .splines import DEFAULT_TOL, MonotoneSpline, SplineBasis, solve_combined

__all__ = [
    "POSITIVITY_FLOOR",
    "DomainError",
    "Dataset",
    "QuantileModel",
    "check_simplex",
    "cumulate",
    "uniform_spacings",
    "quantile",
    "slope_intercept",
    "log_likelihood",
    "spacings_loglik",
    "loglik_reference",
]

POSITIVITY_FLOOR = 1e-12


class DomainError(ValueError):
    """Input data outside the domain of a model or transform."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


def check_simplex(spacings, atol: float = 1e-12) -> np.ndarray:
    g = np.asarray(spacings, dtype=float)
    if g.ndim != 1 or len(g) < 1:
        raise ValueError("spacings must be a nonempty 1-d sequence")
    if np.any(~np.isfinite(g)) or np.any(g < 0):
        raise ValueError("spacings must be finite and nonnegative")
    if abs(g.sum() - 1.0) > atol:
        raise ValueError(f"spacings must sum to 1, got {g.sum()!r}")
    return g


def uniform_spacings(dim: int) -> np.ndarray:
    return np.full(dim, 1.0 / dim)


def cumulate(spacings) -> np.ndarray:
    """Coefficients ``(0, g1, g1 + g2, ..., 1)`` from a spacing vector.

    The final coefficient is set to exactly 1.
    """
    g = np.asarray(spacings, dtype=float)
    theta = np.concatenate([[0.0], np.cumsum(g)])
    theta[-1] = 1.0
    return theta


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True).ravel()
        y = np.array(self.y, dtype=float, copy=True).ravel()
        if x.shape != y.shape:
            raise ValueError("x and y must have the same length")
        if len(x) < 1:
            raise ValueError("dataset must contain at least one observation")
        for name, v in (("x", x), ("y", y)):
            bad = np.flatnonzero(~np.isfinite(v) | (v < 0) | (v > 1))
            if len(bad):
                i = int(bad[0])
                raise DomainError(f"{name}={v[i]!r} outside [0, 1]", row=i + 1)
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.x)

    def __len__(self) -> int:
        return len(self.x)

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.concatenate([self.x, other.x]), np.concatenate([self.y, other.y]))

    @classmethod
    def from_csv(cls, path, x_col: str = "x", y_col: str = "y") -> "Dataset":
        """Read a headed CSV. Row numbers in errors count data rows from 1."""
        xs, ys = [], []
        with open(Path(path), newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ValueError(f"{path}: missing header row")
            for col in (x_col, y_col):
                if col not in reader.fieldnames:
                    raise ValueError(f"{path}: no column {col!r} in header {reader.fieldnames}")
            for i, row in enumerate(reader, start=1):
                try:
                    xs.append(float(row[x_col]))
                    ys.append(float(row[y_col]))
                except (TypeError, ValueError):
                    raise DomainError(f"non-numeric value in {path}", row=i) from None
        return cls(np.array(xs), np.array(ys))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for xi, yi in zip(self.x, self.y):
                w.writerow([format(xi, ".17g"), format(yi, ".17g")])


@dataclass(frozen=True)
class QuantileModel:
    """A pair of spacing vectors on a shared basis.

    Coefficients and piecewise-polynomial forms are derived once on first use;
    the model itself is immutable.
    """

    basis: SplineBasis
    gamma: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = self.basis.size - 1
        g = check_simplex(self.gamma)
        h = check_simplex(self.delta)
        if len(g) != d or len(h) != d:
            raise ValueError(f"spacing vectors must have length {d}")
        g = g.copy()
        h = h.copy()
        g.flags.writeable = False
        h.flags.writeable = False
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "delta", h)

    @classmethod
    def from_coefficients(cls, basis: SplineBasis, theta, phi) -> "QuantileModel":
        return cls(basis, np.diff(theta), np.diff(phi))

    @cached_property
    def theta(self) -> np.ndarray:
        return cumulate(self.gamma)

    @cached_property
    def phi(self) -> np.ndarray:
        return cumulate(self.delta)

    @cached_property
    def xi1(self) -> MonotoneSpline:
        return MonotoneSpline(self.basis, self.theta)

    @cached_property
    def xi2(self) -> MonotoneSpline:
        return MonotoneSpline(self.basis, self.phi)

    def quantile(self, tau, x):
        return quantile(self, tau, x)

    def log_likelihood(self, data: Dataset, tol: float = DEFAULT_TOL) -> float:
        return log_likelihood(self, data, tol)


def _check_unit_array(v, name):
    v = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(v)) or np.any((v < 0) | (v > 1)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return v


def quantile(model: QuantileModel, tau, x):
    """``x xi1(tau) + (1 - x) xi2(tau)``; broadcasts over ``tau`` and ``x``."""
    tau = _check_unit_array(tau, "tau")
    x = _check_unit_array(x, "x")
    out = x * model.xi1(tau) + (1 - x) * model.xi2(tau)
    return float(out) if np.ndim(out) == 0 else out


def slope_intercept(model: QuantileModel, tau):
    """Intercept ``xi2(tau)`` and slope ``xi1(tau) - xi2(tau)``."""
    tau = _check_unit_array(tau, "tau")
    b0 = model.xi2(tau)
    b1 = model.xi1(tau) - b0
    return b0, b1


def loglik_reference(basis, gamma, delta, data: Dataset, tol: float = DEFAULT_TOL) -> float:
    """Vectorised numpy evaluation of the log-likelihood.

    Slower than the compiled path; kept as an independent implementation.
    """
    gamma = np.asarray(gamma, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if gamma.min() <= POSITIVITY_FLOOR or delta.min() <= POSITIVITY_FLOOR:
        return -np.inf
    pp1 = basis.pp_matrix @ cumulate(gamma)
    pp2 = basis.pp_matrix @ cumulate(delta)
    tau, idx, s, coef = solve_combined(basis, pp1, pp2, data.x, data.y, tol=tol, return_local=True)
    m = coef.shape[1] - 1
    # dQ/dtau from the local Taylor form
    deriv = coef[:, m] * m
    for p in range(m - 1, 0, -1):
        deriv = deriv * s + p * coef[:, p]
    if np.any(deriv <= POSITIVITY_FLOOR):
        return -np.inf
    return -float(np.log(deriv).sum())


def spacings_loglik(basis: SplineBasis, gamma, delta, data: Dataset, tol: float = DEFAULT_TOL) -> float:
    """Log-likelihood straight from spacing vectors, skipping validation.

    Spacings at or below the positivity floor give ``-inf``. This is the hot
    path used by the sampler.
    """
    return _kernels.loglik(basis.pp_matrix, gamma, delta, data.x, data.y, tol, basis.degree <= 2)


def log_likelihood(model: QuantileModel, data: Dataset, tol: float = DEFAULT_TOL) -> float:
    """``-sum_i log{x_i xi1'(tau_i) + (1 - x_i) xi2'(tau_i)}``.

    Returns ``-inf`` when a spacing or a derivative at a solved ``tau`` falls
    to the positivity floor.
    """
    return spacings_loglik(model.basis, model.gamma, model.delta, data, tol)
