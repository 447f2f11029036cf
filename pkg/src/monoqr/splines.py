"""Clamped uniform B-splines on [0, 1] and monotone inversion.

Knots are ``t_i = i/k`` with the boundary knots repeated ``degree + 1``
times, so a degree-``m`` basis on ``k`` intervals has ``k + m`` functions.
Evaluation at ``t = 1`` uses the left limit, which makes the last basis
function equal to one there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "SplineBasis",
    "Spline",
    "MonotoneSpline",
    "basis_eval",
    "basis_values",
    "design_matrix",
    "greville",
    "spline_eval",
    "spline_derivative",
    "solve_monotone",
    "solve_combined",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 2.0**-10


@dataclass(frozen=True)
class SplineBasis:
    """Degree-``degree`` B-spline basis on ``intervals`` equal knot intervals."""

    degree: int
    intervals: int

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError(f"degree must be >= 0, got {self.degree}")
        if self.intervals < 1:
            raise ValueError(f"intervals must be >= 1, got {self.intervals}")

    @property
    def size(self) -> int:
        """Number of basis functions, ``k + m``."""
        return self.intervals + self.degree

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return np.arange(self.intervals + 1) / self.intervals

    @cached_property
    def knots(self) -> np.ndarray:
        m, k = self.degree, self.intervals
        inner = np.arange(1, k) / k
        return np.concatenate([np.zeros(m + 1), inner, np.ones(m + 1)])

    @cached_property
    def pp_matrix(self) -> np.ndarray:
        """Linear map from coefficients to local Taylor coefficients.

        ``pp_matrix[i, p] @ coefs`` is the coefficient of ``(t - t_i)**p`` of
        the spline restricted to interval ``i``.
        """
        m, k = self.degree, self.intervals
        out = np.empty((k, m + 1, self.size))
        for i in range(k):
            t = self.breakpoints[i]
            for p in range(m + 1):
                out[i, p] = _basis_deriv(self.knots, m, t, p, i + m) / math.factorial(p)
        return out

    def interval_of(self, t: float) -> int:
        """Index ``i`` of the knot interval ``[t_i, t_{i+1})`` holding ``t``."""
        return min(int(np.searchsorted(self.breakpoints, t, side="right")) - 1, self.intervals - 1)

    def derivative_basis(self) -> "SplineBasis":
        if self.degree == 0:
            raise ValueError("cannot differentiate a degree-0 basis")
        return SplineBasis(self.degree - 1, self.intervals)


def _cox_de_boor(knots: np.ndarray, degree: int, t: float, span: int) -> np.ndarray:
    """All ``len(knots) - degree - 1`` basis values at ``t`` in knot span ``span``.

    ``span`` is the index ``s`` with ``knots[s] <= t < knots[s+1]`` (or the last
    nonempty span when ``t`` is the right end).
    """
    n_basis = len(knots) - degree - 1
    out = np.zeros(n_basis)
    # local triangular scheme, standard de Boor form
    vals = np.zeros(degree + 1)
    vals[0] = 1.0
    left = np.zeros(degree + 1)
    right = np.zeros(degree + 1)
    for j in range(1, degree + 1):
        left[j] = t - knots[span + 1 - j]
        right[j] = knots[span + j] - t
        saved = 0.0
        for r in range(j):
            temp = vals[r] / (right[r + 1] + left[j - r])
            vals[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        vals[j] = saved
    out[span - degree : span + 1] = vals
    return out


def _basis_deriv(knots: np.ndarray, degree: int, t: float, nu: int, span: int) -> np.ndarray:
    """``nu``-th derivative of every degree-``degree`` basis function at ``t``."""
    if nu == 0:
        return _cox_de_boor(knots, degree, t, span)
    if nu > degree:
        return np.zeros(len(knots) - degree - 1)
    lower = _basis_deriv(knots[1:-1], degree - 1, t, nu - 1, span - 1)
    n = len(knots) - degree - 1
    out = np.zeros(n)
    for j in range(n):
        d0 = knots[j + degree] - knots[j]
        d1 = knots[j + degree + 1] - knots[j + 1]
        a = lower[j - 1] / d0 if (d0 > 0 and j >= 1) else 0.0
        b = lower[j] / d1 if (d1 > 0 and j < len(lower)) else 0.0
        out[j] = degree * (a - b)
    return out


def _span(basis: SplineBasis, t: float) -> int:
    return basis.interval_of(t) + basis.degree


def _check_unit(t) -> float:
    t = float(t)
    if not math.isfinite(t) or t < 0.0 or t > 1.0:
        raise ValueError(f"argument must lie in [0, 1], got {t}")
    return t


def basis_values(basis: SplineBasis, t: float) -> np.ndarray:
    """Values of all ``J`` basis functions at ``t``."""
    t = _check_unit(t)
    return _cox_de_boor(basis.knots, basis.degree, t, _span(basis, t))


def basis_eval(basis: SplineBasis, j: int, t: float) -> float:
    """Value of basis function ``j`` (1-based, ``1 <= j <= J``) at ``t``."""
    if not 1 <= j <= basis.size:
        raise IndexError(f"basis index {j} outside 1..{basis.size}")
    return float(basis_values(basis, t)[j - 1])


def design_matrix(basis: SplineBasis, t) -> np.ndarray:
    """Basis values at each point of ``t``; shape ``(len(t), J)``.

    Built from the piecewise polynomial form, so it is cheap for long grids.
    """
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any((t < 0) | (t > 1)):
        raise ValueError("evaluation points must lie in [0, 1]")
    k, m = basis.intervals, basis.degree
    idx = np.minimum((t * k).astype(int), k - 1)
    s = t - idx / k
    powers = s[:, None] ** np.arange(m + 1)
    return np.einsum("np,npj->nj", powers, basis.pp_matrix[idx])


def greville(basis: SplineBasis) -> np.ndarray:
    """Knot averages; as coefficients they reproduce the identity map."""
    m = basis.degree
    if m == 0:
        return (basis.breakpoints[:-1] + basis.breakpoints[1:]) / 2
    t = basis.knots
    return np.array([t[j + 1 : j + m + 1].mean() for j in range(basis.size)])


@dataclass(frozen=True)
class Spline:
    basis: SplineBasis
    coefs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coefs, dtype=float)
        if c.shape != (self.basis.size,):
            raise ValueError(f"expected {self.basis.size} coefficients, got shape {c.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "coefs", c)

    @cached_property
    def pp(self) -> np.ndarray:
        """Local Taylor coefficients, shape ``(k, m + 1)``."""
        return self.basis.pp_matrix @ self.coefs

    def __call__(self, t):
        if np.ndim(t) == 0:
            return spline_eval(self, t)
        return design_matrix(self.basis, t) @ self.coefs


@dataclass(frozen=True)
class MonotoneSpline(Spline):
    """Spline with nondecreasing coefficients running from 0 to 1."""

    def __post_init__(self):
        super().__post_init__()
        c = self.coefs
        if c[0] != 0.0 or abs(c[-1] - 1.0) > 1e-12:
            raise ValueError("monotone spline coefficients must start at 0 and end at 1")
        if np.any(np.diff(c) < 0):
            raise ValueError("monotone spline coefficients must be nondecreasing")


def spline_eval(s: Spline, t: float) -> float:
    """``sum_j coefs_j B_j(t)``."""
    return float(basis_values(s.basis, t) @ s.coefs)


def spline_derivative(s: Spline) -> Spline:
    """Exact derivative as a degree ``m - 1`` spline on the same breakpoints.

    Coefficients are ``m (c_j - c_{j-1}) / (t_{j+m} - t_j)``.
    """
    basis = s.basis
    m = basis.degree
    t = basis.knots
    j = np.arange(1, basis.size)
    coefs = m * np.diff(s.coefs) / (t[j + m] - t[j])
    return Spline(basis.derivative_basis(), coefs)


def _combined_pp(s1: Spline, s2: Spline, x: float) -> np.ndarray:
    if s1.basis != s2.basis:
        raise ValueError("splines must share a basis")
    return x * s1.pp + (1.0 - x) * s2.pp


def solve_monotone(
    s1: Spline,
    s2: Spline,
    x: float,
    y: float,
    tol: float = DEFAULT_TOL,
    method: str | None = None,
) -> float:
    """Solve ``x s1(tau) + (1 - x) s2(tau) = y`` for ``tau`` in [0, 1].

    The bracketing knot interval is found by binary search over the values of
    the combined curve at the breakpoints. Quadratic pieces are then solved in
    closed form (``method="analytic"``, the default for degree 2); anything
    else is bisected until both the bracket width and the residual are at most
    ``tol``.
    """
    x = _check_unit(x)
    y = float(y)
    if not math.isfinite(y) or not math.isfinite(tol) or tol <= 0:
        raise ValueError("y and tol must be finite, tol positive")
    tau = solve_combined(
        s1.basis,
        s1.pp,
        s2.pp,
        np.array([x]),
        np.array([y]),
        tol=tol,
        method=method,
    )
    return float(tau[0])


def _knot_values(basis: SplineBasis, pp: np.ndarray) -> np.ndarray:
    # value of the curve at t_0..t_k; the right end comes from the last piece
    h = 1.0 / basis.intervals
    last = np.polyval(pp[-1, ::-1], h)
    return np.append(pp[:, 0], last)


def solve_combined(
    basis: SplineBasis,
    pp1: np.ndarray,
    pp2: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    tol: float = DEFAULT_TOL,
    method: str | None = None,
    return_local: bool = False,
):
    """Vectorised inversion of ``x xi1 + (1 - x) xi2`` at many ``(x, y)``.

    ``pp1`` and ``pp2`` are the local Taylor coefficients of the two curves.
    With ``return_local`` the interval index, local offset and per-point
    Taylor coefficients are returned as well, so callers can evaluate the
    derivative without redoing the search.
    """
    k, m = basis.intervals, basis.degree
    if method is None:
        method = "analytic" if m == 2 else "bisection"
    if method == "analytic" and m > 2:
        raise ValueError("closed-form inversion only implemented for degree <= 2")
    h = 1.0 / k
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = 1.0 - x

    kv1 = _knot_values(basis, pp1)
    kv2 = _knot_values(basis, pp2)
    lo_val = x * kv1[0] + xc * kv2[0]
    hi_val = x * kv1[-1] + xc * kv2[-1]
    slack = 1e-12
    if np.any(y < lo_val - slack) or np.any(y > hi_val + slack):
        raise ValueError("y outside the range of the combined curve")

    # binary search for the largest i < k with Q(t_i | x) <= y
    lo = np.zeros(len(y), dtype=np.intp)
    hi = np.full(len(y), k - 1, dtype=np.intp)
    while np.any(lo < hi):
        mid = (lo + hi + 1) // 2
        ok = x * kv1[mid] + xc * kv2[mid] <= y
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid - 1)
    idx = lo

    coef = x[:, None] * pp1[idx] + xc[:, None] * pp2[idx]
    target = y - coef[:, 0]

    if method == "analytic":
        a = coef[:, 2] if m == 2 else np.zeros(len(y))
        b = coef[:, 1]
        disc = np.maximum(b * b + 4.0 * a * target, 0.0)
        denom = b + np.sqrt(disc)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, 2.0 * target / denom, 0.0)
        s = np.clip(s, 0.0, h)
    elif method == "bisection":
        s = _bisect(coef, target, h, tol)
    else:
        raise ValueError(f"unknown method {method!r}")

    tau = np.minimum(idx * h + s, 1.0)
    if return_local:
        return tau, idx, s, coef
    return tau


def _bisect(coef: np.ndarray, target: np.ndarray, h: float, tol: float) -> np.ndarray:
    lo = np.zeros(len(target))
    hi = np.full(len(target), h)
    powers = np.arange(1, coef.shape[1])
    rise = coef[:, 1:]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        res = (rise * mid[:, None] ** powers).sum(axis=1) - target
        if np.all(np.abs(res) <= tol) and np.all(hi - lo <= 2 * tol):
            break
        below = res < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return mid
