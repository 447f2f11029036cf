"""Synthetic truths and data generators for the two simulation studies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset

__all__ = ["Study1", "Study2", "TruthSpec", "true_xi", "true_quantile", "true_slope_intercept", "generate", "RNG_NAME"]

RNG_NAME = f"numpy.random.PCG64 (numpy {np.__version__})"


@dataclass(frozen=True)
class Study1:
    """Quadratic curves ``(1 - A) tau^2 + A tau`` and ``(1 - B) tau^2 + B tau``."""

    A: float = 0.3
    B: float = 0.6

    def __post_init__(self):
        for name in ("A", "B"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")

    def xi(self, which: int, tau):
        c = {1: self.A, 2: self.B}[which]
        return (1 - c) * tau**2 + c * tau


@dataclass(frozen=True)
class Study2:
    """``sin(pi tau / 2)`` and ``log(1 + tau) / log 2``."""

    def xi(self, which: int, tau):
        if which == 1:
            return np.sin(np.pi * tau / 2)
        if which == 2:
            return np.log1p(tau) / np.log(2.0)
        raise KeyError(which)


TruthSpec = Study1 | Study2


def true_xi(spec: TruthSpec, which: int, tau):
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    tau = np.asarray(tau, dtype=float)
    if np.any((tau < 0) | (tau > 1)):
        raise ValueError("tau must lie in [0, 1]")
    out = spec.xi(which, tau)
    return float(out) if np.ndim(out) == 0 else out


def true_quantile(spec: TruthSpec, tau, x):
    return x * true_xi(spec, 1, tau) + (1 - x) * true_xi(spec, 2, tau)


def true_slope_intercept(spec: TruthSpec, tau):
    b0 = true_xi(spec, 2, tau)
    return b0, true_xi(spec, 1, tau) - b0


def generate(spec: TruthSpec, n: int, seed: int) -> Dataset:
    """``X ~ U(0, 1)``, ``Y = Q(U | X)`` with ``U ~ U(0, 1)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    x = rng.random(n)
    u = rng.random(n)
    y = np.clip(true_quantile(spec, u, x), 0.0, 1.0)
    return Dataset(x, y)
