"""Uniform credible bands, coverage experiments, RMISE and slope-sign probabilities."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model_select import FitResult, fit_models
from .sampler import ProposalConfig
from .simgen import RNG_NAME, TruthSpec, generate, true_quantile

__all__ = [
    "TAU_GRID",
    "CredibleBand",
    "inflation_factor",
    "inflate",
    "nearest_rank",
    "band_radius",
    "band",
    "fit_band",
    "sample_quantile_curves",
    "neg_slope_prob",
    "fit_neg_slope_prob",
    "rmise",
    "CoverageSettings",
    "coverage_experiment",
]

TAU_GRID = np.linspace(0.0, 1.0, 101)
TAU_GRID.flags.writeable = False


def inflation_factor(n) -> float:
    """``0.8 sqrt(log n)``, natural log."""
    if n < 2:
        raise ValueError(f"inflation needs n >= 2, got {n}")
    return 0.8 * math.sqrt(math.log(n))


def inflate(radius: float, n) -> float:
    return radius * inflation_factor(n)


def nearest_rank(values, level: float) -> float:
    """Smallest value with at least ``level`` of the sample at or below it."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise ValueError("no values")
    if not 0 < level <= 1:
        raise ValueError("level must lie in (0, 1]")
    # guard against level * n landing a hair above an integer
    rank = max(math.ceil(level * len(v) - 1e-9), 1)
    return float(v[rank - 1])


@dataclass(frozen=True)
class CredibleBand:
    x: float
    level: float
    n: int
    radius: float
    inflated_radius: float
    tau: np.ndarray = field(repr=False)
    center: np.ndarray = field(repr=False)

    @property
    def lower(self):
        return self.center - self.radius

    @property
    def upper(self):
        return self.center + self.radius

    @property
    def lower_inflated(self):
        return self.center - self.inflated_radius

    @property
    def upper_inflated(self):
        return self.center + self.inflated_radius

    def covers(self, curve, inflated: bool = True) -> bool:
        dist = np.max(np.abs(np.asarray(curve) - self.center))
        return bool(dist <= (self.inflated_radius if inflated else self.radius))

    def to_csv(self, path) -> None:
        cols = ("tau", "center", "lower", "upper", "lower_inflated", "upper_inflated")
        data = np.column_stack(
            [self.tau, self.center, self.lower, self.upper, self.lower_inflated, self.upper_inflated]
        )
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in data:
                w.writerow([format(v, ".17g") for v in row])


def band_radius(curves, center=None, level: float = 0.95) -> float:
    """Nearest-rank ``level`` quantile of the sup-distances to ``center``."""
    curves = np.asarray(curves, dtype=float)
    if center is None:
        center = curves.mean(axis=0)
    sup = np.max(np.abs(curves - center), axis=1)
    return nearest_rank(sup, level)


def band(curves, x: float, n: int, tau=TAU_GRID, level: float = 0.95, min_samples: int = 100) -> CredibleBand:
    """Uniform band around the mean of sampled quantile curves (rows)."""
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[1] != len(tau):
        raise ValueError("curves must be (samples, len(tau))")
    if curves.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} posterior samples, got {curves.shape[0]}")
    center = curves.mean(axis=0)
    radius = band_radius(curves, center, level)
    return CredibleBand(float(x), level, int(n), radius, inflate(radius, n), np.asarray(tau), center)


def sample_quantile_curves(fit: FitResult, x: float, tau=TAU_GRID, method: str = "hb") -> np.ndarray:
    """Per-iteration ``Q(tau|x)`` curves.

    For HB the ``i``-th curve is the weighted average over ``k`` of the
    ``i``-th stored state of each chain, with the model weights.
    """
    if method == "eb":
        xi1, xi2 = fit.sample_curves(fit.k_eb, tau)
        return x * xi1 + (1 - x) * xi2
    if method != "hb":
        raise ValueError(f"unknown method {method!r}")
    sizes = {fit.chains[k].n_samples for k in fit.domain}
    if len(sizes) != 1:
        raise ValueError("HB bands need the same number of stored samples for every k")
    out = 0.0
    for k, w in zip(fit.domain, fit.weights.weights):
        if w == 0.0:
            continue
        xi1, xi2 = fit.sample_curves(k, tau)
        out = out + w * (x * xi1 + (1 - x) * xi2)
    return out


def fit_band(fit: FitResult, x: float, method: str = "hb", tau=TAU_GRID, level: float = 0.95) -> CredibleBand:
    return band(sample_quantile_curves(fit, x, tau, method), x, fit.data.n, tau, level)


def neg_slope_prob(xi1_samples, xi2_samples) -> np.ndarray:
    """Fraction of samples with ``xi1(tau) < xi2(tau)`` at each grid point."""
    a = np.asarray(xi1_samples, dtype=float)
    b = np.asarray(xi2_samples, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] < 1:
        raise ValueError("need matching (samples, grid) arrays")
    return (a < b).mean(axis=0)


def fit_neg_slope_prob(fit: FitResult, tau=TAU_GRID, method: str = "hb") -> np.ndarray:
    """Posterior probability of a negative slope; HB mixes the per-k fractions."""
    if method == "eb":
        return neg_slope_prob(*fit.sample_curves(fit.k_eb, tau))
    out = np.zeros(len(tau))
    for k, w in zip(fit.domain, fit.weights.weights):
        if w > 0:
            out += w * neg_slope_prob(*fit.sample_curves(k, tau))
    return out


def rmise(estimate, truth, tau=TAU_GRID) -> float:
    """Root mean squared difference of two curves on a common grid."""
    e = np.asarray(estimate, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape or e.shape != (len(tau),):
        raise ValueError("curves must be evaluated on the same grid")
    return float(np.sqrt(np.mean((e - t) ** 2)))


@dataclass(frozen=True)
class CoverageSettings:
    m: int = 2
    domain: tuple | None = None
    iterations: int = 20000
    burn_in: int = 5000
    L: int = 5000
    level: float = 0.95
    r: float = 1.1
    adapt: bool = True
    ordinate: str = "max"
    ordinate_r: float | str | None = None


def _replicate(args):
    truth, n, seed, method, xs, st = args
    data = generate(truth, n, seed)
    fit = fit_models(
        data,
        m=st.m,
        domain=st.domain,
        iterations=st.iterations,
        burn_in=st.burn_in,
        seed=seed,
        proposal=ProposalConfig(r=st.r, adapt=st.adapt),
        L=st.L,
        workers=1,
        ordinate=st.ordinate,
        ordinate_r=st.ordinate_r,
    )
    out = []
    for x in xs:
        b = fit_band(fit, x, method, TAU_GRID, st.level)
        dist = float(np.max(np.abs(true_quantile(truth, TAU_GRID, x) - b.center)))
        out.append((dist, b.radius, b.inflated_radius))
    return out


def coverage_experiment(
    truth: TruthSpec,
    n: int,
    replications: int,
    method: str = "hb",
    xs=(0.2, 0.5, 0.7),
    settings: CoverageSettings | None = None,
    seed: int = 0,
    workers: int | None = None,
) -> dict:
    """Repeat simulate, fit and band; report per-x coverage of raw and inflated bands.

    Replication ``i`` uses seed ``seed + i`` for both data and chains.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    settings = settings or CoverageSettings()
    xs = tuple(float(x) for x in xs)
    jobs = [(truth, n, seed + i, method, xs, settings) for i in range(replications)]
    if workers is None:
        workers = min(replications, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reps = list(ex.map(_replicate, jobs))
    else:
        reps = [_replicate(j) for j in jobs]
    report = {
        "truth": {"kind": type(truth).__name__, **asdict(truth)},
        "n": n,
        "method": method,
        "replications": replications,
        "seed": seed,
        "rng": RNG_NAME,
        "settings": asdict(settings),
        "x": {},
    }
    for j, x in enumerate(xs):
        dist = np.array([r[j][0] for r in reps])
        raw = np.array([r[j][1] for r in reps])
        infl = np.array([r[j][2] for r in reps])
        report["x"][repr(x)] = {
            "coverage_raw": float(np.mean(dist <= raw)),
            "coverage_inflated": float(np.mean(dist <= infl)),
            "mean_radius_raw": float(raw.mean()),
            "mean_radius_inflated": float(infl.mean()),
            "covered_raw": [bool(v) for v in dist <= raw],
            "covered_inflated": [bool(v) for v in dist <= infl],
        }
    return report
