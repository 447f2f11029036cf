"""Metropolis-Hastings on a product of two simplices.

Each spacing coordinate is multiplied by an independent ``U(1/r, r)`` draw and
the result renormalised. The transition density of that move has a closed
form (integrate the normalising constant out of the scaled vector), so the
Hastings correction is exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .model import Dataset, spacings_loglik, uniform_spacings
from .splines import DEFAULT_TOL, SplineBasis

__all__ = [
    "ProposalConfig",
    "ChainConfig",
    "ChainResult",
    "propose",
    "proposal_log_density",
    "log_accept_ratio",
    "mh_step",
    "run_chain",
    "chain_rng",
    "write_trace",
]


@dataclass(frozen=True)
class ProposalConfig:
    r: float = 1.1
    adapt: bool = True
    target_accept: float = 0.25

    def __post_init__(self):
        if not self.r > 1:
            raise ValueError(f"r must exceed 1, got {self.r}")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass(frozen=True)
class ChainConfig:
    k: int
    m: int = 2
    iterations: int = 20000
    burn_in: int = 5000
    seed: int = 0
    thin: int = 1
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.m not in (2, 3):
            raise ValueError(f"degree must be 2 or 3, got {self.m}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def basis(self) -> SplineBasis:
        return SplineBasis(self.m, self.k)


@dataclass(frozen=True)
class ChainResult:
    """Post-burn-in output of one chain."""

    config: ChainConfig
    gammas: np.ndarray = field(repr=False)
    deltas: np.ndarray = field(repr=False)
    loglik: np.ndarray = field(repr=False)
    iteration: np.ndarray = field(repr=False)
    acceptance: float
    r: float

    @property
    def basis(self) -> SplineBasis:
        return self.config.basis

    @property
    def n_samples(self) -> int:
        return len(self.loglik)

    @property
    def thetas(self) -> np.ndarray:
        return _cumulate_rows(self.gammas)

    @property
    def phis(self) -> np.ndarray:
        return _cumulate_rows(self.deltas)

    @property
    def theta_mean(self) -> np.ndarray:
        return self.thetas.mean(axis=0)

    @property
    def phi_mean(self) -> np.ndarray:
        return self.phis.mean(axis=0)


def _cumulate_rows(g: np.ndarray) -> np.ndarray:
    out = np.zeros((g.shape[0], g.shape[1] + 1))
    np.cumsum(g, axis=1, out=out[:, 1:])
    out[:, -1] = 1.0
    return out


def chain_rng(seed: int, k: int) -> np.random.Generator:
    """Independent PCG64 stream for the chain with ``k`` intervals."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, k])))


def propose(spacings, r: float, rng: np.random.Generator) -> np.ndarray:
    """Scale each spacing by ``U(1/r, r)`` and renormalise."""
    g = np.asarray(spacings, dtype=float)
    v = g * rng.uniform(1.0 / r, r, size=g.shape)
    return v / v.sum()


def proposal_log_density(to, frm, r: float) -> float:
    """Log density of ``to`` given ``frm``, w.r.t. Lebesgue measure on the
    first ``d - 1`` coordinates. ``-inf`` when ``to`` is unreachable."""
    if not r > 1:
        raise ValueError("r must exceed 1")
    return float(
        _kernels.proposal_logpdf(np.asarray(to, dtype=float), np.asarray(frm, dtype=float), float(r))
    )


def log_accept_ratio(ll_new, ll_old, fwd, rev) -> float:
    """Log Hastings ratio; the flat Dirichlet prior cancels."""
    if not math.isfinite(fwd) or ll_new == -math.inf:
        return -math.inf
    return ll_new - ll_old + rev - fwd


def mh_step(state, data: Dataset, basis: SplineBasis, r: float, rng, loglik=None, tol=DEFAULT_TOL):
    """One joint update of ``(gamma, delta)``.

    ``state`` is a ``(gamma, delta)`` pair. Returns
    ``((gamma, delta), loglik, accepted)``.
    """
    gamma, delta = state
    if loglik is None:
        loglik = spacings_loglik(basis, gamma, delta, data, tol)
    g_new = propose(gamma, r, rng)
    d_new = propose(delta, r, rng)
    log_u = math.log(rng.random())
    ll_new = spacings_loglik(basis, g_new, d_new, data, tol)
    fwd = _kernels.proposal_logpdf(g_new, gamma, r) + _kernels.proposal_logpdf(d_new, delta, r)
    rev = _kernels.proposal_logpdf(gamma, g_new, r) + _kernels.proposal_logpdf(delta, d_new, r)
    if log_u < log_accept_ratio(ll_new, loglik, fwd, rev):
        return (g_new, d_new), ll_new, True
    return (gamma, delta), loglik, False


def run_chain(config: ChainConfig, proposal: ProposalConfig, data: Dataset, rng=None) -> ChainResult:
    """Run one chain from uniform spacings.

    With ``proposal.adapt`` the width ``r`` follows a Robbins-Monro recursion
    on ``log(r - 1)`` toward the target acceptance rate during burn-in and is
    frozen afterwards. Identical seeds give identical results.
    """
    if rng is None:
        rng = chain_rng(config.seed, config.k)
    basis = config.basis
    d = basis.size - 1
    state = (uniform_spacings(d), uniform_spacings(d))
    ll = spacings_loglik(basis, state[0], state[1], data, config.tol)
    if not math.isfinite(ll):
        raise RuntimeError(f"k={config.k}: log-likelihood not finite at the initial state")

    r = proposal.r
    log_rm1 = math.log(r - 1.0)
    keep = range(config.burn_in, config.iterations, config.thin)
    n_keep = len(keep)
    gammas = np.empty((n_keep, d))
    deltas = np.empty((n_keep, d))
    lls = np.empty(n_keep)
    iters = np.fromiter(keep, dtype=np.int64, count=n_keep)
    accepted = 0
    slot = 0
    for it in range(config.iterations):
        state, ll, acc = mh_step(state, data, basis, r, rng, ll, config.tol)
        if it < config.burn_in:
            if proposal.adapt:
                step = 1.0 / (it + 1) ** 0.6
                log_rm1 += 10.0 * step * ((1.0 if acc else 0.0) - proposal.target_accept)
                log_rm1 = min(max(log_rm1, -12.0), 2.0)
                r = 1.0 + math.exp(log_rm1)
        else:
            accepted += acc
            if (it - config.burn_in) % config.thin == 0:
                gammas[slot] = state[0]
                deltas[slot] = state[1]
                lls[slot] = ll
                slot += 1
    rate = accepted / (config.iterations - config.burn_in)
    return ChainResult(config, gammas, deltas, lls, iters, rate, r)


def write_trace(result: ChainResult, path) -> None:
    """CSV with one row per stored iteration: index, log-likelihood, gamma, delta."""
    d = result.gammas.shape[1]
    header = ["iteration", "loglik"] + [f"gamma{j + 1}" for j in range(d)] + [f"delta{j + 1}" for j in range(d)]
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(result.n_samples):
            row = [str(int(result.iteration[i])), format(result.loglik[i], ".17g")]
            row += [format(v, ".17g") for v in result.gammas[i]]
            row += [format(v, ".17g") for v in result.deltas[i]]
            w.writerow(row)
