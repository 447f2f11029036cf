"""Marginal likelihood per knot count, selection and model averaging.

The marginal likelihood of each ``k`` comes from its own chain through the
posterior-ordinate identity ``log m = log L(w*) + log prior(w*) - log post(w*)``,
with the ordinate estimated from the Metropolis-Hastings output itself.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _kernels
from .model import Dataset, spacings_loglik
from .sampler import ChainConfig, ChainResult, ProposalConfig, propose, run_chain
from .splines import MonotoneSpline, SplineBasis, design_matrix

__all__ = [
    "EstimationError",
    "MarginalEstimate",
    "ModelWeights",
    "FitResult",
    "default_domain",
    "log_prior",
    "ordinate_point",
    "required_width",
    "auto_width",
    "chib_ordinate",
    "log_marginal",
    "select_eb",
    "hb_weights",
    "averaged_curve",
    "fit_models",
]


class EstimationError(RuntimeError):
    pass


def default_domain(m: int) -> list[int]:
    """Eight consecutive knot counts: 3..10 for quadratics, 5..12 for cubics."""
    return list(range(3, 11)) if m == 2 else list(range(5, 13))


@dataclass(frozen=True)
class MarginalEstimate:
    k: int
    log_marginal: float
    log_likelihood: float
    log_prior: float
    log_ordinate: float
    point: tuple = field(repr=False)
    M: int = 0
    L: int = 0
    r: float = 0.0


@dataclass(frozen=True)
class ModelWeights:
    domain: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.domain):
            raise ValueError("weights and domain differ in length")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)

    def __getitem__(self, k: int) -> float:
        return float(self.weights[list(self.domain).index(k)])


def log_prior(dim: int) -> float:
    """Log of the flat Dirichlet density on both simplices of dimension ``dim``.

    The density is taken w.r.t. Lebesgue measure on the first ``dim - 1``
    coordinates, the same measure as the proposal density, so it equals
    ``(dim - 1)!`` per simplex.
    """
    return 2.0 * float(gammaln(dim))


def _log_q_rows(to_g, to_d, frm_g, frm_d, r):
    return _kernels.proposal_logpdf_rows(to_g, frm_g, r) + _kernels.proposal_logpdf_rows(to_d, frm_d, r)


def ordinate_point(chain: ChainResult, how: str = "max"):
    """State used as ``w*``.

    ``"max"``: stored state with the highest log posterior. ``"last"``: final
    stored state. ``"mean"``: posterior mean of the spacings, which is not a
    stored state but sits in the bulk of the samples; with larger ``k`` it
    gives a far less variable ordinate than ``"max"``, whose numerator is
    dominated by the chain's own visits to that point.
    """
    if how == "max":
        i = int(np.argmax(chain.loglik))
    elif how == "last":
        i = chain.n_samples - 1
    elif how == "mean":
        g, d = chain.gammas.mean(axis=0), chain.deltas.mean(axis=0)
        return g / g.sum(), d / d.sum()
    else:
        raise ValueError(f"unknown ordinate point rule {how!r}")
    return chain.gammas[i].copy(), chain.deltas[i].copy()


def required_width(chain: ChainResult, point, M: int | None = None) -> np.ndarray:
    """Smallest ``r`` at which each of the last ``M`` stored states can propose ``point``.

    A move from ``g`` can land on ``g*`` iff every ratio ``g*_j / g_j`` lies
    within a factor ``r^2`` of every other one, for both curves.
    """
    M = chain.n_samples if M is None else min(M, chain.n_samples)
    half_span = np.zeros(M)
    for samples, target in ((chain.gammas[-M:], point[0]), (chain.deltas[-M:], point[1])):
        lr = np.log(samples) - np.log(np.asarray(target))
        half_span = np.maximum(half_span, (lr.max(axis=1) - lr.min(axis=1)) / 2)
    return np.exp(half_span)


def auto_width(chain: ChainResult, point, M: int | None = None, quantile: float = 0.1) -> float:
    """Ordinate-estimator width: the chain's ``r``, widened until at least a
    ``quantile`` share of the numerator samples can reach ``point``.

    The 5% margin keeps those samples off the edge of the support, where the
    proposal density vanishes.
    """
    return float(max(chain.r, 1.05 * np.quantile(required_width(chain, point, M), quantile)))


def chib_ordinate(
    chain: ChainResult,
    point,
    data: Dataset,
    r: float,
    L: int,
    rng: np.random.Generator,
    M: int | None = None,
    recompute: bool = False,
) -> float:
    """Log posterior ordinate at ``point`` from Metropolis-Hastings output.

    Numerator averages ``alpha(w_g, w*) q(w_g, w*)`` over the last ``M``
    stored samples; denominator averages ``alpha(w*, w~_j)`` over ``L`` fresh
    proposals from ``w*``. Stored log-likelihoods are reused unless
    ``recompute`` is set, which is needed when ``data`` is not the dataset
    the chain was run on.
    """
    if chain.n_samples < 1:
        raise EstimationError("chain has no stored samples")
    if L < 1:
        raise ValueError("L must be >= 1")
    M = chain.n_samples if M is None else min(M, chain.n_samples)
    basis = chain.basis
    tol = chain.config.tol
    g_star = np.ascontiguousarray(point[0], dtype=float)
    d_star = np.ascontiguousarray(point[1], dtype=float)
    ll_star = spacings_loglik(basis, g_star, d_star, data, tol)
    if not math.isfinite(ll_star):
        raise EstimationError("ordinate point has zero posterior density")

    gs = np.ascontiguousarray(chain.gammas[-M:])
    ds = np.ascontiguousarray(chain.deltas[-M:])
    if not recompute:
        lls = chain.loglik[-M:]
    else:
        lls = np.array([spacings_loglik(basis, g, d, data, tol) for g, d in zip(gs, ds)])
    q_to_star = _log_q_rows(g_star[None], d_star[None], gs, ds, r)
    q_from_star = _log_q_rows(gs, ds, g_star[None], d_star[None], r)
    with np.errstate(invalid="ignore"):
        log_alpha = np.minimum(0.0, ll_star - lls + q_from_star - q_to_star)
    terms = np.where(np.isfinite(q_to_star), log_alpha + q_to_star, -np.inf)
    if not np.any(np.isfinite(terms)):
        raise EstimationError(f"k={chain.config.k}: ordinate point unreachable from every stored sample")
    num = logsumexp(terms) - math.log(M)

    den_terms = np.empty(L)
    for j in range(L):
        g_new = propose(g_star, r, rng)
        d_new = propose(d_star, r, rng)
        ll_new = spacings_loglik(basis, g_new, d_new, data, tol)
        if ll_new == -np.inf:
            den_terms[j] = -np.inf
            continue
        fwd = _kernels.proposal_logpdf(g_new, g_star, r) + _kernels.proposal_logpdf(d_new, d_star, r)
        rev = _kernels.proposal_logpdf(g_star, g_new, r) + _kernels.proposal_logpdf(d_star, d_new, r)
        den_terms[j] = min(0.0, ll_new - ll_star + rev - fwd)
    den = logsumexp(den_terms) - math.log(L)
    return float(num - den)


def log_marginal(
    chain: ChainResult,
    data: Dataset,
    point=None,
    r: float | str | None = None,
    L: int = 5000,
    rng=None,
    M: int | None = None,
    recompute: bool = False,
) -> MarginalEstimate:
    """Chib estimate of the log marginal likelihood for the chain's ``k``.

    ``point`` defaults to the highest-likelihood stored state. ``r`` is the
    proposal width used by the ordinate estimator: ``None`` for the chain's
    own final ``r``, ``"auto"`` (see :func:`auto_width`), or a number.
    """
    if len(data) < 1:
        raise ValueError("dataset must be nonempty")
    if point is None:
        point = ordinate_point(chain)
    if r is None:
        r = chain.r
    elif r == "auto":
        r = auto_width(chain, point, M)
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([chain.config.seed, chain.config.k, 1])))
    ordinate = chib_ordinate(chain, point, data, r, L, rng, M, recompute)
    ll = spacings_loglik(chain.basis, np.asarray(point[0]), np.asarray(point[1]), data, chain.config.tol)
    lp = log_prior(chain.basis.size - 1)
    M_used = chain.n_samples if M is None else min(M, chain.n_samples)
    return MarginalEstimate(
        k=chain.config.k,
        log_marginal=ll + lp - ordinate,
        log_likelihood=ll,
        log_prior=lp,
        log_ordinate=ordinate,
        point=(np.asarray(point[0]), np.asarray(point[1])),
        M=M_used,
        L=L,
        r=float(r),
    )


def select_eb(estimates) -> int:
    """Knot count with the largest log marginal; ties go to the smaller ``k``."""
    estimates = list(estimates)
    if not estimates:
        raise ValueError("no marginal estimates")
    best = max(estimates, key=lambda e: (e.log_marginal, -e.k))
    return best.k


def hb_weights(estimates) -> ModelWeights:
    """Weights proportional to the marginal likelihoods, computed in log space."""
    estimates = sorted(estimates, key=lambda e: e.k)
    if not estimates:
        raise ValueError("no marginal estimates")
    lm = np.array([e.log_marginal for e in estimates])
    w = np.exp(lm - logsumexp(lm))
    w /= w.sum()
    return ModelWeights(tuple(e.k for e in estimates), w)


def averaged_curve(weights: ModelWeights, curves) -> np.ndarray:
    """Weighted sum of per-k curves; ``curves`` maps ``k`` to values on a grid."""
    if set(curves) != set(weights.domain):
        raise ValueError("curves and weights cover different knot counts")
    return sum(w * np.asarray(curves[k], dtype=float) for k, w in zip(weights.domain, weights.weights))


@dataclass
class FitResult:
    """Chains, marginal estimates and derived EB/HB summaries for one dataset."""

    data: Dataset
    chains: dict
    estimates: dict
    weights: ModelWeights
    k_eb: int

    @property
    def domain(self) -> tuple:
        return self.weights.domain

    @property
    def m(self) -> int:
        return next(iter(self.chains.values())).config.m

    def mean_splines(self, k: int):
        c = self.chains[k]
        return MonotoneSpline(c.basis, c.theta_mean), MonotoneSpline(c.basis, c.phi_mean)

    def xi_curves(self, tau, method: str = "hb"):
        """Posterior-mean ``(xi1, xi2)`` on ``tau`` for EB or HB."""
        tau = np.asarray(tau, dtype=float)
        if method == "eb":
            s1, s2 = self.mean_splines(self.k_eb)
            return s1(tau), s2(tau)
        if method != "hb":
            raise ValueError(f"unknown method {method!r}")
        per_k = {k: self.mean_splines(k) for k in self.domain}
        xi1 = averaged_curve(self.weights, {k: s[0](tau) for k, s in per_k.items()})
        xi2 = averaged_curve(self.weights, {k: s[1](tau) for k, s in per_k.items()})
        return xi1, xi2

    def quantile(self, tau, x, method: str = "hb"):
        xi1, xi2 = self.xi_curves(tau, method)
        return x * xi1 + (1 - x) * xi2

    def slope_intercept(self, tau, method: str = "hb"):
        xi1, xi2 = self.xi_curves(tau, method)
        return xi2, xi1 - xi2

    def sample_curves(self, k: int, tau):
        """Per-sample ``(xi1, xi2)`` values on ``tau`` for the chain with ``k``."""
        c = self.chains[k]
        B = design_matrix(c.basis, np.asarray(tau, dtype=float))
        return c.thetas @ B.T, c.phis @ B.T


def _run_one(args):
    k, m, iterations, burn_in, seed, thin, proposal, data, L, M, ordinate, ordinate_r = args
    cfg = ChainConfig(k=k, m=m, iterations=iterations, burn_in=burn_in, seed=seed, thin=thin)
    try:
        chain = run_chain(cfg, proposal, data)
        est = log_marginal(chain, data, point=ordinate_point(chain, ordinate), r=ordinate_r, L=L, M=M)
    except Exception as exc:
        raise EstimationError(f"k={k}: {exc}") from exc
    return chain, est


def fit_models(
    data: Dataset,
    m: int = 2,
    domain=None,
    iterations: int = 20000,
    burn_in: int = 5000,
    seed: int = 0,
    proposal: ProposalConfig | None = None,
    thin: int = 1,
    L: int = 5000,
    M: int | None = None,
    ordinate: str = "max",
    workers: int | None = None,
    ordinate_r: float | str | None = None,
) -> FitResult:
    """One chain and one marginal estimate per ``k`` in ``domain``.

    Chains run in separate processes when ``workers > 1``; each uses its own
    random stream derived from ``(seed, k)``. ``M=None`` uses every stored
    sample in the ordinate numerator. ``ordinate_r`` sets the proposal width
    used by the ordinate estimator (``None`` for each chain's final ``r``,
    ``"auto"``, or a number); the identity behind the estimator holds for
    any width.
    """
    domain = sorted(default_domain(m) if domain is None else domain)
    if not domain:
        raise ValueError("empty knot-count domain")
    proposal = proposal or ProposalConfig()
    if workers is None:
        workers = min(len(domain), os.cpu_count() or 1)
    jobs = [(k, m, iterations, burn_in, seed, thin, proposal, data, L, M, ordinate, ordinate_r) for k in domain]
    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for k, res in zip(domain, ex.map(_run_one, jobs)):
                results[k] = res
    else:
        for job in jobs:
            results[job[0]] = _run_one(job)
    chains = {k: res[0] for k, res in results.items()}
    estimates = {k: res[1] for k, res in results.items()}
    weights = hb_weights(estimates.values())
    return FitResult(data, chains, estimates, weights, select_eb(estimates.values()))
