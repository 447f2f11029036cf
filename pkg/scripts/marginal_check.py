"""Compare ordinate-point rules for the marginal likelihood with importance sampling.

For each k, runs several chains and reports the Chib estimate under each
ordinate rule next to an importance-sampling estimate whose proposal is a
Dirichlet moment-matched to the posterior draws.

    python3 scripts/marginal_check.py --k 3 6 --chains 4
"""

import argparse
import math

import numpy as np
from scipy.special import logsumexp
from scipy.stats import dirichlet

from monoqr.model import spacings_loglik
from monoqr.model_select import log_marginal, log_prior, ordinate_point
from monoqr.sampler import ChainConfig, ProposalConfig, run_chain
from monoqr.simgen import Study1, generate


def moment_dirichlet(samples, shrink=0.5):
    m, v = samples.mean(axis=0), samples.var(axis=0)
    return shrink * m * np.median(m * (1 - m) / v - 1)


def importance_log_marginal(chain, data, draws, rng):
    ag, ad = moment_dirichlet(chain.gammas), moment_dirichlet(chain.deltas)
    logw = np.empty(draws)
    for i in range(draws):
        g, d = rng.dirichlet(ag), rng.dirichlet(ad)
        if g.min() <= 0 or d.min() <= 0:
            logw[i] = -np.inf
            continue
        lq = dirichlet.logpdf(g, ag) + dirichlet.logpdf(d, ad)
        logw[i] = spacings_loglik(chain.basis, g, d, data) + log_prior(len(g)) - lq
    w = np.exp(logw - logw.max())
    return logsumexp(logw) - math.log(draws), w.sum() ** 2 / (w**2).sum()


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--k", type=int, nargs="+", default=[3, 6])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--data-seed", type=int, default=21)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--draws", type=int, default=20000)
    args = p.parse_args()
    data = generate(Study1(), args.n, args.data_seed)
    rng = np.random.default_rng(0)
    for k in args.k:
        chains = [run_chain(ChainConfig(k=k, seed=s), ProposalConfig(), data) for s in range(1, args.chains + 1)]
        is_est, ess = importance_log_marginal(chains[0], data, args.draws, rng)
        print(f"k={k}: importance sampling {is_est:.2f} (ESS {ess:.0f})")
        for rule, width in (("mean", "auto"), ("max", None), ("last", None)):
            vals = []
            for c in chains:
                try:
                    vals.append(log_marginal(c, data, point=ordinate_point(c, rule), r=width).log_marginal)
                except Exception:
                    vals.append(float("nan"))
            print(f"  {rule:>4} ({'auto width' if width else 'chain width'}): " + " ".join(f"{v:7.2f}" for v in vals))


if __name__ == "__main__":
    main()
