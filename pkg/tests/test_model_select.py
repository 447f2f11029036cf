import math

import numpy as np
import pytest

from monoqr.model import Dataset
from monoqr.model_select import (
    EstimationError,
    MarginalEstimate,
    ModelWeights,
    averaged_curve,
    chib_ordinate,
    default_domain,
    fit_models,
    hb_weights,
    log_marginal,
    log_prior,
    ordinate_point,
    select_eb,
)
from monoqr.sampler import ChainConfig, ChainResult, ProposalConfig, proposal_log_density, run_chain
from monoqr.simgen import Study1, generate


def est(k, lm):
    return MarginalEstimate(k, lm, 0.0, 0.0, 0.0, ())


class UnitScale:
    """Stands in for a Generator: every multiplicative factor is exactly 1."""

    def uniform(self, lo, hi, size=None):
        return np.ones(size)


def test_default_domain():
    assert default_domain(2) == [3, 4, 5, 6, 7, 8, 9, 10]
    assert default_domain(3) == list(range(5, 13))


def test_log_prior_is_simplex_volume():
    # flat density on the (d-1)-simplex is (d-1)!, for both curves
    assert log_prior(2) == 0.0
    assert log_prior(4) == pytest.approx(2 * math.log(6))


def test_collapsed_estimator():
    data = Dataset([0.2, 0.7], [0.3, 0.6])
    cfg = ChainConfig(k=2, iterations=2, burn_in=1)
    g = np.array([0.2, 0.3, 0.5])
    d = np.array([0.4, 0.4, 0.2])
    chain = ChainResult(cfg, g[None], d[None], np.array([0.0]), np.array([1]), 1.0, 1.3)
    got = chib_ordinate(chain, (g, d), data, 1.3, 1, UnitScale(), recompute=True)
    want = proposal_log_density(g, g, 1.3) + proposal_log_density(d, d, 1.3)
    assert got == pytest.approx(want, abs=1e-12)


def test_unreachable_point_raises():
    data = Dataset([0.5], [0.5])
    cfg = ChainConfig(k=1, iterations=2, burn_in=1)
    g = np.array([0.5, 0.5])
    chain = ChainResult(cfg, np.array([[0.95, 0.05]]), g[None], np.array([0.0]), np.array([1]), 1.0, 1.1)
    with pytest.raises(EstimationError):
        chib_ordinate(chain, (g, g), data, 1.1, 5, np.random.default_rng(0), recompute=True)


def test_select_eb():
    assert select_eb([est(5, -1.0)]) == 5
    assert select_eb([est(3, -10), est(4, -5), est(5, -7)]) == 4
    assert select_eb([est(6, -2), est(4, -2), est(5, -3)]) == 4


def test_hb_weights():
    assert hb_weights([est(3, -7.0)]).weights.tolist() == [1.0]
    np.testing.assert_allclose(hb_weights([est(3, -1), est(4, -1)]).weights, [0.5, 0.5])
    w = hb_weights([est(3, -1000.0), est(4, -1050.0)])
    assert np.all(np.isfinite(w.weights)) and w[4] < 1e-20 and w[3] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ModelWeights((3, 4), np.array([0.7, 0.7]))


def test_averaged_curve():
    w = ModelWeights((3, 4), np.array([0.3, 0.7]))
    c = {3: np.array([0.2, 0.4]), 4: np.array([0.6, 0.5])}
    np.testing.assert_allclose(averaged_curve(w, c), [0.3 * 0.2 + 0.7 * 0.6, 0.3 * 0.4 + 0.7 * 0.5])
    same = {3: np.array([0.1, 0.9]), 4: np.array([0.1, 0.9])}
    np.testing.assert_allclose(averaged_curve(w, same), [0.1, 0.9])
    with pytest.raises(ValueError):
        averaged_curve(w, {3: c[3]})


def test_ordinate_point_rules():
    data = generate(Study1(), 30, 0)
    res = run_chain(ChainConfig(k=3, iterations=400, burn_in=200), ProposalConfig(), data)
    g, _ = ordinate_point(res, "max")
    np.testing.assert_array_equal(g, res.gammas[np.argmax(res.loglik)])
    g, _ = ordinate_point(res, "last")
    np.testing.assert_array_equal(g, res.gammas[-1])
    with pytest.raises(ValueError):
        ordinate_point(res, "median")


def test_marginal_stable_across_seeds():
    # central ordinate point: repeat runs agree closely
    data = generate(Study1(), 100, 21)
    vals = []
    for seed in (1, 2, 3):
        res = run_chain(ChainConfig(k=3, seed=seed), ProposalConfig(), data)
        vals.append(log_marginal(res, data, point=ordinate_point(res, "mean"), L=5000, M=5000).log_marginal)
    assert max(vals) - min(vals) < 0.3


def test_auto_width_marginal_is_finite_at_k6():
    data = generate(Study1(), 100, 21)
    res = run_chain(ChainConfig(k=6, seed=1), ProposalConfig(), data)
    e = log_marginal(res, data, point=ordinate_point(res, "mean"), r="auto", L=5000)
    assert np.isfinite(e.log_marginal) and e.M == res.n_samples and e.r >= res.r


def test_default_marginal_uses_max_point_and_chain_width():
    data = generate(Study1(), 30, 0)
    res = run_chain(ChainConfig(k=3, iterations=3000, burn_in=1000), ProposalConfig(), data)
    e = log_marginal(res, data, L=500)
    np.testing.assert_array_equal(e.point[0], res.gammas[np.argmax(res.loglik)])
    assert e.r == res.r


def test_mean_ordinate_point_is_on_simplex():
    data = generate(Study1(), 30, 0)
    res = run_chain(ChainConfig(k=3, iterations=400, burn_in=200), ProposalConfig(), data)
    g, d = ordinate_point(res, "mean")
    assert g.sum() == pytest.approx(1.0) and np.all(d > 0)


def test_fit_models_summaries():
    data = generate(Study1(), 60, 5)
    fit = fit_models(data, domain=[3, 4], iterations=2000, burn_in=500, L=300, workers=1)
    assert fit.domain == (3, 4)
    assert fit.weights.weights.sum() == pytest.approx(1.0)
    tau = np.linspace(0, 1, 101)
    xi1, xi2 = fit.xi_curves(tau, "hb")
    assert np.all(np.diff(xi1) > 0) and np.all(np.diff(xi2) > 0)
    b0, b1 = fit.slope_intercept(tau)
    np.testing.assert_allclose(b0 + b1, xi1)
    single = fit_models(data, domain=[4], iterations=2000, burn_in=500, L=300, workers=1)
    np.testing.assert_array_equal(single.quantile(tau, 0.4, "hb"), single.quantile(tau, 0.4, "eb"))
    with pytest.raises(ValueError):
        fit.xi_curves(tau, "bma")
