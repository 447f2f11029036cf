import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from monoqr.model import cumulate
from monoqr.splines import (
    DEFAULT_TOL,
    MonotoneSpline,
    Spline,
    SplineBasis,
    basis_eval,
    basis_values,
    design_matrix,
    greville,
    solve_monotone,
    spline_derivative,
)


def naive_basis(knots, j, m, t):
    """Textbook Cox-de Boor recursion, 0-based ``j``, right-closed at 1."""
    if m == 0:
        if knots[j] <= t < knots[j + 1]:
            return 1.0
        # the last nonempty interval also owns t = 1
        last = max(i for i in range(len(knots) - 1) if knots[i] < knots[i + 1])
        return 1.0 if (t == knots[-1] and j == last) else 0.0
    out = 0.0
    if knots[j + m] > knots[j]:
        out += (t - knots[j]) / (knots[j + m] - knots[j]) * naive_basis(knots, j, m - 1, t)
    if knots[j + m + 1] > knots[j + 1]:
        out += (knots[j + m + 1] - t) / (knots[j + m + 1] - knots[j + 1]) * naive_basis(knots, j + 1, m - 1, t)
    return out


def clamped_knots(m, k):
    return np.concatenate([np.zeros(m), np.linspace(0, 1, k + 1), np.ones(m)])


bases = st.builds(SplineBasis, st.integers(2, 3), st.integers(1, 9))
unit = st.floats(0.0, 1.0)


def monotone(basis, rng):
    g = 0.05 + rng.random(basis.size - 1)
    return MonotoneSpline(basis, cumulate(g / g.sum()))


def test_size_and_knots():
    b = SplineBasis(3, 5)
    assert b.size == 8
    np.testing.assert_allclose(b.knots, clamped_knots(3, 5))
    with pytest.raises(ValueError):
        SplineBasis(2, 0)


@given(bases, unit)
def test_matches_naive_recursion(basis, t):
    kn = clamped_knots(basis.degree, basis.intervals)
    want = [naive_basis(kn, j, basis.degree, t) for j in range(basis.size)]
    np.testing.assert_allclose(basis_values(basis, t), want, atol=1e-13)


@pytest.mark.parametrize("m", [0, 1, 2, 3])
@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_matches_scipy(m, k):
    basis = SplineBasis(m, k)
    t = np.linspace(0, 1, 57)[:-1]
    want = BSpline.design_matrix(t, clamped_knots(m, k), m).toarray()
    np.testing.assert_allclose(design_matrix(basis, t), want, atol=1e-13)


@given(bases, unit)
def test_partition_of_unity_and_nonnegative(basis, t):
    v = basis_values(basis, t)
    assert np.all(v >= -1e-15)
    assert abs(v.sum() - 1) < 1e-13


@given(bases)
def test_design_matrix_agrees_with_pointwise(basis):
    t = np.linspace(0, 1, 23)
    rows = np.array([basis_values(basis, ti) for ti in t])
    np.testing.assert_allclose(design_matrix(basis, t), rows, atol=1e-13)


@given(bases)
def test_greville_reproduces_identity(basis):
    s = Spline(basis, greville(basis))
    t = np.linspace(0, 1, 41)
    np.testing.assert_allclose(s(t), t, atol=1e-13)


def test_basis_eval_indexing():
    b = SplineBasis(2, 3)
    assert basis_eval(b, 1, 0.0) == 1.0
    assert basis_eval(b, b.size, 1.0) == 1.0
    for j in (0, b.size + 1):
        with pytest.raises(IndexError):
            basis_eval(b, j, 0.5)
    with pytest.raises(ValueError):
        basis_values(b, 1.5)


@given(bases, st.integers(0, 2**32 - 1))
def test_derivative_matches_finite_difference(basis, seed):
    s = monotone(basis, np.random.default_rng(seed))
    ds = spline_derivative(s)
    t = np.linspace(0.013, 0.987, 29)
    h = 1e-6
    fd = (s(t + h) - s(t - h)) / (2 * h)
    np.testing.assert_allclose(ds(t), fd, atol=1e-5)
    assert np.all(ds(t) > 0)


def test_monotone_spline_validation():
    b = SplineBasis(2, 2)
    with pytest.raises(ValueError):
        MonotoneSpline(b, [0.1, 0.3, 0.6, 1.0])
    with pytest.raises(ValueError):
        MonotoneSpline(b, [0.0, 0.5, 0.4, 1.0])
    s = MonotoneSpline(b, [0.0, 0.2, 0.7, 1.0])
    assert s(0.0) == 0.0 and s(1.0) == 1.0


@given(bases, st.integers(0, 2**32 - 1), unit, unit)
def test_solve_round_trip(basis, seed, x, tau):
    rng = np.random.default_rng(seed)
    s1, s2 = monotone(basis, rng), monotone(basis, rng)
    y = x * s1(tau) + (1 - x) * s2(tau)
    got = solve_monotone(s1, s2, x, y, tol=1e-12, method="bisection")
    assert abs(x * s1(got) + (1 - x) * s2(got) - y) <= 1e-11
    if basis.degree == 2:
        assert abs(solve_monotone(s1, s2, x, y) - tau) < 1e-8


def test_solve_default_tolerance_and_range():
    b = SplineBasis(3, 4)
    rng = np.random.default_rng(1)
    s1, s2 = monotone(b, rng), monotone(b, rng)
    for y in np.linspace(0, 1, 17):
        tau = solve_monotone(s1, s2, 0.3, y)
        assert abs(0.3 * s1(tau) + 0.7 * s2(tau) - y) <= DEFAULT_TOL
    with pytest.raises(ValueError):
        solve_monotone(s1, s2, 0.3, 1.2)
    with pytest.raises(ValueError):
        solve_monotone(s1, s2, 0.3, 0.5, method="analytic")
