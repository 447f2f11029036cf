"""Compiled inner loops for the likelihood and proposal density.

These mirror the vectorised numpy routines in ``splines`` and ``model``;
the test suite checks the two against each other.
"""

import math

import numpy as np
from numba import njit

FLOOR = 1e-12


@njit(cache=True)
def _coefs(spacings):
    d = spacings.shape[0]
    out = np.empty(d + 1)
    out[0] = 0.0
    acc = 0.0
    for j in range(d):
        acc += spacings[j]
        out[j + 1] = acc
    out[d] = 1.0
    return out


@njit(cache=True)
def _pp(ppmat, theta, k, m1):
    # ppmat has shape (k, m + 1, J)
    out = np.zeros((k, m1))
    J = theta.shape[0]
    for i in range(k):
        for p in range(m1):
            acc = 0.0
            for j in range(J):
                acc += ppmat[i, p, j] * theta[j]
            out[i, p] = acc
    return out


@njit(cache=True)
def _poly(c, s, m1):
    v = c[m1 - 1]
    for p in range(m1 - 2, -1, -1):
        v = v * s + c[p]
    return v


@njit(cache=True)
def loglik(ppmat, gamma, delta, x, y, tol, analytic):
    """Log-likelihood of spacing vectors ``gamma``, ``delta`` at data ``(x, y)``."""
    for j in range(gamma.shape[0]):
        if gamma[j] <= FLOOR or delta[j] <= FLOOR:
            return -np.inf
    k = ppmat.shape[0]
    m1 = ppmat.shape[1]
    m = m1 - 1
    h = 1.0 / k
    pp1 = _pp(ppmat, _coefs(gamma), k, m1)
    pp2 = _pp(ppmat, _coefs(delta), k, m1)
    kv1 = np.empty(k + 1)
    kv2 = np.empty(k + 1)
    for i in range(k):
        kv1[i] = pp1[i, 0]
        kv2[i] = pp2[i, 0]
    kv1[k] = _poly(pp1[k - 1], h, m1)
    kv2[k] = _poly(pp2[k - 1], h, m1)

    c = np.empty(m1)
    total = 0.0
    for n in range(x.shape[0]):
        xi = x[n]
        xc = 1.0 - xi
        yi = y[n]
        lo = 0
        hi = k - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if xi * kv1[mid] + xc * kv2[mid] <= yi:
                lo = mid
            else:
                hi = mid - 1
        for p in range(m1):
            c[p] = xi * pp1[lo, p] + xc * pp2[lo, p]
        target = yi - c[0]
        if analytic:
            a = c[2] if m == 2 else 0.0
            b = c[1]
            disc = b * b + 4.0 * a * target
            if disc < 0.0:
                disc = 0.0
            denom = b + math.sqrt(disc)
            s = 2.0 * target / denom if denom > 0.0 else 0.0
            if s < 0.0:
                s = 0.0
            elif s > h:
                s = h
        else:
            slo = 0.0
            shi = h
            s = 0.5 * h
            for _ in range(200):
                s = 0.5 * (slo + shi)
                res = _poly(c, s, m1) - c[0] - target
                if abs(res) <= tol and shi - slo <= 2.0 * tol:
                    break
                if res < 0.0:
                    slo = s
                else:
                    shi = s
        deriv = m * c[m]
        for p in range(m - 1, 0, -1):
            deriv = deriv * s + p * c[p]
        if deriv <= FLOOR:
            return -np.inf
        total -= math.log(deriv)
    return total


@njit(cache=True)
def proposal_logpdf(to, frm, r):
    """Log density of moving ``frm -> to`` under the multiplicative move."""
    d = to.shape[0]
    lo = -np.inf
    hi = np.inf
    logprod = 0.0
    for j in range(d):
        if to[j] <= 0.0 or frm[j] <= 0.0:
            return -np.inf
        ratio = frm[j] / to[j]
        lo = max(lo, ratio / r)
        hi = min(hi, ratio * r)
        logprod += math.log(frm[j])
    if not hi > lo:
        return -np.inf
    log_hi = math.log(hi)
    gap = d * (math.log(lo) - log_hi)
    return (
        d * (math.log(r) - math.log(r * r - 1.0))
        - logprod
        + d * log_hi
        + math.log(-math.expm1(gap))
        - math.log(d)
    )


@njit(cache=True)
def proposal_logpdf_rows(to, frm, r):
    """Row-wise ``proposal_logpdf`` over 2-d arrays (either may be one row)."""
    n = max(to.shape[0], frm.shape[0])
    out = np.empty(n)
    for i in range(n):
        a = to[0] if to.shape[0] == 1 else to[i]
        b = frm[0] if frm.shape[0] == 1 else frm[i]
        out[i] = proposal_logpdf(a, b, r)
    return out
