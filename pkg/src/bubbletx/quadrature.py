"""Quadrature on simplices and principal lattices."""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


def multi_indices(nvars, total):
    """All multi-indices of ``nvars`` entries summing to ``total`` (lex order)."""
    if nvars == 0:
        return [()] if total == 0 else []
    out = []
    for first in range(total, -1, -1):
        for rest in multi_indices(nvars - 1, total - first):
            out.append((first,) + rest)
    return out


def multi_indices_upto(nvars, degree):
    """Multi-indices with entries summing to at most ``degree``, by total degree."""
    out = []
    for t in range(degree + 1):
        out.extend(multi_indices(nvars, t))
    return out


@lru_cache(maxsize=None)
def grundmann_moller(n, degree):
    """Grundmann-Moller rule on the n-simplex exact for polynomials of ``degree``.

    Returns barycentric points of shape (q, n+1) and weights summing to 1, so
    that ``|T| * sum(w * f(points))`` approximates the integral over ``T``.
    """
    s = max(0, degree // 2)
    d = 2 * s + 1
    pts, wts = [], []
    for i in range(s + 1):
        w = (-1) ** i * 2.0 ** (-2 * s) * (d + n - 2 * i) ** d \
            / (math.factorial(i) * math.factorial(d + n - i))
        for beta in multi_indices(n + 1, s - i):
            pts.append([(2 * b + 1) / (d + n - 2 * i) for b in beta])
            wts.append(w)
    pts = np.array(pts)
    wts = np.array(wts) * math.factorial(n)
    # merge duplicate points to reduce cancellation
    keys = {}
    mp, mw = [], []
    for p, w in zip(pts, wts):
        key = tuple(np.round(p, 14))
        if key in keys:
            mw[keys[key]] += w
        else:
            keys[key] = len(mp)
            mp.append(p)
            mw.append(w)
    return np.array(mp), np.array(mw)


@lru_cache(maxsize=None)
def stroud_conical(n, npts):
    """Collapsed Gauss-Jacobi product rule with ``npts`` points per direction.

    Exact for degree ``2*npts - 1``.  Independent of :func:`grundmann_moller`
    and used as a test oracle.
    """
    # x_1 = t_1, x_2 = (1-t_1) t_2, ...; Jacobian prod (1-t_i)^{n-i}
    rules = []
    for i in range(n):
        a = n - 1 - i
        x, w = roots_jacobi(npts, a, 0)
        t = (x + 1) / 2
        w = w / 2 ** (a + 1)
        rules.append((t, w))
    pts, wts = [], []
    for combo in itertools.product(range(npts), repeat=n):
        ts = [rules[i][0][c] for i, c in enumerate(combo)]
        w = math.prod(rules[i][1][c] for i, c in enumerate(combo))
        x, rem = [], 1.0
        for t in ts:
            x.append(rem * t)
            rem *= 1 - t
        pts.append([1 - sum(x)] + x)
        wts.append(w)
    pts = np.array(pts)
    wts = np.array(wts) * math.factorial(n)
    return pts, wts


def simplex_monomial_integral(alpha, volume=1.0):
    """Exact integral of prod lambda_i^alpha_i over an n-simplex of given volume."""
    n = len(alpha) - 1
    num = math.factorial(n) * math.prod(math.factorial(a) for a in alpha)
    return volume * num / math.factorial(sum(alpha) + n)


@lru_cache(maxsize=None)
def principal_lattice(n, r):
    """Barycentric principal lattice {alpha/r : |alpha| = r} of the n-simplex."""
    if r == 0:
        return np.full((1, n + 1), 1.0 / (n + 1))
    return np.array(multi_indices(n + 1, r), dtype=float) / r


@lru_cache(maxsize=None)
def corner_lattice(nvars, r):
    """Lattice {alpha/r : |alpha| <= r} of the corner simplex with the origin."""
    if r == 0:
        return np.zeros((1, nvars))
    return np.array(multi_indices_upto(nvars, r), dtype=float) / r


def shrink(bary, theta):
    """Pull barycentric points toward the centroid by fraction ``theta``."""
    m = bary.shape[-1]
    return (1 - theta) * bary + theta / m


def interior_points(rng, n, count, margin=0.05):
    """Random barycentric points with every coordinate at least ``margin``."""
    b = rng.dirichlet(np.ones(n + 1), size=count)
    return margin + (1 - margin * (n + 1)) * b
