"""Average, order-reduction and cut-off operators and the bubble transform.

The lambda-dependent operators are reconstructed exactly for polynomial
input: A_f^k u and b^{-j} R_{e,f}^k u are polynomials of degree r in the
lambda variables, so they are interpolated at the corner lattice of
S^c_{f∩e*}.  The y-integrals use Grundmann-Moller rules of degree r + k
(averages) and r + k - j + 1 (order reductions, one extra degree for the
Whitney weight).  Rational bubbles are kept as term lists; only the global
sums C_m^k u are rebuilt as polynomials.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .forms import (LambdaForm, as_lambda_points, PiecewiseForm, _merge_sign, alternators, apply_form,
                    exterior_derivative_fd, global_lambda, ncomp, rho_values,
                    vectors_to_form, wedge, whitney_values)
from .mesh import closed_subsimplices, complement, macroelement, omega_ef
from .quadrature import grundmann_moller, interior_points

CALLBACK_DEGREE = 12
BARY_TOL = 1e-12
RECON_TOL = 1e-8
RECON_THETA = 0.5


class ReconstructionError(RuntimeError):
    """A global cut-off sum failed to reproduce a polynomial of the nominal degree."""


# -- the map G -------------------------------------------------------------------------------


class GContext:
    """Quadrature data for y over a region and the map G(y, lambda) for an anchor.

    ``anchor`` is the simplex whose lambda variables parametrize S^c.
    """

    def __init__(self, mesh, cells, anchor, degree):
        self.mesh = mesh
        self.cells = tuple(cells)
        self.anchor = tuple(anchor)
        self.degree = degree
        self.bary_q, self.wq = grundmann_moller(mesh.dim, max(degree, 0))
        self.X = mesh.vertices[list(self.anchor)] if self.anchor else np.zeros((0, mesh.dim))

    def y_points(self, cell):
        return self.mesh.to_cartesian(cell, self.bary_q)

    def weights(self, cell):
        return self.wq * self.mesh.cell_volume(cell)

    def g_eval(self, y, lam):
        """G(y, lambda) for y (q, n) and lambda (p, nb): shape (p, q, n)."""
        lam = as_lambda_points(lam, len(self.anchor))
        if np.any(lam < -BARY_TOL) or np.any(lam.sum(axis=1) > 1 + BARY_TOL):
            raise ValueError("lambda outside the corner simplex S^c")
        b = 1.0 - lam.sum(axis=1)
        y = np.atleast_2d(y)
        return (lam @ self.X)[:, None, :] + b[:, None, None] * y[None, :, :]

    def d_lambda(self, y):
        """Columns x_i - y of D_lambda G, shape (q, nb, n)."""
        y = np.atleast_2d(y)
        return self.X[None, :, :] - y[:, None, :]

    def in_cell(self, cell, pts):
        """Barycentric coordinates of ``pts`` in ``cell``; asserts membership."""
        bary = self.mesh.barycentric(cell, pts.reshape(-1, self.mesh.dim))
        if np.min(bary) < -1e-9:
            raise AssertionError("G(y, lambda) left the cell of y")
        return np.clip(bary, 0.0, None)


def g_eval(mesh, anchor, y, lam):
    """G(y, lambda) = sum lambda_i x_i + b(lambda) y over the vertices of ``anchor``."""
    return GContext(mesh, (), anchor, 0).g_eval(np.atleast_2d(y), lam)


def pi_j_pullback(mesh, u, anchor, j, y, lam, t_vectors, v_vectors, cell=None):
    """(Pi_j G^* u)_{y,lambda}(t_1..t_j, v_1..v_{k-j}) = b^j u_G(t.., D_lambda G v..).

    ``t_vectors`` (j, n) are tangent vectors in Omega, ``v_vectors`` (k-j, nb)
    tangent vectors of S^c in the coordinates of ``anchor``.
    """
    k = u.k
    if j > k:
        return 0.0
    ctx = GContext(mesh, (), anchor, 0)
    y = np.asarray(y, float).reshape(1, -1)
    lam = np.asarray(lam, float).reshape(1, -1)
    Gp = ctx.g_eval(y, lam)[0, 0]
    if cell is None:
        cell = mesh.locate(y[0])
    bary = ctx.in_cell(cell, Gp)
    val = u(cell, bary)[0]
    b = 1.0 - lam.sum()
    DL = ctx.d_lambda(y)[0]                     # (nb, n)
    vecs = list(np.asarray(t_vectors, float).reshape(j, mesh.dim))
    vecs += [v @ DL for v in np.asarray(v_vectors, float).reshape(k - j, DL.shape[0])]
    V = np.array(vecs).reshape(k, mesh.dim)
    return float(b ** j * apply_form(val, V, mesh.dim))


# -- reduced forms -----------------------------------------------------------------------------


@dataclass
class ReducedForm:
    """The rescaled operator value b^{-j} R_{e,f}^k u (j = 0, e empty: A_f^k u)."""

    e: tuple
    f: tuple
    k: int
    form: Optional[LambdaForm]

    @property
    def j(self):
        return len(self.e) - 1 if self.e else 0

    @property
    def base(self):
        return complement(self.f, self.e)

    @property
    def is_zero(self):
        return self.form is None

    def values(self, lam):
        return self.form(lam)


def _quad_degree(u, k, j, weighted):
    if not u.is_polynomial:
        return CALLBACK_DEGREE
    return u.r + (k - j) + (1 if weighted else 0)


def _integrate(mesh, u, base, j, cells, lam, zfun=None, degree=None):
    """Integral over ``cells`` of the rescaled pullback, at lambda points ``lam``.

    Returns values (p, ncomp(nb, k - j)).  Without ``zfun`` the plain
    y-integral of u_G(x_K - y, ...) is computed (j must be 0); with it, the
    j-form t -> u_G(t, x_K - y, ...) is wedged with z and integrated.
    """
    n, k = mesh.dim, u.k
    kap = k - j
    nb = len(base)
    lam = as_lambda_points(lam, nb)
    ctx = GContext(mesh, cells, base, degree)
    Ks = alternators(nb, kap)
    out = np.zeros((lam.shape[0], len(Ks)))
    Js = alternators(n, j)
    comp_idx = {I: i for i, I in enumerate(alternators(n, n - j))}
    eye = np.eye(n)
    for cell in cells:
        y = ctx.y_points(cell)
        wq = ctx.weights(cell)
        G = ctx.g_eval(y, lam)                          # (p, q, n)
        bary = ctx.in_cell(cell, G)
        uG = u(cell, bary).reshape(lam.shape[0], len(y), -1)
        DL = ctx.d_lambda(y)                             # (q, nb, n)
        zq = zfun(cell, ctx.bary_q) if zfun is not None else None
        for iK, K in enumerate(Ks):
            W = DL[:, list(K), :]                        # (q, kap, n)
            if zfun is None:
                vf = vectors_to_form(W, n)               # (q, ncomp)
                out[:, iK] += np.einsum("pqI,qI,q->p", uG, vf, wq)
                continue
            integrand = np.zeros(uG.shape[:2])
            for J in Js:
                Jc = tuple(c for c in range(n) if c not in J)
                sgn = _merge_sign(J, Jc)
                T = np.broadcast_to(eye[list(J)], (len(y), j, n))
                vf = vectors_to_form(np.concatenate([T, W], axis=1), n)
                alpha = np.einsum("pqI,qI->pq", uG, vf)
                integrand += sgn * alpha * zq[None, :, comp_idx[Jc]]
            out[:, iK] += integrand @ wq
    return out


def average_values(u, f, lam, degree=None):
    """(A_f^k u) at lambda points of S_f^c; components over dlambda_K, K ⊂ f."""
    mesh = u.mesh
    f = tuple(f)
    cells = macroelement(mesh, f).cells
    if not cells:
        raise ValueError(f"empty macroelement for {f}")
    vol = sum(mesh.cell_volume(c) for c in cells)
    deg = _quad_degree(u, u.k, 0, False) if degree is None else degree
    return _integrate(mesh, u, f, 0, cells, lam, degree=deg) / vol


def average(f, k, u, degree=None):
    """A_f^k u as a LambdaForm on S_f^c (polynomial input) or a callback record."""
    if k != u.k:
        raise ValueError(f"form order {u.k} does not match k={k}")
    f = tuple(f)
    if not u.is_polynomial:
        return ReducedForm((), f, k, _CallbackLambda(f, k, lambda lam: average_values(u, f, lam)))
    form = LambdaForm.from_values(f, k, u.r, lambda lam: average_values(u, f, lam, degree))
    return ReducedForm((), f, k, form)


def reduced_values(u, e, f, weights, lam, degree=None):
    """b^{-j} R_{e,f}^k u at lambda points of S^c_{f∩e*}."""
    mesh = u.mesh
    e, f = tuple(e), tuple(f)
    j = len(e) - 1
    base = complement(f, e)
    zcells = set(weights.z_support(e, f)) if (e, f) in weights.z else set()
    cells = [c for c in omega_ef(mesh, e, f).cells if c in zcells]
    deg = _quad_degree(u, u.k, j, True) if degree is None else degree
    nb = len(base)
    if not cells:
        return np.zeros((as_lambda_points(lam, nb).shape[0], ncomp(nb, u.k - j)))
    return _integrate(mesh, u, base, j, cells, lam,
                      zfun=lambda c, bq: weights.z_values(e, f, c, bq), degree=deg)


def order_reduction(e, f, k, u, weights, degree=None):
    """b^{-j} R_{e,f}^k u for e in Delta_j(f); zero when e is empty or j > k."""
    if k != u.k:
        raise ValueError(f"form order {u.k} does not match k={k}")
    e, f = tuple(e), tuple(f)
    if not set(e) <= set(f):
        raise ValueError(f"{e} is not a subsimplex of {f}")
    j = len(e) - 1
    if not e or j > k:
        return ReducedForm(e, f, k, None)
    base = complement(f, e)
    if not u.is_polynomial:
        return ReducedForm(e, f, k, _CallbackLambda(
            base, k - j, lambda lam: reduced_values(u, e, f, weights, lam)))
    form = LambdaForm.from_values(base, k - j, u.r,
                                  lambda lam: reduced_values(u, e, f, weights, lam, degree))
    return ReducedForm(e, f, k, form)


class _CallbackLambda:
    """Pointwise-only stand-in for a LambdaForm (non-polynomial input)."""

    def __init__(self, base, k, func):
        self.base, self.k, self.func = tuple(base), k, func
        self.r = None

    def __call__(self, lam):
        return self.func(as_lambda_points(lam, len(self.base)))

    def pullback_values(self, mesh, cell, bary, g):
        return LambdaForm.pullback_values(self, mesh, cell, bary, g)

    @property
    def nb(self):
        return len(self.base)


# -- identities for the order reductions ----------------------------------------------------------


@dataclass
class RIdentityResidual:
    e: tuple
    f: tuple
    k: int
    d_relation: float
    delta_plus: float
    scale: float


def _as_form(rf, base, k, r):
    if rf.form is None:
        return LambdaForm.zero(base, k, r) if 0 <= k <= len(base) else None
    return rf.form


class OperatorCache:
    """Memoizes averages and order reductions of one input form."""

    def __init__(self, u, weights):
        self.u = u
        self.weights = weights
        self._red = {}

    def reduced(self, e, f):
        key = (tuple(e), tuple(f))
        if key not in self._red:
            zero = self._vanishing(tuple(e), tuple(f))
            if zero is not None:
                self._red[key] = zero
            elif not e:
                self._red[key] = average(f, self.u.k, self.u)
            else:
                self._red[key] = order_reduction(e, f, self.u.k, self.u, self.weights)
        return self._red[key]

    def _vanishing(self, e, f):
        """Zero reduced form when a polynomial input vanishes on the integration region."""
        u = self.u
        j = len(e) - 1 if e else 0
        if not u.is_polynomial or (e and j > u.k):
            return None
        mesh = u.mesh
        if e:
            cells = omega_ef(mesh, e, f).cells
        else:
            cells = macroelement(mesh, f).cells
        if np.any(u.coeffs[list(cells)]):
            return None
        base = complement(f, e)
        return ReducedForm(e, f, u.k, LambdaForm.zero(base, u.k - j, u.r))


def r_identity_check(e, f, k, u, weights, cache=None, dcache=None):
    """Residuals of R^{k+1} du = (-1)^j dR^k u - (delta R^k u) and delta^+ R^k u = 0.

    Everything is written for P = b^{-j} R:
    b P[du] = (-1)^j (j db ∧ P + b dP) - sum_i (-1)^i P_{e(x_i^), f(x_i^)}.
    """
    e, f = tuple(e), tuple(f)
    j = len(e) - 1
    base = complement(f, e)
    r = u.r
    cache = cache or OperatorCache(u, weights)
    du = u.d()
    dcache = dcache or OperatorCache(du, weights)
    kap = k - j
    # left: b P^{k+1}[du]
    Pdu = _as_form(dcache.reduced(e, f), base, kap + 1, r)
    left = Pdu.mul_b() if Pdu is not None else None
    terms = []
    if 0 <= kap:
        P = _as_form(cache.reduced(e, f), base, kap, r)
        right = (j * P.wedge_db() + P.d().mul_b()) * (-1) ** j
        terms.append(right)
    if j >= 1:
        for i, v in enumerate(e):
            sub = cache.reduced(e[:i] + e[i + 1:], tuple(x for x in f if x != v))
            if sub.form is None:
                continue
            terms.append(sub.form * (-1.0 if i % 2 == 0 else 1.0))
    total = left if left is not None else None
    scale = 0.0
    for t in terms:
        scale = max(scale, t.norm())
        total = (-1.0 * t) if total is None else total - t
    if left is not None:
        scale = max(scale, left.norm())
    d_res = total.norm() if total is not None else 0.0
    # delta^+ relation
    plus = None
    if j >= 1 and kap >= 0:
        for i, v in enumerate(e):
            sub = cache.reduced(e[:i] + e[i + 1:], f)
            if sub.form is None:
                continue
            # R_{e(x_i^), f} = b^{j-1} P, traced to the base of (e, f)
            t = sub.form.trace(base) * (1.0 if i % 2 == 0 else -1.0)
            plus = t if plus is None else plus + t
    p_res = plus.norm() if plus is not None else 0.0
    return RIdentityResidual(e, f, k, d_res, p_res, scale)


# -- cut-off operators ---------------------------------------------------------------------------


@dataclass
class BubbleTerm:
    g: tuple
    e: Optional[tuple]
    factor: float
    reduced: ReducedForm


@dataclass
class LocalBubble:
    """Term list of C_{m,f}^k u: rho_f/rho_g (j = 0) or j! phi_e/rho_g ∧ (j >= 1) terms."""

    mesh: object
    m: int
    f: tuple
    k: int
    terms: list

    @property
    def j(self):
        return len(self.f) - 1 - self.m

    def __call__(self, cell, bary):
        """Pointwise Cartesian values in ``cell`` (off the singular skeleton)."""
        mesh, n, k = self.mesh, self.mesh.dim, self.k
        bary = np.atleast_2d(bary)
        out = np.zeros((bary.shape[0], ncomp(n, k)))
        rho_f = rho_values(mesh, cell, bary, self.f)
        for t in self.terms:
            rf = t.reduced
            if rf.is_zero or (isinstance(rf.form, LambdaForm) and not rf.form.coeffs.any()):
                continue
            vals = rf.form.pullback_values(mesh, cell, bary, t.g)
            if t.e is None:
                ratio = np.ones(bary.shape[0]) if t.g == self.f else \
                    rho_f / rho_values(mesh, cell, bary, t.g)
                out += t.factor * ratio[:, None] * vals
            else:
                phi = whitney_values(mesh, cell, bary, t.e)
                w = wedge(phi, len(t.e) - 1, vals, k - (len(t.e) - 1), n)
                out += t.factor * w / rho_values(mesh, cell, bary, t.g)[:, None]
        return out

    def at_points(self, cell, x):
        return self(cell, self.mesh.barycentric(cell, x))


def cutoff_local(m, f, k, u, weights, cache=None):
    """Term list realizing C_{m,f}^k u for f in Delta_{m+j}, 0 <= j <= k."""
    f = tuple(f)
    j = len(f) - 1 - m
    if j < 0 or j > k:
        raise ValueError(f"simplex of dimension {len(f) - 1} gives j={j} outside [0, {k}]")
    cache = cache or OperatorCache(u, weights)
    terms = []
    if j == 0:
        A = cache.reduced((), f)
        for g in closed_subsimplices(f):
            terms.append(BubbleTerm(g, None, float((-1) ** (len(f) - len(g))), A))
    else:
        for e in itertools.combinations(f, j + 1):
            P = cache.reduced(e, f)
            for g in closed_subsimplices(complement(f, e)):
                terms.append(BubbleTerm(g, e, float(math.factorial(j) * (-1) ** (len(f) - len(g))), P))
    return LocalBubble(u.mesh, m, f, k, terms)


def stage_simplices(mesh, m, k):
    """All f in Delta_{m+j}, 0 <= j <= k, contributing to C_m^k."""
    return [f for j in range(k + 1) if m + j <= mesh.dim for f in mesh.simplices[m + j]]


def local_bubbles(m, k, u, weights, cache=None):
    cache = cache or OperatorCache(u, weights)
    return [cutoff_local(m, f, k, u, weights, cache) for f in stage_simplices(u.mesh, m, k)]


class BubbleIndex:
    """Bubbles grouped by the cells of their macroelements."""

    def __init__(self, bubbles):
        self.bubbles = list(bubbles)
        self.by_cell = {}
        for b in self.bubbles:
            for ci in b.mesh.star(b.f):
                self.by_cell.setdefault(ci, []).append(b)


def sum_bubbles(bubbles, cell, bary):
    """Sum of the bubbles whose simplex lies in ``cell``."""
    if not isinstance(bubbles, BubbleIndex):
        bubbles = BubbleIndex(bubbles)
    bary = np.atleast_2d(bary)
    out = None
    for bub in bubbles.by_cell.get(cell, ()):
        v = bub(cell, bary)
        out = v if out is None else out + v
    if out is None:
        first = bubbles.bubbles[0] if bubbles.bubbles else None
        n = first.mesh.dim if first else bary.shape[1] - 1
        out = np.zeros((bary.shape[0], ncomp(n, first.k if first else 0)))
    return out


@dataclass
class Reconstruction:
    form: PiecewiseForm
    residual: float


def reconstruct(bubbles, mesh, k, r, seed=0, tol=RECON_TOL, strict=True, npts=6):
    """Rebuild the polynomial sum of ``bubbles`` cell by cell and verify it."""
    if not bubbles:
        return Reconstruction(PiecewiseForm.zero(mesh, k, r), 0.0)
    bubbles = BubbleIndex(bubbles)
    form = PiecewiseForm.interpolate(mesh, k, r, lambda c, x: sum_bubbles(bubbles, c, x),
                                     theta=RECON_THETA)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for ci in range(mesh.n_cells):
        pts = interior_points(rng, mesh.dim, npts)
        ref = sum_bubbles(bubbles, ci, pts)
        err = float(np.max(np.abs(form(ci, pts) - ref), initial=0.0))
        worst = max(worst, err / max(1.0, float(np.max(np.abs(ref), initial=0.0))))
    if strict and worst > tol:
        raise ReconstructionError(f"cut-off sum is not a degree-{r} polynomial: residual {worst:.2e}")
    return Reconstruction(form, worst)


def cutoff_global(m, k, u, weights, cache=None, seed=0, tol=RECON_TOL, strict=True,
                  return_residual=False):
    """C_m^k u.  Polynomial input is rebuilt as a PiecewiseForm; m = n is the identity."""
    mesh = u.mesh
    if k != u.k:
        raise ValueError(f"form order {u.k} does not match k={k}")
    if m == mesh.dim:
        return (u, 0.0) if return_residual else u
    cache = cache or OperatorCache(u, weights)
    bubbles = local_bubbles(m, k, u, weights, cache)
    if not u.is_polynomial:
        index = BubbleIndex(bubbles)
        out = PiecewiseForm.from_callback(mesh, k, lambda c, x: sum_bubbles(index, c, x))
        return (out, float("nan")) if return_residual else out
    rec = reconstruct(bubbles, mesh, k, u.r, seed=seed, tol=tol, strict=strict)
    return (rec.form, rec.residual) if return_residual else rec.form


# -- the bubble transform -------------------------------------------------------------------------


@dataclass
class BubbleDecomposition:
    """Stage sums B_m^k u and the local bubbles B_{m,f}^k u."""

    k: int
    source: PiecewiseForm
    stages: list
    bubbles: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    _index: Optional[dict] = field(default=None, repr=False)

    def partial_sum(self, m):
        total = self.stages[0]
        for s in self.stages[1:m + 1]:
            total = total + s
        return total

    def literal_sum(self, cell, bary):
        """sum over all stages of the local bubbles, evaluated from the term lists."""
        if self._index is None:
            self._index = {m: BubbleIndex(b) for m, b in self.bubbles.items()}
        out = 0.0
        for idx in self._index.values():
            out = out + sum_bubbles(idx, cell, bary)
        return out


def bubble_transform(k, u, weights, seed=0, tol=RECON_TOL, strict=True):
    """B_m^k u = C_m^k (u - sum_{j<m} B_j^k u) for m = 0..n."""
    mesh = u.mesh
    n = mesh.dim
    if k != u.k:
        raise ValueError(f"form order {u.k} does not match k={k}")
    stages, bubbles, residuals = [], {}, {}
    rest = u
    for m in range(n + 1):
        cache = OperatorCache(rest, weights)
        bubbles[m] = local_bubbles(m, k, rest, weights, cache)
        if m == n:
            B = rest
            residuals[m] = 0.0
        elif rest.is_polynomial:
            rec = reconstruct(bubbles[m], mesh, k, rest.r, seed=seed + m, tol=tol, strict=strict)
            B, residuals[m] = rec.form, rec.residual
        else:
            B = PiecewiseForm.from_callback(mesh, k, lambda c, x, b=BubbleIndex(bubbles[m]):
                                            sum_bubbles(b, c, x))
            residuals[m] = float("nan")
        stages.append(B)
        rest = rest - B
    return BubbleDecomposition(k, u, stages, bubbles, residuals)


# -- commutator diagnostics -------------------------------------------------------------------------


def _fd_d(bubble, cell, x, h):
    mesh = bubble.mesh
    return exterior_derivative_fd(lambda y: bubble.at_points(cell, y), x, bubble.k, mesh.dim, h)


def commutator_rhs(mesh, f, A, cell, bary):
    """Right side of the commutator identity for the primal cut-off of f."""
    f = tuple(f)
    n = mesh.dim
    k = A.k
    bary = np.atleast_2d(bary)
    dual = sorted({v for ci in mesh.star(f) for v in mesh.cells[ci] if v not in f})
    out = np.zeros((bary.shape[0], ncomp(n, k + 1)))
    for g in closed_subsimplices(f):
        sgn = (-1) ** (len(f) - len(g))
        rg = rho_values(mesh, cell, bary, g)
        LA = A.pullback_values(mesh, cell, bary, g)
        for p in complement(f, g):
            for q in dual:
                phi = whitney_values(mesh, cell, bary, (p, q))  # lambda_p dl_q - lambda_q dl_p
                out += sgn * wedge(phi, 1, LA, k, n) / rg[:, None] ** 2
    return out


def aggregated_commutator_rhs(mesh, m, cache, cell, bary):
    """Right side of the summed commutator identity over f in Delta_m."""
    n = mesh.dim
    k = cache.u.k
    bary = np.atleast_2d(bary)
    out = np.zeros((bary.shape[0], ncomp(n, k + 1)))
    if m + 1 > n:
        return out
    for f in mesh.simplices[m + 1]:
        for e in itertools.combinations(f, 2):
            phi = whitney_values(mesh, cell, bary, e)
            for g in closed_subsimplices(complement(f, e)):
                sgn = (-1) ** (len(f) - len(g))
                rg = rho_values(mesh, cell, bary, g)
                dA = 0.0
                for i, v in enumerate(e):
                    A = cache.reduced((), tuple(x for x in f if x != v)).form
                    dA = dA + (-1) ** i * A.pullback_values(mesh, cell, bary, g)
                out += sgn * wedge(phi, 1, dA, k, n) / rg[:, None] ** 2
    return out


@dataclass
class CommutatorProbe:
    f: tuple
    inside: float
    outside: float
    aggregated: float
    scale: float


def commutator_probe(m, f, k, u, weights=None, seed=0, npts=4, h=1e-5):
    """Compare dC_{m,f}u - C_{m,f}^{k+1}du with its closed form at sample points.

    Both sides of the single-simplex identity are evaluated inside and
    outside Omega_f; the summed identity over Delta_m is checked inside.
    """
    mesh = u.mesh
    f = tuple(f)
    if len(f) - 1 != m:
        raise ValueError("the commutator probe needs f in Delta_m")
    cache = OperatorCache(u, weights)
    dcache = OperatorCache(u.d(), weights)
    bub = cutoff_local(m, f, k, u, weights, cache)
    dbub = cutoff_local(m, f, k + 1, u.d(), weights, dcache)
    A = cache.reduced((), f).form
    rng = np.random.default_rng(seed)
    inside = outside = scale = 0.0
    star = set(mesh.star(f))
    for ci in range(mesh.n_cells):
        bary = interior_points(rng, mesh.dim, npts)
        x = mesh.to_cartesian(ci, bary)
        lhs = _fd_d(bub, ci, x, h * mesh.cell_diameter(ci)) - dbub(ci, bary)
        rhs = commutator_rhs(mesh, f, A, ci, bary)
        err = float(np.max(np.abs(lhs - rhs), initial=0.0))
        scale = max(scale, float(np.max(np.abs(rhs), initial=0.0)))
        if ci in star:
            inside = max(inside, err)
        else:
            outside = max(outside, err, float(np.max(np.abs(rhs), initial=0.0)))
    # summed identity
    agg = 0.0
    bubs = [cutoff_local(m, g, k, u, weights, cache) for g in mesh.simplices[m]]
    dbubs = [cutoff_local(m, g, k + 1, u.d(), weights, dcache) for g in mesh.simplices[m]]
    for ci in range(mesh.n_cells):
        bary = interior_points(rng, mesh.dim, npts)
        x = mesh.to_cartesian(ci, bary)
        lhs = 0.0
        for b1, b2 in zip(bubs, dbubs):
            if not set(b1.f) <= set(mesh.cells[ci]):
                continue
            lhs = lhs + _fd_d(b1, ci, x, h * mesh.cell_diameter(ci)) - b2(ci, bary)
        rhs = aggregated_commutator_rhs(mesh, m, cache, ci, bary)
        agg = max(agg, float(np.max(np.abs(lhs - rhs), initial=0.0)))
    return CommutatorProbe(f, inside, outside, agg, scale)


# -- scalar closed forms ------------------------------------------------------------------------------


def scalar_cutoff_closed_form(mesh, f, A, cell, bary):
    """Explicit scalar cut-off for a vertex or an edge, written out term by term."""
    f = tuple(f)
    bary = np.atleast_2d(bary)
    lam, _ = global_lambda(mesh, cell, bary, f)
    Aval = lambda pts: A(np.asarray(pts, float))[:, 0]
    if len(f) == 1:
        l0 = lam[:, 0]
        return Aval(l0[:, None]) - (1 - l0) * Aval(np.zeros((len(l0), 1)))
    if len(f) == 2:
        l0, l1 = lam[:, 0], lam[:, 1]
        z = np.zeros_like(l0)
        r = 1 - l0 - l1
        return (Aval(np.stack([l0, l1], 1)) - r / (1 - l0) * Aval(np.stack([l0, z], 1))
                - r / (1 - l1) * Aval(np.stack([z, l1], 1)) + r * Aval(np.stack([z, z], 1)))
    raise ValueError("closed forms are available for vertices and edges only")
