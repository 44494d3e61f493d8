"""Polynomial and piecewise-polynomial differential forms.

Pointwise values of a k-form on R^n are stored as arrays whose last axis
runs over the ascending index sets I of ``alternators(n, k)``, i.e. the
coefficients of dx_I.  Per-cell polynomial coefficients use homogeneous
barycentric monomials of degree r.  Forms on the coordinate simplex S_f^c
(``LambdaForm``) use ordinary monomials of degree <= r in the lambda
variables of their base simplex and alternators dlambda_K.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import (corner_lattice, grundmann_moller, interior_points,
                         multi_indices, multi_indices_upto, principal_lattice)

# -- pointwise alternating algebra --------------------------------------------------


@lru_cache(maxsize=None)
def alternators(n, k):
    """Ascending index sets of size k in range(n)."""
    if k < 0 or k > n:
        return ()
    return tuple(itertools.combinations(range(n), k))


def ncomp(n, k):
    return math.comb(n, k) if 0 <= k <= n else 0


def _merge_sign(a, b):
    """Sign of the permutation sorting the concatenation a + b (disjoint sets)."""
    inv = sum(1 for x in a for y in b if x > y)
    return -1 if inv % 2 else 1


@lru_cache(maxsize=None)
def _wedge_table(n, ka, kb):
    idx = {I: i for i, I in enumerate(alternators(n, ka + kb))}
    rows = []
    for ia, A in enumerate(alternators(n, ka)):
        for ib, B in enumerate(alternators(n, kb)):
            if set(A) & set(B):
                continue
            rows.append((ia, ib, idx[tuple(sorted(A + B))], _merge_sign(A, B)))
    return np.array(rows, dtype=int).reshape(-1, 4)


def wedge(a, ka, b, kb, n):
    """Wedge product of pointwise forms ``a`` (order ka) and ``b`` (order kb)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(shape + (ncomp(n, ka + kb),))
    if ka + kb > n:
        return out
    for ia, ib, io, s in _wedge_table(n, ka, kb):
        out[..., io] += s * a[..., ia] * b[..., ib]
    return out


def vectors_to_form(vectors, n):
    """Components of v_1 ∧ ... ∧ v_k read as a k-form (rows of ``vectors``).

    ``vectors`` has shape (..., k, n); the result holds det(V[..., :, I]).
    """
    vectors = np.asarray(vectors, float)
    k = vectors.shape[-2]
    if k == 0:
        return np.ones(vectors.shape[:-2] + (1,))
    out = np.empty(vectors.shape[:-2] + (ncomp(n, k),))
    for i, I in enumerate(alternators(n, k)):
        out[..., i] = np.linalg.det(vectors[..., :, list(I)]) if k > 1 else vectors[..., 0, I[0]]
    return out


def apply_form(omega, vectors, n):
    """Evaluate pointwise k-form ``omega`` on vectors of shape (..., k, n)."""
    return np.sum(np.asarray(omega) * vectors_to_form(vectors, n), axis=-1)


@lru_cache(maxsize=None)
def _contract_table(n, k):
    idx = {I: i for i, I in enumerate(alternators(n, k - 1))}
    rows = []
    for i, I in enumerate(alternators(n, k)):
        for pos, c in enumerate(I):
            rest = I[:pos] + I[pos + 1:]
            rows.append((i, c, idx[rest], -1 if pos % 2 else 1))
    return np.array(rows, dtype=int).reshape(-1, 4)


def contract(omega, k, v, n):
    """Insert vector field values ``v`` (..., n) into the first slot of ``omega``."""
    if k == 0:
        raise ValueError("cannot contract a 0-form")
    omega, v = np.asarray(omega, float), np.asarray(v, float)
    shape = np.broadcast_shapes(omega.shape[:-1], v.shape[:-1])
    out = np.zeros(shape + (ncomp(n, k - 1),))
    for i, c, io, s in _contract_table(n, k):
        out[..., io] += s * omega[..., i] * v[..., c]
    return out


def exterior_derivative_fd(func, x, k, n, h=1e-5):
    """Central-difference exterior derivative of a pointwise form field.

    ``func`` maps points (p, n) to values (p, ncomp(n, k)).
    """
    x = np.atleast_2d(x)
    partial = []
    for c in range(n):
        e = np.zeros(n)
        e[c] = h
        partial.append((func(x + e) - func(x - e)) / (2 * h))
    out = np.zeros((x.shape[0], ncomp(n, k + 1)))
    dx = np.eye(n)
    for c in range(n):
        out += wedge(dx[c], 1, partial[c], k, n)
    return out


# -- barycentric monomials on cells ---------------------------------------------------


@lru_cache(maxsize=None)
def cell_monomials(n, r):
    """Exponents (nmono, n+1) of homogeneous degree-r barycentric monomials."""
    return np.array(multi_indices(n + 1, r), dtype=int).reshape(-1, n + 1)


def monomial_values(exps, bary):
    """Values of monomials with exponents ``exps`` at points ``bary``."""
    bary = np.asarray(bary, float)
    if exps.shape[1] == 0:
        return np.ones((bary.shape[0], exps.shape[0]))
    return np.prod(bary[:, None, :] ** exps[None, :, :], axis=2)


@lru_cache(maxsize=None)
def _cell_derivative_mats(n, r):
    """Matrices of d/dlambda_i followed by degree elevation with sum(lambda)."""
    exps = cell_monomials(n, r)
    idx = {tuple(a): i for i, a in enumerate(exps)}
    mats = np.zeros((n + 1, len(exps), len(exps)))
    for j, a in enumerate(exps):
        for i in range(n + 1):
            if a[i] == 0:
                continue
            for l in range(n + 1):
                b = list(a)
                b[i] -= 1
                b[l] += 1
                mats[i, idx[tuple(b)], j] += a[i]
    return mats


@lru_cache(maxsize=None)
def _lattice_inverse(n, r, theta):
    nodes = principal_lattice(n, r)
    if theta:
        nodes = (1 - theta) * nodes + theta / (n + 1)
    V = monomial_values(cell_monomials(n, r), nodes)
    return nodes, np.linalg.inv(V)


@lru_cache(maxsize=None)
def _elevation_mat(n, r0, r1):
    """Coefficient map multiplying by (sum lambda)^(r1 - r0)."""
    e0, e1 = cell_monomials(n, r0), cell_monomials(n, r1)
    idx = {tuple(a): i for i, a in enumerate(e1)}
    M = np.zeros((len(e1), len(e0)))
    for j, a in enumerate(e0):
        for beta in multi_indices(n + 1, r1 - r0):
            coef = math.factorial(r1 - r0) / math.prod(math.factorial(b) for b in beta)
            M[idx[tuple(np.add(a, beta))], j] += coef
    return M


# -- global barycentric helpers ---------------------------------------------------------


def global_lambda(mesh, cell, bary, verts):
    """Values (p, len(verts)) and gradients (len(verts), n) of global lambda_v in ``cell``.

    Vertices outside the cell give identically zero coordinates.
    """
    c = mesh.cells[cell]
    bary = np.atleast_2d(bary)
    vals = np.zeros((bary.shape[0], len(verts)))
    grads = np.zeros((len(verts), mesh.dim))
    G = mesh.cell_grads(cell)
    for a, v in enumerate(verts):
        if v in c:
            i = c.index(v)
            vals[:, a] = bary[:, i]
            grads[a] = G[i]
    return vals, grads


def whitney_values(mesh, cell, bary, f):
    """Pointwise Cartesian components of the Whitney form phi_f."""
    n, m = mesh.dim, len(f) - 1
    lam, grads = global_lambda(mesh, cell, bary, f)
    out = np.zeros((lam.shape[0], ncomp(n, m)))
    for i in range(m + 1):
        rest = np.delete(grads, i, axis=0)
        out += (-1) ** i * lam[:, i:i + 1] * vectors_to_form(rest, n)[None, :]
    return out


def rho_values(mesh, cell, bary, f):
    """rho_f = 1 - sum of lambda_i over vertices of f (1 for the empty simplex)."""
    bary = np.atleast_2d(bary)
    if len(f) == 0:
        return np.ones(bary.shape[0])
    lam, _ = global_lambda(mesh, cell, bary, f)
    return 1.0 - lam.sum(axis=1)


# -- piecewise forms ---------------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialForm:
    """Degree-r k-form on one cell: coefficients (nmono, ncomp)."""

    cell: int
    n: int
    k: int
    r: int
    coeffs: np.ndarray

    def __call__(self, bary):
        return monomial_values(cell_monomials(self.n, self.r), bary) @ self.coeffs

    def items(self):
        """Nonzero entries as ((monomial exponents, alternator), coefficient)."""
        exps = cell_monomials(self.n, self.r)
        alts = alternators(self.n, self.k)
        for a in range(self.coeffs.shape[0]):
            for I in range(self.coeffs.shape[1]):
                if self.coeffs[a, I] != 0:
                    yield (tuple(int(x) for x in exps[a]), alts[I]), float(self.coeffs[a, I])


class PiecewiseForm:
    """Piecewise smooth k-form on a mesh.

    Either polynomial, with ``coeffs`` of shape (ncells, nmono, ncomp) for
    homogeneous degree-``r`` barycentric monomials, or given by a callback
    ``evaluator(cell, bary) -> (p, ncomp)``.
    """

    def __init__(self, mesh, k, r=None, coeffs=None, evaluator=None):
        self.mesh = mesh
        self.k = k
        self.r = r
        n = mesh.dim
        if coeffs is None and evaluator is None:
            raise ValueError("need coefficients or an evaluator")
        if coeffs is not None:
            coeffs = np.asarray(coeffs, float)
            want = (mesh.n_cells, len(cell_monomials(n, r)), ncomp(n, k))
            if coeffs.shape != want:
                raise ValueError(f"coefficient shape {coeffs.shape} != {want}")
        self.coeffs = coeffs
        self._evaluator = evaluator

    @property
    def n(self):
        return self.mesh.dim

    @property
    def is_polynomial(self):
        return self.coeffs is not None

    # construction

    @classmethod
    def zero(cls, mesh, k, r=0):
        n = mesh.dim
        return cls(mesh, k, r, np.zeros((mesh.n_cells, len(cell_monomials(n, r)), ncomp(n, k))))

    @classmethod
    def from_callback(cls, mesh, k, evaluator):
        return cls(mesh, k, evaluator=evaluator)

    @classmethod
    def interpolate(cls, mesh, k, r, func, theta=0.0, cells=None):
        """Fit degree-r polynomials per cell to ``func(cell, bary)`` at lattice nodes.

        ``theta`` > 0 pulls the nodes toward the centroid, keeping them off
        the cell boundary.
        """
        n = mesh.dim
        nodes, Vinv = _lattice_inverse(n, r, float(theta))
        coeffs = np.zeros((mesh.n_cells, len(nodes), ncomp(n, k)))
        for ci in (range(mesh.n_cells) if cells is None else cells):
            coeffs[ci] = Vinv @ np.asarray(func(ci, nodes), float).reshape(len(nodes), -1)
        return cls(mesh, k, r, coeffs)

    # evaluation

    def __call__(self, cell, bary):
        bary = np.atleast_2d(bary)
        if self.coeffs is not None:
            return monomial_values(cell_monomials(self.n, self.r), bary) @ self.coeffs[cell]
        return np.asarray(self._evaluator(cell, bary), float).reshape(bary.shape[0], -1)

    def at_points(self, cell, x):
        return self(cell, self.mesh.barycentric(cell, x))

    def cell_form(self, cell):
        if self.coeffs is None:
            raise ValueError("callback forms have no coefficients")
        return PolynomialForm(cell, self.n, self.k, self.r, self.coeffs[cell])

    # algebra

    def elevate(self, r):
        if not self.is_polynomial:
            return self
        if r == self.r:
            return self
        if r < self.r:
            raise ValueError("cannot lower the nominal degree")
        M = _elevation_mat(self.n, self.r, r)
        return PiecewiseForm(self.mesh, self.k, r, np.einsum("ab,cbi->cai", M, self.coeffs))

    def _binary(self, other, op):
        if not isinstance(other, PiecewiseForm) or other.k != self.k or other.mesh is not self.mesh:
            raise ValueError("forms must share mesh and order")
        if self.is_polynomial and other.is_polynomial:
            r = max(self.r, other.r)
            return PiecewiseForm(self.mesh, self.k, r,
                                 op(self.elevate(r).coeffs, other.elevate(r).coeffs))
        a, b = self, other
        return PiecewiseForm.from_callback(self.mesh, self.k,
                                           lambda c, x: op(a(c, x), b(c, x)))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, s):
        s = float(s)
        if self.is_polynomial:
            return PiecewiseForm(self.mesh, self.k, self.r, s * self.coeffs)
        a = self
        return PiecewiseForm.from_callback(self.mesh, self.k, lambda c, x: s * a(c, x))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def d(self):
        """Exterior derivative (nominal degree kept at r)."""
        return exterior_derivative(self)

    def max_abs(self):
        return float(np.max(np.abs(self.coeffs))) if self.is_polynomial else float("nan")

    def __repr__(self):
        kind = f"r={self.r}" if self.is_polynomial else "callback"
        return f"PiecewiseForm(k={self.k}, {kind}, cells={self.mesh.n_cells})"


def exterior_derivative(u):
    """d u for a PiecewiseForm or LambdaForm; order k = n gives the zero form."""
    if isinstance(u, LambdaForm):
        return u.d()
    mesh, n, k = u.mesh, u.n, u.k
    if k >= n:
        return _top_zero(u)
    if not u.is_polynomial:
        def ev(cell, bary, u=u):
            return exterior_derivative_fd(
                lambda x: u.at_points(cell, x), mesh.to_cartesian(cell, bary), k, n)
        return PiecewiseForm.from_callback(mesh, k + 1, ev)
    mats = _cell_derivative_mats(n, u.r)
    # dl[i, cell] = d/dlambda_i of the coefficient polynomials
    dl = np.einsum("iab,cbI->icaI", mats, u.coeffs)
    out = np.zeros((mesh.n_cells, u.coeffs.shape[1], ncomp(n, k + 1)))
    table = _wedge_table(n, 1, k)
    for ci in range(mesh.n_cells):
        G = mesh.cell_grads(ci)
        part = np.einsum("ic,iaI->caI", G, dl[:, ci])
        for c_, iI, io, s in table:
            out[ci, :, io] += s * part[c_, :, iI]
    return PiecewiseForm(mesh, k + 1, u.r, out)


def _top_zero(u):
    # d of an n-form: the (n+1)-form space is trivial
    r = u.r if u.is_polynomial else 0
    mesh = u.mesh
    return PiecewiseForm(mesh, u.n + 1, r, np.zeros((mesh.n_cells, len(cell_monomials(u.n, r)), 0)))


def wedge_forms(u, v):
    """Pointwise wedge product of two PiecewiseForms."""
    if u.mesh is not v.mesh:
        raise ValueError("forms live on different meshes")
    n = u.n
    if u.is_polynomial and v.is_polynomial:
        r = u.r + v.r
        return PiecewiseForm.interpolate(
            u.mesh, u.k + v.k, r, lambda c, x: wedge(u(c, x), u.k, v(c, x), v.k, n))
    return PiecewiseForm.from_callback(
        u.mesh, u.k + v.k, lambda c, x: wedge(u(c, x), u.k, v(c, x), v.k, n))


def contract_field(u, a):
    """u ⌟ (x - a) as a PiecewiseForm (degree rises by one)."""
    mesh, n = u.mesh, u.n
    a = np.asarray(a, float)

    def ev(c, bary):
        x = mesh.to_cartesian(c, bary)
        return contract(u(c, bary), u.k, x - a, n)

    if u.is_polynomial:
        return PiecewiseForm.interpolate(mesh, u.k - 1, u.r + 1, ev)
    return PiecewiseForm.from_callback(mesh, u.k - 1, ev)


# -- traces --------------------------------------------------------------------------------


@dataclass
class FaceTrace:
    """Trace values on simplex f: components over tangent alternators of f."""

    face: tuple
    values: np.ndarray
    jump: float


def trace_to(u, f, bary_f):
    """Trace of ``u`` on simplex ``f`` at barycentric points of ``f``.

    The tangent frame is t_a = x_{f_a} - x_{f_0}, a = 1..m.  Components are
    u(t_A) for ascending A of size k; they are zero when k > m.  ``jump`` is
    the largest disagreement between the cells containing ``f``.
    """
    mesh = u.mesh
    f = tuple(f)
    m = len(f) - 1
    bary_f = np.atleast_2d(bary_f)
    X = mesh.vertices[list(f)]
    T = X[1:] - X[0]
    alts = alternators(m, u.k)
    if u.k > m:
        return FaceTrace(f, np.zeros((bary_f.shape[0], 0)), 0.0)
    vals = []
    for ci in mesh.star(f):
        c = mesh.cells[ci]
        bary = np.zeros((bary_f.shape[0], mesh.dim + 1))
        for a, v in enumerate(f):
            bary[:, c.index(v)] = bary_f[:, a]
        w = u(ci, bary)
        comp = np.stack([apply_form(w, T[list(A)][None], mesh.dim) for A in alts], axis=-1)
        vals.append(comp)
    vals = np.array(vals)
    jump = float(np.max(np.abs(vals - vals[0]))) if len(vals) else 0.0
    return FaceTrace(f, vals[0], jump)


def face_lattice(f, r):
    """Degree-r principal lattice on simplex f (barycentric in f)."""
    return principal_lattice(len(f) - 1, max(r, 1))


def trace_jump(u, r=None):
    """Largest trace disagreement over interior (n-1)-faces."""
    mesh = u.mesh
    deg = r if r is not None else (u.r or 2)
    worst = 0.0
    for face in mesh.simplices[mesh.dim - 1]:
        if len(mesh.star(face)) == 2:
            worst = max(worst, trace_to(u, face, face_lattice(face, deg + 1)).jump)
    return worst


# -- named forms ---------------------------------------------------------------------------


def whitney(mesh, f, r=1):
    """Whitney form phi_f as a PiecewiseForm of nominal degree r."""
    f = tuple(f)
    return PiecewiseForm.interpolate(mesh, len(f) - 1, r,
                                     lambda c, x: whitney_values(mesh, c, x, f))


def rho(mesh, f):
    """The piecewise linear 0-form rho_f."""
    f = tuple(f)
    return PiecewiseForm.interpolate(mesh, 0, 1, lambda c, x: rho_values(mesh, c, x, f)[:, None])


def barycentric_form(mesh, v, r=1):
    return PiecewiseForm.interpolate(
        mesh, 0, r, lambda c, x: global_lambda(mesh, c, x, (v,))[0])


# -- lambda forms on S_f^c ------------------------------------------------------------------


@lru_cache(maxsize=None)
def lambda_monomials(nb, r):
    idx = multi_indices_upto(nb, r)
    return np.array(idx, dtype=int).reshape(len(idx), nb)


@lru_cache(maxsize=None)
def _lambda_vandermonde_inv(nb, r):
    nodes = corner_lattice(nb, r)
    V = monomial_values(lambda_monomials(nb, r), nodes)
    return nodes, np.linalg.inv(V)


@lru_cache(maxsize=None)
def _lambda_embed(nb, r0, r1):
    e0, e1 = lambda_monomials(nb, r0), lambda_monomials(nb, r1)
    idx = {tuple(a): i for i, a in enumerate(e1)}
    M = np.zeros((len(e1), len(e0)))
    for j, a in enumerate(e0):
        M[idx[tuple(a)], j] = 1.0
    return M


def as_lambda_points(lam, nb):
    """Lambda points as a (p, nb) array; nb may be zero."""
    lam = np.asarray(lam, float)
    if lam.ndim == 2 and lam.shape[1] == nb:
        return lam
    if nb == 0:
        return np.zeros((max(1, lam.shape[0]) if lam.ndim else 1, 0))
    return lam.reshape(-1, nb)


class LambdaForm:
    """Polynomial kappa-form on S_base^c in the lambda variables of ``base``.

    ``coeffs`` has shape (nmono, ncomp) over ``lambda_monomials(len(base), r)``
    and ``alternators(len(base), k)``; alternator indices are positions in
    ``base``.
    """

    def __init__(self, base, k, r, coeffs):
        self.base = tuple(base)
        self.k = k
        self.r = r
        nb = len(self.base)
        coeffs = np.asarray(coeffs, float)
        want = (len(lambda_monomials(nb, r)), ncomp(nb, k))
        if coeffs.shape != want:
            raise ValueError(f"coefficient shape {coeffs.shape} != {want}")
        self.coeffs = coeffs

    @property
    def nb(self):
        return len(self.base)

    @classmethod
    def zero(cls, base, k, r=0):
        nb = len(base)
        return cls(base, k, r, np.zeros((len(lambda_monomials(nb, r)), ncomp(nb, k))))

    @classmethod
    def from_values(cls, base, k, r, func):
        """Interpolate ``func(lam) -> (p, ncomp)`` at the degree-r corner lattice."""
        nb = len(base)
        if ncomp(nb, k) == 0:
            return cls.zero(base, k, r)
        nodes, Vinv = _lambda_vandermonde_inv(nb, r)
        vals = np.asarray(func(nodes), float).reshape(len(nodes), -1)
        return cls(base, k, r, Vinv @ vals)

    @staticmethod
    def nodes(nb, r):
        return corner_lattice(nb, r)

    def __call__(self, lam):
        lam = as_lambda_points(lam, self.nb)
        return monomial_values(lambda_monomials(self.nb, self.r), lam) @ self.coeffs

    def elevate(self, r):
        if r == self.r:
            return self
        if r < self.r:
            raise ValueError("cannot lower the nominal degree")
        return LambdaForm(self.base, self.k, r, _lambda_embed(self.nb, self.r, r) @ self.coeffs)

    def _check(self, other):
        if other.base != self.base or other.k != self.k:
            raise ValueError(f"incompatible lambda forms {self} and {other}")

    def __add__(self, other):
        self._check(other)
        r = max(self.r, other.r)
        return LambdaForm(self.base, self.k, r, self.elevate(r).coeffs + other.elevate(r).coeffs)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, s):
        return LambdaForm(self.base, self.k, self.r, float(s) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def norm(self):
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def d(self):
        nb, r, k = self.nb, self.r, self.k
        out = LambdaForm.zero(self.base, k + 1, r)
        if k + 1 > nb or r == 0 or self.coeffs.size == 0:
            return out
        exps = lambda_monomials(nb, r)
        idx = {tuple(a): i for i, a in enumerate(exps)}
        table = _wedge_table(nb, 1, k)
        for a, alpha in enumerate(exps):
            for i in range(nb):
                if alpha[i] == 0:
                    continue
                beta = list(alpha)
                beta[i] -= 1
                row = idx[tuple(beta)]
                for c_, iI, io, s in table:
                    if c_ == i:
                        out.coeffs[row, io] += s * alpha[i] * self.coeffs[a, iI]
        return out

    def trace(self, sub):
        """Restriction to S_sub^c for ``sub`` a subset of the base."""
        sub = tuple(sub)
        pos = [self.base.index(v) for v in sub]
        drop = [i for i in range(self.nb) if i not in pos]
        exps = lambda_monomials(self.nb, self.r)
        sexps = lambda_monomials(len(sub), self.r)
        sidx = {tuple(a): i for i, a in enumerate(sexps)}
        alts = alternators(self.nb, self.k)
        salts = {A: i for i, A in enumerate(alternators(len(sub), self.k))}
        out = LambdaForm.zero(sub, self.k, self.r)
        for a, alpha in enumerate(exps):
            if any(alpha[i] for i in drop):
                continue
            row = sidx[tuple(alpha[p] for p in pos)]
            for iK, K in enumerate(alts):
                if all(x in pos for x in K):
                    newK = tuple(pos.index(x) for x in K)
                    # positions keep their relative order since sub is ascending
                    out.coeffs[row, salts[newK]] += self.coeffs[a, iK]
        return out

    def mul_b(self):
        """Product with b(lambda) = 1 - sum(lambda)."""
        nb, r = self.nb, self.r
        out = LambdaForm.zero(self.base, self.k, r + 1)
        exps = lambda_monomials(nb, r)
        idx = {tuple(a): i for i, a in enumerate(lambda_monomials(nb, r + 1))}
        for a, alpha in enumerate(exps):
            out.coeffs[idx[tuple(alpha)]] += self.coeffs[a]
            for i in range(nb):
                beta = list(alpha)
                beta[i] += 1
                out.coeffs[idx[tuple(beta)]] -= self.coeffs[a]
        return out

    def wedge_db(self):
        """db ∧ self with db = -sum dlambda_i."""
        nb, k = self.nb, self.k
        out = LambdaForm.zero(self.base, k + 1, self.r)
        if k + 1 > nb:
            return out
        for c_, iI, io, s in _wedge_table(nb, 1, k):
            out.coeffs[:, io] -= s * self.coeffs[:, iI]
        return out

    def pullback_values(self, mesh, cell, bary, g):
        """Pointwise Cartesian values of L_g^* self in ``cell``.

        lambda_i is replaced by lambda_i(x) for vertices of g and by 0 for the
        rest of the base; dlambda_i pulls back to grad lambda_i on g and 0
        otherwise.
        """
        g = tuple(g)
        n = mesh.dim
        bary = np.atleast_2d(bary)
        lam, grads = global_lambda(mesh, cell, bary, self.base)
        ing = np.array([v in g for v in self.base], dtype=bool)
        lam = lam * ing[None, :]
        vals = self(lam)
        out = np.zeros((bary.shape[0], ncomp(n, self.k)))
        if self.k > n:
            return out
        for iK, K in enumerate(alternators(self.nb, self.k)):
            if not all(ing[list(K)]):
                continue
            out += vals[:, iK:iK + 1] * vectors_to_form(grads[list(K)], n)[None, :]
        return out

    def __repr__(self):
        return f"LambdaForm(base={list(self.base)}, k={self.k}, r={self.r})"


def lambda_pullback(mesh, g, w, r=None):
    """L_g^* w as a polynomial PiecewiseForm of degree ``r`` (default w.r)."""
    deg = w.r if r is None else r
    return PiecewiseForm.interpolate(mesh, w.k, deg,
                                     lambda c, x: w.pullback_values(mesh, c, x, g))


# -- membership and norms ------------------------------------------------------------------


def _reproduction_error(u, r, rng, npts=8):
    mesh = u.mesh
    # callbacks may be singular on the skeleton, so fit them at a shrunk lattice
    fit = PiecewiseForm.interpolate(mesh, u.k, r, u, theta=0.0 if u.is_polynomial else 0.5)
    worst, scale = 0.0, 0.0
    for ci in range(mesh.n_cells):
        pts = interior_points(rng, mesh.dim, npts, margin=0.0 if u.is_polynomial else 0.02)
        a, b = u(ci, pts), fit(ci, pts)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            return math.inf, scale
        worst = max(worst, float(np.max(np.abs(a - b), initial=0.0)))
        scale = max(scale, float(np.max(np.abs(a), initial=0.0)))
    return worst, scale


def membership_Pr(u, r, tol=1e-9, seed=0):
    """True if ``u`` coincides with its degree-r interpolant at random check points."""
    worst, scale = _reproduction_error(u, r, np.random.default_rng(seed))
    return worst <= tol * max(1.0, scale)


def _contraction_anchors(mesh):
    lo = mesh.vertices.min(axis=0)
    ext = max(float(np.ptp(mesh.vertices, axis=0).max()), 1.0)
    return [lo - 0.5] + [lo - 0.5 + 1.7 * ext * e for e in np.eye(mesh.dim)]


def membership_Pr_minus(u, r, tol=1e-9, seed=0):
    """P_r test plus the P_r test of u ⌟ (x - a) for n+1 affinely independent a."""
    if not membership_Pr(u, r, tol, seed):
        return False
    if u.k == 0:
        return True
    for a in _contraction_anchors(u.mesh):
        v = contract_field(u, a) if u.is_polynomial else PiecewiseForm.from_callback(
            u.mesh, u.k - 1,
            lambda c, x, a=a: contract(u(c, x), u.k, u.mesh.to_cartesian(c, x) - a, u.n))
        if not membership_Pr(v, r, tol, seed + 1):
            return False
    return True


def l2_inner(u, v, degree=None):
    """L^2 inner product with the Euclidean norm of the dx_I coefficients."""
    mesh = u.mesh
    if degree is None:
        degree = (u.r + v.r) if (u.is_polynomial and v.is_polynomial) else 12
    pts, wts = grundmann_moller(mesh.dim, degree)
    total = 0.0
    for ci in range(mesh.n_cells):
        total += mesh.cell_volume(ci) * float(np.sum(wts * np.sum(u(ci, pts) * v(ci, pts), axis=1)))
    return total


def l2_norm(u, degree=None):
    return math.sqrt(max(l2_inner(u, u, degree), 0.0))


# -- random forms ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Term:
    coef: float
    alpha: tuple   # ((vertex, exponent), ...)
    J: tuple       # global vertex ids for dlambda_J or Whitney simplex
    whitney: bool


def _eval_terms(mesh, terms, cell, bary, k):
    n = mesh.dim
    bary = np.atleast_2d(bary)
    cset = set(mesh.cells[cell])
    out = np.zeros((bary.shape[0], ncomp(n, k)))
    for t in terms:
        if not all(v in cset for v, _ in t.alpha) or not all(v in cset for v in t.J):
            continue
        verts = tuple(v for v, _ in t.alpha)
        lam, _ = global_lambda(mesh, cell, bary, verts)
        scal = np.prod(lam ** np.array([e for _, e in t.alpha]), axis=1) if verts else \
            np.ones(bary.shape[0])
        if t.whitney:
            form = whitney_values(mesh, cell, bary, t.J)
        else:
            _, grads = global_lambda(mesh, cell, bary, t.J)
            form = np.broadcast_to(vectors_to_form(grads, n), out.shape)
        out += t.coef * scal[:, None] * form
    return out


FORM_CLASSES = ("Pr", "Pr_minus", "whitney_span")


def random_form(mesh, k, r, cls="Pr", seed=0):
    """Reproducible random element of P_r, P_r^- or the Whitney span.

    Terms are global products lambda^alpha dlambda_J (or lambda^alpha phi_J)
    with all indices taken from a single cell, so traces are single valued.
    """
    if cls not in FORM_CLASSES:
        raise ValueError(f"unsupported form class {cls!r}")
    n = mesh.dim
    if not 0 <= k <= n:
        raise ValueError(f"order k={k} outside [0, {n}]")
    if r < 1 and cls != "whitney_span":
        raise ValueError("degree must be at least 1")
    rng = np.random.default_rng(seed)
    terms = []
    if cls == "whitney_span":
        for s in mesh.simplices[k]:
            terms.append(_Term(rng.standard_normal(), (), s, True))
        r = max(r, 1)
    else:
        deg = r if cls == "Pr" else r - 1
        for c in mesh.cells:
            for J in itertools.combinations(c, k if cls == "Pr" else k + 1):
                alpha = multi_indices(n + 1, deg)[rng.integers(len(multi_indices(n + 1, deg)))]
                al = tuple((v, int(e)) for v, e in zip(c, alpha) if e)
                terms.append(_Term(rng.standard_normal(), al, J, cls == "Pr_minus"))
    return PiecewiseForm.interpolate(mesh, k, r, lambda c, x: _eval_terms(mesh, terms, c, x, k))


def localized_form(mesh, k, r, v, seed=0):
    """Random element of P_r supported on the star of vertex ``v``.

    Every term carries the factor lambda_v; the remaining degree r-1 and the
    dlambda_J are drawn from the cell, with all combinations present.
    """
    if r < 1 or not 0 <= k <= mesh.dim:
        raise ValueError(f"need r >= 1 and 0 <= k <= n, got r={r}, k={k}")
    rng = np.random.default_rng(seed)
    terms = []
    for ci in mesh.star((v,)):
        c = mesh.cells[ci]
        for alpha in multi_indices(mesh.dim + 1, r - 1):
            al = {w: int(a) for w, a in zip(c, alpha) if a}
            al[v] = al.get(v, 0) + 1
            for J in itertools.combinations(c, k):
                terms.append(_Term(rng.standard_normal(), tuple(sorted(al.items())), J, False))
    return PiecewiseForm.interpolate(mesh, k, r, lambda c, x: _eval_terms(mesh, terms, c, x, k))


# -- JSON form descriptions --------------------------------------------------------------------


def form_from_dict(mesh, data, k=None):
    """Build a form from the JSON description used by the command line."""
    cls = data.get("class")
    if cls == "coefficients":
        kk, r = int(data["k"]), int(data["r"])
        n = mesh.dim
        exps = {tuple(a): i for i, a in enumerate(cell_monomials(n, r))}
        alts = {A: i for i, A in enumerate(alternators(n, kk))}
        u = PiecewiseForm.zero(mesh, kk, r)
        for cid, entries in data["cells"].items():
            for key, val in entries.items():
                mono, _, alt = key.partition("|")
                a = tuple(int(t) for t in mono.split(",") if t != "")
                A = tuple(int(t) for t in alt.split(",") if t != "")
                u.coeffs[int(cid), exps[a], alts[A]] += float(val)
        return u
    if cls == "named":
        if data.get("name") != "whitney":
            raise ValueError(f"unknown named form {data.get('name')!r}")
        return whitney(mesh, tuple(int(v) for v in data["simplex"]), int(data.get("r", 1)))
    if cls == "random":
        space = {"Pr": "Pr", "Pr-": "Pr_minus", "Pr_minus": "Pr_minus",
                 "whitney": "whitney_span"}[data["space"]]
        return random_form(mesh, int(data["k"] if k is None else k), int(data["r"]),
                           space, int(data.get("seed", 0)))
    raise ValueError(f"unknown form class {cls!r}")


def form_to_dict(u):
    if not u.is_polynomial:
        raise ValueError("callback forms cannot be serialized")
    cells = {}
    for ci in range(u.mesh.n_cells):
        entries = {}
        for (a, A), val in u.cell_form(ci).items():
            entries[",".join(map(str, a)) + "|" + ",".join(map(str, A))] = val
        cells[str(ci)] = entries
    return {"class": "coefficients", "k": u.k, "r": u.r, "cells": cells}
