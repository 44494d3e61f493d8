"""Weight cochains w_{e,f}, z_{e,f} built from local exact Whitney complexes.

Cochains are dense vectors over the global simplex lists of the mesh; the
Whitney form of a cochain c of degree p is sum_s c_s phi_s, where phi_s is
the Whitney form of the ascending simplex s.
"""
from __future__ import annotations

import itertools
import math
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .forms import ncomp, whitney_values
from .mesh import complement, macroelement, omega_ef
from .quadrature import grundmann_moller

log = logging.getLogger(__name__)

SOLVE_TOL = 1e-10
BOUNDARY_MODES = ("closed", "interior")


class WeightSolveError(RuntimeError):
    """A local exactness solve failed (inconsistent system or large residual)."""


# -- global cochain operators -----------------------------------------------------------------


def coboundary_matrix(mesh, p):
    """Dense coboundary d: C^p -> C^{p+1}, (dc)_t = sum_i (-1)^i c_{t minus v_i}."""
    rows, cols = len(mesh.simplices[p + 1]), len(mesh.simplices[p])
    D = np.zeros((rows, cols))
    idx = mesh.index[p]
    for a, t in enumerate(mesh.simplices[p + 1]):
        for i in range(len(t)):
            D[a, idx[t[:i] + t[i + 1:]]] = (-1) ** i
    return D


def volume_form(mesh, f):
    """The n-cochain of vol_f = kappa_f / |Omega_f| dx."""
    n = mesh.dim
    cells = macroelement(mesh, f).cells
    area = sum(mesh.cell_volume(ci) for ci in cells)
    c = np.zeros(len(mesh.simplices[n]))
    for ci in cells:
        c[mesh.index[n][mesh.cells[ci]]] = mesh.cell_orientation(ci) * mesh.cell_volume(ci) / area
    return c


def cochain_values(mesh, c, p, cell, bary):
    """Pointwise Cartesian values of the Whitney form of p-cochain ``c`` in ``cell``."""
    bary = np.atleast_2d(bary)
    scale = math.factorial(p)  # phi_s integrates to 1/p! over s
    out = np.zeros((bary.shape[0], ncomp(mesh.dim, p)))
    for s in itertools.combinations(mesh.cells[cell], p + 1):
        v = c[mesh.index[p][s]]
        if v != 0.0:
            out += scale * v * whitney_values(mesh, cell, bary, s)
    return out


def cochain_integral(mesh, c):
    """Integral over the domain of the Whitney n-form of n-cochain ``c``."""
    n = mesh.dim
    return float(sum(c[mesh.index[n][cell]] * mesh.cell_orientation(ci)
                     for ci, cell in enumerate(mesh.cells)))


# -- difference operators ---------------------------------------------------------------------


def _lookup(field_):
    return field_ if callable(field_) else (lambda e, f: field_[(tuple(e), tuple(f))])


def delta_op(field_, e, f):
    """(delta z)_{e,f} = sum_i (-1)^{sigma_e(x_i)} z_{e(x_i^), f(x_i^)}."""
    e, f = tuple(e), tuple(f)
    if not e or not set(e) <= set(f):
        raise ValueError(f"need a nonempty e inside f, got e={e}, f={f}")
    get = _lookup(field_)
    total = None
    for i, v in enumerate(e):
        term = get(e[:i] + e[i + 1:], tuple(x for x in f if x != v))
        term = term if i % 2 == 0 else -1 * term
        total = term if total is None else total + term
    return total


def delta_plus_op(field_, e, f):
    """(delta^+ z)_{e,f} = sum_i (-1)^{sigma_e(x_i)} z_{e(x_i^), f}."""
    e, f = tuple(e), tuple(f)
    if not e or not set(e) <= set(f):
        raise ValueError(f"need a nonempty e inside f, got e={e}, f={f}")
    get = _lookup(field_)
    total = None
    for i in range(len(e)):
        term = get(e[:i] + e[i + 1:], f)
        term = term if i % 2 == 0 else -1 * term
        total = term if total is None else total + term
    return total


# -- local zero-trace Whitney complexes --------------------------------------------------------


class RegionComplex:
    """Lowest-order Whitney complex on a union of cells with zero-trace constraints.

    ``boundary="closed"`` constrains every simplex on the boundary of the
    region; ``boundary="interior"`` constrains only the part of the region
    boundary lying inside the domain.
    """

    def __init__(self, mesh, cells, boundary="closed"):
        if boundary not in BOUNDARY_MODES:
            raise ValueError(f"unknown boundary mode {boundary!r}")
        self.mesh = mesh
        self.cells = tuple(sorted(cells))
        self.boundary = boundary
        n = mesh.dim
        cellset = set(self.cells)
        simp = [set() for _ in range(n + 1)]
        for ci in self.cells:
            for p in range(n + 1):
                simp[p].update(itertools.combinations(mesh.cells[ci], p + 1))
        constrained = set()
        for face in simp[n - 1]:
            inside = [ci for ci in mesh.star(face) if ci in cellset]
            if len(inside) != 1:
                continue
            if boundary == "interior" and len(mesh.star(face)) == 1:
                continue
            for size in range(1, n + 1):
                constrained.update(itertools.combinations(face, size))
        self.simplices = [sorted(s) for s in simp]
        self.free = [np.array([mesh.index[p][s] for s in self.simplices[p] if s not in constrained],
                              dtype=int) for p in range(n + 1)]
        self.region_ids = [np.array([mesh.index[p][s] for s in self.simplices[p]], dtype=int)
                           for p in range(n + 1)]
        self._D = {}
        self._M = {}

    def d(self, p):
        """Coboundary restricted to free p-dofs -> free (p+1)-dofs."""
        if p not in self._D:
            full = coboundary_matrix(self.mesh, p)
            self._D[p] = full[np.ix_(self.free[p + 1], self.free[p])]
        return self._D[p]

    def mass(self, p):
        """Whitney mass matrix on free p-dofs (Euclidean dx_I inner product)."""
        if p not in self._M:
            mesh = self.mesh
            pts, wts = grundmann_moller(mesh.dim, 2)
            pos = {int(g): a for a, g in enumerate(self.free[p])}
            M = np.zeros((len(pos), len(pos)))
            for ci in self.cells:
                loc = [s for s in itertools.combinations(mesh.cells[ci], p + 1)
                       if mesh.index[p][s] in pos]
                if not loc:
                    continue
                vals = np.array([whitney_values(mesh, ci, pts, s) for s in loc])
                G = np.einsum("aqI,bqI,q->ab", vals, vals, wts) * mesh.cell_volume(ci)
                ids = [pos[mesh.index[p][s]] for s in loc]
                M[np.ix_(ids, ids)] += G
            self._M[p] = M
        return self._M[p]

    def betti(self):
        """Dimensions of the cohomology of the zero-trace complex."""
        n = self.mesh.dim
        ranks = [np.linalg.matrix_rank(self.d(p)) if self.d(p).size else 0 for p in range(n)]
        out = []
        for p in range(n + 1):
            dim = len(self.free[p])
            rk_out = ranks[p] if p < n else 0
            rk_in = ranks[p - 1] if p > 0 else 0
            out.append(int(dim - rk_out - rk_in))
        return out

    def euler_characteristic(self):
        return int(sum((-1) ** p * len(self.free[p]) for p in range(self.mesh.dim + 1)))

    def expected_betti(self):
        """Cohomology of a contractible region for this boundary mode."""
        n = self.mesh.dim
        mesh = self.mesh
        out = [0] * (n + 1)
        cellset = set(self.cells)
        region_faces = [face for face in self.simplices[n - 1]
                        if sum(ci in cellset for ci in mesh.star(face)) == 1]
        if self.boundary == "closed" or all(len(mesh.star(fc)) == 2 for fc in region_faces):
            out[n] = 1
        elif all(len(mesh.star(fc)) == 1 for fc in region_faces):
            out[0] = 1
        return out

    def solve(self, p, rhs, orthogonal=True, ref=0.0):
        """Find w in the free p-dofs with d w = rhs, orthogonal to d of (p-1)-dofs.

        Returns the global p-cochain and the residual relative to
        max(|rhs|, ref); ``ref`` is the size of the terms that cancelled
        into ``rhs``.
        """
        mesh = self.mesh
        full = np.asarray(rhs, float)
        scale = max(float(np.max(np.abs(full), initial=0.0)), ref, 1e-300)
        mask = np.ones(len(full), dtype=bool)
        mask[self.free[p + 1]] = False
        leak = float(np.max(np.abs(full[mask]), initial=0.0))
        if leak > 1e-12 * scale:
            raise WeightSolveError(f"right-hand side not supported on free dofs (leak {leak:.2e})")
        b = full[self.free[p + 1]]
        D = self.d(p)
        A, bb = D, b
        if orthogonal and p > 0 and len(self.free[p - 1]):
            C = self.d(p - 1).T @ self.mass(p)
            A = np.vstack([D, C])
            bb = np.concatenate([b, np.zeros(C.shape[0])])
        if A.shape[1] == 0:
            x = np.zeros(0)
        else:
            x = scipy.linalg.lstsq(A, bb, lapack_driver="gelsy")[0]
        resid = float(np.max(np.abs(D @ x - b), initial=0.0)) / scale
        w = np.zeros(len(mesh.simplices[p]))
        w[self.free[p]] = x
        return w, resid


# -- weight families ---------------------------------------------------------------------------


@dataclass
class WeightFamily:
    """Weights w_{e,f} (e a proper subsimplex of f, or empty) and z_{e,f} (e nonempty)."""

    mesh: object
    boundary: str
    sign_convention: str
    w: dict = field(default_factory=dict)
    z: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def level(self, e):
        return len(e) - 1

    def z_degree(self, e):
        return self.mesh.dim - (len(e) - 1)

    def z_values(self, e, f, cell, bary):
        """Pointwise values of z_{e,f} (an (n-j)-form) in ``cell``."""
        e, f = tuple(e), tuple(f)
        return cochain_values(self.mesh, self.z[(e, f)], self.z_degree(e), cell, bary)

    def z_support(self, e, f):
        """Cells on which z_{e,f} has a nonzero coefficient."""
        mesh, p = self.mesh, self.z_degree(e)
        c = self.z[(tuple(e), tuple(f))]
        return tuple(ci for ci, cell in enumerate(mesh.cells)
                     if any(c[mesh.index[p][s]] != 0 for s in itertools.combinations(cell, p + 1)))


def _term_scale(w, e, f):
    # size of the individual w terms entering (delta - delta^+) w
    terms = []
    for i, v in enumerate(e):
        sub = e[:i] + e[i + 1:]
        terms += [w[(sub, tuple(x for x in f if x != v))], w[(sub, f)]]
    return max(float(np.max(np.abs(t), initial=0.0)) for t in terms)


def _solve_sign(j, convention):
    # "consistent": dw = (-1)^{j+1}(delta - delta^+)w, which makes dz = (-1)^{j+1} delta z hold
    return (-1) ** (j + 1) if convention == "consistent" else (-1) ** j


def build_weights(mesh, boundary="closed", sign_convention="consistent", max_level=None):
    """Construct all w_{e,f} and z_{e,f} by recursive local solves.

    Levels j = |e| - 1 are processed in increasing order, (e, f) pairs in
    lexicographic order within a level.  ``sign_convention="paper"`` uses
    the sign (-1)^j in the w equation, kept for comparison.
    """
    if sign_convention not in ("consistent", "paper"):
        raise ValueError(f"unknown sign convention {sign_convention!r}")
    n = mesh.dim
    top = n - 1 if max_level is None else min(max_level, n - 1)
    wf = WeightFamily(mesh, boundary, sign_convention)
    vol = {}

    def volf(f):
        if f not in vol:
            vol[f] = volume_form(mesh, f)
        return vol[f]

    all_f = [f for m in range(n + 1) for f in mesh.simplices[m]]
    for f in all_f:
        wf.w[((), f)] = -volf(f)
    complexes = {}
    for j in range(top + 1):
        p = n - j - 1
        s = _solve_sign(j, sign_convention)
        for f in all_f:
            if len(f) < j + 2:
                continue
            for e in itertools.combinations(f, j + 1):
                dm, dp = delta_op(wf.w, e, f), delta_plus_op(wf.w, e, f)
                rhs = s * (dm - dp)
                ref = _term_scale(wf.w, e, f)
                g = complement(f, e)
                if g not in complexes:
                    complexes[g] = RegionComplex(mesh, macroelement(mesh, g).cells, boundary)
                try:
                    w, res = complexes[g].solve(p, rhs, ref=ref)
                except WeightSolveError as exc:
                    raise WeightSolveError(f"w_{{{list(e)},{list(f)}}}: {exc}") from None
                if res > SOLVE_TOL:
                    raise WeightSolveError(
                        f"w_{{{list(e)},{list(f)}}}: residual {res:.2e} exceeds {SOLVE_TOL:g}; "
                        "the local complex is not exact")
                wf.w[(e, f)] = w
                wf.residuals[(e, f)] = res
    # z: level 0 is -vol_f, higher levels are delta^+ w
    for f in all_f:
        for size in range(1, len(f) + 1):
            if size - 1 > top + 1:
                break
            for e in itertools.combinations(f, size):
                wf.z[(e, f)] = -volf(f) if size == 1 else delta_plus_op(wf.w, e, f)
    log.debug("built %d w and %d z weights", len(wf.w), len(wf.z))
    return wf


# -- verification ----------------------------------------------------------------------------


@dataclass
class WeightCheck:
    e: tuple
    f: tuple
    j: int
    n: int
    dz_residual: float
    delta_plus_residual: float
    support_leak: float
    linf: float
    h: float

    @property
    def zbound_constant(self):
        """c in ||z_{e,f}||_inf <= c h_{e,f}^{j-n}."""
        return self.linf * self.h ** (self.n - self.j)


def z_linf(wf, e, f):
    """Max over the mesh of the Euclidean norm of z_{e,f} (attained at vertices)."""
    mesh = wf.mesh
    n = mesh.dim
    verts = np.eye(n + 1)
    best = 0.0
    for ci in wf.z_support(e, f):
        vals = wf.z_values(e, f, ci, verts)
        best = max(best, float(np.max(np.linalg.norm(vals, axis=1))))
    return best


def verify_weight_identities(wf):
    """Residuals of dz = (-1)^{j+1} delta z and delta^+ z = 0 for every pair.

    Also reports the support leak of z_{e,f} outside Omega_{e,f}, the
    orthogonality residuals of the w solves, and the empirical constant of
    ||z_{e,f}||_inf <= c h_{e,f}^{j-n}.
    """
    mesh = wf.mesh
    n = mesh.dim
    records = []
    dmats = {p: coboundary_matrix(mesh, p) for p in range(n)}
    for (e, f), z in sorted(wf.z.items()):
        j = len(e) - 1
        if j == 0:
            continue
        p = n - j
        dz = dmats[p] @ z if p < n else np.zeros(0)
        dres = 0.0
        if all(((e[:i] + e[i + 1:]), tuple(x for x in f if x != v)) in wf.z
               for i, v in enumerate(e)):
            rhs = (-1) ** (j + 1) * delta_op(wf.z, e, f)
            dres = float(np.max(np.abs(dz - rhs), initial=0.0)) if p < n else 0.0
        dplus = float(np.max(np.abs(delta_plus_op(wf.z, e, f)), initial=0.0)) if j >= 1 else 0.0
        region = set(omega_ef(mesh, e, f).cells)
        leak = 0.0
        for ci, cell in enumerate(mesh.cells):
            if ci in region:
                continue
            for s in itertools.combinations(cell, p + 1):
                # simplices shared with the region may carry values only if they lie in it
                if any(cj in region for cj in mesh.star(s)):
                    continue
                leak = max(leak, abs(float(z[mesh.index[p][s]])))
        cells = omega_ef(mesh, e, f).cells
        h = max(mesh.cell_diameter(ci) for ci in cells)
        chk = WeightCheck(e, f, j, n, dres, dplus, leak, z_linf(wf, e, f), h)
        records.append(chk)
    return records


def orthogonality_residuals(wf):
    """max |<w_{e,f}, d q>| over zero-trace (p-1)-cochains q, per pair."""
    mesh = wf.mesh
    n = mesh.dim
    out = {}
    complexes = {}
    for (e, f), w in wf.w.items():
        if not e:
            continue
        p = n - len(e)
        if p == 0:
            out[(e, f)] = 0.0
            continue
        g = complement(f, e)
        if g not in complexes:
            complexes[g] = RegionComplex(mesh, macroelement(mesh, g).cells, wf.boundary)
        rc = complexes[g]
        C = rc.d(p - 1).T @ rc.mass(p)
        out[(e, f)] = float(np.max(np.abs(C @ w[rc.free[p]]), initial=0.0))
    return out


def check_exactness(mesh, boundary="closed"):
    """Cohomology of the zero-trace complexes on every extended macroelement."""
    from .mesh import extended_macroelement
    report = []
    seen = set()
    for m in range(mesh.dim + 1):
        for f in mesh.simplices[m]:
            reg = extended_macroelement(mesh, f)
            if reg.cells in seen:
                continue
            seen.add(reg.cells)
            rc = RegionComplex(mesh, reg.cells, boundary)
            betti, want = rc.betti(), rc.expected_betti()
            report.append({"simplex": list(f), "cells": list(reg.cells), "betti": betti,
                           "expected": want, "euler": rc.euler_characteristic(),
                           "exact": betti == want})
    return report


# -- serialization ---------------------------------------------------------------------------


def _key(e, f):
    return ",".join(map(str, e)) + "|" + ",".join(map(str, f))


def _unkey(s):
    a, _, b = s.partition("|")
    return tuple(int(t) for t in a.split(",") if t), tuple(int(t) for t in b.split(",") if t)


def weights_to_dict(wf):
    """JSON-ready cochain coefficients of every w_{e,f} and z_{e,f}."""
    return {"boundary": wf.boundary, "sign_convention": wf.sign_convention,
            "mesh": wf.mesh.to_json(),
            "w": {_key(*k): v.tolist() for k, v in sorted(wf.w.items())},
            "z": {_key(*k): v.tolist() for k, v in sorted(wf.z.items())},
            "residuals": {_key(*k): float(v) for k, v in sorted(wf.residuals.items())}}


def weights_from_dict(mesh, data):
    """Inverse of :func:`weights_to_dict`; the stored mesh must match ``mesh``."""
    stored = data.get("mesh")
    if stored is not None and (stored["cells"] != mesh.to_json()["cells"]
                               or not np.allclose(stored["vertices"], mesh.vertices)):
        raise ValueError("weight file was built for a different mesh")
    wf = WeightFamily(mesh, data["boundary"], data.get("sign_convention", "consistent"))
    wf.w = {_unkey(k): np.asarray(v, float) for k, v in data["w"].items()}
    wf.z = {_unkey(k): np.asarray(v, float) for k, v in data["z"].items()}
    wf.residuals = {_unkey(k): float(v) for k, v in data.get("residuals", {}).items()}
    return wf
