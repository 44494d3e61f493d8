"""Simplicial complexes, macroelement regions and mesh-quality diagnostics.

Simplices are tuples of global vertex indices in ascending order; the
empty tuple stands for the empty simplex.  All orientations and signs are
derived from that ordering.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

Simplex = tuple

BARY_TOL = 1e-12


class MeshError(ValueError):
    """Raised for malformed, degenerate or non-conforming meshes."""


@dataclass(frozen=True)
class MacroRegion:
    """A union of n-cells, stored as a sorted tuple of cell indices."""

    kind: str
    cells: tuple

    def __contains__(self, cell):
        return cell in self._cellset

    @cached_property
    def _cellset(self):
        return frozenset(self.cells)

    def __len__(self):
        return len(self.cells)

    def issubset(self, other):
        return self._cellset <= other._cellset


def _region(kind, cells):
    return MacroRegion(kind, tuple(sorted(set(cells))))


class SimplicialComplex:
    """Conforming simplicial mesh of a polyhedral domain in R^n.

    Parameters
    ----------
    vertices : array_like, shape (N, n)
    cells : sequence of (n+1)-tuples of vertex indices, each ascending.
    """

    def __init__(self, vertices, cells, validate=True):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        self.vertices = vertices
        self.dim = vertices.shape[1]
        self.cells = tuple(tuple(int(i) for i in c) for c in cells)
        n = self.dim
        for c in self.cells:
            if len(c) != n + 1:
                raise MeshError(f"cell {list(c)} does not have {n + 1} vertices")
            if any(a >= b for a, b in zip(c, c[1:])):
                raise MeshError(f"cell {list(c)} is not in ascending vertex order")
            if min(c) < 0 or max(c) >= len(vertices):
                raise MeshError(f"cell {list(c)} references a missing vertex")

        # simplex lattice
        simplices = [set() for _ in range(n + 1)]
        for c in self.cells:
            for m in range(n + 1):
                simplices[m].update(itertools.combinations(c, m + 1))
        self.simplices = [sorted(s) for s in simplices]
        self.index = [{s: i for i, s in enumerate(sl)} for sl in self.simplices]
        self.cell_index = {c: i for i, c in enumerate(self.cells)}

        star = {}
        for ci, c in enumerate(self.cells):
            for m in range(n + 1):
                for s in itertools.combinations(c, m + 1):
                    star.setdefault(s, []).append(ci)
        self._star = {s: tuple(v) for s, v in star.items()}

        self._geom = [self._cell_geometry(c) for c in self.cells]
        if validate:
            self._validate()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_unsorted(cls, vertices, cells, validate=True):
        """Build a complex after sorting each cell's vertex list."""
        return cls(vertices, [tuple(sorted(c)) for c in cells], validate=validate)

    def _cell_geometry(self, c):
        X = self.vertices[list(c)]
        n = self.dim
        A = np.vstack([X.T, np.ones(n + 1)])
        det = np.linalg.det(A)
        vol = abs(det) / math.factorial(n)
        try:
            Ainv = np.linalg.inv(A)
        except np.linalg.LinAlgError:
            Ainv = np.full((n + 1, n + 1), np.nan)
        # det(A) = (-1)^n det[x_1 - x_0, ..., x_n - x_0]
        orient = 1 if (-1) ** n * det > 0 else -1
        return {"X": X, "volume": vol, "grads": Ainv[:, :n], "Ainv": Ainv,
                "orientation": orient}

    def _validate(self):
        n = self.dim
        for ci, c in enumerate(self.cells):
            g = self._geom[ci]
            diam = self.cell_diameter(ci)
            if not g["volume"] > 1e-12 * diam ** n:
                raise MeshError(f"cell {list(c)} is degenerate (zero volume)")
        for face in self.simplices[n - 1]:
            owners = self._star[face]
            if len(owners) > 2:
                raise MeshError(f"face {list(face)} is shared by {len(owners)} cells")
            if len(owners) == 2:
                # opposite vertices must lie on opposite sides of the shared face
                sides = []
                for ci in owners:
                    (opp,) = set(self.cells[ci]) - set(face)
                    lam = self.barycentric(owners[0] if ci == owners[1] else owners[1],
                                           self.vertices[opp][None, :])[0]
                    sides.append(lam)
                for lam in sides:
                    if np.all(lam > -1e-10):
                        raise MeshError(f"cells sharing face {list(face)} overlap")
        # no vertex may sit inside (or on the boundary of) a cell it does not belong to
        for ci, c in enumerate(self.cells):
            lam = self.barycentric(ci, self.vertices)
            inside = np.all(lam > -1e-10, axis=1)
            inside[list(c)] = False
            if inside.any():
                v = int(np.flatnonzero(inside)[0])
                raise MeshError(f"vertex {v} lies in cell {list(c)}: mesh is not conforming")

    # -- basic queries --------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    def star(self, s):
        """Indices of the n-cells containing simplex ``s`` (all cells for ``()``)."""
        if len(s) == 0:
            return tuple(range(self.n_cells))
        return self._star.get(tuple(s), ())

    def cell_volume(self, ci):
        return self._geom[ci]["volume"]

    def cell_grads(self, ci):
        """Gradients of the cell's barycentric coordinates, shape (n+1, n)."""
        return self._geom[ci]["grads"]

    def cell_orientation(self, ci):
        """+1 if the ascending vertex order is positively oriented."""
        return self._geom[ci]["orientation"]

    def cell_coords(self, ci):
        return self._geom[ci]["X"]

    def cell_diameter(self, ci):
        X = self._geom[ci]["X"]
        return max(np.linalg.norm(a - b) for a, b in itertools.combinations(X, 2))

    def barycentric(self, ci, x):
        """Barycentric coordinates in cell ``ci`` of points ``x`` (shape (p, n))."""
        x = np.atleast_2d(x)
        Ainv = self._geom[ci]["Ainv"]
        return x @ Ainv[:, :self.dim].T + Ainv[:, self.dim]

    def to_cartesian(self, ci, bary):
        return np.asarray(bary) @ self._geom[ci]["X"]

    def locate(self, x):
        """Index of a cell containing point ``x`` (first match), or -1."""
        for ci in range(self.n_cells):
            if np.all(self.barycentric(ci, x)[0] >= -BARY_TOL):
                return ci
        return -1

    def simplex_volume(self, s):
        """m-dimensional measure of simplex ``s``."""
        X = self.vertices[list(s)]
        if len(s) <= 1:
            return 1.0
        E = (X[1:] - X[0]).T
        return math.sqrt(abs(np.linalg.det(E.T @ E))) / math.factorial(len(s) - 1)

    @cached_property
    def boundary_faces(self):
        """(n-1)-simplices lying on the domain boundary."""
        return frozenset(f for f in self.simplices[self.dim - 1] if len(self._star[f]) == 1)

    @cached_property
    def domain_volume(self):
        return sum(g["volume"] for g in self._geom)

    def to_json(self):
        return {"dim": self.dim, "vertices": self.vertices.tolist(),
                "cells": [list(c) for c in self.cells]}

    def __repr__(self):
        counts = ", ".join(str(len(s)) for s in self.simplices)
        return f"SimplicialComplex(dim={self.dim}, simplices=[{counts}])"


# -- file IO -------------------------------------------------------------------

def load_mesh(path):
    """Read a mesh file ``{"dim": n, "vertices": [...], "cells": [...]}``."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MeshError(f"cannot parse mesh file {path}: {exc}") from exc
    return mesh_from_dict(data)


def mesh_from_dict(data):
    try:
        dim = int(data["dim"])
        vertices = np.asarray(data["vertices"], dtype=float).reshape(-1, dim)
        cells = [tuple(int(i) for i in c) for c in data["cells"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"malformed mesh description: {exc}") from exc
    return SimplicialComplex(vertices, cells)


def save_mesh(mesh, path):
    Path(path).write_text(json.dumps(mesh.to_json(), indent=1))


# -- simplex combinatorics -------------------------------------------------------

def internal_index(f, y):
    """Position of vertex ``y`` in the ordered vertex list of ``f`` (0-based)."""
    try:
        return tuple(f).index(y)
    except ValueError:
        raise ValueError(f"vertex {y} is not a vertex of {f}") from None


def remove_vertex(f, y):
    """``f`` with vertex ``y`` deleted."""
    return tuple(v for v in f if v != y)


def complement(f, e):
    """Vertices of ``f`` not in ``e`` (the simplex f ∩ e*)."""
    es = set(e)
    return tuple(v for v in f if v not in es)


def subsimplices(f, m):
    """All m-dimensional subsimplices of ``f``; m = -1 gives the empty simplex."""
    return list(itertools.combinations(f, m + 1))


def closed_subsimplices(f):
    """Δ̄(f): every subsimplex of ``f`` including the empty one."""
    out = []
    for size in range(len(f) + 1):
        out.extend(itertools.combinations(f, size))
    return out


# -- macroelement regions ---------------------------------------------------------

def macroelement(mesh, f):
    """Ω_f: all cells containing ``f`` (every cell when ``f`` is empty)."""
    return _region("omega", mesh.star(tuple(f)))


def extended_macroelement(mesh, f):
    """Ω_f^E: union of the vertex stars of ``f``."""
    cells = set()
    for v in f:
        cells.update(mesh.star((v,)))
    return _region("omega_E", cells)


def omega_ef(mesh, e, f, method="closed"):
    """Ω_{e,f}, the support region of the weight z_{e,f}.

    ``method="closed"`` uses Ω_{f∩e*} ∩ Ω_e^E, ``"recursive"`` the union over
    deleted vertices.  Both agree on conforming meshes.
    """
    e, f = tuple(e), tuple(f)
    if not set(e) <= set(f):
        raise ValueError(f"{e} is not a subsimplex of {f}")
    if len(e) <= 1:
        return _region("omega_ef", macroelement(mesh, f).cells)
    if method == "closed":
        base = set(macroelement(mesh, complement(f, e)).cells)
        return _region("omega_ef", base & set(extended_macroelement(mesh, e).cells))
    if method == "recursive":
        cells = set()
        for v in e:
            cells.update(omega_ef(mesh, remove_vertex(e, v), remove_vertex(f, v),
                                  method="recursive").cells)
        return _region("omega_ef", cells)
    raise ValueError(f"unknown method {method!r}")


def dual_manifold(mesh, f):
    """f*: the faces opposite ``f`` in every cell of Ω_f."""
    f = tuple(f)
    if len(f) == mesh.dim + 1:
        raise ValueError("the dual manifold of an n-cell is empty")
    fs = set(f)
    return sorted({tuple(v for v in mesh.cells[ci] if v not in fs)
                   for ci in mesh.star(f)})


def dual_vertices(mesh, f):
    """Vertex indices I(f*)."""
    return sorted({v for face in dual_manifold(mesh, f) for v in face})


# -- quality diagnostics -------------------------------------------------------------

def inscribed_diameter(mesh, ci):
    """Diameter of the insphere, 2 n |T| / (sum of facet measures)."""
    n = mesh.dim
    c = mesh.cells[ci]
    facets = sum(mesh.simplex_volume(face) for face in itertools.combinations(c, n))
    return 2 * n * mesh.cell_volume(ci) / facets


def shape_constant(mesh):
    """c_T = max over cells of diam(T) / diam(B_T)."""
    return max(mesh.cell_diameter(ci) / inscribed_diameter(mesh, ci)
               for ci in range(mesh.n_cells))


def overlap_constant(mesh, regions):
    """Largest number of regions sharing a single cell."""
    counts = np.zeros(mesh.n_cells, dtype=int)
    for reg in regions:
        counts[list(reg.cells)] += 1
    return int(counts.max()) if len(counts) else 0


def quasi_uniformity_ratio(mesh, e, f):
    """max h_T / min h_T over the cells of Ω_{e,f}."""
    cells = omega_ef(mesh, e, f).cells
    if not cells:
        raise ValueError(f"Ω_{{e,f}} is empty for e={e}, f={f}")
    h = [mesh.cell_diameter(ci) for ci in cells]
    return max(h) / min(h)


def vertex_star_connected(mesh, v):
    """True if the cells around ``v`` are connected through facets containing ``v``.

    For n >= 2 this is connectivity of the link x_v*; in 1D every vertex
    star counts as connected.
    """
    cells = mesh.star((v,))
    if len(cells) <= 1:
        return True
    n = mesh.dim
    adj = {ci: set() for ci in cells}
    by_face = {}
    for ci in cells:
        for face in itertools.combinations(mesh.cells[ci], n):
            if v in face:
                by_face.setdefault(face, []).append(ci)
    for owners in by_face.values():
        for a, b in itertools.combinations(owners, 2):
            adj[a].add(b)
            adj[b].add(a)
    seen, stack = {cells[0]}, [cells[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(cells)


def refine_uniform(mesh):
    """Bisect every interval, or split every triangle into four through its edge midpoints."""
    if mesh.dim not in (1, 2):
        raise MeshError("uniform refinement is implemented for 1D and 2D meshes only")
    verts = [tuple(v) for v in mesh.vertices]
    mid = {}
    if mesh.dim == 1:
        cells = []
        for a, b in mesh.cells:
            cells += [(a, len(verts)), (b, len(verts))]
            verts.append(tuple(0.5 * (mesh.vertices[a] + mesh.vertices[b])))
        return SimplicialComplex.from_unsorted(np.array(verts), cells)
    for e in mesh.simplices[1]:
        mid[e] = len(verts)
        verts.append(tuple(0.5 * (mesh.vertices[e[0]] + mesh.vertices[e[1]])))
    cells = []
    for a, b, c in mesh.cells:
        ab, ac, bc = mid[(a, b)], mid[(a, c)], mid[(b, c)]
        cells += [(a, ab, ac), (ab, b, bc), (ac, bc, c), (ab, ac, bc)]
    return SimplicialComplex.from_unsorted(np.array(verts), cells)


def check_assumptions(mesh, boundary="closed"):
    """Connectivity of vertex links and exactness of the local zero-trace complexes.

    Failures are recorded as entries, never raised.
    """
    from .weights import check_exactness
    entries = []
    for (v,) in mesh.simplices[0]:
        entries.append({"check": "vertex-link-connected", "simplex": [v],
                        "passed": bool(vertex_star_connected(mesh, v))})
    for rec in check_exactness(mesh, boundary):
        entries.append({"check": "zero-trace-exactness", "simplex": rec["simplex"],
                        "betti": rec["betti"], "expected": rec["expected"],
                        "passed": bool(rec["exact"])})
    return {"passed": all(e["passed"] for e in entries), "entries": entries}
