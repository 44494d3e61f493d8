"""Verification suites, refinement studies and JSON reports."""
from __future__ import annotations

import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .forms import (PiecewiseForm, face_lattice, localized_form, membership_Pr, membership_Pr_minus,
                    random_form, rho_values, trace_to)
from .mesh import (check_assumptions, closed_subsimplices, macroelement, overlap_constant,
                   refine_uniform, shape_constant)
from .quadrature import grundmann_moller, interior_points, stroud_conical
from .transform import (BubbleIndex, OperatorCache, ReconstructionError, average, bubble_transform,
                        cutoff_global, cutoff_local, order_reduction,
                        pi_j_pullback, r_identity_check, reduced_values,
                        scalar_cutoff_closed_form, sum_bubbles)
from .weights import build_weights, orthogonality_residuals, verify_weight_identities

log = logging.getLogger(__name__)

SUITES = ("mesh", "weights", "r-ops", "commuting", "trace", "support", "decomposition",
          "preservation", "scalar-k0")

# tolerances, named once
TOL_Z_D = 1e-10
TOL_Z_PLUS = 1e-12
TOL_SOLVE = 1e-10
TOL_R = 1e-9
TOL_ORACLE = 1e-6
TOL_COMMUTE = 1e-8
TOL_DECOMP = 1e-8
TOL_TRACE = 1e-8
TOL_SUPPORT = 1e-10
TOL_RECON = 1e-9
TOL_SCALAR = 1e-12
TOL_EXACT = 1e-12
TOL_UNIFORM = 2.0

ANCHORS = {
    "assumptions": "contractible extended macroelements and connected vertex links",
    "overlap": "bounded overlap of macroelements",
    "z-d": "weight identity dz = (-1)^(j+1) delta z",
    "z-plus": "weight identity delta^+ z = 0",
    "z-support": "weight z_{e,f} supported in Omega_{e,f}",
    "w-solve": "local solve dw = (-1)^(j+1)(delta - delta^+) w",
    "w-orth": "orthogonality of w to d of zero-trace forms",
    "R-d": "R^{k+1} du = (-1)^j dR^k u - delta R^k u",
    "R-plus": "delta^+ R^k u = 0",
    "R-vertex": "order reduction for a vertex is minus the traced average",
    "R-zero": "order reduction vanishes for j > k",
    "R-poly": "b^{-j} R u is a degree-r polynomial in lambda",
    "A-oracle": "average operator against direct quadrature of its definition",
    "R-oracle": "order reduction against direct quadrature of its definition",
    "A-trace": "trace of L_f^* A_f u on f equals the trace of u",
    "C-commute": "d C_m^k u = C_m^{k+1} du",
    "B-commute": "d B_m^k u = B_m^{k+1} du",
    "trace": "tr_f sum_{j<=m} B_j^k u = tr_f u for f in Delta_m, m >= k",
    "C-support": "C_{m,f}^k u vanishes outside Omega_f",
    "B-support": "B_{m,f}^k u vanishes outside Omega_f",
    "rho-ratio": "rho_f / rho_g lies in [rho_f, 1] on Omega_f",
    "decomp": "u = sum_m B_m^k u",
    "decomp-local": "u = sum of all local bubbles B_{m,f}^k u",
    "identity-stage": "C_n^k is the identity",
    "Pr": "stages of P_r input stay in P_r",
    "Pr-": "stages of trimmed P_r^- input stay in P_r^-",
    "recon": "global cut-off sums are polynomials of the input degree",
    "scalar": "scalar cut-off for vertices and edges in closed form",
}


# -- records and reports -----------------------------------------------------------------------


@dataclass
class CheckRecord:
    identity: str
    anchor: str
    residual: Optional[float]
    tolerance: float
    passed: bool
    context: dict = field(default_factory=dict)

    def to_dict(self):
        res = self.residual
        if res is not None and not math.isfinite(res):
            res = None
        return {"identity": self.identity, "anchor": self.anchor, "residual": res,
                "tolerance": self.tolerance, "passed": bool(self.passed),
                "context": _jsonable(self.context)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def mesh_descriptor(mesh, name="custom"):
    return {"name": name, "dim": mesh.dim, "vertices": mesh.n_vertices, "cells": mesh.n_cells}


@dataclass
class SuiteReport:
    suite: str
    mesh: dict
    seed: int
    config: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    def add(self, identity, residual, tolerance, **context):
        """Append a record; ``residual <= tolerance`` decides pass/fail."""
        ok = residual is not None and math.isfinite(residual) and residual <= tolerance
        rec = CheckRecord(identity, ANCHORS.get(identity, identity), residual, tolerance, ok,
                          context)
        self.records.append(rec)
        return rec

    def worst(self, identity):
        recs = [r for r in self.records if r.identity == identity]
        return max((r.residual if r.residual is not None else math.inf for r in recs),
                   default=0.0)

    def to_dict(self):
        return {"kind": "suite", "suite": self.suite, "mesh": self.mesh, "seed": self.seed,
                "config": _jsonable(self.config), "passed": self.passed,
                "records": [r.to_dict() for r in self.records],
                "timing": {"seconds": round(self.seconds, 3)}}


@dataclass
class SuiteConfig:
    ks: Optional[tuple] = None
    rs: tuple = (1, 2, 3)
    seed: int = 0
    seeds: int = 1
    points: int = 20
    boundary: str = "closed"
    oracle: bool = True
    oracle_points: int = 10
    oracle_pairs: int = 6

    def orders(self, mesh, top=None):
        top = mesh.dim if top is None else top
        ks = range(top + 1) if self.ks is None else self.ks
        return [k for k in ks if 0 <= k <= top]

    def to_dict(self):
        return {"ks": None if self.ks is None else list(self.ks), "rs": list(self.rs),
                "seed": self.seed, "seeds": self.seeds, "points": self.points,
                "boundary": self.boundary, "oracle": self.oracle,
                "oracle_points": self.oracle_points, "oracle_pairs": self.oracle_pairs}


# -- helpers --------------------------------------------------------------------------------------


def _rel(err, scale):
    return err / scale if scale > 0 else err


def _sample_cells(rng, mesh, cells, count, margin=0.05):
    """``count`` interior points spread over ``cells`` as (cell, bary) groups."""
    cells = list(cells)
    pick = rng.integers(len(cells), size=count)
    groups = {}
    for i in pick:
        groups[cells[i]] = groups.get(cells[i], 0) + 1
    return [(c, interior_points(rng, mesh.dim, cnt, margin)) for c, cnt in sorted(groups.items())]


def _input(mesh, k, r, seed, cls="Pr"):
    return random_form(mesh, k, r, cls, seed)


def _seeds(config):
    return [config.seed + 101 * s for s in range(config.seeds)]


# -- suites ---------------------------------------------------------------------------------------


def _suite_mesh(rep, mesh, config, wf):
    res = check_assumptions(mesh, config.boundary)
    for e in res["entries"]:
        rep.add("assumptions", 0.0 if e["passed"] else 1.0, 0.0, check=e["check"],
                simplex=e["simplex"])
    rep.add("overlap", abs(overlap_constant(mesh, [macroelement(mesh, c)
                                                   for c in mesh.cells]) - 1), 0.0,
            family="cells")
    rep.add("overlap", abs(overlap_constant(mesh, [macroelement(mesh, v)
                                                   for v in mesh.simplices[0]]) - (mesh.dim + 1)),
            0.0, family="vertices")


def _suite_weights(rep, mesh, config, wf):
    checks = verify_weight_identities(wf)
    by_level = {}
    for c in checks:
        agg = by_level.setdefault(c.j, {"d": 0.0, "p": 0.0, "leak": 0.0, "count": 0})
        agg["d"] = max(agg["d"], c.dz_residual)
        agg["p"] = max(agg["p"], c.delta_plus_residual)
        agg["leak"] = max(agg["leak"], c.support_leak)
        agg["count"] += 1
    for j, agg in sorted(by_level.items()):
        rep.add("z-d", agg["d"], TOL_Z_D, level=j, pairs=agg["count"])
        rep.add("z-plus", agg["p"], TOL_Z_PLUS, level=j, pairs=agg["count"])
        rep.add("z-support", agg["leak"], TOL_EXACT, level=j, pairs=agg["count"])
    rep.add("w-solve", max(wf.residuals.values(), default=0.0), TOL_SOLVE, solves=len(wf.residuals))
    orth = orthogonality_residuals(wf)
    rep.add("w-orth", max(orth.values(), default=0.0), TOL_SOLVE, pairs=len(orth))


def _all_pairs(mesh):
    for m in range(mesh.dim + 1):
        for f in mesh.simplices[m]:
            for size in range(1, len(f) + 1):
                for e in itertools.combinations(f, size):
                    yield e, f


def _suite_rops(rep, mesh, config, wf):
    rng = np.random.default_rng(config.seed)
    for k in config.orders(mesh):
        for r in config.rs:
            worst = dict.fromkeys(("d", "p", "v", "poly", "zero", "tr"), 0.0)
            for seed in _seeds(config):
                u = _input(mesh, k, r, seed)
                cache, dcache = OperatorCache(u, wf), OperatorCache(u.d(), wf)
                for e, f in _all_pairs(mesh):
                    res = r_identity_check(e, f, k, u, wf, cache, dcache)
                    scale = max(res.scale, 1.0)
                    worst["d"] = max(worst["d"], _rel(res.d_relation, scale))
                    worst["p"] = max(worst["p"], _rel(res.delta_plus, scale))
                    red = cache.reduced(e, f)
                    if len(e) - 1 > k:
                        worst["zero"] = max(worst["zero"], 0.0 if red.is_zero else 1.0)
                        continue
                    if seed != config.seed:
                        continue
                    # the interpolated lambda-polynomial reproduces the defining integral
                    lam = _random_lambda(rng, len(red.base), 3, strict=True)
                    direct = reduced_values(u, e, f, wf, lam)
                    worst["poly"] = max(worst["poly"], _rel(
                        float(np.max(np.abs(red.values(lam) - direct), initial=0.0)), scale))
                    if len(e) == 1:
                        A = cache.reduced((), f).form
                        ref = A.trace(red.base)(lam)
                        worst["v"] = max(worst["v"], _rel(
                            float(np.max(np.abs(red.values(lam) + ref), initial=0.0)), scale))
                if seed == config.seed:
                    for m in range(k, mesh.dim + 1):
                        for f in mesh.simplices[m]:
                            worst["tr"] = max(worst["tr"], _average_trace_residual(
                                mesh, u, f, cache.reduced((), f).form, r))
            ctx = {"k": k, "r": r, "seeds": config.seeds}
            rep.add("R-d", worst["d"], TOL_R, **ctx)
            rep.add("R-plus", worst["p"], TOL_R, **ctx)
            rep.add("R-vertex", worst["v"], TOL_R, **ctx)
            rep.add("R-zero", worst["zero"], 0.0, **ctx)
            rep.add("R-poly", worst["poly"], TOL_R, **ctx)
            rep.add("A-trace", worst["tr"], TOL_TRACE, **ctx)
    if config.oracle:
        _oracle_checks(rep, mesh, config, wf)


def _average_trace_residual(mesh, u, f, A, r):
    """tr_f L_f^* A_f u against tr_f u at lattice nodes of f."""
    nodes = face_lattice(f, r)
    pulled = PiecewiseForm.from_callback(mesh, u.k,
                                         lambda c, x: A.pullback_values(mesh, c, x, f))
    t1 = trace_to(pulled, f, nodes).values
    t2 = trace_to(u, f, nodes).values
    return _rel(float(np.max(np.abs(t1 - t2), initial=0.0)),
                max(float(np.max(np.abs(t2), initial=0.0)), 1.0))


def _oracle_npts(u, extra):
    """Points per direction: two degrees beyond the integrand degree."""
    return (u.r + u.k + extra + 2) // 2 + 1


def oracle_average(u, f, lam, npts=None):
    """A_f u at lambda points by Stroud product quadrature and pointwise pullbacks."""
    mesh = u.mesh
    n, k = mesh.dim, u.k
    pts, wts = stroud_conical(n, npts or _oracle_npts(u, 0))
    cells = macroelement(mesh, f).cells
    vol = sum(mesh.cell_volume(c) for c in cells)
    Ks = list(itertools.combinations(range(len(f)), k))
    out = np.zeros((len(lam), len(Ks)))
    for a, l in enumerate(lam):
        for ci in cells:
            ys = mesh.to_cartesian(ci, pts)
            for iK, K in enumerate(Ks):
                V = np.eye(len(f))[list(K)]
                vals = [pi_j_pullback(mesh, u, f, 0, y, l, np.zeros((0, n)), V, cell=ci)
                        for y in ys]
                out[a, iK] += mesh.cell_volume(ci) * float(np.dot(wts, vals))
    return out / vol


def oracle_reduction(u, e, f, wf, lam, npts=None):
    """b^{-j} R_{e,f} u at lambda points by Stroud quadrature of the wedge with z."""
    mesh = u.mesh
    n, k = mesh.dim, u.k
    j = len(e) - 1
    base = tuple(x for x in f if x not in e)
    pts, wts = stroud_conical(n, npts or _oracle_npts(u, 1))
    Ks = list(itertools.combinations(range(len(base)), k - j))
    out = np.zeros((len(lam), len(Ks)))
    eye = np.eye(n)
    for a, l in enumerate(lam):
        b = 1.0 - float(np.sum(l))
        for ci in sorted(set(wf.z_support(e, f))):
            ys = mesh.to_cartesian(ci, pts)
            zv = wf.z_values(e, f, ci, pts)
            zcomp = {I: i for i, I in enumerate(itertools.combinations(range(n), n - j))}
            for iK, K in enumerate(Ks):
                V = np.eye(len(base))[list(K)] if base else np.zeros((0, 0))
                vals = np.zeros(len(ys))
                for J in itertools.combinations(range(n), j):
                    Jc = tuple(c for c in range(n) if c not in J)
                    perm = J + Jc
                    sgn = _perm_sign(perm)
                    for q, y in enumerate(ys):
                        a_val = pi_j_pullback(mesh, u, base, j, y, l, eye[list(J)].reshape(j, n),
                                              V.reshape(k - j, len(base)), cell=ci)
                        vals[q] += sgn * a_val * zv[q, zcomp[Jc]]
                out[a, iK] += mesh.cell_volume(ci) * float(np.dot(wts, vals))
        out[a] /= b ** j if j else 1.0
    return out


def _perm_sign(p):
    p = list(p)
    sgn = 1
    for i in range(len(p)):
        for jj in range(i + 1, len(p)):
            if p[i] > p[jj]:
                sgn = -sgn
    return sgn


def _oracle_checks(rep, mesh, config, wf):
    rng = np.random.default_rng(config.seed + 7)
    k_list = config.orders(mesh)
    r = max(config.rs)
    pairs = list(_all_pairs(mesh))
    for k in k_list:
        u = _input(mesh, k, r, config.seed + 13)
        worst_a = worst_r = 0.0
        simplices = [f for m in range(mesh.dim + 1) for f in mesh.simplices[m]]
        for idx in rng.choice(len(simplices), size=min(config.oracle_pairs, len(simplices)),
                              replace=False):
            f = simplices[idx]
            lam = _random_lambda(rng, len(f), config.oracle_points)
            A = average(f, k, u).form
            ref = oracle_average(u, f, lam)
            worst_a = max(worst_a, _rel(float(np.max(np.abs(A(lam) - ref), initial=0.0)),
                                        float(np.max(np.abs(ref), initial=0.0))))
        cand = [(e, f) for e, f in pairs if 1 <= len(e) - 1 <= k and len(e) < len(f)]
        cand += [(e, f) for e, f in pairs if 1 <= len(e) - 1 <= k and len(e) == len(f)][:2]
        if cand:
            for idx in rng.choice(len(cand), size=min(config.oracle_pairs, len(cand)),
                                  replace=False):
                e, f = cand[idx]
                base = tuple(x for x in f if x not in e)
                lam = _random_lambda(rng, len(base), config.oracle_points, strict=True)
                P = order_reduction(e, f, k, u, wf).form
                ref = oracle_reduction(u, e, f, wf, lam)
                worst_r = max(worst_r, _rel(float(np.max(np.abs(P(lam) - ref), initial=0.0)),
                                            float(np.max(np.abs(ref), initial=0.0))))
        rep.add("A-oracle", worst_a, TOL_ORACLE, k=k, r=r, points=config.oracle_points)
        rep.add("R-oracle", worst_r, TOL_ORACLE, k=k, r=r, points=config.oracle_points)


def _random_lambda(rng, nb, count, strict=False):
    """Random points of the corner simplex S^c (b > 0 if ``strict``)."""
    if nb == 0:
        return np.zeros((count, 0))
    pts = rng.dirichlet(np.ones(nb + 1), size=count)[:, :nb]
    return pts * 0.95 if strict else pts


def _suite_commuting(rep, mesh, config, wf):
    rng = np.random.default_rng(config.seed)
    n = mesh.dim
    for k in config.orders(mesh, n - 1):
        for r in config.rs:
            for seed in _seeds(config):
                u = _input(mesh, k, r, seed)
                du = u.d()
                D = bubble_transform(k, u, wf, strict=False)
                Dd = bubble_transform(k + 1, du, wf, strict=False)
                for m in range(n + 1):
                    C = cutoff_global(m, k, u, wf, strict=False)
                    Cd = cutoff_global(m, k + 1, du, wf, strict=False)
                    errc = errb = scc = scb = 0.0
                    dC, dB = C.d(), D.stages[m].d()
                    for ci in range(mesh.n_cells):
                        b = interior_points(rng, n, config.points)
                        a1, a2 = dC(ci, b), Cd(ci, b)
                        b1, b2 = dB(ci, b), Dd.stages[m](ci, b)
                        errc = max(errc, float(np.max(np.abs(a1 - a2))))
                        errb = max(errb, float(np.max(np.abs(b1 - b2))))
                        ref = float(np.max(np.abs(du(ci, b)), initial=0.0))
                        scc = max(scc, ref, float(np.max(np.abs(a2))))
                        scb = max(scb, ref, float(np.max(np.abs(b2))))
                    ctx = {"k": k, "r": r, "m": m, "seed": seed}
                    rep.add("C-commute", _rel(errc, scc), TOL_COMMUTE, **ctx)
                    rep.add("B-commute", _rel(errb, scb), TOL_COMMUTE, **ctx)


def _suite_trace(rep, mesh, config, wf):
    n = mesh.dim
    for k in config.orders(mesh):
        for r in config.rs:
            for seed in _seeds(config):
                u = _input(mesh, k, r, seed)
                D = bubble_transform(k, u, wf, strict=False)
                for m in range(k, n + 1):
                    S = D.partial_sum(m)
                    worst, scale = 0.0, 0.0
                    for f in mesh.simplices[m]:
                        nodes = face_lattice(f, r)
                        t1, t2 = trace_to(S, f, nodes).values, trace_to(u, f, nodes).values
                        worst = max(worst, float(np.max(np.abs(t1 - t2), initial=0.0)))
                        scale = max(scale, float(np.max(np.abs(t2), initial=0.0)))
                    rep.add("trace", _rel(worst, scale), TOL_TRACE, k=k, r=r, m=m, seed=seed)


def _outside_points(rng, mesh, f, count, ncells=5):
    """``count`` random points in up to ``ncells`` random cells outside Omega_f."""
    inside = set(macroelement(mesh, f).cells)
    outside = [c for c in range(mesh.n_cells) if c not in inside]
    if not outside:
        return []
    chosen = rng.choice(outside, size=min(ncells, len(outside)), replace=False)
    return _sample_cells(rng, mesh, sorted(int(c) for c in chosen), count, margin=0.01)


def _suite_support(rep, mesh, config, wf):
    rng = np.random.default_rng(config.seed)
    n = mesh.dim
    for k in config.orders(mesh):
        for r in config.rs:
            seed = config.seed
            u = _input(mesh, k, r, seed)
            D = bubble_transform(k, u, wf, strict=False)
            cache = OperatorCache(u, wf)
            worst_b = worst_c = 0.0
            worst_ratio = 0.0
            nb = 0
            for m in range(n + 1):
                for bub in D.bubbles[m]:
                    pts = _outside_points(rng, mesh, bub.f, 50)
                    local = cutoff_local(m, bub.f, k, u, wf, cache)
                    for ci, b in pts:
                        worst_b = max(worst_b, float(np.max(np.abs(bub(ci, b)), initial=0.0)))
                        worst_c = max(worst_c, float(np.max(np.abs(local(ci, b)), initial=0.0)))
                    nb += 1
            # rho_f / rho_g in [rho_f, 1] on Omega_f
            for m in range(n + 1):
                for f in mesh.simplices[m]:
                    for ci, b in _sample_cells(rng, mesh, macroelement(mesh, f).cells, 10):
                        rf = rho_values(mesh, ci, b, f)
                        for g in closed_subsimplices(f):
                            if g == f:
                                continue
                            q = rf / rho_values(mesh, ci, b, g)
                            worst_ratio = max(worst_ratio, float(np.max(rf - q)),
                                              float(np.max(q - 1.0)))
            ctx = {"k": k, "r": r, "bubbles": nb, "points_per_bubble": 50}
            rep.add("B-support", worst_b, TOL_SUPPORT, **ctx)
            rep.add("C-support", worst_c, TOL_SUPPORT, **ctx)
            rep.add("rho-ratio", max(worst_ratio, 0.0), TOL_EXACT, k=k, r=r)


def _suite_decomposition(rep, mesh, config, wf):
    rng = np.random.default_rng(config.seed)
    n = mesh.dim
    for k in config.orders(mesh):
        for r in config.rs:
            for seed in _seeds(config):
                u = _input(mesh, k, r, seed)
                D = bubble_transform(k, u, wf, strict=False)
                total = D.partial_sum(n)
                err = err_l = scale = 0.0
                for ci, b in _sample_cells(rng, mesh, range(mesh.n_cells), 100):
                    ref = u(ci, b)
                    err = max(err, float(np.max(np.abs(total(ci, b) - ref))))
                    err_l = max(err_l, float(np.max(np.abs(D.literal_sum(ci, b) - ref))))
                    scale = max(scale, float(np.max(np.abs(ref))))
                ctx = {"k": k, "r": r, "seed": seed, "points": 100}
                rep.add("decomp", _rel(err, scale), TOL_DECOMP, **ctx)
                rep.add("decomp-local", _rel(err_l, scale), TOL_DECOMP, **ctx)
                Cn = cutoff_global(n, k, u, wf)
                diff = float(np.max(np.abs(Cn.coeffs - u.coeffs)))
                rep.add("identity-stage", diff, 0.0, k=k, r=r, seed=seed)


def _suite_preservation(rep, mesh, config, wf):
    n = mesh.dim
    for k in config.orders(mesh):
        for r in config.rs:
            for cls, ident, test in (("Pr", "Pr", membership_Pr),
                                     ("Pr_minus", "Pr-", membership_Pr_minus)):
                u = _input(mesh, k, r, config.seed, cls)
                D = bubble_transform(k, u, wf, strict=False)
                ok = True
                for m in range(n + 1):
                    stage = (D.stages[m] if m == n else PiecewiseForm.from_callback(
                        mesh, k, lambda c, x, b=BubbleIndex(D.bubbles[m]): sum_bubbles(b, c, x)))
                    ok = ok and test(stage, r, tol=TOL_RECON, seed=config.seed)
                rep.add(ident, 0.0 if ok else 1.0, 0.0, k=k, r=r, space=cls)
                recon = max((v for v in D.residuals.values() if math.isfinite(v)), default=0.0)
                rep.add("recon", recon, TOL_RECON, k=k, r=r, space=cls)


def _suite_scalar(rep, mesh, config, wf):
    rng = np.random.default_rng(config.seed)
    for r in config.rs:
        u = _input(mesh, 0, r, config.seed)
        cache = OperatorCache(u, wf)
        worst = 0.0
        for m in (0, 1):
            if m > mesh.dim:
                continue
            for f in mesh.simplices[m]:
                bub = cutoff_local(m, f, 0, u, wf, cache)
                A = cache.reduced((), f).form
                for ci in range(mesh.n_cells):
                    b = interior_points(rng, mesh.dim, 5)
                    ref = scalar_cutoff_closed_form(mesh, f, A, ci, b)
                    worst = max(worst, float(np.max(np.abs(bub(ci, b)[:, 0] - ref))))
        rep.add("scalar", worst, TOL_SCALAR, r=r)


_RUNNERS = {
    "mesh": _suite_mesh,
    "weights": _suite_weights,
    "r-ops": _suite_rops,
    "commuting": _suite_commuting,
    "trace": _suite_trace,
    "support": _suite_support,
    "decomposition": _suite_decomposition,
    "preservation": _suite_preservation,
    "scalar-k0": _suite_scalar,
}


def run_suite(name, mesh, config=None, mesh_name="custom", weights=None):
    """Run one named invariant suite; check failures become report records."""
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    config = config or SuiteConfig()
    rep = SuiteReport(name, mesh_descriptor(mesh, mesh_name), config.seed, config.to_dict())
    t0 = time.perf_counter()
    if name != "mesh":
        pre = check_assumptions(mesh, config.boundary)
        if not pre["passed"]:
            bad = [e for e in pre["entries"] if not e["passed"]]
            rep.add("assumptions", 1.0, 0.0, failures=len(bad), first=bad[0])
            rep.seconds = time.perf_counter() - t0
            return rep
    try:
        wf = weights if weights is not None else (
            build_weights(mesh, config.boundary) if name != "mesh" else None)
        _RUNNERS[name](rep, mesh, config, wf)
    except (ReconstructionError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rep.add("exception", math.inf, 0.0, error=f"{type(exc).__name__}: {exc}")
    rep.seconds = time.perf_counter() - t0
    log.info("suite %s on %s: %s in %.2fs", name, mesh_name,
             "pass" if rep.passed else "FAIL", rep.seconds)
    return rep


# -- refinement studies ------------------------------------------------------------------------


@dataclass
class RefinementStudy:
    """Sampled operator-norm estimates of the bubble transform across refinements."""

    k: int
    r: int
    samples: int
    levels: list = field(default_factory=list)

    def indicator(self, key):
        """max over levels / min over levels of a per-level estimate.

        Estimates below ``NORM_FLOOR`` count as exact zeros; a quantity that
        vanishes on every level is uniform (indicator 1).
        """
        vals = [lv[key] for lv in self.levels if lv.get(key) is not None]
        if not vals:
            return math.nan
        vals = [0.0 if v < NORM_FLOOR else v for v in vals]
        if max(vals) == 0.0:
            return 1.0
        return max(vals) / min(vals) if min(vals) > 0 else math.inf

    @property
    def keys(self):
        return sorted({k for lv in self.levels for k in lv if k.startswith(("L2", "HL", "sq"))})

    def to_dict(self):
        return {"k": self.k, "r": self.r, "samples": self.samples,
                "levels": _jsonable(self.levels),
                "indicators": {key: _jsonable(self.indicator(key)) for key in self.keys}}


NORM_FLOOR = 1e-10
# estimates asserted by bounds_records; HLambda estimates are reported only
ASSERTED = ("L2", "sq")


def bounds_records(study):
    """Uniformity records: max/min over levels of each L2 estimate must stay <= 2."""
    out = []
    for key in study.keys:
        if not key.startswith(ASSERTED):
            continue
        val = study.indicator(key)
        anchor = ("square-sum bubble norm bounded uniformly in h" if key.startswith("sq")
                  else f"L2 norm of B_{key.split('_m')[1]} bounded uniformly in h")
        ok = math.isfinite(val) and val <= TOL_UNIFORM
        out.append(CheckRecord(f"uniformity-{key}", anchor, val, TOL_UNIFORM, ok,
                               {"k": study.k, "r": study.r, "levels": len(study.levels)}))
    return out


class _Sampler:
    """Quadrature values of forms, for Gram matrices of sampled inputs."""

    def __init__(self, mesh, degree):
        self.mesh = mesh
        self.pts, self.wts = grundmann_moller(mesh.dim, degree)
        self.vol = np.array([mesh.cell_volume(c) for c in range(mesh.n_cells)])

    def values(self, func, cells=None):
        cells = range(self.mesh.n_cells) if cells is None else cells
        return {c: func(c, self.pts) for c in cells}

    def inner(self, a, b):
        total = 0.0
        for c in a.keys() & b.keys():
            total += self.vol[c] * float(np.dot(self.wts, np.sum(a[c] * b[c], axis=1)))
        return total


def _gram(sampler, vals):
    s = len(vals)
    G = np.zeros((s, s))
    for i in range(s):
        for l in range(i, s):
            G[i, l] = G[l, i] = sampler.inner(vals[i], vals[l])
    return G


def _span_norm(num, den):
    """sqrt of the largest generalized eigenvalue: sup over the span of the samples.

    Dependent samples are handled by restricting to the range of ``den``.
    """
    lam, V = np.linalg.eigh(den)
    if lam.size == 0 or lam[-1] <= 0:
        return 0.0
    keep = lam > 1e-12 * lam[-1]
    W = V[:, keep] / np.sqrt(lam[keep])
    top = np.linalg.eigvalsh(W.T @ num @ W)[-1]
    return math.sqrt(max(float(top), 0.0))


def _probe_vertices(base_vertices, mesh, extra, rng):
    """Vertices of the unrefined mesh plus ``extra`` random vertices created by refinement."""
    probes = list(range(base_vertices))
    new = np.arange(base_vertices, mesh.n_vertices)
    if len(new) and extra:
        probes += sorted(int(v) for v in rng.choice(new, size=min(extra, len(new)),
                                                    replace=False))
    return probes


def _is_trivial(bubble):
    return all(t.reduced.is_zero or not np.any(getattr(t.reduced.form, "coeffs", 1.0))
               for t in bubble.terms)


def _probe_estimates(cur, wf, k, r, v, samples, seed, poly, rational):
    """Span estimates over ``samples`` random inputs supported on the star of ``v``."""
    n = cur.dim
    U, dU, stages, dstages, bubbles = [], [], [], [], []
    for s in range(samples):
        u = localized_form(cur, k, r, v, seed + 31 * s)
        D = bubble_transform(k, u, wf)
        U.append(poly.values(u))
        stages.append([poly.values(D.stages[m]) for m in range(n + 1)])
        bubbles.append({(m, b.f): rational.values(b, macroelement(cur, b.f).cells)
                        for m in range(n + 1) for b in D.bubbles[m] if not _is_trivial(b)})
        if k < n:
            du = u.d()
            Dd = bubble_transform(k + 1, du, wf)
            dU.append(poly.values(du))
            dstages.append([poly.values(Dd.stages[m]) for m in range(n + 1)])
    out = {}
    Gu = _gram(poly, U)
    Gdu = _gram(poly, dU) if dU else None
    for m in range(n + 1):
        Gm = _gram(poly, [st[m] for st in stages])
        out[f"L2_m{m}"] = _span_norm(Gm, Gu)
        if dU:
            Gdm = _gram(poly, [st[m] for st in dstages])
            out[f"HL_m{m}"] = _span_norm(Gm + Gdm, Gu + Gdu)
    Gsq = np.zeros_like(Gu)
    for key in set().union(*(b.keys() for b in bubbles)):
        Gsq += _gram(rational, [b.get(key, {}) for b in bubbles])
    out["sq_bubbles"] = _span_norm(Gsq, Gu)
    return out


def estimate_bounds(mesh, levels=4, k=0, r=1, samples=8, seed=0, boundary="closed", extra=2):
    """Refinement study of the bubble transform's norms.

    Operator norms are estimated from inputs supported on vertex stars: for
    each probe vertex, the supremum of ||B_m u|| / ||u|| over the span of
    ``samples`` random P_r forms on its star (nested in ``samples``, so the
    estimates are monotone in it), then the max over probes.  Probes are the
    vertices of ``mesh`` and ``extra`` random vertices of each refinement.
    The square-sum bubble norm uses sum_{m,f} ||B_{m,f} u||^2 and the HLambda
    estimate adds the commuted derivatives B_m du = d B_m u.  Each level also
    records the shape constant, the vertex overlap constant and the largest
    weight-bound constant ||z||_inf h^{n-j}.
    """
    study = RefinementStudy(k, r, samples)
    rng = np.random.default_rng(seed)
    cur = mesh
    for level in range(levels):
        if level > 0:
            cur = refine_uniform(cur)
        wf = build_weights(cur, boundary)
        entry = {"level": level, "cells": cur.n_cells, "shape_constant": shape_constant(cur),
                 "h": max(cur.cell_diameter(c) for c in range(cur.n_cells))}
        entry["weight_constant"] = max((c.zbound_constant for c in verify_weight_identities(wf)),
                                       default=0.0)
        entry["overlap_vertices"] = overlap_constant(cur, [macroelement(cur, v)
                                                           for v in cur.simplices[0]])
        probes = _probe_vertices(mesh.n_vertices, cur, extra if level else 0, rng)
        entry["probes"] = probes
        poly = _Sampler(cur, 2 * r + 2)
        rational = _Sampler(cur, 2 * r + 6)
        for v in probes:
            est = _probe_estimates(cur, wf, k, r, v, samples, seed, poly, rational)
            for key, val in est.items():
                entry[key] = max(entry.get(key, 0.0), val)
        study.levels.append(entry)
        log.info("bounds level %d: %s", level, entry)
    return study


# -- reports ----------------------------------------------------------------------------------


def load_schema():
    text = resources.files("bubbletx").joinpath("report_schema.json").read_text()
    return json.loads(text)


def build_report(kind, passed, records=(), **extra):
    """Top-level report object shared by every command."""
    out = {"tool": "bubbletx", "version": __version__, "kind": kind, "passed": bool(passed),
           "records": [r.to_dict() if isinstance(r, CheckRecord) else r for r in records]}
    out.update(_jsonable(extra))
    return out


def suites_report(reports):
    """Combine suite reports into one top-level report."""
    return build_report("verify", all(r.passed for r in reports),
                        suites=[r.to_dict() for r in reports],
                        timing={"seconds": round(sum(r.seconds for r in reports), 3)})


def validate_report(report):
    import jsonschema
    jsonschema.validate(report, load_schema())


def emit_report(report, path=None):
    """Validate and write ``report`` as JSON with sorted keys; returns the text."""
    if isinstance(report, SuiteReport):
        report = suites_report([report])
    validate_report(report)
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
