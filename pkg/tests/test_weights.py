import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bubbletx.corpus import DEFAULT_CORPUS, square_fan, two_triangles
from bubbletx.forms import random_form
from bubbletx.mesh import complement, macroelement
from bubbletx.transform import OperatorCache, r_identity_check
from bubbletx.weights import (RegionComplex, build_weights, cochain_integral, cochain_values,
                              coboundary_matrix, delta_op, delta_plus_op, orthogonality_residuals,
                              verify_weight_identities, volume_form, weights_from_dict,
                              weights_to_dict, z_linf)

from conftest import corpus_mesh, corpus_weights


def test_volume_forms(rng):
    m = square_fan(2)
    simplices = [f for s in m.simplices for f in s]
    for idx in rng.choice(len(simplices), size=20, replace=False):
        assert cochain_integral(m, volume_form(m, simplices[idx])) == pytest.approx(1.0)
    T = m.cells[7]
    vals = cochain_values(m, volume_form(m, T), 2, 7, np.array([[0.2, 0.3, 0.5]]))
    assert vals[0, 0] == pytest.approx(1.0 / m.cell_volume(7))


def test_initial_weights(fan_weights):
    wf = fan_weights
    m = wf.mesh
    for f in m.simplices[1]:
        for x in f:
            assert cochain_integral(m, wf.z[((x,), f)]) == pytest.approx(-1.0)
        # delta^+ of the initial family on an edge e = f
        assert np.allclose(delta_plus_op(wf.z, f, f), 0)


def _random_family(rng, f):
    fam = {}
    for size in range(len(f) + 1):
        for g in itertools.combinations(f, size):
            for esize in range(len(g) + 1):
                for e in itertools.combinations(g, esize):
                    fam[(e, g)] = rng.integers(-9, 10, size=4).astype(float)
    return fam


@given(st.integers(0, 2**31 - 1))
def test_delta_algebra(seed):
    rng = np.random.default_rng(seed)
    f = (0, 2, 3, 5)
    z = _random_family(rng, f)
    d = lambda e, g: delta_op(z, e, g)
    dp = lambda e, g: delta_plus_op(z, e, g)
    for e in itertools.combinations(f, 2):
        assert np.all(delta_op(d, e, f) == 0)
        assert np.all(delta_plus_op(dp, e, f) == 0)
        assert np.all(delta_op(dp, e, f) == -delta_plus_op(d, e, f))


@pytest.mark.parametrize("name", ["two-triangles", "square-fan-4", "lshape-6", "cube-6"])
def test_vertex_level_equation(name):
    wf = corpus_weights(name)
    m = wf.mesh
    D = coboundary_matrix(m, m.dim - 1)
    for f in m.simplices[1] + m.simplices[m.dim]:
        for x in f:
            fx = complement(f, (x,))
            # sign convention dw = (-1)^{j+1}(delta - delta^+)w, so at j = 0 the
            # right-hand side is vol_{f(x^)} - vol_f
            want = volume_form(m, fx) - volume_form(m, f)
            assert np.allclose(D @ wf.w[((x,), f)], want, atol=1e-12)
    paper = build_weights(m, sign_convention="paper", max_level=0)
    f = m.simplices[1][0]
    x = f[0]
    assert np.allclose(D @ paper.w[((x,), f)],
                       volume_form(m, f) - volume_form(m, complement(f, (x,))), atol=1e-12)


def test_paper_sign_breaks_z_identity():
    m = corpus_mesh("square-fan-4")
    paper = build_weights(m, sign_convention="paper")
    worst = max(c.dz_residual for c in verify_weight_identities(paper))
    assert worst > 0.1


def test_solves_match_pseudo_inverse():
    m = two_triangles()
    wf = build_weights(m)
    n = m.dim
    for (e, f), w in wf.w.items():
        if not e:
            continue
        j = len(e) - 1
        p = n - j - 1
        g = complement(f, e)
        rc = RegionComplex(m, macroelement(m, g).cells)
        rhs = (-1) ** (j + 1) * (delta_op(wf.w, e, f) - delta_plus_op(wf.w, e, f))
        A = rc.d(p)
        b = rhs[rc.free[p + 1]]
        if p > 0 and len(rc.free[p - 1]):
            C = rc.d(p - 1).T @ rc.mass(p)
            A, b = np.vstack([A, C]), np.concatenate([b, np.zeros(C.shape[0])])
        x = np.linalg.pinv(A) @ b
        assert np.allclose(w[rc.free[p]], x, atol=1e-12)


@pytest.mark.parametrize("name", DEFAULT_CORPUS)
def test_z_identities_and_support(name):
    wf = corpus_weights(name)
    for c in verify_weight_identities(wf):
        assert c.dz_residual <= 1e-10
        assert c.delta_plus_residual <= 1e-12
        assert c.support_leak == 0.0
    assert max(orthogonality_residuals(wf).values(), default=0.0) < 1e-10


def test_zbound_constant_stable_under_refinement():
    consts = []
    for lev in range(3):
        wf = build_weights(square_fan(lev))
        consts.append(max(c.zbound_constant for c in verify_weight_identities(wf)))
    assert max(consts) / min(consts) < 1.5


def test_interior_boundary_mode_breaks_r_identity():
    m = corpus_mesh("square-fan-4")
    wf = build_weights(m, boundary="interior")
    assert max(c.dz_residual for c in verify_weight_identities(wf)) < 1e-10
    u = random_form(m, 0, 2, "Pr", 3)
    cache, dcache = OperatorCache(u, wf), OperatorCache(u.d(), wf)
    worst = max(r_identity_check(e, f, 0, u, wf, cache, dcache).d_relation
                for f in m.simplices[2] for e in itertools.combinations(f, 2))
    assert worst > 1e-3


def test_serialization_roundtrip():
    m = corpus_mesh("lshape-6")
    wf = corpus_weights("lshape-6")
    data = json.loads(json.dumps(weights_to_dict(wf)))
    back = weights_from_dict(m, data)
    assert back.w.keys() == wf.w.keys() and back.z.keys() == wf.z.keys()
    assert all(np.array_equal(back.z[k], wf.z[k]) for k in wf.z)
    with pytest.raises(ValueError):
        weights_from_dict(corpus_mesh("lshape-12"), data)


def test_z_linf_positive(fan_weights):
    e, f = next(iter(k for k in fan_weights.z if len(k[0]) == 2))
    assert z_linf(fan_weights, e, f) > 0
