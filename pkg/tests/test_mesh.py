import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bubbletx.corpus import DEFAULT_CORPUS, interval, lshape, square_fan, two_triangles
from bubbletx.mesh import (MeshError, SimplicialComplex, check_assumptions, dual_manifold,
                           dual_vertices, extended_macroelement, internal_index, load_mesh,
                           macroelement, omega_ef, overlap_constant, quasi_uniformity_ratio,
                           refine_uniform, save_mesh, shape_constant, vertex_star_connected)
from bubbletx.weights import RegionComplex

from conftest import corpus_mesh

TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def hexagon_fan():
    ang = np.arange(6) * np.pi / 3
    V = np.vstack([[0.0, 0.0], np.c_[np.cos(ang), np.sin(ang)]])
    cells = [(0, 1 + i, 1 + (i + 1) % 6) for i in range(6)]
    return SimplicialComplex.from_unsorted(V, cells)


def pinched():
    V = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
    return SimplicialComplex(V, [(0, 1, 2), (0, 3, 4)])


# -- construction ---------------------------------------------------------------------------------


def test_single_triangle_counts():
    m = SimplicialComplex(TRI, [(0, 1, 2)])
    assert [len(s) for s in m.simplices] == [3, 3, 1]


def test_two_triangles_edges():
    m = two_triangles()
    assert len(m.simplices[1]) == 5


def test_non_ascending_cell_rejected():
    with pytest.raises(MeshError, match="ascending"):
        SimplicialComplex(TRI, [(2, 0, 1)])


def test_mesh_file_roundtrip(tmp_path):
    m = lshape(fan=True)
    save_mesh(m, tmp_path / "m.json")
    back = load_mesh(tmp_path / "m.json")
    assert back.cells == m.cells and np.allclose(back.vertices, m.vertices)
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "bad.json")


@pytest.mark.parametrize("name", DEFAULT_CORPUS)
def test_corpus_meets_assumptions(name):
    assert check_assumptions(corpus_mesh(name))["passed"]


# -- combinatorics ----------------------------------------------------------------------------------


def test_internal_index():
    assert internal_index((3, 7, 9), 7) == 1
    assert internal_index((3,), 3) == 0
    with pytest.raises(ValueError):
        internal_index((3, 7), 5)


def _sigma_identity(e, p, i):
    ep = tuple(v for v in e if v != p)
    ei = tuple(v for v in e if v != i)
    lhs = (-1) ** (internal_index(e, p) + internal_index(ep, i))
    rhs = -(-1) ** (internal_index(e, i) + internal_index(ei, p))
    return lhs == rhs


@given(st.lists(st.integers(0, 30), min_size=2, max_size=6, unique=True))
def test_sign_identity_for_deleted_vertices(verts):
    e = tuple(sorted(verts))
    for p, i in itertools.permutations(e, 2):
        assert _sigma_identity(e, p, i)


def test_stars_and_macroelements():
    m = hexagon_fan()
    assert len(macroelement(m, (0,)).cells) == 6
    for ci, c in enumerate(m.cells):
        assert macroelement(m, c).cells == (ci,)
    interior = [f for f in m.simplices[1] if 0 in f]
    assert all(len(macroelement(m, f).cells) == 2 for f in interior)
    v = (1,)
    assert extended_macroelement(m, v).cells == macroelement(m, v).cells
    e = (0, 1)
    both = set(macroelement(m, (0,)).cells) | set(macroelement(m, (1,)).cells)
    assert set(extended_macroelement(m, e).cells) == both


def test_macroelement_nesting_random(rng):
    m = square_fan(2)
    simplices = [f for s in m.simplices for f in s]
    for idx in rng.choice(len(simplices), size=100):
        f = simplices[idx]
        assert macroelement(m, f).issubset(extended_macroelement(m, f))


def test_omega_ef_cases_and_recursion():
    m = refine_uniform(refine_uniform(SimplicialComplex(TRI, [(0, 1, 2)])))
    for k in range(3):
        for f in m.simplices[k]:
            assert omega_ef(m, (), f).cells == macroelement(m, f).cells
            assert omega_ef(m, f, f).cells == extended_macroelement(m, f).cells
            for size in range(1, len(f) + 1):
                for e in itertools.combinations(f, size):
                    assert omega_ef(m, e, f).cells == omega_ef(m, e, f, "recursive").cells


def test_dual_manifold():
    m = hexagon_fan()
    spoke = (0, 1)
    assert dual_vertices(m, spoke) == [2, 6]
    assert len(dual_manifold(m, (0,))) == 6          # polyline of opposite edges
    assert dual_vertices(m, (0,)) == list(range(1, 7))


# -- diagnostics -----------------------------------------------------------------------------------


def test_shape_constant_values():
    eq = SimplicialComplex(np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]), [(0, 1, 2)])
    assert shape_constant(eq) == pytest.approx(math.sqrt(3), rel=1e-12)
    right = SimplicialComplex(TRI, [(0, 1, 2)])
    assert shape_constant(right) == pytest.approx(math.sqrt(2) + 1, rel=1e-12)
    assert shape_constant(refine_uniform(right)) == pytest.approx(math.sqrt(2) + 1, rel=1e-12)


@given(st.floats(0, 2 * np.pi), st.floats(0.1, 10), st.floats(-5, 5), st.floats(-5, 5))
def test_shape_constant_rigid_and_scaling_invariant(theta, s, tx, ty):
    base = lshape(fan=True)
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    moved = SimplicialComplex(s * base.vertices @ R.T + [tx, ty], base.cells)
    assert shape_constant(moved) == pytest.approx(shape_constant(base), rel=1e-12)


def test_overlap_constants():
    for m in (square_fan(1), corpus_mesh("cube-6")):
        n = m.dim
        assert overlap_constant(m, [macroelement(m, c) for c in m.cells]) == 1
        assert overlap_constant(m, [macroelement(m, v) for v in m.simplices[0]]) == n + 1
        # extended macroelements against a brute-force per-cell count
        regions = [extended_macroelement(m, f) for f in m.simplices[1]]
        brute = max(sum(ci in r.cells for r in regions) for ci in range(m.n_cells))
        assert overlap_constant(m, regions) == brute


def test_quasi_uniformity():
    assert quasi_uniformity_ratio(square_fan(1), (0,), (0,)) == pytest.approx(1.0)
    graded = interval(5, graded=True)
    assert quasi_uniformity_ratio(graded, (2,), (2,)) == pytest.approx(2.0)


def test_refinement_counts():
    m = SimplicialComplex(TRI, [(0, 1, 2)])
    for _ in range(3):
        fine = refine_uniform(m)
        V, E, C = (len(s) for s in m.simplices)
        # every edge gains a midpoint and splits in two; each cell adds three interior edges
        assert [len(s) for s in fine.simplices] == [V + E, 2 * E + 3 * C, 4 * C]
        assert len(fine.simplices[0]) - len(fine.simplices[1]) + len(fine.simplices[2]) == 1
        m = fine


def test_interval_refinement():
    m = interval(3)
    fine = refine_uniform(m)
    assert [len(s) for s in fine.simplices] == [7, 6]
    assert max(fine.cell_diameter(c) for c in range(6)) == pytest.approx(
        0.5 * max(m.cell_diameter(c) for c in range(3)))


# -- assumptions -----------------------------------------------------------------------------------


def test_fan_passes_and_pinched_fails():
    assert check_assumptions(hexagon_fan())["passed"]
    res = check_assumptions(pinched())
    assert not res["passed"]
    bad = [e for e in res["entries"] if not e["passed"]]
    assert any(e["check"] == "vertex-link-connected" and e["simplex"] == [0] for e in bad)
    assert not vertex_star_connected(pinched(), 0)


def _homology(mesh, cells):
    """Betti numbers of the region from brute-force boundary-matrix ranks."""
    n = mesh.dim
    simp = [sorted({s for c in cells for s in itertools.combinations(mesh.cells[c], p + 1)})
            for p in range(n + 1)]
    idx = [{s: i for i, s in enumerate(sp)} for sp in simp]
    ranks = [0] * (n + 2)
    for p in range(1, n + 1):
        B = np.zeros((len(simp[p - 1]), len(simp[p])))
        for j, s in enumerate(simp[p]):
            for i in range(len(s)):
                B[idx[p - 1][s[:i] + s[i + 1:]], j] = (-1) ** i
        ranks[p] = np.linalg.matrix_rank(B)
    return [len(simp[p]) - ranks[p] - ranks[p + 1] for p in range(n + 1)]


def test_exactness_matches_brute_force_homology(rng):
    # zero-trace cohomology of a region equals the homology of the region in the
    # complementary degree; compare on random extended macroelements
    meshes = [square_fan(2), lshape(fan=True), corpus_mesh("cube-6"), interval(6)]
    for trial in range(10):
        m = meshes[trial % len(meshes)]
        simplices = [f for s in m.simplices for f in s]
        f = simplices[rng.integers(len(simplices))]
        cells = extended_macroelement(m, f).cells
        rc = RegionComplex(m, cells, "closed")
        assert rc.betti() == _homology(m, cells)[::-1]
        assert rc.betti() == rc.expected_betti()
