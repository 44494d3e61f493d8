import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bubbletx.corpus import square_fan, two_triangles
from bubbletx.forms import (LambdaForm, PiecewiseForm, alternators, apply_form, barycentric_form,
                            contract, form_from_dict, form_to_dict, l2_norm, lambda_pullback,
                            localized_form, membership_Pr, membership_Pr_minus, ncomp,
                            random_form, rho, rho_values, trace_jump, trace_to, vectors_to_form,
                            wedge, wedge_forms, whitney, whitney_values)
from bubbletx.mesh import SimplicialComplex
from bubbletx.quadrature import grundmann_moller, interior_points

from conftest import corpus_mesh

TRI = SimplicialComplex(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [(0, 1, 2)])


def _perm_sign(p):
    return (-1) ** sum(p[i] > p[j] for i in range(len(p)) for j in range(i + 1, len(p)))


def _alt_eval(omega, k, vecs, n):
    """omega(v_1..v_k) from components, by the permutation-sum definition."""
    total = 0.0
    for iI, I in enumerate(alternators(n, k)):
        det = sum(_perm_sign(p) * math.prod(vecs[a][I[p[a]]] for a in range(k))
                  for p in itertools.permutations(range(k)))
        total += omega[iI] * det
    return total


forms_strategy = st.integers(0, 2**31 - 1)


# -- pointwise algebra ----------------------------------------------------------------------------


@given(forms_strategy)
def test_wedge_matches_permutation_sum(seed):
    rng = np.random.default_rng(seed)
    n = 3
    for ka, kb in [(1, 1), (1, 2), (0, 2)]:
        a, b = rng.standard_normal(ncomp(n, ka)), rng.standard_normal(ncomp(n, kb))
        vecs = rng.standard_normal((ka + kb, n))
        w = wedge(a, ka, b, kb, n)
        # (a ∧ b)(v) = 1/(ka! kb!) sum_sigma sgn a(v_sigma..) b(v_sigma..)
        brute = 0.0
        for p in itertools.permutations(range(ka + kb)):
            brute += _perm_sign(p) * _alt_eval(a, ka, vecs[list(p[:ka])], n) * \
                _alt_eval(b, kb, vecs[list(p[ka:])], n)
        brute /= math.factorial(ka) * math.factorial(kb)
        assert _alt_eval(w, ka + kb, vecs, n) == pytest.approx(brute, abs=1e-10)


@given(forms_strategy)
def test_wedge_graded_commutative_and_associative(seed):
    rng = np.random.default_rng(seed)
    n = 4
    a, b, c = (rng.standard_normal(ncomp(n, 1)), rng.standard_normal(ncomp(n, 2)),
               rng.standard_normal(ncomp(n, 1)))
    assert np.allclose(wedge(a, 1, b, 2, n), wedge(b, 2, a, 1, n))
    assert np.allclose(wedge(a, 1, c, 1, n), -wedge(c, 1, a, 1, n))
    assert np.allclose(wedge(wedge(a, 1, b, 2, n), 3, c, 1, n),
                       wedge(a, 1, wedge(b, 2, c, 1, n), 3, n))
    assert np.allclose(wedge(a, 1, a, 1, n), 0)


def test_wedge_with_scalar():
    v = np.array([1.0, -2.0, 3.0])
    assert np.allclose(wedge(np.array([2.5]), 0, v, 1, 3), 2.5 * v)


@given(forms_strategy)
def test_contraction_twice_vanishes(seed):
    rng = np.random.default_rng(seed)
    n, k = 3, 2
    u, v = rng.standard_normal(ncomp(n, k)), rng.standard_normal(n)
    once = contract(u, k, v, n)
    assert np.allclose(contract(once, k - 1, v, n), 0)
    t = rng.standard_normal(n)
    assert contract(u, k, v, n) @ t == pytest.approx(apply_form(u, np.array([v, t]), n))


# -- named forms ------------------------------------------------------------------------------


def test_whitney_low_order():
    pts = interior_points(np.random.default_rng(0), 2, 7)
    lam = pts
    G = TRI.cell_grads(0)
    assert np.allclose(whitney_values(TRI, 0, pts, (0,))[:, 0], lam[:, 0])
    edge = whitney_values(TRI, 0, pts, (0, 1))
    want = lam[:, :1] * G[1] - lam[:, 1:2] * G[0]
    assert np.allclose(edge, want)


def test_whitney_derivative():
    m = square_fan(1)
    for f in [m.simplices[1][3], m.simplices[2][5], m.simplices[0][2]]:
        d = whitney(m, f).d()
        ci = m.star(f)[0]
        pts = interior_points(np.random.default_rng(1), 2, 4)
        _, grads = (None, m.cell_grads(ci))
        cell = m.cells[ci]
        want = (len(f)) * vectors_to_form(grads[[cell.index(v) for v in f]], 2)
        assert np.allclose(d(ci, pts), want[None, :])


@pytest.mark.parametrize("mdim", [0, 1, 2])
def test_whitney_trace_integral(mdim):
    # the trace of phi_f integrates to 1/m! over f (tangent frame x_{f_a} - x_{f_0})
    m = two_triangles()
    f = m.simplices[mdim][1]
    pts, wts = grundmann_moller(mdim, 4) if mdim else (np.ones((1, 1)), np.ones(1))
    tr = trace_to(whitney(m, f), f, pts).values
    # reference simplex volume 1/m! in the tangent frame coordinates
    integral = float(np.dot(wts, tr[:, 0])) / math.factorial(mdim)
    assert integral == pytest.approx(1 / math.factorial(mdim), rel=1e-12)


def test_trace_vanishing_and_chain_rule():
    m = two_triangles()
    lam0 = barycentric_form(m, 0)
    pts = np.array([[0.3, 0.7], [0.5, 0.5]])
    assert np.allclose(trace_to(lam0, (1, 3), pts).values, 0)
    u = random_form(m, 0, 2, "Pr", 4)
    edge = (1, 2)
    h = 1e-6
    s = np.array([[0.4 + h, 0.6 - h], [0.4 - h, 0.6 + h]])
    vals = trace_to(u, edge, s).values[:, 0]
    # d/dt of t -> u(x_1 + t (x_2 - x_1)) at lambda = (0.4, 0.6)
    fd = -(vals[0] - vals[1]) / (2 * h)
    du = trace_to(u.d(), edge, np.array([[0.4, 0.6]])).values[0, 0]
    assert du == pytest.approx(fd, rel=1e-6)


def test_rho():
    m = two_triangles()
    pts = interior_points(np.random.default_rng(2), 2, 100)
    assert np.allclose(rho_values(m, 0, pts, ()), 1)
    assert np.allclose(rho_values(m, 0, pts, m.cells[0]), 0)
    f = (1, 2)
    lf = np.zeros((100, 2))
    lf[:, 0], lf[:, 1] = pts[:, 1], pts[:, 2]
    assert np.allclose(rho_values(m, 0, pts, f), 1 - lf.sum(axis=1))     # rho_f = b(L_f x)
    assert np.allclose(rho(m, f)(1, pts)[:, 0], rho_values(m, 1, pts, f))


# -- exterior derivative, pullbacks ------------------------------------------------------------


def test_derivative_of_barycentric():
    m = two_triangles()
    d = barycentric_form(m, 0).d()
    assert np.allclose(d(0, np.array([[0.2, 0.3, 0.5]])), m.cell_grads(0)[0])
    assert np.allclose(d.d().coeffs, 0)


@given(forms_strategy, st.integers(0, 2), st.integers(1, 3))
def test_d_squared_zero(seed, k, r):
    m = corpus_mesh("square-fan-4")
    u = random_form(m, k, r, "Pr", seed)
    assert np.max(np.abs(u.d().d().coeffs), initial=0.0) < 1e-11


def test_lambda_pullback_commutes_with_d(rng):
    m = square_fan(1)
    for base, k in [((0, 4, 5), 0), ((0, 4, 5), 1), ((1, 6), 0)]:
        w = LambdaForm.from_values(base, k, 2, lambda lam, s=rng.integers(1000):
                                   np.random.default_rng(int(s)).standard_normal(
                                       (1, ncomp(len(base), k))) + 0 * lam[:, :1] + lam[:, :1] ** 2)
        for g in [base, base[:1], ()]:
            lhs = lambda_pullback(m, g, w).d()
            rhs = lambda_pullback(m, g, w.d())
            pts = interior_points(rng, 2, 5)
            for ci in range(m.n_cells):
                assert np.allclose(lhs(ci, pts), rhs(ci, pts), atol=1e-11)


def test_empty_pullback_is_constant():
    m = two_triangles()
    w = LambdaForm.from_values((0, 1), 0, 1, lambda lam: 3.0 + lam[:, :1] - 2 * lam[:, 1:2])
    pulled = lambda_pullback(m, (), w)
    pts = interior_points(np.random.default_rng(0), 2, 4)
    assert np.allclose(pulled(1, pts), 3.0)


# -- membership, norms, random forms --------------------------------------------------------------


def test_membership_whitney_and_negative_case():
    m = square_fan(1)
    phi = whitney(m, m.simplices[1][4])
    assert membership_Pr(phi, 1) and membership_Pr_minus(phi, 1)
    # lambda_0 dlambda_1 alone has a degree-2 contraction
    a, b = m.simplices[1][4]
    u = wedge_forms(barycentric_form(m, a), barycentric_form(m, b).d())
    assert np.any(u.coeffs)
    assert membership_Pr(u, 1)
    assert not membership_Pr_minus(u, 1)
    # a P_1 form is in both classes at level 2
    assert membership_Pr(u, 2) and membership_Pr_minus(u, 2)


def test_membership_rejects_rational_callback():
    m = two_triangles()
    bad = PiecewiseForm.from_callback(m, 0, lambda c, x: 1.0 / (1.0 + x[:, :1]))
    assert not membership_Pr(bad, 3)
    sing = PiecewiseForm.from_callback(m, 0, lambda c, x: x[:, :1] / x[:, 1:2])
    assert not membership_Pr(sing, 2)


@pytest.mark.parametrize("cls,test", [("Pr", membership_Pr), ("Pr_minus", membership_Pr_minus),
                                      ("whitney_span", membership_Pr_minus)])
def test_random_classes_pass_membership(cls, test):
    m = corpus_mesh("square-fan-4")
    for seed in range(50):
        k = seed % 3
        r = 1 + seed % 3
        u = random_form(m, k, r, cls, seed)
        assert test(u, r)
        assert trace_jump(u) < 1e-12


def test_localized_form_support():
    m = square_fan(1)
    u = localized_form(m, 1, 2, 4, seed=3)
    star = set(m.star((4,)))
    assert all(not np.any(u.coeffs[c]) for c in range(m.n_cells) if c not in star)
    assert membership_Pr(u, 2) and trace_jump(u) < 1e-12


def test_l2_norms():
    m = two_triangles()
    c = PiecewiseForm.interpolate(m, 0, 1, lambda ci, x: np.full((len(x), 1), -2.0))
    assert l2_norm(c) == pytest.approx(2.0 * math.sqrt(m.domain_volume))
    assert l2_norm(c * 3.0) == pytest.approx(3 * l2_norm(c))
    # |grad lambda_0|^2 = 2 on the reference triangle of area 1/2
    assert l2_norm(barycentric_form(TRI, 0).d()) == pytest.approx(1.0)


def test_form_dict_roundtrip():
    m = corpus_mesh("lshape-6")
    u = random_form(m, 1, 2, "Pr", 5)
    back = form_from_dict(m, form_to_dict(u))
    assert np.allclose(back.coeffs, u.coeffs)
    named = form_from_dict(m, {"class": "named", "name": "whitney", "simplex": [0, 1]})
    assert named.k == 1
    rnd = form_from_dict(m, {"class": "random", "space": "Pr-", "k": 1, "r": 2, "seed": 1})
    assert membership_Pr_minus(rnd, 2)
    with pytest.raises(ValueError):
        form_from_dict(m, {"class": "spline"})
