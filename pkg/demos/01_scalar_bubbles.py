"""Scalar bubbles on a small fan.

A constant function splits into vertex bubbles that are exactly the hat
functions, and a random quadratic splits into vertex, edge and cell pieces
whose sum gives the function back.
"""
import numpy as np

from bubbletx import build_weights, bubble_transform, cutoff_local, random_form
from bubbletx.corpus import load_corpus
from bubbletx.forms import PiecewiseForm
from bubbletx.quadrature import interior_points

mesh = load_corpus("square-fan-4")
wf = build_weights(mesh)
rng = np.random.default_rng(0)

one = PiecewiseForm.interpolate(mesh, 0, 1, lambda c, x: np.ones((len(x), 1)))
v = mesh.simplices[0][0]
hat = cutoff_local(0, v, 0, one, wf)
ci = mesh.star(v)[0]
b = interior_points(rng, 2, 3)
print("vertex", v, "cell", ci)
print("  bubble of 1      :", hat(ci, b)[:, 0])
print("  lambda_v         :", b[:, list(mesh.cells[ci]).index(v[0])])

u = random_form(mesh, 0, 2, seed=1)
D = bubble_transform(0, u, wf)
for m, stage in enumerate(D.stages):
    print(f"stage B_{m}: {len(D.bubbles[m])} local bubbles, max coefficient {stage.max_abs():.3f}")
b = interior_points(rng, 2, 4)
err = max(np.max(np.abs(D.partial_sum(2)(c, b) - u(c, b))) for c in range(mesh.n_cells))
print(f"max |u - sum_m B_m u| = {err:.2e}")
