"""Bubble decomposition of a 1-form on an L-shaped domain.

Shows the stages B_0, B_1, B_2, the trace preservation on edges and the
commuting property d B_m u = B_m du.
"""
import numpy as np

from bubbletx import build_weights, bubble_transform, random_form
from bubbletx.corpus import load_corpus
from bubbletx.forms import face_lattice, trace_to
from bubbletx.quadrature import interior_points

mesh = load_corpus("lshape-6")
wf = build_weights(mesh)
u = random_form(mesh, 1, 2, seed=4)
D = bubble_transform(1, u, wf)
Dd = bubble_transform(2, u.d(), wf)
rng = np.random.default_rng(1)

print(f"L-shape: {mesh.n_vertices} vertices, {mesh.n_cells} triangles")
for m in range(3):
    b = interior_points(rng, 2, 10)
    comm = max(np.max(np.abs(D.stages[m].d()(c, b) - Dd.stages[m](c, b)))
               for c in range(mesh.n_cells))
    print(f"B_{m}: {len(D.bubbles[m]):3d} bubbles, |d B_{m} u - B_{m} du| = {comm:.1e}")

# stages up to m = 1 already carry every edge trace of u
S = D.partial_sum(1)
worst = 0.0
for e in mesh.simplices[1]:
    nodes = face_lattice(e, 2)
    worst = max(worst, np.max(np.abs(trace_to(S, e, nodes).values - trace_to(u, e, nodes).values)))
print(f"edge traces of B_0 u + B_1 u vs u: {worst:.1e}")
