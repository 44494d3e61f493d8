"""Operator norms of the bubble transform under uniform refinement.

Each level reports the sampled L2 norms of B_0, B_1, B_2 and of the
square-sum of the local bubbles; all of them stay bounded as h halves.
"""
from bubbletx import estimate_bounds
from bubbletx.corpus import load_corpus

mesh = load_corpus("square-fan-4")
study = estimate_bounds(mesh, levels=3, k=1, r=1, samples=4)
keys = [k for k in study.keys if k.startswith(("L2", "sq"))]
print("level  cells      h  " + "  ".join(f"{k:>10s}" for k in keys))
for lv in study.levels:
    print(f"{lv['level']:5d} {lv['cells']:6d} {lv['h']:6.3f}  "
          + "  ".join(f"{lv[k]:10.4f}" for k in keys))
print("max/min over levels: " + ", ".join(f"{k} {study.indicator(k):.3f}" for k in keys))
