"""Reference meshes shipped with the package."""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .mesh import SimplicialComplex, mesh_from_dict, refine_uniform

DEFAULT_CORPUS = ("interval-2", "interval-5", "interval-8", "two-triangles", "square-fan-4",
                  "square-8", "square-fan-16", "square-fan-64", "lshape-6", "lshape-12",
                  "lshape-24", "lshape-48", "cube-6")


def interval(ncells, graded=False):
    """[0, 1] split into ``ncells`` pieces (geometric 2:1 grading if ``graded``)."""
    if graded:
        w = 2.0 ** np.arange(ncells)
        x = np.concatenate([[0.0], np.cumsum(w) / w.sum()])
    else:
        x = np.linspace(0.0, 1.0, ncells + 1)
    return SimplicialComplex(x[:, None], [(i, i + 1) for i in range(ncells)])


def two_triangles():
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return SimplicialComplex(V, [(0, 1, 2), (1, 2, 3)])


def square_fan(levels=0):
    """Unit square split into 4 triangles around its center, refined ``levels`` times."""
    V = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], dtype=float)
    mesh = SimplicialComplex(V, [(0, 1, 4), (1, 2, 4), (2, 3, 4), (0, 3, 4)])
    for _ in range(levels):
        mesh = refine_uniform(mesh)
    return mesh


def square_grid(nx):
    """Unit square, nx by nx squares each cut along the same diagonal."""
    xs = np.linspace(0.0, 1.0, nx + 1)
    V = np.array([(x, y) for y in xs for x in xs])
    vid = lambda i, j: j * (nx + 1) + i
    cells = []
    for j in range(nx):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cells += [(a, b, d), (a, c, d)]
    return SimplicialComplex.from_unsorted(V, cells)


def lshape(fan=False, levels=0):
    """L-shaped domain from three unit squares.

    Each square is cut by a diagonal (6 triangles) or fanned around its
    center (12 triangles), then refined ``levels`` times.
    """
    squares = [(0, 0), (1, 0), (0, 1)]
    verts, cells = {}, []

    def vid(p):
        p = (round(p[0], 12), round(p[1], 12))
        if p not in verts:
            verts[p] = len(verts)
        return verts[p]

    for sx, sy in squares:
        a, b = vid((sx, sy)), vid((sx + 1, sy))
        c, d = vid((sx + 1, sy + 1)), vid((sx, sy + 1))
        if fan:
            m = vid((sx + 0.5, sy + 0.5))
            cells += [(a, b, m), (b, c, m), (c, d, m), (d, a, m)]
        else:
            cells += [(a, b, c), (a, c, d)]
    V = np.array(sorted(verts, key=verts.get), dtype=float)
    mesh = SimplicialComplex.from_unsorted(V, cells)
    for _ in range(levels):
        mesh = refine_uniform(mesh)
    return mesh


def kuhn_cube():
    """Unit cube split into the 6 Kuhn tetrahedra sharing the main diagonal."""
    V = np.array([[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=float)
    cells = []
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        path, cur = [0], 0
        for axis in perm:
            cur |= 1 << axis
            path.append(cur)
        cells.append(tuple(path))
    return SimplicialComplex.from_unsorted(V, cells)


GENERATORS = {
    "interval-2": lambda: interval(2),
    "interval-5": lambda: interval(5, graded=True),
    "interval-8": lambda: interval(8),
    "two-triangles": two_triangles,
    "square-fan-4": lambda: square_fan(0),
    "square-8": lambda: square_grid(2),
    "square-fan-16": lambda: square_fan(1),
    "square-fan-64": lambda: square_fan(2),
    "lshape-6": lambda: lshape(),
    "lshape-12": lambda: lshape(fan=True),
    "lshape-24": lambda: lshape(levels=1),
    "lshape-48": lambda: lshape(fan=True, levels=1),
    "cube-6": kuhn_cube,
}


def corpus_names():
    return list(GENERATORS)


def load_corpus(name):
    """Load a shipped corpus mesh by name (falls back to the generator)."""
    if name not in GENERATORS:
        raise KeyError(f"unknown corpus mesh {name!r}; choose from {corpus_names()}")
    try:
        root = resources.files("bubbletx").joinpath("data").joinpath("corpus")
        text = root.joinpath(f"{name}.json").read_text()
    except (FileNotFoundError, OSError):
        return GENERATORS[name]()
    return mesh_from_dict(json.loads(text))


def write_corpus(directory):
    """Regenerate the JSON files of the corpus into ``directory``."""
    from pathlib import Path
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, gen in GENERATORS.items():
        (out / f"{name}.json").write_text(json.dumps(gen().to_json(), indent=1) + "\n")
