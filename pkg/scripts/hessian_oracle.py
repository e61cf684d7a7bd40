#!/usr/bin/env python3
"""Independent dense least-squares oracle for Hessian recovery.

Builds its own adjacency for the structured unit-square mesh, gathers the
2-ring of a chosen interior vertex by BFS, and fits the full quadratic
with numpy's dense lstsq on the raw (unscaled) Vandermonde matrix — a
separate code path from the package's scaled normal-equations solver.
Prints the recovered Hessian of f(x, y) = x^3 at an interior vertex of
the n=8 mesh; the values are frozen into tests/test_metric.py.
"""

import numpy as np


def structured_square(n):
    k = n + 1
    xs, ys = np.meshgrid(np.linspace(0, 1, k), np.linspace(0, 1, k), indexing="xy")
    coords = np.column_stack([xs.ravel(), ys.ravel()])
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = j * k + i
            v10 = j * k + i + 1
            v01 = (j + 1) * k + i
            v11 = (j + 1) * k + i + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return coords, np.array(tris)


def two_ring(tris, v, nv):
    nbr = [set() for _ in range(nv)]
    for a, b, c in tris:
        nbr[a].update((b, c))
        nbr[b].update((a, c))
        nbr[c].update((a, b))
    ring = {v}
    frontier = {v}
    for _ in range(2):
        frontier = {u for w in frontier for u in nbr[w]} - ring
        ring |= frontier
    return sorted(ring)


def hessian_lstsq(coords, patch, v, f):
    d = coords[patch] - coords[v]
    A = np.column_stack([np.ones(len(patch)), d[:, 0], d[:, 1],
                         d[:, 0] ** 2, d[:, 0] * d[:, 1], d[:, 1] ** 2])
    c, *_ = np.linalg.lstsq(A, f[patch], rcond=None)
    return np.array([2 * c[3], c[4], 2 * c[5]])


if __name__ == "__main__":
    n = 8
    coords, tris = structured_square(n)
    v = 4 * (n + 1) + 4  # grid point (4, 4): dead centre, x = y = 0.5
    f = coords[:, 0] ** 3
    patch = two_ring(tris, v, len(coords))
    hxx, hxy, hyy = hessian_lstsq(coords, patch, v, f)
    print(f"vertex {v} at {coords[v]}, patch size {len(patch)}")
    print(f"H(x^3) = [hxx={hxx!r}, hxy={hxy!r}, hyy={hyy!r}]  (exact 6x = 3.0)")
