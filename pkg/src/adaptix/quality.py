"""Metric-space triangle quality (Vasilevskii-Lipnikov functional).

q = 12*sqrt(3) * (metric area / metric perimeter^2) * F(perimeter/3),
F(x) = (min(x, 1/x) * (2 - min(x, 1/x)))^3, clamped to [0, 1]; q = 1
exactly for the metric-space equilateral triangle with unit edges.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import InvertedElementError
from .mesh import Mesh
from .metric import _tensor3

SQRT3_12 = 12.0 * np.sqrt(3.0)


@njit(cache=True, nogil=True)
def _edge_len_pair(px, py, qx, qy, ma, mb):
    ex = qx - px
    ey = qy - py
    m00 = 0.5 * (ma[0] + mb[0])
    m01 = 0.5 * (ma[1] + mb[1])
    m11 = 0.5 * (ma[2] + mb[2])
    v = m00 * ex * ex + 2.0 * m01 * ex * ey + m11 * ey * ey
    if v <= 0.0:
        return 0.0
    return np.sqrt(v)


@njit(cache=True, nogil=True)
def quality_core(p0x, p0y, p1x, p1y, p2x, p2y, m0, m1, m2):
    """Returns q in [0,1], or -1.0 for non-positive Euclidean area."""
    area2 = (p1x - p0x) * (p2y - p0y) - (p2x - p0x) * (p1y - p0y)
    if area2 <= 0.0:
        return -1.0
    a00 = (m0[0] + m1[0] + m2[0]) / 3.0
    a01 = (m0[1] + m1[1] + m2[1]) / 3.0
    a11 = (m0[2] + m1[2] + m2[2]) / 3.0
    det = a00 * a11 - a01 * a01
    if det <= 0.0:
        return 0.0
    area_m = np.sqrt(det) * 0.5 * area2
    p_m = (_edge_len_pair(p0x, p0y, p1x, p1y, m0, m1)
           + _edge_len_pair(p1x, p1y, p2x, p2y, m1, m2)
           + _edge_len_pair(p2x, p2y, p0x, p0y, m2, m0))
    if p_m <= 0.0:
        return 0.0
    x = p_m / 3.0
    f = x if x < 1.0 / x else 1.0 / x
    big_f = (f * (2.0 - f)) ** 3
    q = SQRT3_12 * (area_m / (p_m * p_m)) * big_f
    if q < 0.0:
        return 0.0
    if q > 1.0:
        return 1.0
    return q


@njit(cache=True, nogil=True)
def element_quality(eid, coords, tri, met):
    a, b, c = tri[eid, 0], tri[eid, 1], tri[eid, 2]
    return quality_core(coords[a, 0], coords[a, 1], coords[b, 0], coords[b, 1],
                        coords[c, 0], coords[c, 1], met[a], met[b], met[c])


def triangle_quality(p0, p1, p2, M0, M1, M2) -> float:
    """Quality of one triangle with per-corner metrics.

    Raises
    ------
    InvertedElementError
        If the Euclidean signed area is not strictly positive; callers
        must reject inverted configurations before scoring them.
    """
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    p2 = np.asarray(p2, float)
    q = quality_core(p0[0], p0[1], p1[0], p1[1], p2[0], p2[1],
                     _tensor3(M0), _tensor3(M1), _tensor3(M2))
    if q < 0.0:
        raise InvertedElementError("triangle has non-positive area")
    return float(q)


def min_patch_quality(mesh: Mesh, metric, element_ids) -> float:
    """Minimum quality over a set of elements; 1.0 for the empty set."""
    met = metric.m if hasattr(metric, "m") else np.asarray(metric, float)
    worst = 1.0
    for eid in element_ids:
        q = element_quality(int(eid), mesh.coords, mesh.tri, met)
        if q < 0.0:
            raise InvertedElementError(f"element {eid} has non-positive area")
        worst = min(worst, q)
    return worst


def mesh_qualities(mesh: Mesh, metric) -> np.ndarray:
    """Quality of every alive element."""
    met = metric.m if hasattr(metric, "m") else np.asarray(metric, float)
    out = np.empty(mesh.num_elements)
    k = 0
    for eid in np.nonzero(mesh.e_alive[:mesh.nelem])[0]:
        out[k] = element_quality(int(eid), mesh.coords, mesh.tri, met)
        k += 1
    return out


def quality_histogram(qualities, bins: int = 20) -> np.ndarray:
    """Counts over `bins` equal bins spanning [0, 1]."""
    hist, _ = np.histogram(np.asarray(qualities, float), bins=bins, range=(0.0, 1.0))
    return hist
