"""Node-wise metric tensor field: construction from recovered Hessians,
metric-space edge lengths and interpolation, plus the synthetic
space-time test field driving the benchmark.

Tensors are 2x2 symmetric positive-definite matrices stored as rows
(m00, m01, m11); an edge of metric length 1 is ideal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .mesh import Mesh
from .runtime import ThreadTeam, parallel_for_stealing

DEFAULT_ETA = 1e-2
DEFAULT_H_MIN = 1e-3
DEFAULT_H_MAX = 0.5


class MetricTensor(NamedTuple):
    """A 2x2 symmetric tensor (units 1/length^2)."""
    m00: float
    m01: float
    m11: float

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.m00, self.m01], [self.m01, self.m11]])

    @staticmethod
    def from_matrix(m) -> "MetricTensor":
        m = np.asarray(m, float)
        return MetricTensor(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))

    def eigenvalues(self) -> tuple[float, float]:
        mean = 0.5 * (self.m00 + self.m11)
        r = math.hypot(0.5 * (self.m00 - self.m11), self.m01)
        return mean - r, mean + r


def _tensor3(m) -> np.ndarray:
    """Coerce MetricTensor / (3,) row / 2x2 matrix to a (3,) row."""
    a = np.asarray(m, float)
    if a.shape == (2, 2):
        return np.array([a[0, 0], 0.5 * (a[0, 1] + a[1, 0]), a[1, 1]])
    return a.reshape(3)


# ----------------------------------------------------------------------
# synthetic benchmark field


def eval_psi(x, y, t: float, period: float):
    """Multi-scale synthetic field with a moving sharp front.

    The second term is the two-argument arctangent of the pair
    (-0.1, 2x - sin(5y + 2*pi*t/T)); at a vanishing denominator it takes
    the value -pi/2 (sign of the numerator), so the front stays defined
    everywhere.
    """
    phase = 2.0 * np.pi * t / period
    den = 2.0 * x - np.sin(5.0 * y + phase)
    return 0.1 * np.sin(50.0 * x + phase) + np.arctan2(-0.1, den)


@dataclass
class SyntheticField:
    """Time-periodic benchmark field psi evaluated at a fixed time."""
    period: float
    t: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")

    def __call__(self, x, y):
        return eval_psi(x, y, self.t, self.period)

    def on_mesh(self, mesh: Mesh) -> np.ndarray:
        vals = np.zeros(mesh.nv)
        alive = mesh.alive_vertex_ids()
        vals[alive] = self(mesh.coords[alive, 0], mesh.coords[alive, 1])
        return vals


# ----------------------------------------------------------------------
# Hessian recovery (local quadratic least squares over the 2-ring)


@njit(cache=True, nogil=True)
def _gather_ring(v, vv, vv_n, v_alive, depth, out):
    """Collect the <=depth-ring of v (excluding v) into out; returns count."""
    n = 0
    out[n] = v
    n += 1
    lo = 0
    for _ in range(depth):
        hi = n
        for i in range(lo, hi):
            u = out[i]
            for j in range(vv_n[u]):
                w = vv[u, j]
                if v_alive[w] == 0:
                    continue
                seen = False
                for k in range(n):
                    if out[k] == w:
                        seen = True
                        break
                if not seen:
                    if n >= out.shape[0]:
                        return n
                    out[n] = w
                    n += 1
        lo = hi
    return n


@njit(cache=True, nogil=True)
def _solve6(A, b):
    """In-place Gaussian elimination with partial pivoting; returns False
    if the system is numerically singular."""
    n = 6
    for col in range(n):
        piv = col
        big = abs(A[col, col])
        for r in range(col + 1, n):
            if abs(A[r, col]) > big:
                big = abs(A[r, col])
                piv = r
        if big < 1e-12:
            return False
        if piv != col:
            for c in range(n):
                A[col, c], A[piv, c] = A[piv, c], A[col, c]
            b[col], b[piv] = b[piv], b[col]
        inv = 1.0 / A[col, col]
        for r in range(col + 1, n):
            f = A[r, col] * inv
            if f != 0.0:
                for c in range(col, n):
                    A[r, c] -= f * A[col, c]
                b[r] -= f * b[col]
    for r in range(n - 1, -1, -1):
        s = b[r]
        for c in range(r + 1, n):
            s -= A[r, c] * b[c]
        b[r] = s / A[r, r]
    return True


@njit(cache=True, nogil=True)
def _hessian_fit(v, coords, vals, vv, vv_n, v_alive, depth, hout):
    """Fit f ~ c0 + c1 dx + c2 dy + c3 dx^2 + c4 dx dy + c5 dy^2 on the
    depth-ring patch of v; writes (hxx, hxy, hyy) to hout. Returns True
    on success."""
    ring = np.empty(2048, np.int64)
    n = _gather_ring(v, vv, vv_n, v_alive, depth, ring)
    if n < 6:
        return False
    # offset scale for conditioning
    s = 0.0
    for i in range(1, n):
        u = ring[i]
        s += abs(coords[u, 0] - coords[v, 0]) + abs(coords[u, 1] - coords[v, 1])
    s /= max(1, n - 1)
    if s <= 0.0:
        return False
    A = np.zeros((6, 6))
    rhs = np.zeros(6)
    row = np.empty(6)
    for i in range(n):
        u = ring[i]
        dx = (coords[u, 0] - coords[v, 0]) / s
        dy = (coords[u, 1] - coords[v, 1]) / s
        row[0] = 1.0
        row[1] = dx
        row[2] = dy
        row[3] = dx * dx
        row[4] = dx * dy
        row[5] = dy * dy
        f = vals[u]
        for a in range(6):
            for b in range(6):
                A[a, b] += row[a] * row[b]
            rhs[a] += row[a] * f
    if not _solve6(A, rhs):
        return False
    inv_s2 = 1.0 / (s * s)
    hout[0] = 2.0 * rhs[3] * inv_s2
    hout[1] = rhs[4] * inv_s2
    hout[2] = 2.0 * rhs[5] * inv_s2
    return True


@njit(cache=True, nogil=True)
def _hessian_chunk(b, e, ids, coords, vals, vv, vv_n, v_alive, H, flags):
    hout = np.empty(3)
    for i in range(b, e):
        v = ids[i]
        if _hessian_fit(v, coords, vals, vv, vv_n, v_alive, 2, hout):
            H[v, 0] = hout[0]
            H[v, 1] = hout[1]
            H[v, 2] = hout[2]
        elif _hessian_fit(v, coords, vals, vv, vv_n, v_alive, 3, hout):
            H[v, 0] = hout[0]
            H[v, 1] = hout[1]
            H[v, 2] = hout[2]
        else:
            H[v, 0] = 0.0
            H[v, 1] = 0.0
            H[v, 2] = 0.0
            flags[i] = 1


def recover_hessian(mesh: Mesh, nodal_values, team: ThreadTeam | None = None,
                    grain: int = 256):
    """Per-vertex Hessian of a nodal field by quadratic least squares.

    Fits a full 6-coefficient quadratic over each vertex's 2-ring
    (falling back to the 3-ring, then to a zero Hessian with a flagged
    counter, when the local system is rank-deficient). Exact for globally
    quadratic fields on patches with enough independent points.

    Returns
    -------
    H : (nv, 3) array of (hxx, hxy, hyy) rows
    deficient : int, number of vertices that fell through to zero
    """
    vals = np.asarray(nodal_values, float)
    if len(vals) < mesh.nv:
        raise ValueError("nodal_values must cover every vertex id")
    ids = mesh.alive_vertex_ids()
    H = np.zeros((mesh.nv, 3))
    flags = np.zeros(len(ids), np.uint8)

    def body(b, e, tid):
        _hessian_chunk(b, e, ids, mesh.coords, vals, mesh.vv, mesh.vv_n,
                       mesh.v_alive, H, flags)

    parallel_for_stealing(len(ids), body, grain=grain, team=team)
    return H, int(flags.sum())


# ----------------------------------------------------------------------
# Hessian -> metric


@njit(cache=True, nogil=True)
def _hessian_to_metric_one(h00, h01, h11, eta, lam_min, lam_max, out):
    mean = 0.5 * (h00 + h11)
    r = np.hypot(0.5 * (h00 - h11), h01)
    l1 = mean + r
    l2 = mean - r
    # eigenvector for l1; fall back to axis when already diagonal
    e1x, e1y = h01, l1 - h00
    n1 = np.hypot(e1x, e1y)
    if n1 < 1e-300:
        e1x, e1y = l1 - h11, h01
        n1 = np.hypot(e1x, e1y)
    if n1 < 1e-300:
        if h00 >= h11:
            e1x, e1y = 1.0, 0.0
        else:
            e1x, e1y = 0.0, 1.0
        n1 = 1.0
    e1x /= n1
    e1y /= n1
    e2x, e2y = -e1y, e1x
    s1 = min(max(abs(l1) / eta, lam_min), lam_max)
    s2 = min(max(abs(l2) / eta, lam_min), lam_max)
    out[0] = s1 * e1x * e1x + s2 * e2x * e2x
    out[1] = s1 * e1x * e1y + s2 * e2x * e2y
    out[2] = s1 * e1y * e1y + s2 * e2y * e2y


@njit(cache=True, nogil=True)
def _metric_chunk(b, e, ids, H, eta, lam_min, lam_max, M):
    out = np.empty(3)
    for i in range(b, e):
        v = ids[i]
        _hessian_to_metric_one(H[v, 0], H[v, 1], H[v, 2], eta, lam_min, lam_max, out)
        M[v, 0] = out[0]
        M[v, 1] = out[1]
        M[v, 2] = out[2]


def hessian_to_metric(H, eta: float, h_min: float, h_max: float) -> MetricTensor:
    """Anisotropic sizing tensor from one Hessian.

    Eigendecomposes H, rescales |eigenvalue|/eta and clamps the result to
    [1/h_max^2, 1/h_min^2], then recomposes with the same eigenvectors.
    """
    h = _tensor3(H)
    out = np.empty(3)
    _hessian_to_metric_one(h[0], h[1], h[2], eta, 1.0 / h_max ** 2, 1.0 / h_min ** 2, out)
    return MetricTensor(out[0], out[1], out[2])


def metric_edge_length(p0, p1, M0, M1) -> float:
    """Edge length under the averaged endpoint metrics sqrt(e^T M e)."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    m = 0.5 * (_tensor3(M0) + _tensor3(M1))
    ex, ey = p1[0] - p0[0], p1[1] - p0[1]
    q = m[0] * ex * ex + 2.0 * m[1] * ex * ey + m[2] * ey * ey
    return math.sqrt(max(q, 0.0))


def interpolate_metric(M0, M1, s: float) -> MetricTensor:
    """Component-wise linear interpolation; SPD by convexity of the cone."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    m = (1.0 - s) * _tensor3(M0) + s * _tensor3(M1)
    return MetricTensor(m[0], m[1], m[2])


# ----------------------------------------------------------------------


class MetricField:
    """Per-vertex metric tensors aligned with a mesh's vertex ids."""

    def __init__(self, mesh: Mesh, eta: float = DEFAULT_ETA,
                 h_min: float = DEFAULT_H_MIN, h_max: float = DEFAULT_H_MAX):
        if not (0 < h_min < h_max):
            raise ValueError("need 0 < h_min < h_max")
        self.eta = eta
        self.h_min = h_min
        self.h_max = h_max
        cap = len(mesh.coords)
        self.m = np.zeros((cap, 3))
        iso = 1.0 / h_max ** 2
        self.m[:, 0] = iso
        self.m[:, 2] = iso
        self.deficient = 0

    def ensure_capacity(self, cap: int) -> None:
        if cap > len(self.m):
            grown = np.zeros((cap, 3))
            grown[:len(self.m)] = self.m
            self.m = grown

    def tensor(self, v: int) -> MetricTensor:
        return MetricTensor(*self.m[v])

    def edge_length(self, mesh: Mesh, u: int, v: int) -> float:
        return metric_edge_length(mesh.coords[u], mesh.coords[v], self.m[u], self.m[v])

    def build_from_values(self, mesh: Mesh, nodal_values,
                          team: ThreadTeam | None = None) -> None:
        """Recover Hessians of a nodal field and convert them to tensors."""
        H, self.deficient = recover_hessian(mesh, nodal_values, team=team)
        self.ensure_capacity(len(mesh.coords))
        ids = mesh.alive_vertex_ids()
        lam_min = 1.0 / self.h_max ** 2
        lam_max = 1.0 / self.h_min ** 2

        def body(b, e, tid):
            _metric_chunk(b, e, ids, H, self.eta, lam_min, lam_max, self.m)

        parallel_for_stealing(len(ids), body, grain=512, team=team)

    def compact(self, old_of_new: np.ndarray) -> None:
        """Remap tensors after a mesh compaction."""
        kept = self.m[old_of_new]
        self.m = np.zeros((max(len(kept) + 8, int(len(kept) * 1.5)), 3))
        self.m[:len(kept)] = kept

    def all_edge_lengths(self, mesh: Mesh) -> np.ndarray:
        """Metric lengths of every alive edge (vectorised)."""
        edges = mesh.edges()
        if len(edges) == 0:
            return np.empty(0)
        p = mesh.coords
        e = p[edges[:, 1]] - p[edges[:, 0]]
        mm = 0.5 * (self.m[edges[:, 0]] + self.m[edges[:, 1]])
        q = mm[:, 0] * e[:, 0] ** 2 + 2.0 * mm[:, 1] * e[:, 0] * e[:, 1] + mm[:, 2] * e[:, 1] ** 2
        return np.sqrt(np.maximum(q, 0.0))
