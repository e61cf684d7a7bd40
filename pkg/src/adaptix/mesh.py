"""Mutable unstructured triangle mesh with logical deletion.

The mesh owns flat numpy arrays sized to a capacity larger than the live
counts so kernels can append without reallocating mid-round. Vertices and
elements are deleted logically (alive flags); ids stay stable until
:meth:`Mesh.compact` renumbers everything and rebuilds adjacency from
scratch. All concurrent mutation goes through the edit-buffer commit
protocol in :mod:`adaptix.runtime`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _mesh_ops as ops
from .errors import MeshStructureError

INTERIOR = -1
ROW_CAP = 32  # initial adjacency-row capacity; grown on demand


class AdjacencyEdit(NamedTuple):
    """A deferred adjacency-list edit for one target vertex."""
    target_vertex: int
    kind: int  # one of ops.EDIT_ADD_NN / EDIT_DEL_NN / EDIT_ADD_NE / EDIT_DEL_NE
    payload: int


@dataclass
class ConformityReport:
    """Findings from :func:`verify`; empty iff the mesh is conforming."""
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        self.violations.append(msg)

    def __str__(self) -> str:
        if self.ok:
            return "conforming"
        head = f"{len(self.violations)} violation(s):\n  "
        return head + "\n  ".join(self.violations[:50])


class Mesh:
    """Triangle mesh with coordinates, connectivity and mutable adjacency.

    Parameters
    ----------
    coords : (nv, 2) float array
    elements : (ne, 3) int array, counter-clockwise triples
    btag : (nv, 2) int array, optional
        Up to two boundary-side tags per vertex; -1 marks an unused slot.
        Interior vertices are (-1, -1), side vertices (s, -1), corners
        carry both adjacent side ids.
    """

    def __init__(self, coords, elements, btag=None):
        coords = np.ascontiguousarray(coords, dtype=np.float64)
        elements = np.ascontiguousarray(elements, dtype=np.int64)
        nv = len(coords)
        ne = len(elements)
        if ne and (elements.min() < 0 or elements.max() >= nv):
            raise MeshStructureError("element references out-of-range vertex id")
        vcap = max(16, int(nv * 1.5) + 8)
        ecap = max(16, int(ne * 1.5) + 8)
        self.coords = np.zeros((vcap, 2))
        self.coords[:nv] = coords
        self.tri = np.zeros((ecap, 3), np.int64)
        self.tri[:ne] = elements
        self.v_alive = np.zeros(vcap, np.uint8)
        self.v_alive[:nv] = 1
        self.e_alive = np.zeros(ecap, np.uint8)
        self.e_alive[:ne] = 1
        self.btag = np.full((vcap, 2), INTERIOR, np.int32)
        if btag is not None:
            self.btag[:nv] = np.asarray(btag, np.int32)
        self.nv = nv          # vertex high-water mark
        self.nelem = ne       # element high-water mark
        self.dropped_edits = 0
        row = ROW_CAP
        self.vv = np.zeros((vcap, row), np.int64)
        self.vv_n = np.zeros(vcap, np.int32)
        self.ve = np.zeros((vcap, row), np.int64)
        self.ve_n = np.zeros(vcap, np.int32)
        self.rebuild_adjacency()

    # ------------------------------------------------------------------
    # counts and views

    @property
    def num_vertices(self) -> int:
        return int(self.v_alive[:self.nv].sum())

    @property
    def num_elements(self) -> int:
        return int(self.e_alive[:self.nelem].sum())

    def alive_elements(self) -> np.ndarray:
        return self.tri[:self.nelem][self.e_alive[:self.nelem] == 1]

    def alive_vertex_ids(self) -> np.ndarray:
        return np.nonzero(self.v_alive[:self.nv])[0].astype(np.int64)

    def neighbours(self, v: int) -> np.ndarray:
        return self.vv[v, :self.vv_n[v]].copy()

    def incident_elements(self, v: int) -> np.ndarray:
        return self.ve[v, :self.ve_n[v]].copy()

    def edges(self) -> np.ndarray:
        """Canonical (u < v) alive edges, shape (m, 2), lexicographically sorted."""
        return self.edge_element_counts()[0]

    def edge_element_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Canonical alive edges plus the number of elements sharing each."""
        tris = self.alive_elements()
        if len(tris) == 0:
            return np.empty((0, 2), np.int64), np.empty(0, np.int64)
        keys = np.empty(3 * len(tris), np.int64)
        for j in range(3):
            a = tris[:, j]
            b = tris[:, (j + 1) % 3]
            lo = np.minimum(a, b)
            hi = np.maximum(a, b)
            keys[j * len(tris):(j + 1) * len(tris)] = (lo << 32) | hi
        ukeys, counts = np.unique(keys, return_counts=True)
        return np.column_stack([ukeys >> 32, ukeys & 0xFFFFFFFF]), counts

    # ------------------------------------------------------------------
    # growth and rebuilds

    def ensure_vertex_capacity(self, extra: int) -> None:
        need = self.nv + extra
        cap = len(self.coords)
        if need <= cap:
            return
        new_cap = max(need, int(cap * 1.5) + 8)
        self.coords = _grow2(self.coords, new_cap)
        self.v_alive = _grow1(self.v_alive, new_cap)
        self.btag = _grow2(self.btag, new_cap, fill=INTERIOR)
        self.vv = _grow2(self.vv, new_cap)
        self.vv_n = _grow1(self.vv_n, new_cap)
        self.ve = _grow2(self.ve, new_cap)
        self.ve_n = _grow1(self.ve_n, new_cap)

    def ensure_element_capacity(self, extra: int) -> None:
        need = self.nelem + extra
        cap = len(self.tri)
        if need <= cap:
            return
        new_cap = max(need, int(cap * 1.5) + 8)
        self.tri = _grow2(self.tri, new_cap)
        self.e_alive = _grow1(self.e_alive, new_cap)

    def grow_adjacency_rows(self) -> None:
        """Double the per-vertex adjacency row capacity (rare)."""
        self.vv = _grow_rows(self.vv)
        self.ve = _grow_rows(self.ve)

    def rebuild_adjacency(self) -> None:
        while not ops.build_adjacency_core(self.tri, self.e_alive, self.nelem,
                                           self.vv, self.vv_n, self.ve, self.ve_n):
            self.grow_adjacency_rows()

    def compact(self) -> np.ndarray:
        """Drop dead entities, renumber vertices densely, rebuild adjacency.

        Returns the old vertex ids kept, i.e. ``old_of_new`` such that
        per-vertex side data can be remapped with ``data[old_of_new]``.
        """
        keep_v = np.nonzero(self.v_alive[:self.nv])[0]
        new_of_old = np.full(self.nv, -1, np.int64)
        new_of_old[keep_v] = np.arange(len(keep_v))
        tris = self.alive_elements()
        coords = self.coords[keep_v].copy()
        btag = self.btag[keep_v].copy()
        tris = new_of_old[tris]
        self.__init__(coords, tris, btag)
        return keep_v

    # ------------------------------------------------------------------

    def stats_line(self) -> str:
        return f"{self.num_vertices} vertices, {self.num_elements} elements"


def _grow1(a, cap):
    out = np.zeros(cap, a.dtype)
    out[:len(a)] = a
    return out


def _grow2(a, cap, fill=0):
    out = np.full((cap, a.shape[1]), fill, a.dtype)
    out[:len(a)] = a
    return out


def _grow_rows(a):
    out = np.zeros((a.shape[0], a.shape[1] * 2), a.dtype)
    out[:, :a.shape[1]] = a
    return out


# ----------------------------------------------------------------------
# free functions


def build_adjacency(elements, vertex_count):
    """Construct adjacency lists from scratch.

    Parameters
    ----------
    elements : (ne, 3) int array-like of vertex triples
    vertex_count : int

    Returns
    -------
    nn_adj : list of sorted int arrays, vertex -> neighbouring vertices
    ne_adj : list of sorted int arrays, vertex -> incident elements
    """
    elements = np.asarray(elements, np.int64).reshape(-1, 3)
    if len(elements) and (elements.min() < 0 or elements.max() >= vertex_count):
        raise MeshStructureError("element references out-of-range vertex id")
    nn = [[] for _ in range(vertex_count)]
    ne = [[] for _ in range(vertex_count)]
    for eid, (a, b, c) in enumerate(elements):
        ne[a].append(eid)
        ne[b].append(eid)
        ne[c].append(eid)
        nn[a] += [b, c]
        nn[b] += [a, c]
        nn[c] += [a, b]
    nn_adj = [np.unique(np.array(x, np.int64)) for x in nn]
    ne_adj = [np.unique(np.array(x, np.int64)) for x in ne]
    return nn_adj, ne_adj


def _row_pairs(rows, counts, alive_mask):
    """Flatten per-vertex rows into (vertex, entry) pairs in row order."""
    nv = len(counts)
    counts = np.where(alive_mask, counts, 0)
    firsts = np.repeat(np.arange(nv, dtype=np.int64), counts)
    width = rows.shape[1]
    mask = np.arange(width)[None, :] < counts[:, None]
    return firsts, rows[mask]


def shared_boundary_tags(btag, edges) -> np.ndarray:
    """First boundary-side tag common to both endpoints of each edge, -1 if none."""
    out = np.full(len(edges), -1, np.int32)
    bu = btag[edges[:, 0]]
    bv = btag[edges[:, 1]]
    for slot in (1, 0):  # slot 0 last so it wins when both match
        t = bu[:, slot]
        hit = (t >= 0) & ((bv[:, 0] == t) | (bv[:, 1] == t))
        out[hit] = t[hit]
    return out


def verify(mesh: Mesh) -> ConformityReport:
    """Check every mesh invariant; returns a report of all violations found.

    Checks: element degeneracy and orientation, exact agreement of the
    incremental adjacency with a from-scratch rebuild, edge sharing counts
    (2 interior / 1 boundary), and that no dead entity is referenced.
    """
    rep = ConformityReport()
    nv, ne = mesh.nv, mesh.nelem
    alive_e = np.nonzero(mesh.e_alive[:ne])[0]
    tris = mesh.tri[alive_e]
    v_alive = mesh.v_alive[:nv].astype(bool)

    if len(tris):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        for eid in alive_e[(a == b) | (b == c) | (a == c)]:
            rep.add(f"element {eid} repeats a vertex")
        dead_ref = ~(mesh.v_alive[a] & mesh.v_alive[b] & mesh.v_alive[c]).astype(bool)
        for eid in alive_e[dead_ref]:
            rep.add(f"element {eid} references a dead vertex")
        p = mesh.coords
        area2 = ((p[b, 0] - p[a, 0]) * (p[c, 1] - p[a, 1])
                 - (p[c, 0] - p[a, 0]) * (p[b, 1] - p[a, 1]))
        for eid in alive_e[area2 <= 0.0]:
            rep.add(f"element {eid} has non-positive area")

    # dead entities must carry no adjacency; alive vertices must have elements
    bad = np.nonzero(~v_alive & ((mesh.vv_n[:nv] > 0) | (mesh.ve_n[:nv] > 0)))[0]
    for v in bad:
        rep.add(f"dead vertex {v} has non-empty adjacency")
    orphans = np.nonzero(v_alive & (mesh.ve_n[:nv] == 0))[0]
    for v in orphans:
        rep.add(f"alive vertex {v} has no incident elements")

    # incremental adjacency must equal a from-scratch rebuild: compare the
    # flattened (vertex, entry) pair streams as packed keys, both sorted
    # by construction
    have_v, have_u = _row_pairs(mesh.vv[:nv], mesh.vv_n[:nv], v_alive)
    have_ev, have_e = _row_pairs(mesh.ve[:nv], mesh.ve_n[:nv], v_alive)
    if len(tris):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        nn_keys = np.concatenate([(a << 32) | b, (b << 32) | a, (b << 32) | c,
                                  (c << 32) | b, (c << 32) | a, (a << 32) | c])
        want_nn = np.unique(nn_keys)
        ne_keys = (tris.T.ravel() << 32) | np.tile(alive_e, 3)
        want_ne = np.unique(ne_keys)
    else:
        want_nn = np.empty(0, np.int64)
        want_ne = np.empty(0, np.int64)
    if not np.array_equal((have_v << 32) | have_u, want_nn):
        bad_v = _first_pair_mismatch((have_v << 32) | have_u, want_nn)
        rep.add(f"nn_adj disagrees with rebuilt adjacency (first bad vertex {bad_v})")
    if not np.array_equal((have_ev << 32) | have_e, want_ne):
        bad_v = _first_pair_mismatch((have_ev << 32) | have_e, want_ne)
        rep.add(f"ne_adj disagrees with rebuilt adjacency (first bad vertex {bad_v})")

    edges, counts = mesh.edge_element_counts()
    if len(edges):
        for u, v in edges[counts > 2]:
            rep.add(f"edge ({u},{v}) shared by more than 2 elements")
        single = edges[counts == 1]
        untagged = shared_boundary_tags(mesh.btag, single) < 0
        for u, v in single[untagged]:
            rep.add(f"edge ({u},{v}) has one element but is not tagged boundary")
    return rep


def _first_pair_mismatch(have_keys, want_keys) -> int:
    """Smallest vertex id at the first differing packed pair (diagnostic aid)."""
    n = min(len(have_keys), len(want_keys))
    if n:
        idx = np.nonzero(have_keys[:n] != want_keys[:n])[0]
        if len(idx):
            return int(min(have_keys[idx[0]] >> 32, want_keys[idx[0]] >> 32))
    if len(have_keys) != len(want_keys):
        longer = have_keys if len(have_keys) > n else want_keys
        return int(longer[n] >> 32)
    return -1


def structured_square_mesh(n: int) -> Mesh:
    """Right-triangle mesh of the unit square with (n+1)^2 vertices.

    Sides are tagged 0 bottom, 1 right, 2 top, 3 left; corner vertices
    carry both adjacent side tags and are pinned by the kernels.
    """
    if n < 1:
        raise MeshStructureError("n must be >= 1")
    k = n + 1
    xs, ys = np.meshgrid(np.linspace(0.0, 1.0, k), np.linspace(0.0, 1.0, k), indexing="xy")
    coords = np.column_stack([xs.ravel(), ys.ravel()])

    def vid(i, j):  # i along x, j along y
        return j * k + i

    tris = np.empty((2 * n * n, 3), np.int64)
    t = 0
    for j in range(n):
        for i in range(n):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v01 = vid(i, j + 1)
            v11 = vid(i + 1, j + 1)
            tris[t] = (v00, v10, v11)
            tris[t + 1] = (v00, v11, v01)
            t += 2

    btag = np.full((k * k, 2), INTERIOR, np.int32)
    for i in range(k):
        for j in range(k):
            v = vid(i, j)
            tags = []
            if j == 0:
                tags.append(0)
            if i == n:
                tags.append(1)
            if j == n:
                tags.append(2)
            if i == 0:
                tags.append(3)
            for s, tag in enumerate(tags[:2]):
                btag[v, s] = tag
    return Mesh(coords, tris, btag)


def commit_edits(mesh: Mesh, edits) -> int:
    """Apply a sequence of :class:`AdjacencyEdit` in order, single-threaded.

    Edits targeting dead vertices are dropped and counted (the vertex died
    later in the same round, which is benign). Returns the dropped count.
    """
    dropped = 0
    for target, kind, payload in edits:
        if not mesh.v_alive[target]:
            dropped += 1
            continue
        if kind in (ops.EDIT_ADD_NN, ops.EDIT_ADD_NE):
            rows, ns = (mesh.vv, mesh.vv_n) if kind == ops.EDIT_ADD_NN else (mesh.ve, mesh.ve_n)
            n = ops.row_insert(rows[target], ns[target], payload)
            while n < 0:
                mesh.grow_adjacency_rows()
                rows, ns = (mesh.vv, mesh.vv_n) if kind == ops.EDIT_ADD_NN else (mesh.ve, mesh.ve_n)
                n = ops.row_insert(rows[target], ns[target], payload)
            ns[target] = n
        elif kind == ops.EDIT_DEL_NN:
            mesh.vv_n[target] = ops.row_remove(mesh.vv[target], mesh.vv_n[target], payload)
        elif kind == ops.EDIT_DEL_NE:
            mesh.ve_n[target] = ops.row_remove(mesh.ve[target], mesh.ve_n[target], payload)
        else:
            raise MeshStructureError(f"unknown edit kind {kind}")
    mesh.dropped_edits += dropped
    return dropped
