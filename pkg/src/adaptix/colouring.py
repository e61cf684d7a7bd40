"""Parallel speculative greedy vertex colouring.

Active vertices are assigned the smallest colour unused by their
neighbours while other threads do the same concurrently; a detection pass
re-queues the higher-id endpoint of every monochromatic edge and the
process repeats until conflict-free. Validity is the contract; the colour
count and the assignment itself may differ between runs and thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ColouringError
from .mesh import Mesh
from .runtime import ThreadTeam, parallel_for_stealing

MAX_ROUNDS = 100
_MAX_COLOURS = 256


@njit(cache=True, nogil=True)
def _assign_chunk(b, e, work, vv, vv_n, active, colour):
    used = np.empty(_MAX_COLOURS, np.uint8)
    for i in range(b, e):
        v = work[i]
        deg = vv_n[v]
        top = deg + 2 if deg + 2 < _MAX_COLOURS else _MAX_COLOURS
        for c in range(top):
            used[c] = 0
        for j in range(deg):
            u = vv[v, j]
            if active[u]:
                c = colour[u]
                if 0 <= c < top:
                    used[c] = 1
        for c in range(top):
            if used[c] == 0:
                colour[v] = c
                break


@njit(cache=True, nogil=True)
def _conflict_chunk(b, e, work, vv, vv_n, active, colour, out, outn):
    for i in range(b, e):
        v = work[i]
        cv = colour[v]
        for j in range(vv_n[v]):
            u = vv[v, j]
            if active[u] and colour[u] == cv and u < v:
                out[outn[0]] = v
                outn[0] += 1
                break


@dataclass
class Colouring:
    """Vertex -> colour assignment over the active set (-1 elsewhere)."""
    colour: np.ndarray
    num_colours: int
    classes: list[np.ndarray] = field(default_factory=list)
    rounds: int = 0


def _adjacency_arrays(adj):
    """Accept a Mesh or a sequence of neighbour sequences."""
    if isinstance(adj, Mesh):
        return adj.vv, adj.vv_n, adj.nv
    rows = [np.asarray(r, np.int64) for r in adj]
    nv = len(rows)
    width = max((len(r) for r in rows), default=0)
    vv = np.zeros((nv, max(1, width)), np.int64)
    vv_n = np.zeros(nv, np.int32)
    for v, r in enumerate(rows):
        vv[v, :len(r)] = r
        vv_n[v] = len(r)
    return vv, vv_n, nv


def colour_graph(adjacency, active_set, team: ThreadTeam | None = None,
                 grain: int = 512) -> Colouring:
    """Colour the active vertices so no mesh edge is monochromatic.

    Parameters
    ----------
    adjacency : Mesh or sequence of neighbour-id sequences
    active_set : int array of vertex ids to colour

    Raises
    ------
    ColouringError
        If conflicts survive MAX_ROUNDS rounds (never observed on planar
        meshes).
    """
    vv, vv_n, nv = _adjacency_arrays(adjacency)
    active_ids = np.asarray(active_set, np.int64)
    colour = np.full(nv, -1, np.int32)
    active = np.zeros(nv, np.uint8)
    active[active_ids] = 1

    work = active_ids.copy()
    rounds = 0
    while len(work):
        if rounds >= MAX_ROUNDS:
            raise ColouringError(f"colouring failed to converge after {MAX_ROUNDS} rounds")
        rounds += 1

        def assign(b, e, tid):
            _assign_chunk(b, e, work, vv, vv_n, active, colour)

        parallel_for_stealing(len(work), assign, grain=grain, team=team)

        nthreads = team.n if team else 1
        bufs = [np.empty(len(work), np.int64) for _ in range(nthreads)]
        cnts = [np.zeros(1, np.int64) for _ in range(nthreads)]

        def detect(b, e, tid):
            _conflict_chunk(b, e, work, vv, vv_n, active, colour, bufs[tid], cnts[tid])

        parallel_for_stealing(len(work), detect, grain=grain, team=team)
        work = np.concatenate([buf[:int(c[0])] for buf, c in zip(bufs, cnts)])

    if len(active_ids):
        num = int(colour[active_ids].max()) + 1
        order = np.argsort(colour[active_ids], kind="stable")
        sorted_ids = active_ids[order]
        sorted_col = colour[sorted_ids]
        bounds = np.searchsorted(sorted_col, np.arange(num + 1))
        classes = [sorted_ids[bounds[c]:bounds[c + 1]] for c in range(num)]
    else:
        num, classes = 0, []
    return Colouring(colour, num, classes, rounds)


def verify_colouring(adjacency, colouring: Colouring) -> bool:
    """Exhaustive scan: no edge between active vertices is monochromatic
    and every class partitions the active set."""
    vv, vv_n, nv = _adjacency_arrays(adjacency)
    colour = colouring.colour
    active = colour >= 0
    for v in np.nonzero(active)[0]:
        row = vv[v, :vv_n[v]]
        for u in row:
            if active[u] and colour[u] == colour[v]:
                return False
    seen = np.concatenate(colouring.classes) if colouring.classes else np.empty(0, np.int64)
    if len(seen) != int(active.sum()) or len(np.unique(seen)) != len(seen):
        return False
    return True
