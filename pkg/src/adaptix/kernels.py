"""The four adaptive kernels and the optimisation driver.

Every kernel follows the round protocol: build the active worklist,
colour it, then for each colour class run the work-stealing parallel-for
over the independent set, commit the deferred adjacency edits, and
repeat until the propagation worklist drains or the sweep cap is hit.
The driver loops coarsen -> swap -> refine to convergence, then smooths
with topology frozen.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _kernel_ops as kops
from . import _mesh_ops as ops
from .colouring import colour_graph
from .errors import AdaptationError, MeshStructureError
from .mesh import Mesh, shared_boundary_tags, verify
from .metric import MetricField
from .quality import mesh_qualities, quality_histogram
from .runtime import EditBuffers, SharedWorklist, ThreadTeam, parallel_for_stealing


class KernelOutcome(IntEnum):
    """Result of a single collapse attempt."""
    SUCCESS = ops.OK
    NOT_ADJACENT = ops.NOT_ADJACENT
    BOUNDARY_VIOLATION = ops.BOUNDARY_VIOLATION
    WOULD_INVERT = ops.WOULD_INVERT
    EDGE_TOO_LONG = ops.EDGE_TOO_LONG
    LINK_VIOLATION = ops.LINK_VIOLATION
    LEDGER_FULL = ops.LEDGER_FULL


@dataclass
class KernelParams:
    """Adaptation thresholds: edges shorter than l_low collapse, longer
    than l_up split (the halving/doubling band around unit length)."""
    l_low: float = 1.0 / np.sqrt(2.0)
    l_up: float = np.sqrt(2.0)
    max_sweeps: int = 10
    smooth_sweeps: int = 10
    smooth_mode: str = "guarded-laplacian"
    swap_tol: float = 1e-12
    grain: int = 64

    def __post_init__(self):
        if not (0.0 < self.l_low < 1.0 < self.l_up):
            raise ValueError("need 0 < l_low < 1 < l_up")


@dataclass
class KernelStats:
    """Counters accumulated across rounds of one kernel invocation."""
    sweeps: int = 0
    rounds: int = 0
    changes: int = 0
    rejections: dict = field(default_factory=dict)
    arbitration_losses: int = 0
    steals: int = 0

    def absorb(self, raw: np.ndarray) -> None:
        self.changes += int(raw[ops.OK] + raw[kops.STAT_FLIPS] + raw[kops.STAT_MOVED])
        self.arbitration_losses += int(raw[kops.STAT_LOST])
        for code, label in ((ops.BOUNDARY_VIOLATION, "boundary"),
                            (ops.WOULD_INVERT, "invert"),
                            (ops.EDGE_TOO_LONG, "long-edge"),
                            (ops.LINK_VIOLATION, "link"),
                            (ops.NOT_ADJACENT, "stale"),
                            (kops.STAT_REJ_QUALITY, "quality"),
                            (kops.STAT_REJ_GEOM, "geometry")):
            n = int(raw[code])
            if n:
                self.rejections[label] = self.rejections.get(label, 0) + n


def collapse_edge(mesh: Mesh, v_remove: int, v_target: int, ledger: EditBuffers,
                  metric: MetricField | None = None, l_up: float = np.inf,
                  tid: int = 0) -> KernelOutcome:
    """Collapse the edge (v_remove, v_target) onto v_target.

    Direct mutation is limited to v_remove's own data and its incident
    element rows; every other adjacency edit lands in the ledger and takes
    effect at commit. On any rejection the mesh and ledger are untouched.
    """
    met = metric.m if metric is not None else np.zeros((len(mesh.coords), 3))
    ledger.ensure_headroom(tid, 4 * mesh.vv.shape[1] + 16)
    buf, cnt = ledger.buffer(tid)
    out = ops.collapse_core(int(v_remove), int(v_target), mesh.coords, mesh.tri,
                            mesh.v_alive, mesh.e_alive, mesh.btag,
                            mesh.vv, mesh.vv_n, mesh.ve, mesh.ve_n,
                            met, l_up, buf, cnt)
    return KernelOutcome(out)


def _dispatch_grain(n_items: int, team: ThreadTeam, base: int) -> int:
    """Chunk size for one dispatch: big enough that per-chunk Python
    overhead stays marginal, small enough to keep stealable slack."""
    return max(base, min(8192, n_items // (12 * team.n)))


class _RoundBuffers:
    """Per-thread scratch for one kernel invocation."""

    def __init__(self, team: ThreadTeam, ledger: EditBuffers):
        self.team = team
        self.ledger = ledger
        n = team.n
        self.stats = [np.zeros(kops.N_STATS, np.int64) for _ in range(n)]
        self.prop = [np.empty(1, np.int64) for _ in range(n)]
        self.prop_cnt = [np.zeros(1, np.int64) for _ in range(n)]

    def size_prop(self, grain: int, per_item: int) -> None:
        need = grain * per_item
        for t in range(self.team.n):
            if len(self.prop[t]) < need:
                self.prop[t] = np.empty(need, np.int64)

    def reduce_stats(self) -> np.ndarray:
        total = np.zeros(kops.N_STATS, np.int64)
        for s in self.stats:
            total += s
            s[:] = 0
        return total


def _flush_prop(rb: _RoundBuffers, worklist: SharedWorklist, tid: int) -> None:
    n = int(rb.prop_cnt[tid][0])
    if n:
        worklist.append(rb.prop[tid][:n])
        rb.prop_cnt[tid][0] = 0


# ----------------------------------------------------------------------
# coarsen


def coarsen(mesh: Mesh, metric: MetricField, params: KernelParams,
            team: ThreadTeam | None = None, ledger: EditBuffers | None = None,
            stats: KernelStats | None = None) -> int:
    """Collapse short edges until no active vertices remain (or the sweep
    cap); returns the number of successful collapses."""
    own = team is None
    team = team or ThreadTeam(1)
    ledger = ledger or EditBuffers(team.n)
    stats = stats if stats is not None else KernelStats()
    rb = _RoundBuffers(team, ledger)
    met = metric.m
    total = 0
    candidates = mesh.alive_vertex_ids()
    try:
        for _ in range(params.max_sweeps):
            actives = _filter_coarsen_actives(mesh, met, params, team, rb, candidates)
            if not len(actives):
                break
            stats.sweeps += 1
            colouring = colour_graph(mesh, actives, team)
            worklist = SharedWorklist(max(1024, len(actives)))
            for cls in colouring.classes:
                stats.rounds += 1
                # adjacency rows can grow at commits, so rebound per round
                grain = _dispatch_grain(len(cls), team, params.grain)
                rb.size_prop(grain, mesh.vv.shape[1] + 2)
                edit_bound = grain * (4 * mesh.vv.shape[1] + 16)
                intent = np.full(mesh.nv, -1, np.int64)

                def intent_body(b, e, tid):
                    kops.coarsen_intent_chunk(b, e, cls, mesh.coords, mesh.v_alive,
                                              mesh.btag, mesh.vv, mesh.vv_n, met,
                                              params.l_low, intent)

                parallel_for_stealing(len(cls), intent_body, grain, team)

                def exec_body(b, e, tid):
                    ledger.ensure_headroom(tid, edit_bound)
                    buf, cnt = ledger.buffer(tid)
                    kops.coarsen_exec_chunk(b, e, cls, intent, mesh.coords, mesh.tri,
                                            mesh.v_alive, mesh.e_alive, mesh.btag,
                                            mesh.vv, mesh.vv_n, mesh.ve, mesh.ve_n,
                                            met, params.l_up, buf, cnt,
                                            rb.prop[tid], rb.prop_cnt[tid],
                                            rb.stats[tid],
                                            rb.prop[tid], rb.prop_cnt[tid], False)
                    _flush_prop(rb, worklist, tid)

                sched = parallel_for_stealing(len(cls), exec_body, grain, team)
                stats.steals += sched.total_steals()
                ledger.commit(mesh, team)
            raw = rb.reduce_stats()
            total += int(raw[ops.OK])
            stats.absorb(raw)
            candidates = np.unique(worklist.swap_out())
            if not len(candidates):
                break
    finally:
        if own:
            team.close()
    return total


def _filter_coarsen_actives(mesh, met, params, team, rb, candidates):
    if not len(candidates):
        return candidates
    n = team.n
    outs = [np.empty(len(candidates), np.int64) for _ in range(n)]
    cnts = [np.zeros(1, np.int64) for _ in range(n)]

    def body(b, e, tid):
        kops.coarsen_filter_chunk(b, e, candidates, mesh.coords, mesh.v_alive,
                                  mesh.btag, mesh.vv, mesh.vv_n, met,
                                  params.l_low, outs[tid], cnts[tid])

    parallel_for_stealing(len(candidates), body,
                          _dispatch_grain(len(candidates), team, params.grain), team)
    parts = [o[:int(c[0])] for o, c in zip(outs, cnts)]
    out = np.concatenate(parts) if parts else np.empty(0, np.int64)
    out.sort()
    return out


# ----------------------------------------------------------------------
# swap


def swap(mesh: Mesh, metric: MetricField, params: KernelParams,
         team: ThreadTeam | None = None, ledger: EditBuffers | None = None,
         stats: KernelStats | None = None) -> int:
    """Flip interior edges whenever the flipped pair's minimum quality
    strictly improves; returns the number of accepted flips."""
    own = team is None
    team = team or ThreadTeam(1)
    ledger = ledger or EditBuffers(team.n)
    stats = stats if stats is not None else KernelStats()
    rb = _RoundBuffers(team, ledger)
    met = metric.m

    edges, counts = mesh.edge_element_counts()
    interior = edges[counts == 2]
    candidates = (interior[:, 0] << 32) | interior[:, 1]
    total = 0
    try:
        for _ in range(params.max_sweeps):
            if not len(candidates):
                break
            keys = np.unique(candidates)
            eu = keys >> 32
            ev = keys & 0xFFFFFFFF
            ok = (mesh.v_alive[eu] == 1) & (mesh.v_alive[ev] == 1)
            eu, ev = eu[ok], ev[ok]
            if not len(eu):
                break
            stats.sweeps += 1
            owners = eu  # canonical keys have u < v: owner is the lower id
            colouring = colour_graph(mesh, np.unique(owners), team)
            col = colouring.colour[owners]
            order = np.lexsort((owners, col))
            eu, ev, owners, col = eu[order], ev[order], owners[order], col[order]
            bounds = np.searchsorted(col, np.arange(colouring.num_colours + 1))
            worklist = SharedWorklist(max(1024, 4 * len(eu)))
            for c in range(colouring.num_colours):
                lo, hi = bounds[c], bounds[c + 1]
                if lo == hi:
                    continue
                stats.rounds += 1
                grain = _dispatch_grain(hi - lo, team, params.grain)
                rb.size_prop(grain, 8)
                ceu = np.ascontiguousarray(eu[lo:hi])
                cev = np.ascontiguousarray(ev[lo:hi])
                cowners = np.ascontiguousarray(owners[lo:hi])
                items = np.arange(hi - lo)
                intent_w = np.empty((hi - lo, 2), np.int64)
                intent_t = np.empty((hi - lo, 2), np.int64)

                def intent_body(b, e, tid):
                    kops.swap_intent_chunk(b, e, ceu, cev, mesh.coords, mesh.tri,
                                           mesh.v_alive, mesh.e_alive,
                                           mesh.vv, mesh.vv_n, mesh.ve, mesh.ve_n,
                                           met, params.swap_tol,
                                           intent_w, intent_t, rb.stats[tid])

                parallel_for_stealing(hi - lo, intent_body, grain, team)

                def exec_body(b, e, tid):
                    ledger.ensure_headroom(tid, grain * 8 + 16)
                    buf, cnt = ledger.buffer(tid)
                    kops.swap_exec_chunk(b, e, ceu, cev, intent_w, intent_t,
                                         cowners, items, mesh.coords, mesh.tri,
                                         mesh.v_alive, mesh.e_alive,
                                         mesh.vv, mesh.vv_n, mesh.ve, mesh.ve_n,
                                         buf, cnt, rb.prop[tid], rb.prop_cnt[tid],
                                         rb.stats[tid])
                    _flush_prop(rb, worklist, tid)

                sched = parallel_for_stealing(hi - lo, exec_body, grain, team)
                stats.steals += sched.total_steals()
                ledger.commit(mesh, team)
            raw = rb.reduce_stats()
            total += int(raw[kops.STAT_FLIPS])
            stats.absorb(raw)
            candidates = worklist.swap_out()
    finally:
        if own:
            team.close()
    return total


# ----------------------------------------------------------------------
# refine


def refine(mesh: Mesh, metric: MetricField, params: KernelParams,
           team: ThreadTeam | None = None, ledger: EditBuffers | None = None,
           stats: KernelStats | None = None) -> int:
    """Split every edge longer than l_up in one sweep, dividing elements
    by the 1/2/3-edge templates; returns the number of children created."""
    own = team is None
    team = team or ThreadTeam(1)
    ledger = ledger or EditBuffers(team.n)
    stats = stats if stats is not None else KernelStats()
    met = metric.m
    try:
        edges, counts = mesh.edge_element_counts()
        if not len(edges):
            return 0
        lengths = np.empty(len(edges))

        def len_body(b, e, tid):
            kops.edge_lengths_chunk(b, e, edges, mesh.coords, met, lengths)

        parallel_for_stealing(len(edges), len_body, 2048, team)
        marked = lengths > params.l_up
        nm = int(marked.sum())
        if nm == 0:
            return 0
        stats.sweeps += 1
        m_edges = edges[marked]
        m_counts = counts[marked]
        keys = (m_edges[:, 0] << 32) | m_edges[:, 1]  # sorted: unique is lexicographic

        # allocate midpoint vertices
        nv0 = mesh.nv
        mesh.ensure_vertex_capacity(nm)
        metric.ensure_capacity(len(mesh.coords))
        mid_ids = nv0 + np.arange(nm)
        mesh.coords[mid_ids] = 0.5 * (mesh.coords[m_edges[:, 0]] + mesh.coords[m_edges[:, 1]])
        metric.m[mid_ids] = 0.5 * (metric.m[m_edges[:, 0]] + metric.m[m_edges[:, 1]])
        mesh.v_alive[mid_ids] = 1
        mesh.btag[mid_ids] = -1
        on_boundary = m_counts == 1
        if on_boundary.any():
            tag = shared_boundary_tags(mesh.btag, m_edges[on_boundary])
            if (tag < 0).any():
                raise MeshStructureError("boundary edge without a common side tag")
            mesh.btag[mid_ids[on_boundary], 0] = tag
        mesh.nv = nv0 + nm

        # per-element mark counts and child placement
        alive_ids = np.nonzero(mesh.e_alive[:mesh.nelem])[0]
        tris = mesh.tri[alive_ids]
        k_e = np.zeros(len(alive_ids), np.int64)
        for j in range(3):
            u = np.minimum(tris[:, j], tris[:, (j + 1) % 3])
            v = np.maximum(tris[:, j], tris[:, (j + 1) % 3])
            kj = (u << 32) | v
            pos = np.searchsorted(keys, kj)
            pos[pos >= len(keys)] = len(keys) - 1
            k_e += keys[pos] == kj
        split_mask = k_e > 0
        split_eids = alive_ids[split_mask]
        extras = k_e[split_mask]
        ne0 = mesh.nelem
        offsets = ne0 + np.concatenate([[0], np.cumsum(extras)[:-1]])
        total_extra = int(extras.sum())
        mesh.ensure_element_capacity(total_extra)
        mesh.nelem = ne0 + total_extra

        grain = _dispatch_grain(len(split_eids), team, params.grain)

        def body(b, e, tid):
            ledger.ensure_headroom(tid, grain * 64 + 64)
            buf, cnt = ledger.buffer(tid)
            kops.refine_split_chunk(b, e, split_eids, offsets, keys, mid_ids,
                                    mesh.coords, mesh.tri, mesh.v_alive,
                                    mesh.e_alive, met, buf, cnt)

        sched = parallel_for_stealing(len(split_eids), body, grain, team)
        stats.steals += sched.total_steals()
        stats.rounds += 1
        ledger.commit(mesh, team)
        created = int(total_extra + len(split_eids))
        stats.changes += created
        return created
    finally:
        if own:
            team.close()


# ----------------------------------------------------------------------
# smooth


def smooth(mesh: Mesh, metric: MetricField, params: KernelParams,
           team: ThreadTeam | None = None, stats: KernelStats | None = None) -> None:
    """Quality-constrained metric-weighted Laplacian smoothing.

    Runs a fixed number of colour-batched sweeps with topology frozen;
    positions update in place so later vertices see earlier moves within
    a sweep (Gauss-Seidel style). Boundary vertices slide only along
    their side; corners are pinned.
    """
    own = team is None
    team = team or ThreadTeam(1)
    stats = stats if stats is not None else KernelStats()
    rb = _RoundBuffers(team, EditBuffers(team.n))
    met = metric.m
    movable = mesh.alive_vertex_ids()
    movable = movable[mesh.btag[movable, 1] < 0]  # corners are pinned
    if not len(movable):
        if own:
            team.close()
        return
    try:
        colouring = colour_graph(mesh, movable, team)
        for _ in range(params.smooth_sweeps):
            stats.sweeps += 1
            for cls in colouring.classes:
                stats.rounds += 1

                def body(b, e, tid):
                    kops.smooth_chunk(b, e, cls, mesh.coords, mesh.tri,
                                      mesh.v_alive, mesh.e_alive, mesh.btag,
                                      mesh.vv, mesh.vv_n, mesh.ve, mesh.ve_n,
                                      met, rb.stats[tid])

                sched = parallel_for_stealing(
                    len(cls), body, _dispatch_grain(len(cls), team, params.grain), team)
                stats.steals += sched.total_steals()
        stats.absorb(rb.reduce_stats())
    finally:
        if own:
            team.close()


# ----------------------------------------------------------------------
# driver


@dataclass
class AdaptReport:
    """Outcome of one adapt() call."""
    iterations: int = 0
    converged: bool = False
    seconds: dict = field(default_factory=dict)
    changes: dict = field(default_factory=dict)
    kernel_stats: dict = field(default_factory=dict)
    elements: int = 0
    vertices: int = 0
    min_quality: float = 0.0
    mean_quality: float = 0.0
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(20, np.int64))
    dropped_edits: int = 0


def adapt(mesh: Mesh, metric: MetricField, params: KernelParams | None = None,
          team: ThreadTeam | None = None, max_iterations: int = 20,
          check: bool = False) -> AdaptReport:
    """Run coarsen -> swap -> refine to convergence, then smooth.

    With ``check=True`` the mesh is verified after every kernel phase and
    an AdaptationError naming the phase is raised on the first violation.
    The mesh is compacted between the main loop and smoothing and again
    at the end; the metric field is remapped alongside.
    """
    params = params or KernelParams()
    own = team is None
    team = team or ThreadTeam(1)
    ledger = EditBuffers(team.n)
    report = AdaptReport()
    names = ("coarsen", "swap", "refine", "smooth")
    for name in names:
        report.seconds[name] = 0.0
        report.changes[name] = 0
        report.kernel_stats[name] = KernelStats()

    def phase(name, fn):
        t0 = time.perf_counter()
        n = fn()
        report.seconds[name] += time.perf_counter() - t0
        report.changes[name] += int(n or 0)
        if check:
            rep = verify(mesh)
            if not rep.ok:
                raise AdaptationError(f"mesh non-conforming after {name}: {rep}")
        return int(n or 0)

    try:
        fingerprint = None
        for it in range(max_iterations):
            report.iterations = it + 1
            c = phase("coarsen", lambda: coarsen(
                mesh, metric, params, team, ledger, report.kernel_stats["coarsen"]))
            s = phase("swap", lambda: swap(
                mesh, metric, params, team, ledger, report.kernel_stats["swap"]))
            r = phase("refine", lambda: refine(
                mesh, metric, params, team, ledger, report.kernel_stats["refine"]))
            if c + s + r == 0:
                report.converged = True
                break
            # refinement/coarsening hysteresis can settle into an exact
            # limit cycle; an unchanged fingerprint means no progress
            state = (c, s, r, mesh.num_elements, mesh.num_vertices)
            if state == fingerprint:
                break
            fingerprint = state
        _compact_pair(mesh, metric)
        phase("smooth", lambda: smooth(
            mesh, metric, params, team, report.kernel_stats["smooth"]))
        report.changes["smooth"] = report.kernel_stats["smooth"].changes
        _compact_pair(mesh, metric)
    finally:
        if own:
            team.close()

    report.elements = mesh.num_elements
    report.vertices = mesh.num_vertices
    report.dropped_edits = ledger.dropped
    q = mesh_qualities(mesh, metric)
    if len(q):
        report.min_quality = float(q.min())
        report.mean_quality = float(q.mean())
        report.histogram = quality_histogram(q)
    return report


def _compact_pair(mesh: Mesh, metric: MetricField) -> None:
    kept = mesh.compact()
    metric.compact(kept)
