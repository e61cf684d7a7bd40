"""Compiled mesh-editing primitives.

Everything here is numba-compiled with ``nogil=True`` so Python worker
threads genuinely overlap while executing kernel bodies. All functions
operate on the flat arrays owned by :class:`adaptix.mesh.Mesh`:

    coords   float64 (vcap, 2)
    tri      int64   (ecap, 3)   counter-clockwise vertex triples
    v_alive  uint8   (vcap,)
    e_alive  uint8   (ecap,)
    btag     int32   (vcap, 2)   up to two boundary-side tags, -1 = unset
    vv       int64   (vcap, k)   sorted neighbour-vertex rows
    vv_n     int32   (vcap,)
    ve       int64   (vcap, k)   sorted incident-element rows
    ve_n     int32   (vcap,)

Adjacency edits are rows (target, kind, payload) appended to a flat
per-thread buffer; `kind` is one of the EDIT_* constants. Edits are
committed later by the owner thread (owner = target mod N).
"""

import numpy as np
from numba import njit

# Edit kinds (mesh adjacency ledger).
EDIT_ADD_NN = 0
EDIT_DEL_NN = 1
EDIT_ADD_NE = 2
EDIT_DEL_NE = 3

# collapse_core outcome codes; keep in sync with kernels.KernelOutcome.
OK = 0
NOT_ADJACENT = 1
BOUNDARY_VIOLATION = 2
WOULD_INVERT = 3
EDGE_TOO_LONG = 4
LINK_VIOLATION = 5
LEDGER_FULL = 6

MIN_AREA2 = 2e-14  # twice-area floor for accepting a new element


@njit(cache=True, nogil=True)
def row_find(row, n, val):
    """Binary search `val` in the sorted prefix row[:n]; index or -1."""
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] < val:
            lo = mid + 1
        else:
            hi = mid
    if lo < n and row[lo] == val:
        return lo
    return -1


@njit(cache=True, nogil=True)
def row_insert(row, n, val):
    """Insert `val` into sorted prefix row[:n]; returns new count, -1 on
    overflow, n if already present."""
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] < val:
            lo = mid + 1
        else:
            hi = mid
    if lo < n and row[lo] == val:
        return n
    if n >= row.shape[0]:
        return -1
    for i in range(n, lo, -1):
        row[i] = row[i - 1]
    row[lo] = val
    return n + 1


@njit(cache=True, nogil=True)
def row_remove(row, n, val):
    """Remove `val` from sorted prefix row[:n]; returns new count (n if absent)."""
    idx = row_find(row, n, val)
    if idx < 0:
        return n
    for i in range(idx, n - 1):
        row[i] = row[i + 1]
    return n - 1


@njit(cache=True, nogil=True)
def tri_area2(coords, a, b, c):
    """Twice the signed area of triangle (a, b, c)."""
    ax, ay = coords[a, 0], coords[a, 1]
    return (coords[b, 0] - ax) * (coords[c, 1] - ay) - (coords[c, 0] - ax) * (coords[b, 1] - ay)


@njit(cache=True, nogil=True)
def edge_len_metric(coords, met, u, v):
    """Edge length under the averaged endpoint metrics."""
    ex = coords[v, 0] - coords[u, 0]
    ey = coords[v, 1] - coords[u, 1]
    m00 = 0.5 * (met[u, 0] + met[v, 0])
    m01 = 0.5 * (met[u, 1] + met[v, 1])
    m11 = 0.5 * (met[u, 2] + met[v, 2])
    q = m00 * ex * ex + 2.0 * m01 * ex * ey + m11 * ey * ey
    if q <= 0.0:
        return 0.0
    return np.sqrt(q)


@njit(cache=True, nogil=True)
def push_edit(ebuf, ecnt, target, kind, payload):
    i = ecnt[0]
    if i >= ebuf.shape[0]:
        return False
    ebuf[i, 0] = target
    ebuf[i, 1] = kind
    ebuf[i, 2] = payload
    ecnt[0] = i + 1
    return True


@njit(cache=True, nogil=True)
def tags_share(btag, u, v):
    """True if u and v have a common boundary-side tag."""
    for i in range(2):
        t = btag[u, i]
        if t < 0:
            continue
        if btag[v, 0] == t or btag[v, 1] == t:
            return True
    return False


@njit(cache=True, nogil=True)
def collapse_core(v, tgt, coords, tri, v_alive, e_alive, btag,
                  vv, vv_n, ve, ve_n, met, l_up, ebuf, ecnt):
    """Collapse vertex v onto its neighbour tgt.

    Mutates only v's own data (alive flag, adjacency counts) and the tri
    rows/alive flags of elements incident to v; every adjacency-list edit
    for any other vertex is pushed to the edit buffer. Rejections leave
    both mesh and buffer untouched. Returns an outcome code.
    """
    if v_alive[v] == 0 or v_alive[tgt] == 0 or v == tgt:
        return NOT_ADJACENT
    if row_find(vv[v], vv_n[v], tgt) < 0:
        return NOT_ADJACENT

    # Boundary policy: corners are pinned; side vertices may collapse only
    # along their own side.
    if btag[v, 1] >= 0:
        return BOUNDARY_VIOLATION
    v_side = btag[v, 0]
    if v_side >= 0:
        if not (btag[tgt, 0] == v_side or btag[tgt, 1] == v_side):
            return BOUNDARY_VIOLATION

    # Elements shared by the edge (v, tgt), found against live tri rows so
    # the scan stays exact even when tgt's own lists hold pending edits.
    shared = np.empty(4, np.int64)
    wings = np.empty(4, np.int64)
    n_shared = 0
    nev = ve_n[v]
    for i in range(nev):
        eid = ve[v, i]
        if e_alive[eid] == 0:
            continue
        a, b, c = tri[eid, 0], tri[eid, 1], tri[eid, 2]
        if a == tgt or b == tgt or c == tgt:
            if n_shared >= 4:
                return LINK_VIOLATION
            shared[n_shared] = eid
            w = a
            if w == v or w == tgt:
                w = b
            if w == v or w == tgt:
                w = c
            wings[n_shared] = w
            n_shared += 1
    if n_shared < 1 or n_shared > 2:
        return LINK_VIOLATION
    if v_side >= 0 and n_shared != 1:
        # side vertex collapsing across an interior chord
        return BOUNDARY_VIOLATION

    # Link condition: shared neighbours of v and tgt must be exactly the
    # wing vertices, else the collapse would fuse two distinct edges into
    # one carrying more than two elements.
    n_common = 0
    for i in range(vv_n[v]):
        u = vv[v, i]
        if u == tgt or v_alive[u] == 0:
            continue
        if row_find(vv[tgt], vv_n[tgt], u) >= 0:
            ok = False
            for k in range(n_shared):
                if wings[k] == u:
                    ok = True
            if not ok:
                return LINK_VIOLATION
            n_common += 1
    if n_common != n_shared:
        return LINK_VIOLATION

    # Geometry gates: re-pointed elements must stay positively oriented and
    # no new edge may exceed l_up in metric length.
    for i in range(nev):
        eid = ve[v, i]
        if e_alive[eid] == 0:
            continue
        skip = False
        for k in range(n_shared):
            if shared[k] == eid:
                skip = True
        if skip:
            continue
        a, b, c = tri[eid, 0], tri[eid, 1], tri[eid, 2]
        if a == v:
            a = tgt
        if b == v:
            b = tgt
        if c == v:
            c = tgt
        ax, ay = coords[a, 0], coords[a, 1]
        area2 = (coords[b, 0] - ax) * (coords[c, 1] - ay) - (coords[c, 0] - ax) * (coords[b, 1] - ay)
        if area2 <= MIN_AREA2:
            return WOULD_INVERT
    for i in range(vv_n[v]):
        u = vv[v, i]
        if u == tgt or v_alive[u] == 0:
            continue
        if row_find(vv[tgt], vv_n[tgt], u) >= 0:
            continue  # existing edge, unchanged
        if edge_len_metric(coords, met, tgt, u) > l_up:
            return EDGE_TOO_LONG

    # Capacity gate before any mutation: worst-case edit count.
    needed = 1 + 3 * vv_n[v] + 2 * n_shared + nev
    if ecnt[0] + needed > ebuf.shape[0]:
        return LEDGER_FULL

    # Apply. Element rows incident to v are owned by this invocation.
    for i in range(nev):
        eid = ve[v, i]
        if e_alive[eid] == 0:
            continue
        is_shared = False
        for k in range(n_shared):
            if shared[k] == eid:
                is_shared = True
        if is_shared:
            e_alive[eid] = 0
            for j in range(3):
                x = tri[eid, j]
                if x != v:
                    push_edit(ebuf, ecnt, x, EDIT_DEL_NE, eid)
        else:
            for j in range(3):
                if tri[eid, j] == v:
                    tri[eid, j] = tgt
            push_edit(ebuf, ecnt, tgt, EDIT_ADD_NE, eid)

    for i in range(vv_n[v]):
        u = vv[v, i]
        if u == tgt:
            continue
        push_edit(ebuf, ecnt, u, EDIT_DEL_NN, v)
        if v_alive[u] == 0:
            continue
        if row_find(vv[tgt], vv_n[tgt], u) < 0:
            push_edit(ebuf, ecnt, u, EDIT_ADD_NN, tgt)
            push_edit(ebuf, ecnt, tgt, EDIT_ADD_NN, u)
    push_edit(ebuf, ecnt, tgt, EDIT_DEL_NN, v)

    v_alive[v] = 0
    vv_n[v] = 0
    ve_n[v] = 0
    return OK


@njit(cache=True, nogil=True)
def commit_edits_core(ebuf, count, owner, nthreads, vv, vv_n, ve, ve_n, v_alive,
                      audit, audit_cnt, audit_on):
    """Apply this producer's edits whose target id mod nthreads == owner
    (owner == -1 applies everything; single-threaded commits use it to
    avoid rescanning the buffer once per owner).

    Two passes: a capacity pre-check (so an overflowing commit applies
    nothing and the caller can regrow rows), then in-order application.
    Returns (dropped_dead, grow_needed).
    """
    # capacity pre-check: count worst-case additions per target
    for i in range(count):
        t = ebuf[i, 0]
        if (owner >= 0 and t % nthreads != owner) or v_alive[t] == 0:
            continue
        k = ebuf[i, 1]
        if k == EDIT_ADD_NN:
            if vv_n[t] >= vv.shape[1]:
                return 0, True
        elif k == EDIT_ADD_NE:
            if ve_n[t] >= ve.shape[1]:
                return 0, True
    # the check above is per-edit pessimistic only when a row is already at
    # capacity; mid-commit growth is still possible, so re-check on insert
    dropped = 0
    for i in range(count):
        t = ebuf[i, 0]
        if owner >= 0 and t % nthreads != owner:
            continue
        if v_alive[t] == 0:
            dropped += 1
            continue
        k = ebuf[i, 1]
        p = ebuf[i, 2]
        if k == EDIT_ADD_NN:
            n = row_insert(vv[t], vv_n[t], p)
            if n < 0:
                return dropped, True
            vv_n[t] = n
        elif k == EDIT_DEL_NN:
            vv_n[t] = row_remove(vv[t], vv_n[t], p)
        elif k == EDIT_ADD_NE:
            n = row_insert(ve[t], ve_n[t], p)
            if n < 0:
                return dropped, True
            ve_n[t] = n
        else:
            ve_n[t] = row_remove(ve[t], ve_n[t], p)
        if audit_on:
            j = audit_cnt[0]
            if j < audit.shape[0]:
                audit[j, 0] = owner
                audit[j, 1] = t
                audit_cnt[0] = j + 1
    return dropped, False


@njit(cache=True, nogil=True)
def build_adjacency_core(tri, e_alive, nelem, vv, vv_n, ve, ve_n):
    """Rebuild both adjacency structures from the alive elements.

    Returns False if any row overflows (caller regrows and retries).
    """
    vv_n[:] = 0
    ve_n[:] = 0
    for eid in range(nelem):
        if e_alive[eid] == 0:
            continue
        for j in range(3):
            a = tri[eid, j]
            b = tri[eid, (j + 1) % 3]
            n = row_insert(ve[a], ve_n[a], eid)
            if n < 0:
                return False
            ve_n[a] = n
            n = row_insert(vv[a], vv_n[a], b)
            if n < 0:
                return False
            vv_n[a] = n
            n = row_insert(vv[b], vv_n[b], a)
            if n < 0:
                return False
            vv_n[b] = n
    return True
