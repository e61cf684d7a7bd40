"""Compiled chunk bodies for the adaptive kernels.

Each body processes a contiguous slice of one colour class (or element
worklist) under the round contract: reads are safe anywhere, direct
writes touch only entities owned by the executing item, every other
adjacency edit goes to the per-thread edit buffer, and propagation ids
are appended to a per-thread buffer flushed to the shared worklist by
the Python driver.

Coarsening and swapping run an intent/arbitrate-execute pair of phases
per round: simultaneous cavity operations that would fuse the same new
edge twice are serialized by a deterministic lowest-id-wins rule over
2-hop claims (vertex colouring alone cannot exclude them).
"""

import numpy as np
from numba import njit

from ._mesh_ops import (OK, EDIT_ADD_NE, EDIT_ADD_NN, EDIT_DEL_NE, EDIT_DEL_NN,
                        MIN_AREA2, collapse_core, edge_len_metric, push_edit,
                        row_find, tags_share, tri_area2)
from .quality import quality_core

# stats slots shared by kernel chunk bodies
N_STATS = 16
STAT_LOST = 8          # lost intent arbitration
STAT_MOVED = 9         # smoothing: accepted moves
STAT_FLIPS = 10        # swapping: accepted flips
STAT_REJ_QUALITY = 11  # swapping/smoothing: quality gate rejections
STAT_REJ_GEOM = 12     # swapping/smoothing: inversion rejections


@njit(cache=True, nogil=True)
def pack_edge(u, v):
    if u < v:
        return (u << 32) | v
    return (v << 32) | u


@njit(cache=True, nogil=True)
def unpack_edge(key):
    return key >> 32, key & 0xFFFFFFFF


# ----------------------------------------------------------------------
# coarsening


@njit(cache=True, nogil=True)
def eligible_collapse_target(v, coords, v_alive, btag, vv, vv_n, met, l_low):
    """Shortest sub-l_low edge endpoint v may legally collapse onto,
    honouring the boundary policy; -1 if none. Ties go to the lower id
    (ascending neighbour scan with strict improvement)."""
    if v_alive[v] == 0 or btag[v, 1] >= 0:
        return -1
    side = btag[v, 0]
    best = -1
    best_len = l_low
    for j in range(vv_n[v]):
        u = vv[v, j]
        if v_alive[u] == 0:
            continue
        if side >= 0 and not (btag[u, 0] == side or btag[u, 1] == side):
            continue
        l = edge_len_metric(coords, met, v, u)
        if l < best_len:
            best_len = l
            best = u
    return best


@njit(cache=True, nogil=True)
def coarsen_filter_chunk(b, e, cand, coords, v_alive, btag, vv, vv_n, met,
                         l_low, out, outn):
    for i in range(b, e):
        v = cand[i]
        if eligible_collapse_target(v, coords, v_alive, btag, vv, vv_n, met, l_low) >= 0:
            out[outn[0]] = v
            outn[0] += 1


@njit(cache=True, nogil=True)
def coarsen_intent_chunk(b, e, cls, coords, v_alive, btag, vv, vv_n, met,
                         l_low, intent):
    for i in range(b, e):
        v = cls[i]
        intent[v] = eligible_collapse_target(v, coords, v_alive, btag, vv, vv_n,
                                             met, l_low)


@njit(cache=True, nogil=True)
def _loses_arbitration(v, vv, vv_n, intent):
    """True if a lower-id vertex within two hops also holds an intent."""
    for j in range(vv_n[v]):
        w = vv[v, j]
        for k in range(vv_n[w]):
            v2 = vv[w, k]
            if v2 != v and v2 < v and intent[v2] >= 0:
                return True
    return False


@njit(cache=True, nogil=True)
def coarsen_exec_chunk(b, e, cls, intent, coords, tri, v_alive, e_alive, btag,
                       vv, vv_n, ve, ve_n, met, l_up, ebuf, ecnt,
                       prop, propn, stats, exec_log, exec_cnt, log_on):
    ring = np.empty(vv.shape[1], np.int64)
    for i in range(b, e):
        v = cls[i]
        tgt = intent[v]
        if tgt < 0:
            continue
        if _loses_arbitration(v, vv, vv_n, intent):
            stats[STAT_LOST] += 1
            prop[propn[0]] = v
            propn[0] += 1
            continue
        deg = vv_n[v]
        for j in range(deg):
            ring[j] = vv[v, j]
        if log_on:
            exec_log[exec_cnt[0]] = v
            exec_cnt[0] += 1
        outcome = collapse_core(v, tgt, coords, tri, v_alive, e_alive, btag,
                                vv, vv_n, ve, ve_n, met, l_up, ebuf, ecnt)
        stats[outcome] += 1
        if outcome == OK:
            for j in range(deg):
                u = ring[j]
                if v_alive[u]:
                    prop[propn[0]] = u
                    propn[0] += 1


# ----------------------------------------------------------------------
# swapping


@njit(cache=True, nogil=True)
def swap_intent_chunk(b, e, eu, ev, coords, tri, v_alive, e_alive,
                      vv, vv_n, ve, ve_n, met, tol, intent_w, intent_t, stats):
    """Validate each candidate edge and record the flip it wants.

    intent_w[i] = (w_left, w_right) opposite pair, intent_t[i] = the two
    element ids; (-1, -1) marks no-flip.
    """
    for i in range(b, e):
        intent_w[i, 0] = -1
        intent_w[i, 1] = -1
        u = eu[i]
        v = ev[i]
        if v_alive[u] == 0 or v_alive[v] == 0:
            continue
        if row_find(vv[u], vv_n[u], v) < 0:
            continue
        # live incident elements of the edge
        t_left = -1
        t_right = -1
        for j in range(ve_n[u]):
            eid = ve[u, j]
            if e_alive[eid] == 0:
                continue
            a0, a1, a2 = tri[eid, 0], tri[eid, 1], tri[eid, 2]
            if (a0 == u and a1 == v) or (a1 == u and a2 == v) or (a2 == u and a0 == v):
                t_left = eid
            elif (a0 == v and a1 == u) or (a1 == v and a2 == u) or (a2 == v and a0 == u):
                t_right = eid
        if t_left < 0 or t_right < 0:
            continue  # boundary or stale edge
        w1 = tri[t_left, 0] + tri[t_left, 1] + tri[t_left, 2] - u - v
        w2 = tri[t_right, 0] + tri[t_right, 1] + tri[t_right, 2] - u - v
        if w1 == w2:
            continue
        if row_find(vv[w1], vv_n[w1], w2) >= 0:
            continue  # diagonal already exists elsewhere; flip would duplicate it
        # quality gate: flip must strictly raise the pair minimum
        q_old1 = quality_core(coords[u, 0], coords[u, 1], coords[v, 0], coords[v, 1],
                              coords[w1, 0], coords[w1, 1], met[u], met[v], met[w1])
        q_old2 = quality_core(coords[v, 0], coords[v, 1], coords[u, 0], coords[u, 1],
                              coords[w2, 0], coords[w2, 1], met[v], met[u], met[w2])
        q_new1 = quality_core(coords[u, 0], coords[u, 1], coords[w2, 0], coords[w2, 1],
                              coords[w1, 0], coords[w1, 1], met[u], met[w2], met[w1])
        q_new2 = quality_core(coords[w2, 0], coords[w2, 1], coords[v, 0], coords[v, 1],
                              coords[w1, 0], coords[w1, 1], met[w2], met[v], met[w1])
        if q_new1 < 0.0 or q_new2 < 0.0:
            stats[STAT_REJ_GEOM] += 1
            continue  # re-entrant quad
        q_old = min(q_old1, q_old2)
        q_new = min(q_new1, q_new2)
        if q_new <= q_old + tol:
            stats[STAT_REJ_QUALITY] += 1
            continue
        intent_w[i, 0] = w1
        intent_w[i, 1] = w2
        intent_t[i, 0] = t_left
        intent_t[i, 1] = t_right


@njit(cache=True, nogil=True)
def _swap_claims_clash(i, j, eu, ev, intent_w):
    for a in range(4):
        if a == 0:
            x = eu[i]
        elif a == 1:
            x = ev[i]
        elif a == 2:
            x = intent_w[i, 0]
        else:
            x = intent_w[i, 1]
        if (x == eu[j] or x == ev[j] or x == intent_w[j, 0] or x == intent_w[j, 1]):
            return True
    return False


@njit(cache=True, nogil=True)
def swap_exec_chunk(b, e, eu, ev, intent_w, intent_t, owners_sorted, items_sorted,
                    coords, tri, v_alive, e_alive, vv, vv_n, ve, ve_n,
                    ebuf, ecnt, prop, propn, stats):
    """Arbitrate claims (lowest item index wins) and apply winning flips."""
    n_items = len(eu)
    for i in range(b, e):
        if intent_w[i, 0] < 0:
            continue
        u = eu[i]
        v = ev[i]
        w1 = intent_w[i, 0]
        w2 = intent_w[i, 1]
        # competitor scan: owners of any conflicting item lie in the
        # 1-ring of one of our four claim vertices (or are one of them)
        lose = False
        for a in range(4):
            if a == 0:
                x = u
            elif a == 1:
                x = v
            elif a == 2:
                x = w1
            else:
                x = w2
            for k in range(-1, vv_n[x]):
                o2 = x if k < 0 else vv[x, k]
                lo = np.searchsorted(owners_sorted, o2)
                while lo < n_items and owners_sorted[lo] == o2:
                    j = items_sorted[lo]
                    lo += 1
                    if j >= i or intent_w[j, 0] < 0:
                        continue
                    if _swap_claims_clash(i, j, eu, ev, intent_w):
                        lose = True
                        break
                if lose:
                    break
            if lose:
                break
        if lose:
            stats[STAT_LOST] += 1
            prop[propn[0]] = pack_edge(u, v)
            propn[0] += 1
            continue

        t1 = intent_t[i, 0]
        t2 = intent_t[i, 1]
        # rows: t1 <- (u, w2, w1), t2 <- (w2, v, w1)
        tri[t1, 0] = u
        tri[t1, 1] = w2
        tri[t1, 2] = w1
        tri[t2, 0] = w2
        tri[t2, 1] = v
        tri[t2, 2] = w1
        push_edit(ebuf, ecnt, u, EDIT_DEL_NN, v)
        push_edit(ebuf, ecnt, v, EDIT_DEL_NN, u)
        push_edit(ebuf, ecnt, w1, EDIT_ADD_NN, w2)
        push_edit(ebuf, ecnt, w2, EDIT_ADD_NN, w1)
        push_edit(ebuf, ecnt, u, EDIT_DEL_NE, t2)
        push_edit(ebuf, ecnt, v, EDIT_DEL_NE, t1)
        push_edit(ebuf, ecnt, w1, EDIT_ADD_NE, t2)
        push_edit(ebuf, ecnt, w2, EDIT_ADD_NE, t1)
        stats[STAT_FLIPS] += 1
        prop[propn[0]] = pack_edge(u, w1)
        prop[propn[0] + 1] = pack_edge(u, w2)
        prop[propn[0] + 2] = pack_edge(v, w1)
        prop[propn[0] + 3] = pack_edge(v, w2)
        propn[0] += 4


# ----------------------------------------------------------------------
# refinement


@njit(cache=True, nogil=True)
def refine_split_chunk(b, e, split_eids, child_offsets, marked_keys, mid_ids,
                       coords, tri, v_alive, e_alive, met, ebuf, ecnt):
    """Split each marked element by its refinement template.

    `marked_keys` is the sorted packed-edge array of globally marked
    edges and `mid_ids[k]` the midpoint vertex allocated for key k, so
    both elements sharing a split edge agree on the midpoint. Children
    overwrite the parent row first, extras go to the reserved range
    [child_offsets[i], child_offsets[i+1]).
    """
    for i in range(b, e):
        eid = split_eids[i]
        a = tri[eid, 0]
        bb = tri[eid, 1]
        c = tri[eid, 2]
        m = np.empty(3, np.int64)  # midpoints of edges (a,b), (b,c), (c,a)
        nmark = 0
        for j in range(3):
            if j == 0:
                key = pack_edge(a, bb)
            elif j == 1:
                key = pack_edge(bb, c)
            else:
                key = pack_edge(c, a)
            k = np.searchsorted(marked_keys, key)
            if k < len(marked_keys) and marked_keys[k] == key:
                m[j] = mid_ids[k]
                nmark += 1
            else:
                m[j] = -1

        # rotate so the marked pattern is canonical: one mark -> edge ab;
        # two marks -> ab and bc; three -> all
        for _ in range(3):
            if nmark == 1 and m[0] >= 0:
                break
            if nmark == 2 and m[0] >= 0 and m[1] >= 0:
                break
            if nmark == 3:
                break
            a, bb, c = bb, c, a
            t0 = m[0]
            m[0] = m[1]
            m[1] = m[2]
            m[2] = t0

        out = child_offsets[i]
        for j in range(3):
            x = tri[eid, j]
            push_edit(ebuf, ecnt, x, EDIT_DEL_NE, eid)

        if nmark == 1:
            m1 = m[0]
            push_edit(ebuf, ecnt, a, EDIT_DEL_NN, bb)
            push_edit(ebuf, ecnt, bb, EDIT_DEL_NN, a)
            _emit_child(eid, a, m1, c, ebuf, ecnt, tri, e_alive)
            _emit_child(out, m1, bb, c, ebuf, ecnt, tri, e_alive)
        elif nmark == 2:
            m1 = m[0]
            m2 = m[1]
            push_edit(ebuf, ecnt, a, EDIT_DEL_NN, bb)
            push_edit(ebuf, ecnt, bb, EDIT_DEL_NN, a)
            push_edit(ebuf, ecnt, bb, EDIT_DEL_NN, c)
            push_edit(ebuf, ecnt, c, EDIT_DEL_NN, bb)
            _emit_child(eid, m1, bb, m2, ebuf, ecnt, tri, e_alive)
            # quad (a, m1, m2, c): pick the diagonal giving the better
            # worst child, tie toward (a, m2)
            qa1 = quality_core(coords[a, 0], coords[a, 1], coords[m1, 0], coords[m1, 1],
                               coords[m2, 0], coords[m2, 1], met[a], met[m1], met[m2])
            qa2 = quality_core(coords[a, 0], coords[a, 1], coords[m2, 0], coords[m2, 1],
                               coords[c, 0], coords[c, 1], met[a], met[m2], met[c])
            qb1 = quality_core(coords[a, 0], coords[a, 1], coords[m1, 0], coords[m1, 1],
                               coords[c, 0], coords[c, 1], met[a], met[m1], met[c])
            qb2 = quality_core(coords[m1, 0], coords[m1, 1], coords[m2, 0], coords[m2, 1],
                               coords[c, 0], coords[c, 1], met[m1], met[m2], met[c])
            if min(qa1, qa2) >= min(qb1, qb2):
                _emit_child(out, a, m1, m2, ebuf, ecnt, tri, e_alive)
                _emit_child(out + 1, a, m2, c, ebuf, ecnt, tri, e_alive)
            else:
                _emit_child(out, a, m1, c, ebuf, ecnt, tri, e_alive)
                _emit_child(out + 1, m1, m2, c, ebuf, ecnt, tri, e_alive)
        else:
            m1 = m[0]
            m2 = m[1]
            m3 = m[2]
            push_edit(ebuf, ecnt, a, EDIT_DEL_NN, bb)
            push_edit(ebuf, ecnt, bb, EDIT_DEL_NN, a)
            push_edit(ebuf, ecnt, bb, EDIT_DEL_NN, c)
            push_edit(ebuf, ecnt, c, EDIT_DEL_NN, bb)
            push_edit(ebuf, ecnt, c, EDIT_DEL_NN, a)
            push_edit(ebuf, ecnt, a, EDIT_DEL_NN, c)
            _emit_child(eid, a, m1, m3, ebuf, ecnt, tri, e_alive)
            _emit_child(out, m1, bb, m2, ebuf, ecnt, tri, e_alive)
            _emit_child(out + 1, m3, m2, c, ebuf, ecnt, tri, e_alive)
            _emit_child(out + 2, m1, m2, m3, ebuf, ecnt, tri, e_alive)


@njit(cache=True, nogil=True)
def _emit_child(eid, a, b, c, ebuf, ecnt, tri, e_alive):
    tri[eid, 0] = a
    tri[eid, 1] = b
    tri[eid, 2] = c
    e_alive[eid] = 1
    push_edit(ebuf, ecnt, a, EDIT_ADD_NE, eid)
    push_edit(ebuf, ecnt, b, EDIT_ADD_NE, eid)
    push_edit(ebuf, ecnt, c, EDIT_ADD_NE, eid)
    push_edit(ebuf, ecnt, a, EDIT_ADD_NN, b)
    push_edit(ebuf, ecnt, b, EDIT_ADD_NN, a)
    push_edit(ebuf, ecnt, b, EDIT_ADD_NN, c)
    push_edit(ebuf, ecnt, c, EDIT_ADD_NN, b)
    push_edit(ebuf, ecnt, c, EDIT_ADD_NN, a)
    push_edit(ebuf, ecnt, a, EDIT_ADD_NN, c)


@njit(cache=True, nogil=True)
def edge_lengths_chunk(b, e, edges, coords, met, out):
    for i in range(b, e):
        out[i] = edge_len_metric(coords, met, edges[i, 0], edges[i, 1])


# ----------------------------------------------------------------------
# smoothing


@njit(cache=True, nogil=True)
def smooth_chunk(b, e, cls, coords, tri, v_alive, e_alive, btag,
                 vv, vv_n, ve, ve_n, met, stats):
    for i in range(b, e):
        v = cls[i]
        if v_alive[v] == 0 or btag[v, 1] >= 0:
            continue
        side = btag[v, 0]
        # metric-length-weighted average of neighbour positions; boundary
        # vertices average their two along-side neighbours only
        sx = 0.0
        sy = 0.0
        sw = 0.0
        n_used = 0
        for j in range(vv_n[v]):
            u = vv[v, j]
            if v_alive[u] == 0:
                continue
            if side >= 0 and not (btag[u, 0] == side or btag[u, 1] == side):
                continue
            w = edge_len_metric(coords, met, v, u)
            if w <= 0.0:
                w = 1e-30
            sx += w * coords[u, 0]
            sy += w * coords[u, 1]
            sw += w
            n_used += 1
        if sw <= 0.0:
            continue
        if side >= 0 and n_used != 2:
            continue  # irregular boundary patch; leave in place
        px = sx / sw
        py = sy / sw

        old_x = coords[v, 0]
        old_y = coords[v, 1]
        # cavity minimum before
        q_before = 1.0
        for j in range(ve_n[v]):
            eid = ve[v, j]
            if e_alive[eid] == 0:
                continue
            a, bb, c = tri[eid, 0], tri[eid, 1], tri[eid, 2]
            q = quality_core(coords[a, 0], coords[a, 1], coords[bb, 0], coords[bb, 1],
                             coords[c, 0], coords[c, 1], met[a], met[bb], met[c])
            if q < q_before:
                q_before = q
        coords[v, 0] = px
        coords[v, 1] = py
        ok = True
        q_after = 1.0
        for j in range(ve_n[v]):
            eid = ve[v, j]
            if e_alive[eid] == 0:
                continue
            a, bb, c = tri[eid, 0], tri[eid, 1], tri[eid, 2]
            if tri_area2(coords, a, bb, c) <= MIN_AREA2:
                ok = False
                break
            q = quality_core(coords[a, 0], coords[a, 1], coords[bb, 0], coords[bb, 1],
                             coords[c, 0], coords[c, 1], met[a], met[bb], met[c])
            if q < q_after:
                q_after = q
        if not ok or q_after + 1e-15 < q_before:
            coords[v, 0] = old_x
            coords[v, 1] = old_y
            if not ok:
                stats[STAT_REJ_GEOM] += 1
            else:
                stats[STAT_REJ_QUALITY] += 1
        else:
            stats[STAT_MOVED] += 1
