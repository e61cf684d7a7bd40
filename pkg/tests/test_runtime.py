import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import adaptix as ax
from adaptix import _mesh_ops as ops
from adaptix.mesh import AdjacencyEdit
from adaptix.runtime import (DeferredLedger, EditBuffers, SharedWorklist,
                             ThreadTeam, parallel_for_stealing)


class TestParallelForStealing:
    def test_exactly_once_small(self):
        counts = np.zeros(10_000, np.int64)

        def body(b, e, tid):
            counts[b:e] += 1

        parallel_for_stealing(len(counts), body, grain=64, threads=8)
        assert (counts == 1).all()

    def test_exactly_once_million(self):
        counts = np.zeros(1_000_000, np.int64)

        def body(b, e, tid):
            counts[b:e] += 1

        parallel_for_stealing(len(counts), body, grain=1024, threads=8)
        assert (counts == 1).all()

    def test_single_thread_no_steals(self):
        counts = np.zeros(5000, np.int64)

        def body(b, e, tid):
            counts[b:e] += 1

        sched = parallel_for_stealing(len(counts), body, grain=64, threads=1)
        assert (counts == 1).all()
        assert sched.total_steals() == 0

    def test_pathological_load_triggers_steals(self):
        # first 1% of the indices carry nearly all the work
        n = 20_000
        counts = np.zeros(n, np.int64)
        sink = np.zeros(1)

        def body(b, e, tid):
            for i in range(b, e):
                counts[i] += 1
                if i < n // 100:
                    x = 1.7
                    for _ in range(20_000):
                        x = 0.5 * (x + 2.0 / x)
                    sink[0] = x

        with ThreadTeam(4) as team:
            sched = parallel_for_stealing(n, body, grain=64, team=team,
                                          force_parallel=True)
        assert (counts == 1).all()
        assert sched.total_steals() > 0

    def test_range_offsets(self):
        counts = np.zeros(100, np.int64)

        def body(b, e, tid):
            counts[b:e] += 1

        parallel_for_stealing((10, 60), body, grain=8, threads=2)
        assert (counts[10:60] == 1).all()
        assert counts[:10].sum() == 0 and counts[60:].sum() == 0

    def test_worker_exception_propagates(self):
        def body(b, e, tid):
            raise RuntimeError("boom")

        with pytest.raises(RuntimeError, match="boom"):
            parallel_for_stealing(100_000, body, grain=64, threads=4)


class TestSharedWorklist:
    def test_two_producers_disjoint_union(self):
        wl = SharedWorklist(16)
        r1 = wl.append([1, 2, 3])
        r2 = wl.append([4, 5, 6, 7, 8])
        assert len(wl) == 8
        assert r1[1] - r1[0] == 3 and r2[1] - r2[0] == 5
        assert set(range(r1[0], r1[1])).isdisjoint(range(r2[0], r2[1]))
        assert sorted(wl.items[:8]) == [1, 2, 3, 4, 5, 6, 7, 8]

    def test_zero_items(self):
        wl = SharedWorklist(4)
        wl.append([9])
        b, e = wl.append([])
        assert b == e
        assert len(wl) == 1

    def test_multiset_equality_64_producers(self):
        rng = np.random.default_rng(42)
        batches = [rng.integers(0, 1000, rng.integers(0, 200)) for _ in range(64 * 20)]
        wl = SharedWorklist(64)  # deliberately tiny: forces growth
        cursor = [0]
        lock = threading.Lock()

        def producer():
            while True:
                with lock:
                    i = cursor[0]
                    if i >= len(batches):
                        return
                    cursor[0] += 1
                wl.append(batches[i])

        threads = [threading.Thread(target=producer) for _ in range(64)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        expect = np.sort(np.concatenate(batches))
        got = np.sort(wl.items[:len(wl)])
        assert np.array_equal(expect, got)
        assert wl.overflow_events > 0  # growth happened and lost nothing

    def test_swap_out_resets(self):
        wl = SharedWorklist(8)
        wl.append([1, 2])
        out = wl.swap_out()
        assert out.tolist() == [1, 2]
        assert len(wl) == 0


class TestDeferredLedger:
    def test_owner_slot_examples(self):
        led = DeferredLedger(4)
        led.push(2, AdjacencyEdit(10, ops.EDIT_ADD_NN, 1))
        assert len(led.lists[2][2]) == 1  # 10 mod 4 == 2

        led1 = DeferredLedger(1)
        led1.push(0, AdjacencyEdit(7, ops.EDIT_ADD_NN, 1))
        led1.push(0, AdjacencyEdit(13, ops.EDIT_DEL_NN, 1))
        assert len(led1.lists[0][0]) == 2

    def test_same_target_two_producers(self):
        led = DeferredLedger(4)
        led.push(0, AdjacencyEdit(6, ops.EDIT_ADD_NN, 1))
        led.push(3, AdjacencyEdit(6, ops.EDIT_DEL_NN, 1))
        assert len(led.lists[0][2]) == 1 and len(led.lists[3][2]) == 1

    def test_commit_owner_rule_and_audit(self):
        m = ax.structured_square_mesh(3)
        led = DeferredLedger(4)
        led.audit_enabled = True
        led.push(0, AdjacencyEdit(3, ops.EDIT_ADD_NN, 9))
        led.push(1, AdjacencyEdit(7, ops.EDIT_ADD_NN, 9))
        with ThreadTeam(4) as team:
            led.commit(m, team)
        pairs = led.audit_pairs()
        assert (3, 3) in pairs and (3, 7) in pairs  # both owned by thread 3
        assert all(owner == target % 4 for owner, target in pairs)
        assert led.pending() == 0

    def test_empty_commit_noop(self):
        m = ax.structured_square_mesh(2)
        snap = m.vv.copy()
        assert DeferredLedger(4).commit(m) == 0
        assert np.array_equal(m.vv, snap)

    def test_conflicting_edits_match_serial_replay(self):
        # two producers push interleaved add/remove for one vertex; the
        # committed state must equal a serial replay in producer order
        def fresh():
            return ax.structured_square_mesh(3)

        edits_p0 = [AdjacencyEdit(5, ops.EDIT_ADD_NN, 11),
                    AdjacencyEdit(5, ops.EDIT_DEL_NN, 11),
                    AdjacencyEdit(5, ops.EDIT_ADD_NN, 12)]
        edits_p1 = [AdjacencyEdit(5, ops.EDIT_DEL_NN, 12),
                    AdjacencyEdit(5, ops.EDIT_ADD_NN, 11)]

        m1 = fresh()
        led = DeferredLedger(2)
        for e in edits_p0:
            led.push(0, e)
        for e in edits_p1:
            led.push(1, e)
        with ThreadTeam(2) as team:
            led.commit(m1, team)

        m2 = fresh()
        ax.commit_edits(m2, edits_p0 + edits_p1)
        assert m1.neighbours(5).tolist() == m2.neighbours(5).tolist()


class TestEditBuffers:
    @given(st.lists(st.tuples(st.integers(0, 15),       # target vertex
                              st.integers(0, 1),        # add/del nn
                              st.integers(0, 15)),      # payload
                    max_size=60))
    @settings(max_examples=40, deadline=None)
    def test_matches_list_ledger(self, raw):
        def fresh():
            return ax.structured_square_mesh(3)

        edits = [AdjacencyEdit(t, k, p) for t, k, p in raw if t != p]
        m1 = fresh()
        buffers = EditBuffers(4)
        listled = DeferredLedger(4)
        m2 = fresh()
        for i, e in enumerate(edits):
            tid = i % 4
            buffers.push(tid, *e)
            listled.push(tid, e)
        buffers.commit(m1)
        listled.commit(m2)
        assert np.array_equal(m1.vv[:m1.nv], m2.vv[:m2.nv])
        assert np.array_equal(m1.vv_n[:m1.nv], m2.vv_n[:m2.nv])

    def test_ownership_audit_parallel(self):
        m = ax.structured_square_mesh(8)
        buffers = EditBuffers(8)
        buffers.enable_audit(1 << 14)
        rng = np.random.default_rng(7)
        for tid in range(8):
            for _ in range(200):
                t = int(rng.integers(0, m.nv))
                p = int(rng.integers(0, m.nv))
                if t != p:
                    buffers.push(tid, t, ops.EDIT_ADD_NN, p)
        with ThreadTeam(8) as team:
            buffers.commit(m, team)
        pairs = buffers.audit_pairs()
        assert len(pairs) > 0
        assert (pairs[:, 0] == pairs[:, 1] % 8).all()

    def test_row_overflow_grows_and_replays(self):
        m = ax.structured_square_mesh(2)
        width = m.vv.shape[1]
        buffers = EditBuffers(1)
        # more unique neighbours than the row capacity
        for p in range(width + 5):
            buffers.push(0, 4, ops.EDIT_ADD_NN, 100 + p)
        m.ensure_vertex_capacity(200)
        m.v_alive[:m.nv + 200] = 1
        buffers.commit(m)
        assert m.vv_n[4] >= width
        got = m.neighbours(4)
        assert set(100 + p for p in range(width + 5)) <= set(got.tolist())
