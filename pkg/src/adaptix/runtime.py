"""Thread-parallel runtime: deferred-update ledgers, atomic-capture
worklists and a work-stealing loop scheduler.

The execution model is the round protocol used by every kernel: a batch of
independent work items is executed by a fixed team of threads via
:func:`parallel_for_stealing`; adjacency edits produced during the round
are buffered per producing thread and committed after a barrier, each
vertex's lists being written by exactly one thread (owner = id mod N).

Loop bodies are *range bodies* ``body(begin, end, tid)``: the scheduler
hands out contiguous index chunks so compiled (nogil) bodies release the
GIL for the whole chunk and genuinely overlap across threads.
"""

from __future__ import annotations

import sys
import threading
import time
from typing import Callable

import numpy as np

from . import _mesh_ops as ops
from .mesh import Mesh, commit_edits


class ThreadTeam:
    """A persistent team of N threads executing tasks in lockstep.

    Thread 0 is the calling thread; N-1 daemon workers park on per-worker
    events between tasks (lighter than a Barrier for the small teams and
    high round rates of the kernels). With ``threads == 1`` everything
    runs inline.
    """

    def __init__(self, threads: int):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        self.n = threads
        self._task = None
        self._stop = False
        self._errors: list[BaseException] = []
        if threads > 1:
            # nogil chunk bodies hand the GIL back and forth at chunk rate;
            # the default 5 ms switch interval adds that much latency to
            # every claim when a compute thread holds the GIL
            if sys.getswitchinterval() > 1e-3:
                sys.setswitchinterval(1e-3)
            self._go = [threading.Event() for _ in range(threads - 1)]
            self._done_lock = threading.Lock()
            self._done_count = 0
            self._done_event = threading.Event()
            self._workers = [
                threading.Thread(target=self._worker_loop, args=(tid,), daemon=True)
                for tid in range(1, threads)
            ]
            for w in self._workers:
                w.start()

    def _worker_loop(self, tid: int) -> None:
        go = self._go[tid - 1]
        while True:
            go.wait()
            go.clear()
            if self._stop:
                return
            try:
                self._task(tid)
            except BaseException as exc:  # surfaced by run()
                self._errors.append(exc)
            finally:
                with self._done_lock:
                    self._done_count += 1
                    if self._done_count == self.n - 1:
                        self._done_event.set()

    def run(self, task: Callable[[int], None]) -> None:
        """Run ``task(tid)`` on every team thread and wait for completion."""
        if self.n == 1:
            task(0)
            return
        self._task = task
        self._errors.clear()
        self._done_count = 0
        self._done_event.clear()
        for go in self._go:
            go.set()
        try:
            task(0)
        except BaseException as exc:
            self._errors.append(exc)
        finally:
            self._done_event.wait()
            self._task = None
        if self._errors:
            raise self._errors[0]

    def close(self) -> None:
        if self.n > 1 and not self._stop:
            self._stop = True
            for go in self._go:
                go.set()
            for w in self._workers:
                w.join(timeout=5.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class StealScheduler:
    """Per-thread iteration ranges with lock-guarded claim/steal.

    Victims are chosen by the largest-remaining-range heuristic; a thief
    takes the upper half of the victim's remaining range. Claim and steal
    both go through the victim's lock, so ranges held by distinct threads
    stay disjoint and every index is claimed exactly once. State lives in
    plain Python ints: the idle path runs every few microseconds and must
    not churn numpy temporaries under the GIL.
    """

    def __init__(self, start: int, stop: int, threads: int, grain: int):
        self.grain = max(1, grain)
        self.n = threads
        total = stop - start
        step = total // threads
        rem = total % threads
        self.next = [0] * threads
        self.end = [0] * threads
        pos = start
        for t in range(threads):
            size = step + (1 if t < rem else 0)
            self.next[t] = pos
            self.end[t] = pos + size
            pos += size
        self.locks = [threading.Lock() for _ in range(threads)]
        self.steals = [0] * threads

    def claim(self, tid: int) -> tuple[int, int]:
        """Claim up to `grain` indices from the thread's own range."""
        lock = self.locks[tid]
        lock.acquire()
        b = self.next[tid]
        e = self.end[tid]
        if b >= e:
            lock.release()
            return 0, 0
        e = min(b + self.grain, e)
        self.next[tid] = e
        lock.release()
        return b, e

    def steal(self, tid: int) -> bool:
        """Take half of the largest remaining range; returns success.

        Ranges no larger than one grain are left to their owner: stealing
        fragments only ping-pongs the tail between threads.
        """
        victim = -1
        best = self.grain
        nxt = self.next
        end = self.end
        for t in range(self.n):
            r = end[t] - nxt[t]
            if t != tid and r > best:
                best = r
                victim = t
        if victim < 0:
            return False
        with self.locks[victim]:
            b = self.next[victim]
            e = self.end[victim]
            if e - b <= 0:
                return False
            mid = (b + e + 1) // 2
            self.end[victim] = mid
        with self.locks[tid]:
            self.next[tid] = mid
            self.end[tid] = e
        self.steals[tid] += 1
        return True

    def exhausted(self) -> bool:
        nxt = self.next
        end = self.end
        for t in range(self.n):
            if nxt[t] < end[t]:
                return False
        return True

    def total_steals(self) -> int:
        return sum(self.steals)


def parallel_for_stealing(rng, body, grain: int = 64, team: ThreadTeam | None = None,
                          threads: int | None = None,
                          force_parallel: bool = False) -> StealScheduler:
    """Execute ``body(begin, end, tid)`` over every index of `rng` exactly once.

    `rng` is ``(start, stop)`` or a plain count. Idle threads steal half of
    the largest remaining range. Returns the scheduler (steal counters).

    Ranges too small to amortise the fork/join barriers run inline on the
    calling thread (still chunked by `grain`); pass ``force_parallel`` to
    dispatch the team regardless.
    """
    start, stop = (0, int(rng)) if np.ndim(rng) == 0 else (int(rng[0]), int(rng[1]))
    own_team = None
    if team is None:
        own_team = team = ThreadTeam(threads or 1)
    if not force_parallel and (team.n == 1 or stop - start < 2 * grain * team.n):
        sched = StealScheduler(start, stop, 1, grain)
        while True:
            b, e = sched.claim(0)
            if b == e:
                break
            body(b, e, 0)
        if own_team is not None:
            own_team.close()
        return sched
    sched = StealScheduler(start, stop, team.n, grain)

    def task(tid: int) -> None:
        while True:
            b, e = sched.claim(tid)
            if b != e:
                body(b, e, tid)
                continue
            if not sched.steal(tid):
                # nothing stealable: only sub-grain tails remain (or a
                # transient mid-steal hide); owners finish those faster
                # than a blocked wait would resolve, so leave now — the
                # team join still synchronises completion
                return

    try:
        team.run(task)
    finally:
        if own_team is not None:
            own_team.close()
    return sched


class SharedWorklist:
    """Growable global array filled via atomic-capture reservations.

    ``append`` reserves ``[idx, idx+k)`` by a single fetch-and-add on the
    size cursor and copies the producer's private items into the reserved
    slice outside the cursor lock, so concurrent producers overlap their
    copies. Overflow waits for in-flight copies, doubles the array, and
    redoes the failed reservation; items are never truncated.
    """

    def __init__(self, capacity: int = 1024, dtype=np.int64):
        self.items = np.empty(max(1, capacity), dtype)
        self._size = 0
        self._cond = threading.Condition()
        self._in_flight = 0
        self.overflow_events = 0

    def __len__(self) -> int:
        return self._size

    @property
    def capacity(self) -> int:
        return len(self.items)

    def append(self, private_items) -> tuple[int, int]:
        """Reserve and fill a range; returns (start, end)."""
        arr = np.asarray(private_items, self.items.dtype)
        k = len(arr)
        with self._cond:
            while self._size + k > len(self.items) and self._in_flight > 0:
                self._cond.wait()
            if self._size + k > len(self.items):
                new_cap = max(len(self.items) * 2, self._size + k)
                grown = np.empty(new_cap, self.items.dtype)
                grown[:self._size] = self.items[:self._size]
                self.items = grown
                self.overflow_events += 1
            idx = self._size
            self._size = idx + k
            buf = self.items
            self._in_flight += 1
        if k:
            buf[idx:idx + k] = arr
        with self._cond:
            self._in_flight -= 1
            if self._in_flight == 0:
                self._cond.notify_all()
        return idx, idx + k

    def swap_out(self) -> np.ndarray:
        """Return the filled prefix and reset the cursor (between rounds)."""
        out = self.items[:self._size].copy()
        self._size = 0
        return out

    def ensure_capacity(self, capacity: int) -> None:
        with self._cond:
            if capacity > len(self.items):
                grown = np.empty(capacity, self.items.dtype)
                grown[:self._size] = self.items[:self._size]
                self.items = grown

    def clear(self) -> None:
        self._size = 0


class DeferredLedger:
    """The literal N x N deferred-update ledger over AdjacencyEdit items.

    ``lists[p][o]`` holds edits produced by thread p for owner thread o,
    where o = target_vertex mod N. Commit has thread t apply, in producer
    order p = 0..N-1, every list ``lists[p][t]``, so each vertex's
    adjacency is written by exactly one thread.
    """

    def __init__(self, threads: int):
        self.n = threads
        self.lists = [[[] for _ in range(threads)] for _ in range(threads)]
        self.audit: list[list[tuple[int, int]]] = [[] for _ in range(threads)]
        self.audit_enabled = False

    def push(self, executing_tid: int, edit) -> None:
        owner = edit[0] % self.n
        self.lists[executing_tid][owner].append(edit)

    def pending(self) -> int:
        return sum(len(cell) for row in self.lists for cell in row)

    def commit(self, mesh: Mesh, team: ThreadTeam | None = None) -> int:
        """Apply all pending edits; returns dropped-edit count."""
        dropped = np.zeros(self.n, np.int64)

        def task(tid: int) -> None:
            for p in range(self.n):
                batch = self.lists[p][tid]
                if self.audit_enabled:
                    self.audit[tid].extend((tid, e[0]) for e in batch)
                dropped[tid] += commit_edits(mesh, batch)
                batch.clear()

        if team is not None and team.n == self.n:
            team.run(task)
        else:
            for t in range(self.n):
                task(t)
        return int(dropped.sum())

    def audit_pairs(self) -> list[tuple[int, int]]:
        return [pair for per_owner in self.audit for pair in per_owner]


class EditBuffers:
    """Flat per-producer edit buffers feeding the compiled commit path.

    Producer p appends rows (target, kind, payload) to its own buffer
    during a round; the owner rule (owner = target mod N) is applied at
    commit, preserving producer order p = 0..N-1 — protocol-equivalent to
    the N x N list-of-lists ledger.
    """

    def __init__(self, threads: int, capacity: int = 1 << 14):
        self.n = threads
        self.bufs = [np.empty((capacity, 3), np.int64) for _ in range(threads)]
        self.counts = [np.zeros(1, np.int64) for _ in range(threads)]
        self.audit_enabled = False
        self.audit_bufs = [np.empty((0, 2), np.int64) for _ in range(threads)]
        self.audit_cnts = [np.zeros(1, np.int64) for _ in range(threads)]
        self.dropped = 0

    def buffer(self, tid: int) -> tuple[np.ndarray, np.ndarray]:
        return self.bufs[tid], self.counts[tid]

    def pending(self) -> int:
        return int(sum(c[0] for c in self.counts))

    def push(self, tid: int, target: int, kind: int, payload: int) -> None:
        """Single-edit push (test/driver convenience; kernels push in bulk)."""
        self.ensure_headroom(tid, 1)
        buf, cnt = self.bufs[tid], self.counts[tid]
        ops.push_edit(buf, cnt, target, kind, payload)

    def ensure_headroom(self, tid: int, rows: int) -> None:
        """Grow the producer's own buffer if fewer than `rows` rows remain.

        Only the owning thread calls this between chunk claims, so the
        reallocation is race-free within a round.
        """
        buf = self.bufs[tid]
        used = int(self.counts[tid][0])
        if used + rows <= len(buf):
            return
        new_cap = max(len(buf) * 2, used + rows)
        grown = np.empty((new_cap, 3), np.int64)
        grown[:used] = buf[:used]
        self.bufs[tid] = grown

    def enable_audit(self, capacity: int) -> None:
        self.audit_enabled = True
        self.audit_bufs = [np.empty((capacity, 2), np.int64) for _ in range(self.n)]
        for c in self.audit_cnts:
            c[0] = 0

    def commit(self, mesh: Mesh, team: ThreadTeam | None = None) -> int:
        """Owner-partitioned commit; thread t applies edits with
        target mod N == t from every producer in order. Grows adjacency
        rows and replays on overflow (sorted-set edits replay idempotently).
        """
        grow_flag = np.zeros(self.n, np.uint8)
        dropped = np.zeros(self.n, np.int64)
        audit_on = self.audit_enabled

        def task(tid: int) -> None:
            if audit_on:
                self.audit_cnts[tid][0] = 0
            for p in range(self.n):
                d, grow = ops.commit_edits_core(
                    self.bufs[p], self.counts[p][0], tid, self.n,
                    mesh.vv, mesh.vv_n, mesh.ve, mesh.ve_n, mesh.v_alive,
                    self.audit_bufs[tid], self.audit_cnts[tid], audit_on)
                dropped[tid] += d
                if grow:
                    grow_flag[tid] = 1
                    return

        # serial fallback for small commits: identical outcome (edits for
        # distinct vertices commute; per-vertex producer order preserved)
        # without the fork/join barriers or the per-owner buffer rescans
        parallel = (team is not None and team.n == self.n
                    and self.pending() >= 4096)

        def serial_pass() -> None:
            if audit_on:
                for t in range(self.n):
                    task(t)
                return
            for p in range(self.n):
                d, grow = ops.commit_edits_core(
                    self.bufs[p], self.counts[p][0], -1, self.n,
                    mesh.vv, mesh.vv_n, mesh.ve, mesh.ve_n, mesh.v_alive,
                    self.audit_bufs[0], self.audit_cnts[0], False)
                dropped[0] += d
                if grow:
                    grow_flag[0] = 1
                    return

        while True:
            grow_flag[:] = 0
            dropped[:] = 0
            if parallel:
                team.run(task)
            else:
                serial_pass()
            if not grow_flag.any():
                break
            mesh.grow_adjacency_rows()
        for c in self.counts:
            c[0] = 0
        self.dropped += int(dropped.sum())
        return int(dropped.sum())

    def audit_pairs(self) -> np.ndarray:
        parts = [buf[:int(cnt[0])] for buf, cnt in zip(self.audit_bufs, self.audit_cnts)]
        return np.concatenate(parts) if parts else np.empty((0, 2), np.int64)
