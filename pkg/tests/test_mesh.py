import numpy as np
import pytest

import adaptix as ax
from adaptix import _mesh_ops as ops
from adaptix.kernels import KernelOutcome, collapse_edge
from adaptix.mesh import AdjacencyEdit
from adaptix.runtime import EditBuffers


def hexagon_patch():
    """Interior vertex 0 surrounded by the symmetric 6-triangle hexagon."""
    coords = [(0.0, 0.0)] + [(np.cos(k * np.pi / 3), np.sin(k * np.pi / 3))
                             for k in range(6)]
    tris = [(0, 1 + k, 1 + (k + 1) % 6) for k in range(6)]
    btag = np.full((7, 2), -1, np.int32)
    btag[1:, 0] = 0  # ring edges form the boundary
    return ax.Mesh(coords, tris, btag)


class TestBuildAdjacency:
    def test_single_triangle(self):
        nn, ne = ax.build_adjacency([(0, 1, 2)], 3)
        assert nn[0].tolist() == [1, 2]
        assert ne[0].tolist() == [0]

    def test_two_triangles(self):
        nn, ne = ax.build_adjacency([(0, 1, 2), (1, 3, 2)], 4)
        assert nn[1].tolist() == [0, 2, 3]
        assert ne[1].tolist() == [0, 1]

    def test_empty(self):
        nn, ne = ax.build_adjacency(np.empty((0, 3), np.int64), 4)
        assert all(len(x) == 0 for x in nn)
        assert all(len(x) == 0 for x in ne)

    def test_out_of_range_raises(self):
        with pytest.raises(ax.MeshStructureError):
            ax.build_adjacency([(0, 1, 5)], 3)


class TestVerify:
    def test_two_triangle_square_conforms(self):
        m = ax.structured_square_mesh(1)
        assert ax.verify(m).ok

    def test_repeated_vertex_detected(self):
        m = ax.structured_square_mesh(2)
        m.tri[0] = (0, 0, 1)
        rep = ax.verify(m)
        assert any("repeats" in v for v in rep.violations)

    def test_clockwise_detected(self):
        m = ax.structured_square_mesh(2)
        m.tri[3] = m.tri[3][[0, 2, 1]]
        rep = ax.verify(m)
        assert any("area" in v for v in rep.violations)

    def test_adjacency_drift_detected(self):
        m = ax.structured_square_mesh(3)
        m.vv_n[4] -= 1
        assert not ax.verify(m).ok
        m2 = ax.structured_square_mesh(3)
        m2.ve_n[7] -= 1
        assert not ax.verify(m2).ok

    def test_untagged_boundary_edge_detected(self):
        m = ax.structured_square_mesh(2)
        m.btag[1] = -1  # bottom mid-edge vertex loses its tag
        assert not ax.verify(m).ok


class TestStructuredSquare:
    @pytest.mark.parametrize("n,nv,ne", [(1, 4, 2), (2, 9, 8)])
    def test_counts(self, n, nv, ne):
        m = ax.structured_square_mesh(n)
        assert m.num_vertices == nv
        assert m.num_elements == ne
        assert ax.verify(m).ok

    def test_paper_scale_counts(self):
        m = ax.structured_square_mesh(200)
        assert m.num_vertices == 40401
        assert m.num_elements == 80000

    def test_boundary_tags(self):
        m = ax.structured_square_mesh(4)
        corners = [v for v in range(m.nv) if m.btag[v, 1] >= 0]
        assert len(corners) == 4
        for v in m.alive_vertex_ids():
            x, y = m.coords[v]
            on_edge = x in (0.0, 1.0) or y in (0.0, 1.0)
            assert (m.btag[v, 0] >= 0) == on_edge

    def test_invalid_n(self):
        with pytest.raises(ax.MeshStructureError):
            ax.structured_square_mesh(0)


class TestCollapseEdge:
    def test_hexagon_collapse_enumerated(self):
        # Hand enumeration: edge (0,1) has wing triangles (0,1,2) and
        # (0,6,1); both die, the other four re-point 0 -> 1.
        m = hexagon_patch()
        led = EditBuffers(1)
        out = collapse_edge(m, 0, 1, led)
        assert out == KernelOutcome.SUCCESS
        led.commit(m)
        assert not m.v_alive[0]
        assert m.num_elements == 4
        expected = {(1, 2, 3), (1, 3, 4), (1, 4, 5), (1, 5, 6)}
        got = {tuple(sorted(t)) for t in m.alive_elements()}
        assert got == {tuple(sorted(t)) for t in expected}
        assert ax.verify(m).ok
        assert m.neighbours(1).tolist() == [2, 3, 4, 5, 6]

    def test_inverting_collapse_rejected(self):
        # move the target so re-pointed elements would flip orientation
        m = hexagon_patch()
        m.coords[1] = (-2.0, 0.0)  # behind the opposite ring vertices
        snap = (m.tri.copy(), m.v_alive.copy(), m.vv.copy(), m.vv_n.copy())
        led = EditBuffers(1)
        out = collapse_edge(m, 0, 1, led)
        assert out == KernelOutcome.WOULD_INVERT
        assert led.pending() == 0
        assert np.array_equal(m.tri, snap[0])
        assert np.array_equal(m.v_alive, snap[1])
        assert np.array_equal(m.vv, snap[2])
        assert np.array_equal(m.vv_n, snap[3])

    def test_boundary_onto_interior_rejected(self):
        m = hexagon_patch()
        led = EditBuffers(1)
        out = collapse_edge(m, 1, 0, led)  # ring vertex onto interior
        assert out == KernelOutcome.BOUNDARY_VIOLATION
        assert led.pending() == 0

    def test_corner_never_collapses(self):
        m = ax.structured_square_mesh(2)
        led = EditBuffers(1)
        out = collapse_edge(m, 0, 1, led)  # vertex 0 is a corner
        assert out == KernelOutcome.BOUNDARY_VIOLATION

    def test_resulting_edge_too_long(self):
        m = hexagon_patch()
        met = ax.MetricField(m, h_min=1e-3, h_max=10.0)
        met.m[:, 0] = 1.0
        met.m[:, 1] = 0.0
        met.m[:, 2] = 1.0
        led = EditBuffers(1)
        out = collapse_edge(m, 0, 1, led, metric=met, l_up=1.2)
        # new edges 1->3, 1->5 have euclidean length sqrt(3) > 1.2
        assert out == KernelOutcome.EDGE_TOO_LONG

    def test_dead_never_resurrects(self):
        m = hexagon_patch()
        led = EditBuffers(1)
        assert collapse_edge(m, 0, 1, led) == KernelOutcome.SUCCESS
        led.commit(m)
        for v in m.alive_vertex_ids():
            assert 0 not in m.neighbours(v)
        assert all(0 not in m.tri[e] for e in range(m.nelem) if m.e_alive[e])


class TestCommitEdits:
    def test_add_then_remove_is_noop(self):
        m = ax.structured_square_mesh(2)
        before = m.neighbours(5).tolist()
        ax.commit_edits(m, [AdjacencyEdit(5, ops.EDIT_ADD_NN, 7),
                            AdjacencyEdit(5, ops.EDIT_DEL_NN, 7)])
        assert m.neighbours(5).tolist() == before

    def test_remove_element_shrinks(self):
        m = ax.structured_square_mesh(2)
        n0 = m.ve_n[4]
        ax.commit_edits(m, [AdjacencyEdit(4, ops.EDIT_DEL_NE, m.incident_elements(4)[0])])
        assert m.ve_n[4] == n0 - 1

    def test_empty_is_noop(self):
        m = ax.structured_square_mesh(2)
        snap = m.vv.copy()
        assert ax.commit_edits(m, []) == 0
        assert np.array_equal(m.vv, snap)

    def test_dead_target_dropped_with_counter(self):
        m = ax.structured_square_mesh(2)
        m.v_alive[4] = 0
        dropped = ax.commit_edits(m, [AdjacencyEdit(4, ops.EDIT_ADD_NN, 0)])
        assert dropped == 1
        assert m.dropped_edits == 1


class TestCompaction:
    def test_compact_renumbers_and_rebuilds(self):
        m = hexagon_patch()
        led = EditBuffers(1)
        assert collapse_edge(m, 0, 1, led) == KernelOutcome.SUCCESS
        led.commit(m)
        kept = m.compact()
        assert kept.tolist() == [1, 2, 3, 4, 5, 6]
        assert m.num_vertices == 6
        assert m.num_elements == 4
        assert m.nv == 6
        assert ax.verify(m).ok


class TestMeshGrowth:
    def test_adjacency_row_growth_preserves_content(self):
        m = ax.structured_square_mesh(3)
        before = [m.neighbours(v).tolist() for v in range(m.nv)]
        m.grow_adjacency_rows()
        after = [m.neighbours(v).tolist() for v in range(m.nv)]
        assert before == after
        assert ax.verify(m).ok
