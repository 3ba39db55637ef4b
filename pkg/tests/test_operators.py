"""Operator assembly tests with independently derived expectations."""

import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oversetfv.mesh import (BoundaryCondition, GeometryError, INTERFACE, Mesh,
                            compute_geometry, make_cartesian_block,
                            perturb_vertices)
from oversetfv.overset import evaluable_mask, reconcile
from oversetfv.reconstruction import ls_factor, vertex_q1
from oversetfv import operators as ops


def _dirichlet_box(n, value=(0.0, 0.0), lo=0.0, hi=1.0):
    bc = BoundaryCondition("dirichlet", value)
    sides = dict(imin=bc, imax=bc, jmin=bc, jmax=bc)
    b = make_cartesian_block(lo, hi, lo, hi, n, n, sides=sides)
    return Mesh([b])


def _periodic_box(n, perturb=0.0, seed=0):
    b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, n, n,
                             periodic_i=True, periodic_j=True)
    mesh = Mesh([b])
    if perturb:
        rng = np.random.default_rng(seed)
        V = perturb_vertices(mesh.initial_vertices(), perturb / n, rng)
        return mesh, compute_geometry(mesh, V)
    return mesh, compute_geometry(mesh)


def _setup(mesh, geom=None):
    if geom is None:
        geom = compute_geometry(mesh)
    state = reconcile(mesh, geom)
    factor = ls_factor(geom, state.stencils)
    traces = ops.TraceOps(mesh, geom, state, factor)
    return geom, state, factor, traces


def _overset_pair(bc_value=(0.0, 0.0)):
    bc = BoundaryCondition("dirichlet", bc_value)
    bg = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 30, 30,
                              sides=dict(imin=bc, imax=bc, jmin=bc, jmax=bc))
    fg = make_cartesian_block(0.2, 0.8, 0.2, 0.8, 18, 18,
                              sides=dict(imin=INTERFACE, imax=INTERFACE,
                                         jmin=INTERFACE, jmax=INTERFACE))
    return Mesh([bg, fg])


def _laplacian(mesh, geom, state, factor, traces, component):
    q1 = vertex_q1(mesh, geom, state.active, component)
    return ops.laplacian_rows(mesh, geom, state, factor, traces, q1, component)


class TestLaplacian:
    def test_five_point_pattern_uniform(self):
        # on unit-spaced cells the diamond flux collapses to the classic
        # {-4, 1, 1, 1, 1} cross; derived by hand from the flux formula
        # with c parallel to n and tau.c = 0
        mesh = _dirichlet_box(6, lo=0.0, hi=6.0)
        geom, state, factor, traces = _setup(mesh)
        K, _ = _laplacian(mesh, geom, state, factor, traces, 0)
        cid = 2 * 6 + 2
        row = ops.row_stencil(K, cid)
        vals = {c: v for c, v in zip(row.cols, row.vals) if abs(v) > 1e-13}
        b = mesh.blocks[0]
        assert vals[cid] == pytest.approx(-4.0, abs=1e-13)
        for nb in (b.cell_id(1, 2), b.cell_id(3, 2),
                   b.cell_id(2, 1), b.cell_id(2, 3)):
            assert vals[nb] == pytest.approx(1.0, abs=1e-13)
        assert len(vals) == 5

    def test_constant_null_dirichlet(self):
        mesh = _dirichlet_box(7, value=(3.0, -1.0))
        geom, state, factor, traces = _setup(mesh)
        for comp, cval in ((0, 3.0), (1, -1.0)):
            K, aff = _laplacian(mesh, geom, state, factor, traces, comp)
            r = K @ np.full(mesh.ncell, cval) + aff(0.0)
            assert np.abs(r).max() <= 1e-11

    def test_linear_exactness_periodic_perturbed(self):
        mesh, geom = _periodic_box(8, perturb=0.15, seed=3)
        geom, state, factor, traces = _setup(mesh, geom)
        K, aff = _laplacian(mesh, geom, state, factor, traces, 0)
        x = geom.cell_centroid
        # linear-in-x fields are ruled out by periodicity, so exercise the
        # tangential correction with a constant instead and the full linear
        # case on the bounded mesh below
        r = K @ np.full(mesh.ncell, 0.7) + aff(0.0)
        assert np.abs(r).max() <= 1e-11

    def test_linear_exactness_dirichlet_perturbed(self):
        fn = lambda x, t: np.stack([0.3 + 0.8 * x[:, 0] - 0.45 * x[:, 1],
                                    np.zeros(len(x))], axis=1)
        bc = BoundaryCondition("dirichlet", fn)
        b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 8, 8,
                                 sides=dict(imin=bc, imax=bc, jmin=bc, jmax=bc))
        mesh = Mesh([b])
        rng = np.random.default_rng(11)
        V = perturb_vertices(mesh.initial_vertices(), 0.15 / 8, rng)
        geom = compute_geometry(mesh, V)
        geom, state, factor, traces = _setup(mesh, geom)
        K, aff = _laplacian(mesh, geom, state, factor, traces, 0)
        phi = fn(geom.cell_centroid, 0.0)[:, 0]
        r = K @ phi + aff(0.0)
        assert np.abs(r).max() <= 1e-11

    def test_quadratic_exactness_uniform_with_walls(self):
        # channel profile u = -y(y-1) has constant Laplacian -2, so every
        # field row must integrate to -2*area; boundary rows rely on the
        # penalized one-sided flux being exact for polynomial data
        fn = lambda x, t: np.stack([-x[:, 1] * (x[:, 1] - 1.0),
                                    np.zeros(len(x))], axis=1)
        bc = BoundaryCondition("dirichlet", fn)
        b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 9, 9,
                                 sides=dict(imin=bc, imax=bc, jmin=bc, jmax=bc))
        mesh = Mesh([b])
        geom, state, factor, traces = _setup(mesh)
        K, aff = _laplacian(mesh, geom, state, factor, traces, 0)
        phi = fn(geom.cell_centroid, 0.0)[:, 0]
        r = K @ phi + aff(0.0)
        expected = -2.0 * geom.cell_area
        assert np.abs(r - expected).max() <= 1e-11

    def test_conservation_periodic(self):
        # interior fluxes appear once with each sign, so the residual of
        # any field must sum to zero on a closed mesh
        mesh, geom = _periodic_box(9, perturb=0.1, seed=5)
        geom, state, factor, traces = _setup(mesh, geom)
        K, _ = _laplacian(mesh, geom, state, factor, traces, 0)
        rng = np.random.default_rng(0)
        phi = rng.normal(size=mesh.ncell)
        assert abs((K @ phi).sum()) <= 1e-11 * np.abs(K @ phi).max()

    def test_edge_order_independence(self):
        mesh, geom = _periodic_box(6, perturb=0.12, seed=7)
        geom, state, factor, traces = _setup(mesh, geom)
        K1, _ = _laplacian(mesh, geom, state, factor, traces, 0)
        geom2 = copy.copy(geom)
        rng = np.random.default_rng(1)
        perm = rng.permutation(len(geom.edge_L))
        for name in ("edge_L", "edge_R", "edge_v1", "edge_v2", "edge_v1_off",
                     "edge_v2_off", "edge_block", "edge_len", "edge_tau",
                     "edge_n", "edge_mid", "edge_dist", "edge_c"):
            setattr(geom2, name, getattr(geom, name)[perm])
        traces2 = ops.TraceOps(mesh, geom2, state, factor)
        K2, _ = _laplacian(mesh, geom2, state, factor, traces2, 0)
        assert np.abs((K1 - K2).toarray()).max() <= 1e-13

    def test_tangential_center_line_rejected(self):
        b = make_cartesian_block(0.0, 4.0, 0.0, 4.0, 4, 4,
                                 sides=dict(imin=BoundaryCondition("dirichlet"),
                                            imax=BoundaryCondition("dirichlet"),
                                            jmin=BoundaryCondition("dirichlet"),
                                            jmax=BoundaryCondition("dirichlet")))
        mesh = Mesh([b])
        V = mesh.initial_vertices()
        V[:, 0] += 25.0 * V[:, 1]
        geom = compute_geometry(mesh, V)
        state = reconcile(mesh, geom)
        with pytest.warns(UserWarning):
            factor = ls_factor(geom, state.stencils)
        traces = ops.TraceOps(mesh, geom, state, factor)
        q1 = vertex_q1(mesh, geom, state.active, 0)
        with pytest.raises(GeometryError):
            ops.laplacian_rows(mesh, geom, state, factor, traces, q1, 0)

    def test_free_streamline_pins_normal_component_only(self):
        wall = BoundaryCondition("free_streamline")
        inflow = BoundaryCondition("dirichlet", (1.0, 0.0))
        b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 6, 6,
                                 sides=dict(imin=inflow, imax=inflow,
                                            jmin=wall, jmax=wall))
        mesh = Mesh([b])
        geom, state, factor, traces = _setup(mesh)
        Ku, affu = _laplacian(mesh, geom, state, factor, traces, 0)
        Kv, affv = _laplacian(mesh, geom, state, factor, traces, 1)
        # tangential slip: constant u matching the inflow passes through
        r = Ku @ np.ones(mesh.ncell) + affu(0.0)
        assert np.abs(r).max() <= 1e-11
        # normal component is clamped at the walls, so the wall-adjacent
        # diagonal carries a penalty in the v operator but not in u
        cid = mesh.blocks[0].cell_id(3, 0)
        du = Ku.diagonal()[cid]
        dv = Kv.diagonal()[cid]
        assert dv < du - 1.0

    @settings(deadline=None, max_examples=20)
    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
    def test_linear_exactness_property(self, a, bx, by):
        fn = lambda x, t: np.stack([a + bx * x[:, 0] + by * x[:, 1],
                                    np.zeros(len(x))], axis=1)
        bc = BoundaryCondition("dirichlet", fn)
        b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 5, 5,
                                 sides=dict(imin=bc, imax=bc, jmin=bc, jmax=bc))
        mesh = Mesh([b])
        geom, state, factor, traces = _setup(mesh)
        K, aff = _laplacian(mesh, geom, state, factor, traces, 0)
        phi = fn(geom.cell_centroid, 0.0)[:, 0]
        assert np.abs(K @ phi + aff(0.0)).max() <= 1e-10


class TestConvection:
    def test_rest_state_zero(self):
        mesh = _dirichlet_box(6)
        geom, state, factor, traces = _setup(mesh)
        fs = ops.convective_residual(mesh, geom, state, factor, traces,
                                     np.zeros((mesh.ncell, 2)),
                                     np.zeros((mesh.nvert, 2)), 0.0)
        assert np.abs(fs.F).max() == 0.0
        assert fs.lam.max() == 0.0

    def test_uniform_flow_closure(self):
        # constant velocity with matching inflow: central part telescopes
        # through the surface closure and the jump part vanishes
        bc = BoundaryCondition("dirichlet", (0.8, -0.3))
        b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 7, 7,
                                 sides=dict(imin=bc, imax=bc, jmin=bc, jmax=bc))
        mesh = Mesh([b])
        geom, state, factor, traces = _setup(mesh)
        u = np.tile([0.8, -0.3], (mesh.ncell, 1))
        fs = ops.convective_residual(mesh, geom, state, factor, traces, u,
                                     np.zeros((mesh.nvert, 2)), 0.0)
        assert np.abs(fs.F).max() <= 1e-12

    def test_uniform_flow_moving_mesh_closure(self):
        # a spatially constant mesh velocity cannot create a residual from
        # a constant state: the w flux also closes around each cell
        bc = BoundaryCondition("dirichlet", (0.8, -0.3))
        b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 7, 7,
                                 sides=dict(imin=bc, imax=bc, jmin=bc, jmax=bc))
        mesh = Mesh([b])
        geom, state, factor, traces = _setup(mesh)
        u = np.tile([0.8, -0.3], (mesh.ncell, 1))
        w = np.tile([0.4, 0.15], (mesh.nvert, 1))
        fs = ops.convective_residual(mesh, geom, state, factor, traces, u, w, 0.0)
        assert np.abs(fs.F).max() <= 1e-12

    def test_linear_field_matches_hand_loop(self):
        # oracle: traces of a linear field are exact on both sides of every
        # edge (boundary data included), so the residual reduces to central
        # fluxes accumulated directly from analytic midpoint states
        ufn = lambda x: np.stack([0.2 + 0.5 * x[:, 0] - 0.1 * x[:, 1],
                                  -0.3 + 0.2 * x[:, 0] + 0.4 * x[:, 1]], axis=1)
        bc = BoundaryCondition("dirichlet", lambda x, t: ufn(x))
        b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 8, 8,
                                 sides=dict(imin=bc, imax=bc, jmin=bc, jmax=bc))
        mesh = Mesh([b])
        geom, state, factor, traces = _setup(mesh)
        u = ufn(geom.cell_centroid)
        fs = ops.convective_residual(mesh, geom, state, factor, traces, u,
                                     np.zeros((mesh.nvert, 2)), 0.0)
        expected = np.zeros((mesh.ncell, 2))
        for e in range(len(geom.edge_L)):
            q = ufn(geom.edge_mid[e][None, :])[0]
            f = geom.edge_len[e] * q * (q @ geom.edge_n[e])
            expected[geom.edge_L[e]] += f
            expected[geom.edge_R[e]] -= f
        for e in range(len(geom.bedge_cell)):
            q = ufn(geom.bedge_mid[e][None, :])[0]
            f = geom.bedge_len[e] * q * (q @ geom.bedge_n[e])
            expected[geom.bedge_cell[e]] += f
        assert np.abs(fs.F - expected).max() <= 1e-11

    def test_spectral_radius(self):
        bc = BoundaryCondition("dirichlet", (1.0, 0.0))
        b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 6, 6,
                                 sides=dict(imin=bc, imax=bc, jmin=bc, jmax=bc))
        mesh = Mesh([b])
        geom, state, factor, traces = _setup(mesh)
        u = np.tile([1.0, 0.0], (mesh.ncell, 1))
        fs = ops.convective_residual(mesh, geom, state, factor, traces, u,
                                     np.zeros((mesh.nvert, 2)), 0.0)
        assert fs.lam == pytest.approx(np.full(mesh.ncell, 2.0), abs=1e-12)

    def test_overset_constant_evaluable_only(self):
        # rows missing their interface-edge flux legitimately fail the
        # closure; every evaluable row must still vanish
        mesh = _overset_pair(bc_value=(0.6, 0.2))
        geom, state, factor, traces = _setup(mesh)
        u = np.tile([0.6, 0.2], (mesh.ncell, 1))
        fs = ops.convective_residual(mesh, geom, state, factor, traces, u,
                                     np.zeros((mesh.nvert, 2)), 0.0)
        ev = evaluable_mask(mesh, state)
        assert np.abs(fs.F[ev]).max() <= 1e-12
        ring1 = (state.cell_class == 1) & (state.fringe_ring == 1) \
            & (mesh.cell_partition == 1)
        assert np.abs(fs.F[ring1]).max() > 1e-3


class TestGradientDivergence:
    def test_surface_gradient_affine_exact(self):
        mesh = _dirichlet_box(7)
        geom, state, factor, traces = _setup(mesh)
        po = ops.gradient_divergence(mesh, geom, state, factor, traces,
                                     state.stencils)
        p = 0.4 + 1.3 * geom.cell_centroid[:, 0] - 0.7 * geom.cell_centroid[:, 1]
        gx = po.Ghx @ p
        gy = po.Ghy @ p
        assert np.abs(gx - 1.3 * geom.cell_area).max() <= 1e-11
        assert np.abs(gy + 0.7 * geom.cell_area).max() <= 1e-11

    def test_surface_gradient_affine_exact_perturbed(self):
        mesh = _dirichlet_box(7)
        rng = np.random.default_rng(2)
        V = perturb_vertices(mesh.initial_vertices(), 0.15 / 7, rng)
        geom = compute_geometry(mesh, V)
        geom, state, factor, traces = _setup(mesh, geom)
        po = ops.gradient_divergence(mesh, geom, state, factor, traces,
                                     state.stencils)
        p = 0.4 + 1.3 * geom.cell_centroid[:, 0] - 0.7 * geom.cell_centroid[:, 1]
        assert np.abs(po.Ghx @ p - 1.3 * geom.cell_area).max() <= 1e-11
        assert np.abs(po.Ghy @ p + 0.7 * geom.cell_area).max() <= 1e-11

    def test_center_gradient_exact(self):
        mesh = _dirichlet_box(7)
        geom, state, factor, traces = _setup(mesh)
        po = ops.gradient_divergence(mesh, geom, state, factor, traces,
                                     state.stencils)
        x = geom.cell_centroid
        p = 0.1 * x[:, 0] ** 2 - 0.3 * x[:, 0] * x[:, 1] + 0.25 * x[:, 1] ** 2 \
            + 0.6 * x[:, 0] - 0.2 * x[:, 1] + 1.0
        gx_exact = 0.2 * x[:, 0] - 0.3 * x[:, 1] + 0.6
        gy_exact = -0.3 * x[:, 0] + 0.5 * x[:, 1] - 0.2
        assert np.abs(po.Gtx @ p - gx_exact).max() <= 1e-10
        assert np.abs(po.Gty @ p - gy_exact).max() <= 1e-10

    def _outlet_box(self, n=8):
        prof = lambda x, t: np.stack([-x[:, 1] * (x[:, 1] - 1.0),
                                      np.zeros(len(x))], axis=1)
        inlet = BoundaryCondition("dirichlet", prof)
        wall = BoundaryCondition("dirichlet", (0.0, 0.0))
        pexit = lambda x, t: 0.5 - 2.0 * x[:, 0] + 0.9 * x[:, 1]
        out = BoundaryCondition("outlet", pexit)
        b = make_cartesian_block(0.0, 1.0, 0.0, 1.0, n, n,
                                 sides=dict(imin=inlet, imax=out,
                                            jmin=wall, jmax=wall))
        return Mesh([b]), pexit

    def test_outlet_constrained_gradient_exact(self):
        # an affine pressure consistent with the prescribed outlet values
        # must be reproduced exactly by the constrained fit
        mesh, pexit = self._outlet_box()
        geom, state, factor, traces = _setup(mesh)
        po = ops.gradient_divergence(mesh, geom, state, factor, traces,
                                     state.stencils)
        assert po.has_outlet
        x = geom.cell_centroid
        p = 0.5 - 2.0 * x[:, 0] + 0.9 * x[:, 1]
        ax, ay = po.gt_affine(0.0)
        assert np.abs(po.Gtx @ p + ax + 2.0).max() <= 1e-10
        assert np.abs(po.Gty @ p + ay - 0.9).max() <= 1e-10

    def test_outlet_anchors_gauge(self):
        # shifting the field without shifting the prescribed outlet value
        # must change the gradient at outlet neighbors: that coupling is
        # what pins the pressure level
        mesh, _ = self._outlet_box()
        geom, state, factor, traces = _setup(mesh)
        po = ops.gradient_divergence(mesh, geom, state, factor, traces,
                                     state.stencils)
        shift = po.Gtx @ np.ones(mesh.ncell)
        outlet_cells = np.unique(
            geom.bedge_cell[traces.bnd_sel[
                traces.bnd_kinds[traces.bnd_sel] == ops.KIND_OUTLET]])
        assert np.abs(shift[outlet_cells]).min() > 1e-3
        inner = np.setdiff1d(np.arange(mesh.ncell), outlet_cells)
        assert np.abs(shift[inner]).max() <= 1e-11

    def test_divergence_of_channel_flow_vanishes(self):
        # exact solenoidal profile: side fluxes cancel in pairs, the wall
        # and inlet fluxes are prescribed, the outlet trace is exact
        mesh, _ = self._outlet_box(9)
        geom, state, factor, traces = _setup(mesh)
        po = ops.gradient_divergence(mesh, geom, state, factor, traces,
                                     state.stencils)
        x = geom.cell_centroid
        u = -x[:, 1] * (x[:, 1] - 1.0)
        v = np.zeros(mesh.ncell)
        r = po.Dx @ u + po.Dy @ v + po.div_affine(0.0)
        assert np.abs(r).max() <= 1e-12

    def test_projection_composition_identity(self):
        mesh, _ = self._outlet_box()
        geom, state, factor, traces = _setup(mesh)
        po = ops.gradient_divergence(mesh, geom, state, factor, traces,
                                     state.stencils)
        rng = np.random.default_rng(4)
        p = rng.normal(size=mesh.ncell)
        direct = po.Dx @ (po.Gtx @ p) + po.Dy @ (po.Gty @ p)
        assert np.abs(po.Khat @ p - direct).max() <= 1e-12
        ax, ay = po.gt_affine(0.0)
        assert np.abs(po.khat_affine(0.0) - (po.Dx @ ax + po.Dy @ ay)).max() \
            <= 1e-13

    def test_no_outlet_flag(self):
        mesh = _dirichlet_box(6)
        geom, state, factor, traces = _setup(mesh)
        po = ops.gradient_divergence(mesh, geom, state, factor, traces,
                                     state.stencils)
        assert not po.has_outlet
        ax, ay = po.gt_affine(0.0)
        assert np.abs(ax).max() == 0.0 and np.abs(ay).max() == 0.0


class TestFringeRows:
    def test_structure_and_identity(self):
        mesh = _overset_pair()
        geom, state, factor, traces = _setup(mesh)
        rows = ops.fringe_rows(mesh, geom, state, factor)
        x = geom.cell_centroid
        phi = 0.3 + 1.1 * x[:, 0] - 0.8 * x[:, 1]
        r = rows @ phi
        assert np.abs(r).max() <= 1e-12
        # the aligned pair puts every fringe centroid exactly on its donor
        # centroid, so the extrapolation must collapse to the identity
        # relation: a copy of the donor value, nothing else
        for k in state.fringe_cells[::7]:
            st_row = rows.getrow(k).tocoo()
            donor = state.donors[k]
            members = set(state.stencils[donor].members)
            entries = dict(zip(st_row.col, st_row.data))
            assert entries[k] == pytest.approx(1.0)
            assert entries[donor] == pytest.approx(-1.0)
            rest = {c: v for c, v in entries.items() if c not in (k, donor)}
            assert set(rest) <= members
            assert sum(abs(v) for v in rest.values()) <= 1e-12

    def test_structure_offset_blocks(self):
        # shifted overlay: donors sit off-center, so each row spans the
        # full donor stencil on top of the diagonal and donor entries
        bc = BoundaryCondition("dirichlet", (0.0, 0.0))
        bg = make_cartesian_block(0.0, 1.0, 0.0, 1.0, 30, 30,
                                  sides=dict(imin=bc, imax=bc,
                                             jmin=bc, jmax=bc))
        fg = make_cartesian_block(0.21, 0.79, 0.23, 0.81, 18, 18,
                                  sides=dict(imin=INTERFACE, imax=INTERFACE,
                                             jmin=INTERFACE, jmax=INTERFACE))
        mesh = Mesh([bg, fg])
        geom, state, factor, traces = _setup(mesh)
        rows = ops.fringe_rows(mesh, geom, state, factor)
        x = geom.cell_centroid
        phi = 0.3 + 1.1 * x[:, 0] - 0.8 * x[:, 1]
        assert np.abs(rows @ phi).max() <= 1e-12
        for k in state.fringe_cells[::7]:
            st_row = rows.getrow(k).tocoo()
            donor = state.donors[k]
            ns = len(state.stencils[donor].members)
            entries = dict(zip(st_row.col, st_row.data))
            assert entries[k] == pytest.approx(1.0)
            assert donor in entries
            assert len(entries) == ns + 2

    def test_rows_only_at_fringe(self):
        mesh = _overset_pair()
        geom, state, factor, traces = _setup(mesh)
        rows = ops.fringe_rows(mesh, geom, state, factor)
        counts = np.diff(rows.indptr)
        assert np.all(counts[state.fringe_cells] > 0)
        other = np.setdiff1d(np.arange(mesh.ncell), state.fringe_cells)
        assert np.all(counts[other] == 0)

    def test_hole_rows_identity(self):
        mesh = _overset_pair()
        geom, state, factor, traces = _setup(mesh)
        rows = ops.hole_rows(mesh, state)
        dense_diag = rows.diagonal()
        assert np.all(dense_diag[state.hole_cells] == 1.0)
        assert rows.nnz == len(state.hole_cells)


class TestBoundaryData:
    def test_kinds_and_values(self):
        prof = lambda x, t: np.stack([x[:, 1] * t, np.zeros(len(x))], axis=1)
        inlet = BoundaryCondition("dirichlet", prof)
        out = BoundaryCondition("outlet", 2.5)
        slip = BoundaryCondition("free_streamline")
        b = make_cartesian_block(0.0, 2.0, 0.0, 1.0, 4, 4,
                                 sides=dict(imin=inlet, imax=out,
                                            jmin=slip, jmax=slip))
        mesh = Mesh([b])
        geom = compute_geometry(mesh)
        kinds, uv, p = ops.apply_boundary_conditions(mesh, geom, 2.0)
        sel_in = geom.bedge_side == 0
        sel_out = geom.bedge_side == 1
        assert np.all(kinds[sel_in] == ops.KIND_DIRICHLET)
        assert np.all(kinds[sel_out] == ops.KIND_OUTLET)
        assert uv[sel_in, 0] == pytest.approx(
            geom.bedge_mid[sel_in, 1] * 2.0)
        assert p[sel_out] == pytest.approx(np.full(sel_out.sum(), 2.5))
        assert np.abs(p[~sel_out]).max() == 0.0
