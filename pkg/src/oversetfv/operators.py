"""Discrete operators assembled as sparse compositions of reconstructions.

All operators act on global cell-value vectors. Rows are only assembled
for field cells; fringe cells receive extrapolation rows built separately
and hole cells are left to the caller (identity rows in linear systems).
Boundary conditions enter either through one-sided traces (convection,
divergence) or through a symmetric penalty flux (viscous terms), so every
operator splits into a static sparse matrix plus a time-dependent affine
vector.
"""

from collections import namedtuple

import numpy as np
from scipy import sparse

from .kernels import rusanov_edge_flux
from .mesh import INTERFACE, GeometryError
from .overset import ConfigurationError
from .reconstruction import _basis, _basis_grad, p2_eval_matrix, p2_grad_matrices

NITSCHE_ETA = 2.0
MIN_CN = 0.05

KIND_DIRICHLET = 0
KIND_OUTLET = 1
KIND_FREE_STREAMLINE = 2
KIND_INTERFACE = 3

_KIND_OF = {"dirichlet": KIND_DIRICHLET, "outlet": KIND_OUTLET,
            "free_streamline": KIND_FREE_STREAMLINE}

_SIDE_NORMAL_COMP = {0: 0, 1: 0, 2: 1, 3: 1}

EdgeFluxState = namedtuple("EdgeFluxState", ["F", "lam"])

RowStencil = namedtuple("RowStencil", ["cell", "cols", "vals"])


def row_stencil(mat, cid):
    """Column/value view of one assembled operator row."""
    sl = mat.getrow(cid).tocoo()
    return RowStencil(cid, sl.col, sl.data)


def boundary_kinds(mesh, geom):
    """Per-boundary-edge condition codes and handles.

    Returns kinds (int array), the owning BoundaryCondition objects (None
    for interface sides), and the normal lattice component of each side.

    A side that carries boundary edges but was never tagged — neither with
    a BoundaryCondition nor with INTERFACE — is a configuration error:
    leaving it silently conditionless would drop its edges from every
    operator contour and quietly break the discretization.
    """
    nb = len(geom.bedge_cell)
    kinds = np.empty(nb, dtype=np.int8)
    bcs = [None] * nb
    ncomp = np.empty(nb, dtype=np.int8)
    for e in range(nb):
        bid = geom.bedge_block[e]
        b = mesh.blocks[bid]
        side = b.side_name(geom.bedge_side[e])
        bc = b.sides.get(side)
        ncomp[e] = _SIDE_NORMAL_COMP[geom.bedge_side[e]]
        if bc is None:
            raise ConfigurationError(
                "side %r of block %d has boundary edges but no condition; "
                "tag it with a BoundaryCondition or INTERFACE" % (side, bid))
        if bc == INTERFACE:
            kinds[e] = KIND_INTERFACE
            continue
        kinds[e] = _KIND_OF[bc.kind]
        bcs[e] = bc
    return kinds, bcs, ncomp


def apply_boundary_conditions(mesh, geom, t):
    """Evaluate all physical boundary data at time t.

    Returns kinds, prescribed velocities (zero rows for outlet and
    interface edges), and prescribed pressures (zero except at outlets).
    """
    kinds, bcs, _ = boundary_kinds(mesh, geom)
    nb = len(kinds)
    uv = np.zeros((nb, 2))
    p = np.zeros(nb)
    for e in range(nb):
        if bcs[e] is None:
            continue
        if kinds[e] == KIND_OUTLET:
            p[e] = bcs[e].pressure(geom.bedge_mid[e][None, :], t)[0]
        else:
            uv[e] = bcs[e].velocity(geom.bedge_mid[e][None, :], t)[0]
    return kinds, uv, p


class TraceOps:
    """Cached one-sided reconstructions at edge midpoints."""

    def __init__(self, mesh, geom, state, factor):
        act = state.active
        self.int_sel = np.nonzero(act[geom.edge_L] & act[geom.edge_R])[0]
        sel = self.int_sel
        self.SL = p2_eval_matrix(factor, geom.edge_L[sel], geom.edge_mid[sel])
        self.SR = p2_eval_matrix(factor, geom.edge_R[sel], geom.edge_mid[sel])
        kinds, bcs, ncomp = boundary_kinds(mesh, geom)
        self.bnd_kinds = kinds
        self.bnd_bcs = bcs
        self.bnd_ncomp = ncomp
        self.bnd_sel = np.nonzero(act[geom.bedge_cell] & (kinds != KIND_INTERFACE))[0]
        bs = self.bnd_sel
        self.SB = p2_eval_matrix(factor, geom.bedge_cell[bs], geom.bedge_mid[bs])
        self.GBx, self.GBy = p2_grad_matrices(factor, geom.bedge_cell[bs],
                                              geom.bedge_mid[bs])
        # group physical edges by condition object so boundary values can
        # be evaluated in one vectorized call per side
        self.groups = []
        seen = {}
        for pos, eb in enumerate(bs):
            bc = bcs[eb]
            if bc is None:
                continue
            key = id(bc)
            if key not in seen:
                seen[key] = len(self.groups)
                self.groups.append((bc, []))
            self.groups[seen[key]][1].append(pos)
        self.groups = [(bc, np.array(pos_list, dtype=np.int64))
                       for bc, pos_list in self.groups]

    def boundary_velocity(self, geom, t):
        """Prescribed velocity at every selected boundary midpoint."""
        out = np.zeros((len(self.bnd_sel), 2))
        for bc, pos in self.groups:
            if bc.kind == "outlet":
                continue
            out[pos] = bc.velocity(geom.bedge_mid[self.bnd_sel[pos]], t)
        return out


def _mask_rows(mat, mask):
    """Zero all rows of a csr matrix outside the mask."""
    d = sparse.diags(mask.astype(float))
    out = (d @ mat).tocsr()
    out.eliminate_zeros()
    return out


def laplacian_rows(mesh, geom, state, factor, traces, q1op, component):
    """Integrated diamond Laplacian of one velocity component or pressure.

    Interior edges combine the center-line derivative with a tangential
    correction from vertex values; Dirichlet-type boundary edges use a
    penalized one-sided flux that is exact for polynomial data. For a
    velocity component (``component`` 0 or 1) the Dirichlet set is the
    no-slip/inflow sides that prescribe it; with ``component=None`` the
    operator acts on pressure, where only outlets prescribe a value and
    every other side is a natural (zero normal derivative) boundary.
    Returns the field-row matrix and the time-dependent boundary vector.
    """
    nc = mesh.ncell
    sel = traces.int_sel
    ne = len(sel)
    L = geom.edge_L[sel]
    R = geom.edge_R[sel]
    elen = geom.edge_len[sel]
    cn = np.einsum("ij,ij->i", geom.edge_c[sel], geom.edge_n[sel])
    if np.any(cn <= MIN_CN):
        e = sel[np.argmin(cn)]
        raise GeometryError(
            "edge %d: center line nearly tangential to the face (c.n = %.3f)"
            % (e, cn.min()))
    tc = np.einsum("ij,ij->i", geom.edge_tau[sel], geom.edge_c[sel]) / cn
    coef = elen / (cn * geom.edge_dist[sel])

    rows = np.concatenate([np.arange(ne), np.arange(ne)])
    cols = np.concatenate([R, L])
    vals = np.concatenate([coef, -coef])
    C = sparse.csr_matrix((vals, (rows, cols)), shape=(ne, nc))

    v1 = geom.edge_v1[sel]
    v2 = geom.edge_v2[sel]
    e = np.arange(ne)
    Dvert = sparse.csr_matrix(
        (np.concatenate([np.ones(ne), -np.ones(ne)]),
         (np.concatenate([e, e]), np.concatenate([v2, v1]))),
        shape=(ne, mesh.nvert))
    T = sparse.diags(tc) @ Dvert @ q1op.W

    Inc = sparse.csr_matrix((np.concatenate([np.ones(ne), -np.ones(ne)]),
                             (np.concatenate([L, R]), np.concatenate([e, e]))),
                            shape=(nc, ne))
    K = Inc @ (C - T)

    bs = traces.bnd_sel
    kinds = traces.bnd_kinds[bs]
    if component is None:
        dirich = kinds == KIND_OUTLET
    else:
        dirich = (kinds == KIND_DIRICHLET) | \
                 ((kinds == KIND_FREE_STREAMLINE) & (traces.bnd_ncomp[bs] == component))
    di = np.nonzero(dirich)[0]
    nb = len(di)
    if nb:
        eb = bs[di]
        own = geom.bedge_cell[eb]
        n = geom.bedge_n[eb]
        blen = geom.bedge_len[eb]
        d = np.einsum("ij,ij->i",
                      geom.bedge_mid[eb] - geom.cell_centroid[own], n)
        pen = blen * NITSCHE_ETA / d
        RowB = (sparse.diags(blen * n[:, 0]) @ traces.GBx[di]
                + sparse.diags(blen * n[:, 1]) @ traces.GBy[di]
                - sparse.diags(pen) @ traces.SB[di])
        IncB = sparse.csr_matrix((np.ones(nb), (own, np.arange(nb))),
                                 shape=(nc, nb))
        K = K + IncB @ RowB

    K = _mask_rows(K.tocsr(), state.field_mask)
    TInc = (Inc @ sparse.diags(tc) @ Dvert).tocsr()

    def affine(t):
        b = -(TInc @ q1op.affine(t))
        if nb:
            if component is None:
                vals_b = np.array([_edge_pressure(mesh, geom, ee, t)
                                   for ee in bs[di]])
            else:
                vals_b = traces.boundary_velocity(geom, t)[di, component]
            b = b + IncB @ (pen * vals_b)
        return np.where(state.field_mask, b, 0.0)

    return K, affine


def convective_residual(mesh, geom, state, factor, traces, u, vert_w, t):
    """Rusanov flux residual of the momentum transport on moving cells.

    u is (ncell, 2); vert_w is (nvert, 2) mesh velocity at vertices. The
    residual is reliable on every cell whose full edge set carries traces
    (see evaluable_mask); other rows are left zero. Also returns the
    per-cell convective spectral radius used by the time-step control.
    """
    nc = mesh.ncell
    F = np.zeros((nc, 2))
    lam = np.zeros(nc)
    sel = traces.int_sel
    L = geom.edge_L[sel]
    R = geom.edge_R[sel]
    uL = traces.SL @ u[:, 0]
    vL = traces.SL @ u[:, 1]
    uR = traces.SR @ u[:, 0]
    vR = traces.SR @ u[:, 1]
    w = 0.5 * (vert_w[geom.edge_v1[sel]] + vert_w[geom.edge_v2[sel]])
    n = geom.edge_n[sel]
    fu, fv, _ = rusanov_edge_flux(uL, vL, uR, vR, w[:, 0], w[:, 1],
                                  n[:, 0], n[:, 1], geom.edge_len[sel])
    np.add.at(F[:, 0], L, fu)
    np.add.at(F[:, 1], L, fv)
    np.subtract.at(F[:, 0], R, fu)
    np.subtract.at(F[:, 1], R, fv)
    qnL = 2.0 * np.abs((uL - w[:, 0]) * n[:, 0] + (vL - w[:, 1]) * n[:, 1])
    qnR = 2.0 * np.abs((uR - w[:, 0]) * n[:, 0] + (vR - w[:, 1]) * n[:, 1])
    np.maximum.at(lam, L, qnL)
    np.maximum.at(lam, R, qnR)

    bs = traces.bnd_sel
    if len(bs):
        own = geom.bedge_cell[bs]
        n = geom.bedge_n[bs]
        ub = traces.SB @ u[:, 0]
        vb = traces.SB @ u[:, 1]
        wb = 0.5 * (vert_w[geom.bedge_v1[bs]] + vert_w[geom.bedge_v2[bs]])
        up = ub.copy()
        vp = vb.copy()
        kinds = traces.bnd_kinds[bs]
        dir_sel = kinds == KIND_DIRICHLET
        if np.any(dir_sel):
            vals = traces.boundary_velocity(geom, t)
            up[dir_sel] = vals[dir_sel, 0]
            vp[dir_sel] = vals[dir_sel, 1]
        fs_sel = kinds == KIND_FREE_STREAMLINE
        if np.any(fs_sel):
            qn = ub[fs_sel] * n[fs_sel, 0] + vb[fs_sel] * n[fs_sel, 1]
            up[fs_sel] = ub[fs_sel] - qn * n[fs_sel, 0]
            vp[fs_sel] = vb[fs_sel] - qn * n[fs_sel, 1]
        fu, fv, _ = rusanov_edge_flux(ub, vb, up, vp, wb[:, 0], wb[:, 1],
                                      n[:, 0], n[:, 1], geom.bedge_len[bs])
        np.add.at(F[:, 0], own, fu)
        np.add.at(F[:, 1], own, fv)
        qnB = 2.0 * np.abs((ub - wb[:, 0]) * n[:, 0] + (vb - wb[:, 1]) * n[:, 1])
        np.maximum.at(lam, own, qnB)
    return EdgeFluxState(F, lam)


PressureOps = namedtuple("PressureOps", [
    "Ghx", "Ghy", "Gtx", "Gty", "gt_affine", "Dx", "Dy", "div_affine",
    "Khat", "khat_affine", "has_outlet"])


def _rows_at(cells, mat, nc):
    """Lift a (len(cells) x nc) stack of rows to global row positions."""
    coo = mat.tocoo()
    return sparse.csr_matrix((coo.data, (np.asarray(cells)[coo.row], coo.col)),
                             shape=(nc, nc))


def _constrained_gradient_rows(geom, stencils, cid, edges):
    """Gradient weights of a cell whose reconstruction is pinned at outlets.

    The least-squares fit is minimized subject to matching the prescribed
    outlet pressure at the midpoint of each outlet edge; the result is the
    gradient at the cell center as weights over (members, midpoints), with
    the owner weight fixed by the shift invariance of the fit.
    """
    st = stencils[cid]
    members = st.members
    ns = len(members)
    h = geom.cell_h[cid]
    d = geom.wrap_disp_cells(geom.cell_centroid[members]
                             - geom.cell_centroid[cid],
                             np.full(ns, cid))
    Z = _basis(d, h)
    m = len(edges)
    dmid = geom.wrap_disp_cells(geom.bedge_mid[edges] - geom.cell_centroid[cid],
                                np.full(m, cid))
    C = _basis(dmid, h)
    KKT = np.zeros((5 + m, 5 + m))
    KKT[:5, :5] = 2.0 * (Z.T @ Z)
    KKT[:5, 5:] = C.T
    KKT[5:, :5] = C
    rhs = np.zeros((5 + m, ns + m))
    rhs[:5, :ns] = 2.0 * Z.T
    rhs[5:, ns:] = np.eye(m)
    sol = np.linalg.solve(KKT, rhs)
    beta_w = sol[:5]
    gx0, gy0 = _basis_grad(np.zeros((1, 2)), h)
    wx = gx0[0] @ beta_w
    wy = gy0[0] @ beta_w
    return members, wx, wy


def gradient_divergence(mesh, geom, state, factor, traces, stencils):
    """Pressure-related operator bundle of one configuration.

    Ghx/Ghy integrate the pressure force over cell surfaces with centered
    interior traces and one-sided boundary traces. Gtx/Gty evaluate each
    active cell's reconstructed gradient at its own center, with outlet
    neighbors switched to a constrained fit that matches the prescribed
    outlet pressure. Dx/Dy measure the velocity divergence on field cells
    with prescribed fluxes on velocity boundaries, and Khat composes the
    two into the projection operator.
    """
    nc = mesh.ncell
    act = state.active
    sel = traces.int_sel
    ne = len(sel)
    L = geom.edge_L[sel]
    R = geom.edge_R[sel]
    elen = geom.edge_len[sel]
    n = geom.edge_n[sel]
    e = np.arange(ne)
    Inc = sparse.csr_matrix((np.concatenate([np.ones(ne), -np.ones(ne)]),
                             (np.concatenate([L, R]), np.concatenate([e, e]))),
                            shape=(nc, ne))
    Half = 0.5 * (traces.SL + traces.SR)
    Px = sparse.diags(elen * n[:, 0]) @ Half
    Py = sparse.diags(elen * n[:, 1]) @ Half

    bs = traces.bnd_sel
    nb = len(bs)
    kinds = traces.bnd_kinds[bs]
    own = geom.bedge_cell[bs]
    blen = geom.bedge_len[bs]
    bn = geom.bedge_n[bs]
    IncB = sparse.csr_matrix((np.ones(nb), (own, np.arange(nb))),
                             shape=(nc, nb))
    BPx = sparse.diags(blen * bn[:, 0]) @ traces.SB
    BPy = sparse.diags(blen * bn[:, 1]) @ traces.SB

    Ghx = (Inc @ Px + IncB @ BPx).tocsr()
    Ghy = (Inc @ Py + IncB @ BPy).tocsr()
    Ghx = _mask_rows(Ghx, act)
    Ghy = _mask_rows(Ghy, act)

    cells = np.nonzero(act)[0]
    Gx, Gy = p2_grad_matrices(factor, cells, geom.cell_centroid[cells])
    Gtx = _rows_at(cells, Gx, nc).tolil()
    Gty = _rows_at(cells, Gy, nc).tolil()
    gt_rows_x = {}
    gt_rows_y = {}
    outlet_edges = bs[kinds == KIND_OUTLET]
    outlet_cells = np.unique(geom.bedge_cell[outlet_edges])
    for cid in outlet_cells:
        edges = outlet_edges[geom.bedge_cell[outlet_edges] == cid]
        members, wx, wy = _constrained_gradient_rows(geom, stencils, cid, edges)
        ns = len(members)
        # the fit sees member and midpoint data relative to the owner, so
        # the owner weight closes the full weight sum to zero
        colsm = np.concatenate([members, [cid]])
        valx = np.concatenate([wx[:ns], [-wx.sum()]])
        valy = np.concatenate([wy[:ns], [-wy.sum()]])
        order = np.argsort(colsm)
        Gtx.rows[cid] = list(colsm[order])
        Gtx.data[cid] = list(valx[order])
        Gty.rows[cid] = list(colsm[order])
        Gty.data[cid] = list(valy[order])
        gt_rows_x[cid] = (edges, wx[ns:])
        gt_rows_y[cid] = (edges, wy[ns:])
    Gtx = Gtx.tocsr()
    Gty = Gty.tocsr()

    def gt_affine(t):
        ax = np.zeros(nc)
        ay = np.zeros(nc)
        for cid, (edges, w) in gt_rows_x.items():
            pvals = np.array([_edge_pressure(mesh, geom, ee, t) for ee in edges])
            ax[cid] = w @ pvals
        for cid, (edges, w) in gt_rows_y.items():
            pvals = np.array([_edge_pressure(mesh, geom, ee, t) for ee in edges])
            ay[cid] = w @ pvals
        return ax, ay

    out_sel = np.nonzero(kinds == KIND_OUTLET)[0]
    Dx = Inc @ Px
    Dy = Inc @ Py
    if len(out_sel):
        Dx = Dx + IncB[:, out_sel] @ BPx[out_sel]
        Dy = Dy + IncB[:, out_sel] @ BPy[out_sel]
    Dx = _mask_rows(Dx.tocsr(), state.field_mask)
    Dy = _mask_rows(Dy.tocsr(), state.field_mask)

    vel_sel = (kinds == KIND_DIRICHLET) | (kinds == KIND_FREE_STREAMLINE)

    def div_affine(t):
        b = np.zeros(nc)
        vals = traces.boundary_velocity(geom, t)
        flux = blen * np.einsum("ij,ij->i", vals, bn)
        np.add.at(b, own[vel_sel], flux[vel_sel])
        return np.where(state.field_mask, b, 0.0)

    Khat = (Dx @ Gtx + Dy @ Gty).tocsr()

    def khat_affine(t):
        ax, ay = gt_affine(t)
        return Dx @ ax + Dy @ ay

    return PressureOps(Ghx, Ghy, Gtx, Gty, gt_affine, Dx, Dy, div_affine,
                       Khat, khat_affine, bool(len(out_sel)))


def _edge_pressure(mesh, geom, edge, t):
    b = mesh.blocks[geom.bedge_block[edge]]
    bc = b.sides.get(b.side_name(geom.bedge_side[edge]))
    return bc.pressure(geom.bedge_mid[edge][None, :], t)[0]


def fringe_rows(mesh, geom, state, factor):
    """Extrapolation rows tying each fringe cell to its donor polynomial.

    Row k reads: phi_k - P_donor(x_k) = 0, with exactly one diagonal entry,
    one donor entry, and the donor's stencil weights.
    """
    nc = mesh.ncell
    fr = state.fringe_cells
    if not len(fr):
        return sparse.csr_matrix((nc, nc))
    donors = state.donors[fr]
    E = p2_eval_matrix(factor, donors, geom.cell_centroid[fr])
    P = _rows_at(fr, E, nc)
    I_fr = sparse.csr_matrix((np.ones(len(fr)), (fr, fr)), shape=(nc, nc))
    out = (I_fr - P).tocsr()
    out.eliminate_zeros()
    return out


def hole_rows(mesh, state):
    """Identity rows for excluded cells so global systems stay square."""
    nc = mesh.ncell
    hc = state.hole_cells
    if not len(hc):
        return sparse.csr_matrix((nc, nc))
    return sparse.csr_matrix((np.ones(len(hc)), (hc, hc)), shape=(nc, nc))
