"""Quadratic least-squares reconstruction and bilinear vertex extrapolation.

Cell values are point values at cell centers. Each active cell carries a
quadratic polynomial that matches its own value exactly and fits its
stencil members in the least-squares sense; the basis is scaled by the
cell size so the normal equations stay well conditioned. Vertex values
are extrapolated bilinearly from the cells sharing the vertex.

The evaluation and gradient routines also come in sparse-matrix form,
mapping the global vector of cell values to values or derivatives at
arbitrary points; all discrete operators downstream are compositions of
these matrices.
"""

import warnings

import numpy as np
from scipy import sparse

from .mesh import INTERFACE

COND_WARN = 1e12
COND_FAIL = 1e14


class DegenerateStencilError(Exception):
    """Raised when a reconstruction system is numerically singular."""


def _basis(d, h):
    """Scaled quadratic basis (without the constant) at displacements d."""
    xi = d[:, 0] / h
    eta = d[:, 1] / h
    return np.stack([xi, eta, xi * eta, 0.5 * xi * xi, 0.5 * eta * eta], axis=1)


def _basis_grad(d, h):
    """Spatial gradient of the scaled basis: shapes (n, 5) per direction."""
    xi = d[:, 0] / h
    eta = d[:, 1] / h
    one = np.ones_like(xi)
    zero = np.zeros_like(xi)
    gx = np.stack([one / h, zero, eta / h, xi / h, zero], axis=1)
    gy = np.stack([zero, one / h, xi / h, zero, eta / h], axis=1)
    return gx, gy


class LSFactor:
    """Cached pseudoinverses of the reconstruction systems of one configuration.

    Cells are grouped by stencil size so the factorization is batched; the
    per-cell lookup maps a cell id to its (group, row) slot.
    """

    def __init__(self, geom, stencils):
        nc = len(stencils)
        self.geom = geom
        sizes = np.array([len(s.members) if s is not None else 0 for s in stencils])
        self.group_of = np.full(nc, -1, dtype=np.int64)
        self.pos_of = np.full(nc, -1, dtype=np.int64)
        self.groups = []
        worst = 0.0
        for g, ns in enumerate(np.unique(sizes[sizes > 0])):
            cells = np.nonzero(sizes == ns)[0]
            members = np.stack([stencils[c].members for c in cells])
            own = geom.cell_centroid[cells]
            d = geom.cell_centroid[members] - own[:, None, :]
            for r in range(members.shape[1]):
                d[:, r, :] = geom.wrap_disp_cells(d[:, r, :], cells)
            h = geom.cell_h[cells]
            Z = np.empty((len(cells), ns, 5))
            for r in range(ns):
                Z[:, r, :] = _basis(d[:, r, :], h)
            A = np.einsum("grk,grl->gkl", Z, Z)
            cond = np.linalg.cond(A)
            worst = max(worst, cond.max())
            if np.any(cond > COND_FAIL):
                bad = cells[np.argmax(cond)]
                raise DegenerateStencilError(
                    "reconstruction system of cell %d has condition number %.3e"
                    % (bad, cond.max()))
            Zt = np.swapaxes(Z, 1, 2)
            Winv = np.linalg.solve(A, Zt)
            self.groups.append({"cells": cells, "members": members,
                                "Winv": Winv, "h": h})
            self.group_of[cells] = g
            self.pos_of[cells] = np.arange(len(cells))
        if worst > COND_WARN:
            warnings.warn("reconstruction condition number %.3e exceeds %.0e"
                          % (worst, COND_WARN))


def ls_factor(geom, stencils):
    """Build and cache the least-squares factors for all active cells."""
    return LSFactor(geom, stencils)


def reconstruct_p2(factor, values):
    """Per-cell quadratic coefficients from the global value vector."""
    values = np.asarray(values, dtype=float)
    beta = np.full((len(factor.group_of), 5), np.nan)
    for grp in factor.groups:
        diff = values[grp["members"]] - values[grp["cells"]][:, None]
        beta[grp["cells"]] = np.einsum("gkn,gn->gk", grp["Winv"], diff)
    return beta


def _displacements(factor, cells, points):
    geom = factor.geom
    cells = np.asarray(cells, dtype=np.int64)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    d = points - geom.cell_centroid[cells]
    return cells, points, geom.wrap_disp_cells(d, cells)


def evaluate_p2(factor, beta, values, cells, points):
    """Evaluate each cell's polynomial at its paired point."""
    cells, points, d = _displacements(factor, cells, points)
    z = _basis(d, factor.geom.cell_h[cells])
    return values[cells] + np.einsum("rk,rk->r", z, beta[cells])


def gradient_p2(factor, beta, cells, points):
    """Gradient of each cell's polynomial at its paired point."""
    cells, points, d = _displacements(factor, cells, points)
    gx, gy = _basis_grad(d, factor.geom.cell_h[cells])
    return (np.einsum("rk,rk->r", gx, beta[cells]),
            np.einsum("rk,rk->r", gy, beta[cells]))


def _weight_rows(factor, cells, points, basis_fn):
    """Per-point member weights w and owner complement for a basis row."""
    cells, points, d = _displacements(factor, cells, points)
    nc = len(factor.group_of)
    npts = len(cells)
    if npts == 0:
        return sparse.csr_matrix((0, nc))
    rows, cols, vals = [], [], []
    for g, grp in enumerate(factor.groups):
        sel = np.nonzero(factor.group_of[cells] == g)[0]
        if not len(sel):
            continue
        pos = factor.pos_of[cells[sel]]
        z = basis_fn(d[sel], factor.geom.cell_h[cells[sel]])
        w = np.einsum("rk,rkn->rn", z, grp["Winv"][pos])
        ns = w.shape[1]
        rows.append(np.repeat(sel, ns))
        cols.append(grp["members"][pos].ravel())
        vals.append(w.ravel())
        rows.append(sel)
        cols.append(cells[sel])
        vals.append(-w.sum(axis=1))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(npts, nc))


def p2_eval_matrix(factor, cells, points):
    """Sparse map from cell values to polynomial values at paired points."""
    M = _weight_rows(factor, cells, points, _basis)
    npts = len(np.asarray(cells))
    eye = sparse.csr_matrix((np.ones(npts), (np.arange(npts), np.asarray(cells))),
                            shape=M.shape)
    return (M + eye).tocsr()


def p2_grad_matrices(factor, cells, points):
    """Sparse maps from cell values to polynomial gradients at paired points."""
    Gx = _weight_rows(factor, cells, points,
                      lambda d, h: _basis_grad(d, h)[0])
    Gy = _weight_rows(factor, cells, points,
                      lambda d, h: _basis_grad(d, h)[1])
    return Gx, Gy


def _batched_vertex_weights(rel):
    """Interpolation weights of bilinear (4-cell) or linear (3-cell) duals.

    rel is (m, n, 2) with the n dual cell centers relative to the vertex,
    so the weights solve M^T w = z with the vertex at the origin. Rows
    whose system is singular come back as NaN.
    """
    m, n = rel.shape[:2]
    center = rel.mean(axis=1, keepdims=True)
    d = rel - center
    h = np.maximum(np.abs(d).max(axis=(1, 2)), 1e-300)[:, None]
    M = np.empty((m, n, n))
    M[:, :, 0] = 1.0
    M[:, :, 1] = d[:, :, 0] / h
    M[:, :, 2] = d[:, :, 1] / h
    z = np.empty((m, n))
    z[:, 0] = 1.0
    z[:, 1] = -center[:, 0, 0] / h[:, 0]
    z[:, 2] = -center[:, 0, 1] / h[:, 0]
    if n == 4:
        M[:, :, 3] = M[:, :, 1] * M[:, :, 2]
        z[:, 3] = z[:, 1] * z[:, 2]
    ok = np.abs(np.linalg.det(M)) > 1e-12
    w = np.full((m, n), np.nan)
    if ok.any():
        w[ok] = np.linalg.solve(np.swapaxes(M[ok], 1, 2), z[ok][:, :, None])[:, :, 0]
    return w


_SIDE_NORMAL_COMP = {"imin": 0, "imax": 0, "jmin": 1, "jmax": 1}


class VertexOp:
    """Extrapolation of one velocity component from cell centers to vertices."""

    def __init__(self, W, pinned, bc_entries):
        self.W = W
        self.pinned = pinned
        self._bc = bc_entries

    def affine(self, t):
        """Boundary contribution at time t: zero off the pinned vertices."""
        b = np.zeros(self.W.shape[0])
        for vids, pos, fn, comp in self._bc:
            b[vids] = fn(pos, t)[:, comp]
        return b

    def values(self, t, cell_values):
        """Vertex values of the component for the given cell values."""
        return self.W @ np.asarray(cell_values, dtype=float) + self.affine(t)


def _side_vertex_indices(b, side):
    """Lattice vertex indices along one block side, with period offsets."""
    if side == "imin":
        i = np.zeros(b.nvj, dtype=int)
        j = np.arange(b.nvj)
    elif side == "imax":
        i = np.full(b.nvj, b.ni)
        j = np.arange(b.nvj)
    elif side == "jmin":
        i = np.arange(b.nvi)
        j = np.zeros(b.nvi, dtype=int)
    else:
        i = np.arange(b.nvi)
        j = np.full(b.nvi, b.nj)
    return b.vertex_id(i, j), b.vertex_offset(i, j)


def vertex_q1(mesh, geom, active, component):
    """Build the vertex extrapolation operator for one cell-value field.

    Interior vertices interpolate bilinearly from the four active adjacent
    cells of their block; reduced duals fall back to linear, mean, or copy.
    For a velocity component (``component`` 0 or 1), vertices on a side
    that prescribes this component are pinned to the boundary value; sides
    are applied in a fixed order so the last listed side owns shared corner
    vertices. With ``component=None`` (pressure) nothing is pinned and every
    vertex extrapolates from the interior.
    """
    nv = mesh.nvert
    nc = mesh.ncell
    rows, cols, vals = [], [], []
    pinned = np.zeros(nv, dtype=bool)
    bc_entries = []

    for k, b in enumerate(mesh.blocks):
        co = mesh.cell_offset[k]
        vo = mesh.vert_offset[k]
        adj = b.vertex_cells + co
        act = (b.vertex_cells >= 0)
        act[act] &= active[adj[act]]
        nact = act.sum(axis=1)
        # compact the active cells of each dual to the left, order preserved
        order = np.argsort(~act, axis=1, kind="stable")
        adj_sorted = np.take_along_axis(adj, order, axis=1)
        rel_all = geom.cell_centroid[np.where(adj_sorted >= 0, adj_sorted, 0)]
        rel_all = rel_all - geom.V[vo:vo + b.nvert][:, None, :]
        rel_all = b.wrap_disp(rel_all)

        pending3 = []
        for n in (4, 3):
            lv = np.nonzero(nact == n)[0]
            if n == 3:
                lv = np.concatenate([lv, np.asarray(pending3, dtype=np.int64)])
            if not len(lv):
                continue
            w = _batched_vertex_weights(rel_all[lv, :n])
            bad = np.isnan(w[:, 0])
            if n == 4 and bad.any():
                pending3.extend(lv[bad])
            lv, w = lv[~bad], w[~bad]
            rows.append(np.repeat(vo + lv, n))
            cols.append(adj_sorted[lv, :n].ravel())
            vals.append(w.ravel())
        for lv in np.nonzero(nact == 2)[0]:
            rows.append(np.full(2, vo + lv))
            cols.append(adj_sorted[lv, :2])
            vals.append(np.full(2, 0.5))
        for lv in np.nonzero(nact == 1)[0]:
            rows.append(np.array([vo + lv]))
            cols.append(adj_sorted[lv, :1])
            vals.append(np.ones(1))

        for side in ("imin", "imax", "jmin", "jmax"):
            if component is None:
                break
            bc = b.sides.get(side)
            if bc is None or bc == INTERFACE:
                continue
            if (side in ("imin", "imax") and b.periodic_i) or \
               (side in ("jmin", "jmax") and b.periodic_j):
                continue
            if bc.kind == "outlet":
                continue
            if bc.kind == "free_streamline" and _SIDE_NORMAL_COMP[side] != component:
                continue
            vids, off = _side_vertex_indices(b, side)
            gids = vo + vids
            pos = geom.V[gids] + off
            pinned[gids] = True
            bc_entries.append((gids, pos, bc.velocity, component))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    keep = ~pinned[rows]
    W = sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(nv, nc))
    return VertexOp(W, pinned, bc_entries)
