"""Structured quadrilateral mesh blocks, geometry caches, and motion laws.

A mesh is a background block plus zero or more foreground blocks. Each
block is a structured lattice of straight-sided quadrilateral cells,
optionally periodic in either index direction. All per-configuration
geometry (areas, centroids, edge frames) is computed from a single global
vertex array so that moving-mesh stages can share the static topology.
"""

import numpy as np


class GeometryError(Exception):
    """Raised for degenerate or inconsistently oriented geometry."""


class MotionError(Exception):
    """Raised when the implicit vertex trajectory solve fails."""


class MotionLaw:
    """Prescribed mesh velocity law w(x, t) with an identifying tag."""

    def __init__(self, fn, tag, uniform):
        self.fn = fn
        self.tag = tag
        self.uniform = uniform

    @classmethod
    def none(cls):
        """Return the static law w = 0."""
        return cls(lambda x, t: np.zeros_like(np.atleast_2d(x)), "none", True)

    @classmethod
    def translation(cls, velocity):
        """Return a rigid translation law; velocity is a constant or a function of t."""
        if callable(velocity):
            vel = velocity
        else:
            const = np.asarray(velocity, dtype=float)
            vel = lambda t: const

        def fn(x, t):
            x = np.atleast_2d(x)
            return np.broadcast_to(np.asarray(vel(t), dtype=float), x.shape).copy()

        return cls(fn, "rigid-translation", True)

    @classmethod
    def rotation(cls, rate, center=(0.0, 0.0)):
        """Return the rigid rotation law w = rate * (y - cy, -(x - cx))."""
        cx, cy = center

        def fn(x, t):
            x = np.atleast_2d(x)
            w = np.empty_like(x)
            w[:, 0] = rate * (x[:, 1] - cy)
            w[:, 1] = -rate * (x[:, 0] - cx)
            return w

        return cls(fn, "rigid-rotation", False)

    @classmethod
    def analytic(cls, fn):
        """Return a law from an arbitrary vectorized w(x, t) expression."""
        return cls(fn, "analytic-expression", False)

    @property
    def is_static(self):
        return self.tag == "none"

    def velocity(self, x, t):
        """Evaluate the law at positions x (n, 2) and time t."""
        return np.asarray(self.fn(np.atleast_2d(np.asarray(x, dtype=float)), t), dtype=float)


class BoundaryCondition:
    """Physical condition attached to one side of a block."""

    def __init__(self, kind, value=None, surface=False):
        if kind not in ("dirichlet", "outlet", "free_streamline"):
            raise ValueError("unknown boundary kind %r" % kind)
        self.kind = kind
        self.surface = surface
        if value is None:
            self.value = lambda x, t: np.zeros_like(np.atleast_2d(x))
        elif callable(value):
            self.value = value
        else:
            const = np.asarray(value, dtype=float)
            self.value = lambda x, t: np.broadcast_to(const, np.atleast_2d(x).shape).copy()

    def velocity(self, x, t):
        """Evaluate the prescribed boundary velocity at positions x."""
        return np.asarray(self.value(np.atleast_2d(np.asarray(x, dtype=float)), t), dtype=float)

    def pressure(self, x, t):
        """Evaluate the prescribed boundary pressure at positions x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = np.asarray(self.value(x, t), dtype=float)
        if v.ndim == 2:
            v = v[:, 0]
        return np.broadcast_to(v, (len(x),)).copy()


INTERFACE = "interface"

_SIDES = ("imin", "imax", "jmin", "jmax")


class MeshBlock:
    """One structured block of ni x nj straight-sided quadrilateral cells."""

    def __init__(self, verts, ni, nj, periodic_i=False, periodic_j=False,
                 period_vec_i=(0.0, 0.0), period_vec_j=(0.0, 0.0),
                 sides=None, motion=None):
        self.ni = ni
        self.nj = nj
        self.periodic_i = periodic_i
        self.periodic_j = periodic_j
        self.period_vec_i = np.asarray(period_vec_i, dtype=float)
        self.period_vec_j = np.asarray(period_vec_j, dtype=float)
        self.nvi = ni if periodic_i else ni + 1
        self.nvj = nj if periodic_j else nj + 1
        self.verts0 = np.asarray(verts, dtype=float).reshape(self.nvi * self.nvj, 2)
        self.sides = dict(sides or {})
        for s in _SIDES:
            if s not in self.sides:
                self.sides[s] = None
        self.motion = motion or MotionLaw.none()
        self.ncell = ni * nj
        self.nvert = self.nvi * self.nvj
        self._build_topology()

    # ------------------------------------------------------------------
    # index maps
    # ------------------------------------------------------------------
    def vertex_id(self, i, j):
        """Map lattice indices (wrapping on periodic directions) to a vertex id."""
        i = np.asarray(i)
        j = np.asarray(j)
        im = np.mod(i, self.nvi) if self.periodic_i else i
        jm = np.mod(j, self.nvj) if self.periodic_j else j
        return jm * self.nvi + im

    def vertex_offset(self, i, j):
        """Period offset to add to a wrapped vertex position for indices (i, j)."""
        i = np.asarray(i)
        j = np.asarray(j)
        off = np.zeros(np.broadcast(i, j).shape + (2,))
        if self.periodic_i:
            off += (i // self.nvi)[..., None] * self.period_vec_i
        if self.periodic_j:
            off += (j // self.nvj)[..., None] * self.period_vec_j
        return off

    def cell_id(self, i, j):
        """Map lattice cell indices (wrapping on periodic directions) to a cell id."""
        i = np.asarray(i)
        j = np.asarray(j)
        im = np.mod(i, self.ni) if self.periodic_i else i
        jm = np.mod(j, self.nj) if self.periodic_j else j
        return jm * self.ni + im

    def _valid_cell(self, i, j):
        oki = self.periodic_i | ((i >= 0) & (i < self.ni))
        okj = self.periodic_j | ((j >= 0) & (j < self.nj))
        return oki & okj

    def _build_topology(self):
        ni, nj = self.ni, self.nj
        ii, jj = np.meshgrid(np.arange(ni), np.arange(nj), indexing="ij")
        ii = ii.T.ravel()
        jj = jj.T.ravel()
        self.cell_i = ii
        self.cell_j = jj

        corner_i = np.stack([ii, ii + 1, ii + 1, ii], axis=1)
        corner_j = np.stack([jj, jj, jj + 1, jj + 1], axis=1)
        self.cell_verts = self.vertex_id(corner_i, corner_j).astype(np.int64)
        self.cell_vert_off = self.vertex_offset(corner_i, corner_j)

        moore_d = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
        moore = np.full((self.ncell, 8), -1, dtype=np.int64)
        for k, (di, dj) in enumerate(moore_d):
            valid = self._valid_cell(ii + di, jj + dj)
            moore[valid, k] = self.cell_id(ii[valid] + di, jj[valid] + dj)
        self.moore = moore

        side_d = [(-1, 0), (1, 0), (0, -1), (0, 1)]
        nbrs = np.full((self.ncell, 4), -1, dtype=np.int64)
        for k, (di, dj) in enumerate(side_d):
            valid = self._valid_cell(ii + di, jj + dj)
            nbrs[valid, k] = self.cell_id(ii[valid] + di, jj[valid] + dj)
        self.side_neighbors = nbrs

        vi, vj = np.meshgrid(np.arange(self.nvi), np.arange(self.nvj), indexing="ij")
        vi = vi.T.ravel()
        vj = vj.T.ravel()
        vadj = np.full((self.nvert, 4), -1, dtype=np.int64)
        # counterclockwise ring of the four cells around a lattice vertex
        for k, (di, dj) in enumerate([(-1, -1), (0, -1), (0, 0), (-1, 0)]):
            valid = self._valid_cell(vi + di, vj + dj)
            vadj[valid, k] = self.cell_id(vi[valid] + di, vj[valid] + dj)
        self.vertex_cells = vadj

        self._build_edges()

    def _build_edges(self):
        ni, nj = self.ni, self.nj
        iL, iR, v1, v2, o1, o2 = [], [], [], [], [], []

        istart = 0 if self.periodic_i else 1
        for i in range(istart, ni):
            j = np.arange(nj)
            ic = np.full(nj, i)
            iL.append(self.cell_id(ic - 1, j))
            iR.append(self.cell_id(ic, j))
            v1.append(self.vertex_id(ic, j))
            v2.append(self.vertex_id(ic, j + 1))
            o1.append(self.vertex_offset(ic, j))
            o2.append(self.vertex_offset(ic, j + 1))

        jstart = 0 if self.periodic_j else 1
        for j in range(jstart, nj):
            i = np.arange(ni)
            jc = np.full(ni, j)
            iL.append(self.cell_id(i, jc - 1))
            iR.append(self.cell_id(i, jc))
            v1.append(self.vertex_id(i + 1, jc))
            v2.append(self.vertex_id(i, jc))
            o1.append(self.vertex_offset(i + 1, jc))
            o2.append(self.vertex_offset(i, jc))

        if iL:
            self.edge_L = np.concatenate(iL)
            self.edge_R = np.concatenate(iR)
            self.edge_v1 = np.concatenate(v1)
            self.edge_v2 = np.concatenate(v2)
            self.edge_v1_off = np.concatenate(o1)
            self.edge_v2_off = np.concatenate(o2)
        else:
            self.edge_L = np.zeros(0, dtype=np.int64)
            self.edge_R = np.zeros(0, dtype=np.int64)
            self.edge_v1 = np.zeros(0, dtype=np.int64)
            self.edge_v2 = np.zeros(0, dtype=np.int64)
            self.edge_v1_off = np.zeros((0, 2))
            self.edge_v2_off = np.zeros((0, 2))

        bc_cell, bc_v1, bc_v2, bc_o1, bc_o2, bc_side = [], [], [], [], [], []

        def add_side(name, ci, cj, ai, aj, bi, bj):
            bc_cell.append(self.cell_id(ci, cj))
            bc_v1.append(self.vertex_id(ai, aj))
            bc_v2.append(self.vertex_id(bi, bj))
            bc_o1.append(self.vertex_offset(ai, aj))
            bc_o2.append(self.vertex_offset(bi, bj))
            bc_side.append(np.full(len(bc_cell[-1]), _SIDES.index(name), dtype=np.int64))

        if not self.periodic_j:
            i = np.arange(ni)
            z = np.zeros(ni, dtype=int)
            t = np.full(ni, nj)
            add_side("jmin", i, z, i, z, i + 1, z)
            add_side("jmax", i, t - 1, i + 1, t, i, t)
        if not self.periodic_i:
            j = np.arange(nj)
            z = np.zeros(nj, dtype=int)
            r = np.full(nj, ni)
            add_side("imin", z, j, z, j + 1, z, j)
            add_side("imax", r - 1, j, r, j, r, j + 1)

        if bc_cell:
            self.bedge_cell = np.concatenate(bc_cell)
            self.bedge_v1 = np.concatenate(bc_v1)
            self.bedge_v2 = np.concatenate(bc_v2)
            self.bedge_v1_off = np.concatenate(bc_o1)
            self.bedge_v2_off = np.concatenate(bc_o2)
            self.bedge_side = np.concatenate(bc_side)
        else:
            self.bedge_cell = np.zeros(0, dtype=np.int64)
            self.bedge_v1 = np.zeros(0, dtype=np.int64)
            self.bedge_v2 = np.zeros(0, dtype=np.int64)
            self.bedge_v1_off = np.zeros((0, 2))
            self.bedge_v2_off = np.zeros((0, 2))
            self.bedge_side = np.zeros(0, dtype=np.int64)

    def wrap_disp(self, d):
        """Reduce displacement vectors modulo the block's translation periods."""
        d = np.asarray(d, dtype=float)
        out = d.copy()
        for periodic, vec in ((self.periodic_i, self.period_vec_i),
                              (self.periodic_j, self.period_vec_j)):
            if not periodic:
                continue
            for c in range(2):
                L = vec[c]
                if L != 0.0:
                    out[..., c] -= L * np.round(out[..., c] / L)
        return out

    def side_name(self, idx):
        return _SIDES[idx]


def make_cartesian_block(x0, x1, y0, y1, ni, nj, periodic_i=False, periodic_j=False,
                         sides=None, motion=None):
    """Build an axis-aligned Cartesian block on [x0,x1] x [y0,y1]."""
    xs = np.linspace(x0, x1, ni + 1)
    ys = np.linspace(y0, y1, nj + 1)
    if periodic_i:
        xs = xs[:-1]
    if periodic_j:
        ys = ys[:-1]
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return MeshBlock(verts, ni, nj, periodic_i, periodic_j,
                     period_vec_i=(x1 - x0, 0.0), period_vec_j=(0.0, y1 - y0),
                     sides=sides, motion=motion)


def make_annulus_block(center, radii, ntheta, sides=None, motion=None, theta0=0.0):
    """Build a body-fitted annular block around a circle.

    The angular direction is parameterized clockwise so that the (i, j)
    lattice is right-handed with j increasing radially outward.
    """
    radii = np.asarray(radii, dtype=float)
    nj = len(radii) - 1
    th = theta0 - 2.0 * np.pi * np.arange(ntheta) / ntheta
    R, T = np.meshgrid(radii, th, indexing="ij")
    X = center[0] + R * np.cos(T)
    Y = center[1] + R * np.sin(T)
    # vertex lattice ordered j (radial) slow, i (angular) fast
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return MeshBlock(verts, ntheta, nj, periodic_i=True, periodic_j=False,
                     sides=sides, motion=motion)


def rotate_vertices(verts, angle, center=(0.0, 0.0)):
    """Rotate vertex positions by angle around a center."""
    c, s = np.cos(angle), np.sin(angle)
    d = verts - np.asarray(center, dtype=float)
    return np.asarray(center, dtype=float) + np.stack(
        [c * d[:, 0] - s * d[:, 1], s * d[:, 0] + c * d[:, 1]], axis=1)


def perturb_vertices(verts, length, rng):
    """Displace every vertex by a fixed length in an independent random direction."""
    theta = rng.uniform(0.0, 2.0 * np.pi, size=len(verts))
    return verts + length * np.stack([np.cos(theta), np.sin(theta)], axis=1)


class Mesh:
    """A background block plus foreground blocks with global id offsets."""

    def __init__(self, blocks):
        if not blocks:
            raise ValueError("mesh needs at least one block")
        self.blocks = list(blocks)
        self.cell_offset = np.cumsum([0] + [b.ncell for b in blocks])
        self.vert_offset = np.cumsum([0] + [b.nvert for b in blocks])
        self.ncell = int(self.cell_offset[-1])
        self.nvert = int(self.vert_offset[-1])
        self.cell_block = np.concatenate(
            [np.full(b.ncell, k, dtype=np.int64) for k, b in enumerate(blocks)])
        # partition 0 is the background block, partition 1 the foregrounds
        self.cell_partition = (self.cell_block > 0).astype(np.int64)

    def initial_vertices(self):
        """Concatenate the blocks' construction-time vertex positions."""
        return np.concatenate([b.verts0 for b in self.blocks], axis=0)

    def block_cells(self, k):
        """Global cell id range of block k."""
        return np.arange(self.cell_offset[k], self.cell_offset[k + 1])

    def block_verts(self, k, V):
        """View of the global vertex array restricted to block k."""
        return V[self.vert_offset[k]:self.vert_offset[k + 1]]

    def is_moving(self):
        return any(not b.motion.is_static for b in self.blocks)


class GeometryCache:
    """Per-configuration geometric quantities for a mesh."""

    def __init__(self, mesh, V):
        self.mesh = mesh
        self.V = np.asarray(V, dtype=float)
        self._compute_cells()
        self._compute_edges()

    def _compute_cells(self):
        mesh = self.mesh
        nc = mesh.ncell
        corners = np.empty((nc, 4, 2))
        for k, b in enumerate(mesh.blocks):
            c0, c1 = mesh.cell_offset[k], mesh.cell_offset[k + 1]
            Vb = mesh.block_verts(k, self.V)
            corners[c0:c1] = Vb[b.cell_verts] + b.cell_vert_off
        self.cell_corners = corners

        x = corners[..., 0]
        y = corners[..., 1]
        xr = np.roll(x, -1, axis=1)
        yr = np.roll(y, -1, axis=1)
        cross = x * yr - xr * y
        area = 0.5 * cross.sum(axis=1)
        bad = np.nonzero(area <= 0.0)[0]
        if len(bad):
            raise GeometryError("degenerate cell (area <= 0) at global id %d" % bad[0])
        self.cell_area = area
        self.cell_h = np.sqrt(area)

        # exact centroid from the two-triangle split (v0 v1 v2) + (v0 v2 v3)
        v0, v1, v2, v3 = corners[:, 0], corners[:, 1], corners[:, 2], corners[:, 3]

        def tri(a, b, c):
            ar = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                        - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))
            return ar, (a + b + c) / 3.0

        a1, c1 = tri(v0, v1, v2)
        a2, c2 = tri(v0, v2, v3)
        self.cell_centroid = (a1[:, None] * c1 + a2[:, None] * c2) / (a1 + a2)[:, None]

    def _edge_frames(self, P1, P2):
        t = P2 - P1
        ln = np.hypot(t[:, 0], t[:, 1])
        if np.any(ln <= 0.0):
            raise GeometryError("zero-length edge encountered")
        tau = t / ln[:, None]
        n = np.stack([tau[:, 1], -tau[:, 0]], axis=1)
        mid = 0.5 * (P1 + P2)
        return ln, tau, n, mid

    def _compute_edges(self):
        mesh = self.mesh
        eL, eR, ev1, ev2, eo1, eo2, eblk = [], [], [], [], [], [], []
        bcell, bv1, bv2, bo1, bo2, bside, bblk = [], [], [], [], [], [], []
        for k, b in enumerate(mesh.blocks):
            co = mesh.cell_offset[k]
            vo = mesh.vert_offset[k]
            eL.append(b.edge_L + co)
            eR.append(b.edge_R + co)
            ev1.append(b.edge_v1 + vo)
            ev2.append(b.edge_v2 + vo)
            eo1.append(b.edge_v1_off)
            eo2.append(b.edge_v2_off)
            eblk.append(np.full(len(b.edge_L), k, dtype=np.int64))
            bcell.append(b.bedge_cell + co)
            bv1.append(b.bedge_v1 + vo)
            bv2.append(b.bedge_v2 + vo)
            bo1.append(b.bedge_v1_off)
            bo2.append(b.bedge_v2_off)
            bside.append(b.bedge_side)
            bblk.append(np.full(len(b.bedge_cell), k, dtype=np.int64))
        self.edge_L = np.concatenate(eL)
        self.edge_R = np.concatenate(eR)
        self.edge_v1 = np.concatenate(ev1)
        self.edge_v2 = np.concatenate(ev2)
        self.edge_v1_off = np.concatenate(eo1)
        self.edge_v2_off = np.concatenate(eo2)
        self.edge_block = np.concatenate(eblk)
        self.bedge_cell = np.concatenate(bcell)
        self.bedge_v1 = np.concatenate(bv1)
        self.bedge_v2 = np.concatenate(bv2)
        self.bedge_v1_off = np.concatenate(bo1)
        self.bedge_v2_off = np.concatenate(bo2)
        self.bedge_side = np.concatenate(bside)
        self.bedge_block = np.concatenate(bblk)

        ln, tau, n, mid = self._edge_frames(self.V[self.edge_v1] + self.edge_v1_off,
                                            self.V[self.edge_v2] + self.edge_v2_off)
        self.edge_len = ln
        self.edge_tau = tau
        self.edge_n = n
        self.edge_mid = mid

        d = self.cell_centroid[self.edge_R] - self.cell_centroid[self.edge_L]
        for k, b in enumerate(mesh.blocks):
            sel = self.edge_block == k
            d[sel] = b.wrap_disp(d[sel])
        dist = np.hypot(d[:, 0], d[:, 1])
        if np.any(dist <= 0.0):
            raise GeometryError("coincident cell centers across an edge")
        self.edge_dist = dist
        self.edge_c = d / dist[:, None]
        sign = np.einsum("ij,ij->i", self.edge_n, self.edge_c)
        if np.any(sign <= 0.0):
            raise GeometryError("interior edge normal not oriented left to right")

        bln, btau, bn, bmid = self._edge_frames(self.V[self.bedge_v1] + self.bedge_v1_off,
                                                self.V[self.bedge_v2] + self.bedge_v2_off)
        self.bedge_len = bln
        self.bedge_tau = btau
        self.bedge_n = bn
        self.bedge_mid = bmid
        out = bmid - self.cell_centroid[self.bedge_cell]
        if np.any(np.einsum("ij,ij->i", bn, out) <= 0.0):
            raise GeometryError("boundary edge normal not outward")

    def wrap_disp_cells(self, d, cells):
        """Wrap displacement vectors according to each cell's owning block."""
        out = np.array(d, dtype=float, copy=True)
        blocks = self.mesh.cell_block[cells]
        for k, b in enumerate(self.mesh.blocks):
            sel = blocks == k
            if np.any(sel):
                out[sel] = b.wrap_disp(out[sel])
        return out


def compute_geometry(mesh, V=None):
    """Compute the full geometry cache of a mesh at vertex positions V."""
    if V is None:
        V = mesh.initial_vertices()
    return GeometryCache(mesh, V)


def advance_vertices(verts, law, t_start, dt_stage, tol=1e-12, max_iter=50):
    """Advance vertices implicitly through x = x_old + dt * w(x, t_start + dt)."""
    if dt_stage <= 0.0:
        raise ValueError("dt_stage must be positive")
    t1 = t_start + dt_stage
    x_old = np.asarray(verts, dtype=float)
    if law.uniform:
        w = law.velocity(x_old[:1], t1)
        return x_old + dt_stage * w

    x = x_old + dt_stage * law.velocity(x_old, t1)
    for _ in range(max_iter):
        F = x - x_old - dt_stage * law.velocity(x, t1)
        res = np.abs(F).max(axis=1)
        if res.max() <= tol:
            return x
        h = 1e-7 * np.maximum(1.0, np.abs(x))
        ex = np.zeros_like(x)
        ex[:, 0] = h[:, 0]
        ey = np.zeros_like(x)
        ey[:, 1] = h[:, 1]
        w0 = law.velocity(x, t1)
        dwx = (law.velocity(x + ex, t1) - w0) / h[:, 0:1]
        dwy = (law.velocity(x + ey, t1) - w0) / h[:, 1:2]
        j11 = 1.0 - dt_stage * dwx[:, 0]
        j21 = -dt_stage * dwx[:, 1]
        j12 = -dt_stage * dwy[:, 0]
        j22 = 1.0 - dt_stage * dwy[:, 1]
        det = j11 * j22 - j12 * j21
        if np.any(np.abs(det) < 1e-300):
            raise MotionError("singular Jacobian in vertex trajectory solve")
        dx = (j22 * F[:, 0] - j12 * F[:, 1]) / det
        dy = (-j21 * F[:, 0] + j11 * F[:, 1]) / det
        x = x - np.stack([dx, dy], axis=1)
    F = x - x_old - dt_stage * law.velocity(x, t1)
    res = np.abs(F).max(axis=1)
    k = int(np.argmax(res))
    raise MotionError("vertex %d trajectory solve residual %.3e after %d iterations"
                      % (k, res[k], max_iter))


def edge_velocity(vertex_velocities, v1, v2):
    """Mesh velocity at edge midpoints as the mean of the endpoint velocities."""
    w = np.asarray(vertex_velocities, dtype=float)
    return 0.5 * (w[v1] + w[v2])


def dual_cell(geom, block_id, vertex_local_id):
    """Dual-cell geometry of a vertex: polygon of adjacent cell centroids.

    Returns a dict with keys polygon, centroid, h, cells, boundary; boundary
    is True when fewer than 3 adjacent cells exist and the polygon quantities
    are then omitted.
    """
    mesh = geom.mesh
    b = mesh.blocks[block_id]
    cells = b.vertex_cells[vertex_local_id]
    cells = cells[cells >= 0] + mesh.cell_offset[block_id]
    if len(cells) < 3:
        return {"cells": cells, "boundary": True}
    vpos = geom.V[mesh.vert_offset[block_id] + vertex_local_id]
    rel = b.wrap_disp(geom.cell_centroid[cells] - vpos)
    poly = vpos + rel
    x, y = poly[:, 0], poly[:, 1]
    xr, yr = np.roll(x, -1), np.roll(y, -1)
    cross = x * yr - xr * y
    area = 0.5 * cross.sum()
    if area <= 0.0:
        raise GeometryError("degenerate dual cell at vertex %d of block %d"
                            % (vertex_local_id, block_id))
    cx = ((x + xr) * cross).sum() / (6.0 * area)
    cy = ((y + yr) * cross).sum() / (6.0 * area)
    return {"cells": cells, "boundary": False, "polygon": poly,
            "centroid": np.array([cx, cy]), "h": np.sqrt(area)}
