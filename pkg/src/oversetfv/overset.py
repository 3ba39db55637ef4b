"""Overset hole cutting, fringe layering, interpolation stencils, and donors.

Cells are classified per partition (background block vs foreground blocks)
into field cells that carry the discretization, fringe cells that couple the
partitions through least-squares extrapolation, and hole cells that are
excluded. Fringe bands are a fixed number of layers deep on both sides of
the overlap so that reconstruction stencils never reach excluded cells.
"""

import numpy as np
from scipy.spatial import cKDTree

from .kernels import points_in_polygon
from .mesh import INTERFACE

FIELD = 0
FRINGE = 1
HOLE = 2

NLAYERS = 5

_CLASS_TOKEN = {FIELD: "F", FRINGE: "R", HOLE: "H"}


class ConfigurationError(Exception):
    """Raised when block placement produces an unusable overset layout."""


class StencilDeficiencyError(Exception):
    """Raised when a cell cannot gather enough stencil members."""


class Stencil:
    """Reconstruction stencil of one cell: member cell ids excluding the owner."""

    __slots__ = ("members", "def21", "radius", "minimal")

    def __init__(self, members, def21, radius, minimal):
        self.members = np.asarray(members, dtype=np.int64)
        self.def21 = np.asarray(def21, dtype=np.int64)
        self.radius = float(radius)
        self.minimal = bool(minimal)


class OversetState:
    """Classification, stencils, and donor assignment for one configuration."""

    def __init__(self, cell_class, fringe_ring, stencils, donors):
        self.cell_class = cell_class
        self.fringe_ring = fringe_ring
        self.stencils = stencils
        self.donors = donors
        self.active = cell_class != HOLE
        self.field_mask = cell_class == FIELD
        self.fringe_mask = cell_class == FRINGE
        self.field_cells = np.nonzero(self.field_mask)[0]
        self.fringe_cells = np.nonzero(self.fringe_mask)[0]
        self.hole_cells = np.nonzero(cell_class == HOLE)[0]

    def class_token(self, cid):
        """Single-letter class token for snapshot files."""
        return _CLASS_TOKEN[int(self.cell_class[cid])]


def block_outline(mesh, geom, k):
    """Closed outer boundary polygon of block k in physical coordinates.

    For a radially bounded block with a periodic angular direction this is
    the outermost vertex ring; its interior then covers the enclosed disc.
    """
    b = mesh.blocks[k]
    vo = mesh.vert_offset[k]
    if b.periodic_i and not b.periodic_j and np.allclose(b.period_vec_i, 0.0):
        # physically closed angular direction: the outermost vertex ring
        i = np.arange(b.ni)
        vid = b.vertex_id(i, np.full(b.ni, b.nj))
        off = b.vertex_offset(i, np.full(b.ni, b.nj))
        return geom.V[vo + vid] + off
    if b.periodic_i or b.periodic_j:
        # translationally periodic block: axis-aligned bounding rectangle
        # extended by one period in each periodic direction
        Vb = geom.V[vo:vo + b.nvert]
        x0, y0 = Vb.min(axis=0)
        x1, y1 = Vb.max(axis=0)
        if b.periodic_i:
            x1 = x0 + abs(b.period_vec_i[0])
        if b.periodic_j:
            y1 = y0 + abs(b.period_vec_j[1])
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    ni, nj = b.ni, b.nj
    path_i = np.concatenate([np.arange(ni + 1), np.full(nj - 1, ni),
                             np.arange(ni + 1)[::-1], np.zeros(nj - 1, dtype=int)])
    path_j = np.concatenate([np.zeros(ni + 1, dtype=int), np.arange(1, nj),
                             np.full(ni + 1, nj), np.arange(1, nj)[::-1]])
    vid = b.vertex_id(path_i, path_j)
    off = b.vertex_offset(path_i, path_j)
    return geom.V[vo + vid] + off


def field_outline(mesh, geom, k, n_layers=NLAYERS):
    """Closed boundary polygon of block k's field region.

    Interface sides donate their n_layers outermost cell layers as fringe,
    so the outline retreats that many cells from each such side; physical
    sides keep the block's own boundary. Hole cutting keys on this outline:
    a cell of the other partition buried under it can rely on finding donor
    cells that actually carry the discretization.
    """
    b = mesh.blocks[k]
    vo = mesh.vert_offset[k]
    i0 = n_layers if b.sides.get("imin") == INTERFACE else 0
    i1 = b.ni - (n_layers if b.sides.get("imax") == INTERFACE else 0)
    j0 = n_layers if b.sides.get("jmin") == INTERFACE else 0
    j1 = b.nj - (n_layers if b.sides.get("jmax") == INTERFACE else 0)
    if i1 - i0 <= 0 or j1 - j0 <= 0:
        raise ConfigurationError(
            "block %d has no field cells left inside its fringe bands" % k)
    if b.periodic_i and not b.periodic_j and np.allclose(b.period_vec_i, 0.0):
        # physically closed angular direction: the vertex ring bounding the
        # outermost field layer
        i = np.arange(b.ni)
        vid = b.vertex_id(i, np.full(b.ni, j1))
        off = b.vertex_offset(i, np.full(b.ni, j1))
        return geom.V[vo + vid] + off
    ni, nj = i1 - i0, j1 - j0
    path_i = np.concatenate([np.arange(ni + 1), np.full(nj - 1, ni),
                             np.arange(ni + 1)[::-1], np.zeros(nj - 1, dtype=int)])
    path_j = np.concatenate([np.zeros(ni + 1, dtype=int), np.arange(1, nj),
                             np.full(ni + 1, nj), np.arange(1, nj)[::-1]])
    vid = b.vertex_id(path_i + i0, path_j + j0)
    off = b.vertex_offset(path_i + i0, path_j + j0)
    return geom.V[vo + vid] + off


def _dilate(mask, periodic_i, periodic_j):
    """One ring of 8-neighbor dilation of a (nj, ni) lattice mask."""
    out = mask.copy()
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            m = mask
            if periodic_j:
                m = np.roll(m, dj, axis=0)
            else:
                m = np.zeros_like(mask)
                src = mask[max(0, -dj):mask.shape[0] - max(0, dj), :]
                m[max(0, dj):mask.shape[0] - max(0, -dj), :] = src
            if periodic_i:
                m = np.roll(m, di, axis=1)
            else:
                m2 = np.zeros_like(m)
                src = m[:, max(0, -di):m.shape[1] - max(0, di)]
                m2[:, max(0, di):m.shape[1] - max(0, -di)] = src
                m = m2
            out |= m
    return out


def classify(mesh, geom, n_layers=NLAYERS):
    """Classify every cell as field, fringe, or hole.

    Background cells completely covered by a foreground field outline
    become fringe within n_layers 8-neighbor rings of the uncovered region
    and holes beyond; foreground cells within n_layers index layers of an
    interface side become fringe. Keying the cut on the field outline
    rather than the block outline keeps each partition's fringe band buried
    under the other partition's field region, so every fringe cell finds a
    donor next to it instead of extrapolating from far away.
    """
    nc = mesh.ncell
    cell_class = np.zeros(nc, dtype=np.int8)
    fringe_ring = np.zeros(nc, dtype=np.int8)
    if len(mesh.blocks) == 1:
        return cell_class, fringe_ring

    bg = mesh.blocks[0]
    bg_cells = mesh.block_cells(0)
    bg_outline = block_outline(mesh, geom, 0)

    covered = np.zeros(bg.ncell, dtype=bool)
    for k in range(1, len(mesh.blocks)):
        fgb = mesh.blocks[k]
        vo = mesh.vert_offset[k]
        fg_verts = geom.V[vo:vo + fgb.nvert]
        inside = points_in_polygon(fg_verts, bg_outline)
        if not inside.all():
            raise ConfigurationError(
                "foreground block %d extends outside the background domain" % k)
        outline = field_outline(mesh, geom, k, n_layers)
        pts = np.concatenate([geom.cell_corners[bg_cells].reshape(-1, 2),
                              geom.cell_centroid[bg_cells]], axis=0)
        ins = points_in_polygon(pts, outline)
        corner_in = ins[:bg.ncell * 4].reshape(bg.ncell, 4).all(axis=1)
        covered |= corner_in & ins[bg.ncell * 4:]

    cov2 = covered.reshape(bg.nj, bg.ni)
    uncovered = ~cov2
    ring = np.zeros_like(cov2, dtype=np.int8)
    frontier = uncovered
    reached = uncovered.copy()
    for r in range(1, n_layers + 1):
        grown = _dilate(frontier, bg.periodic_i, bg.periodic_j)
        new = grown & cov2 & ~reached
        ring[new] = r
        reached |= new
        frontier = grown
    bg_class = np.where(cov2, np.where(ring > 0, FRINGE, HOLE), FIELD)
    cell_class[bg_cells] = bg_class.ravel()
    fringe_ring[bg_cells] = ring.ravel()

    for k in range(1, len(mesh.blocks)):
        fgb = mesh.blocks[k]
        cells = mesh.block_cells(k)
        ii = fgb.cell_i.reshape(fgb.nj, fgb.ni)
        jj = fgb.cell_j.reshape(fgb.nj, fgb.ni)
        dist = np.full((fgb.nj, fgb.ni), np.iinfo(np.int32).max, dtype=np.int64)
        if fgb.sides.get("imin") == INTERFACE:
            dist = np.minimum(dist, ii)
        if fgb.sides.get("imax") == INTERFACE:
            dist = np.minimum(dist, fgb.ni - 1 - ii)
        if fgb.sides.get("jmin") == INTERFACE:
            dist = np.minimum(dist, jj)
        if fgb.sides.get("jmax") == INTERFACE:
            dist = np.minimum(dist, fgb.nj - 1 - jj)
        fr = dist < n_layers
        cell_class[cells[fr.ravel()]] = FRINGE
        fringe_ring[cells[fr.ravel()]] = (dist[fr] + 1).astype(np.int8)

    _check_layout(mesh, geom, cell_class)
    return cell_class, fringe_ring


def _check_layout(mesh, geom, cell_class):
    """Validate the classified layout before stencils are built."""
    bg_edges = geom.bedge_block == 0
    hole_on_boundary = cell_class[geom.bedge_cell[bg_edges]] == HOLE
    if np.any(hole_on_boundary):
        raise ConfigurationError(
            "excluded region reaches the outer physical boundary; "
            "the foreground block is too close to it")
    for k, b in enumerate(mesh.blocks):
        cells = mesh.block_cells(k)
        cls = cell_class[cells]
        fld = np.nonzero(cls == FIELD)[0]
        nbrs = b.moore[fld]
        valid = nbrs >= 0
        nb_cls = np.where(valid, cls[np.where(valid, nbrs, 0)], FIELD)
        if np.any(nb_cls == HOLE):
            raise ConfigurationError(
                "field cell with an excluded neighbor in block %d; "
                "fringe band too thin" % k)


def stencil_circle(geom, cid):
    """Radius of the stencil circle: twice the largest center-to-corner distance."""
    d = geom.cell_corners[cid] - geom.cell_centroid[cid]
    return 2.0 * np.sqrt((d * d).sum(axis=-1)).max(axis=-1)


def _stencil_radii(geom):
    d = geom.cell_corners - geom.cell_centroid[:, None, :]
    return 2.0 * np.sqrt((d * d).sum(axis=-1)).max(axis=-1)


def build_stencils(mesh, geom, cell_class):
    """Assemble per-cell reconstruction stencils.

    Every active cell starts from its active vertex-sharing neighbors,
    widened to index radius 2 when fewer than eight of them exist (the
    five-cell stencil of a straight boundary row is rank deficient, and so
    are the corner stencils of fringe bands). Fringe cells additionally take
    active cells of the other partition whose centers fall strictly inside
    the stencil circle and are not interior to any same-partition member.
    """
    nc = mesh.ncell
    active = cell_class != HOLE
    radii = _stencil_radii(geom)
    stencils = [None] * nc

    part_centroids = {}
    part_ids = {}
    for p in (0, 1):
        sel = active & (mesh.cell_partition == p)
        ids = np.nonzero(sel)[0]
        part_ids[p] = ids
        part_centroids[p] = geom.cell_centroid[ids]
    trees = {p: cKDTree(part_centroids[p]) if len(part_ids[p]) else None
             for p in (0, 1)}

    for k, b in enumerate(mesh.blocks):
        co = mesh.cell_offset[k]
        cells = mesh.block_cells(k)
        cls = cell_class[cells]
        for lc in np.nonzero(cls != HOLE)[0]:
            gid = co + lc
            nbrs = b.moore[lc]
            nbrs = nbrs[nbrs >= 0] + co
            def21 = nbrs[active[nbrs]]
            members = def21
            minimal = True
            if len(def21) < 8:
                members = _radius2_members(b, lc, co, active)
                minimal = False
            if cell_class[gid] == FRINGE:
                extra = _cross_partition_members(
                    mesh, geom, gid, members, radii[gid], trees, part_ids)
                members = np.concatenate([members, extra])
            if len(members) < 6:
                raise StencilDeficiencyError(
                    "cell %d has only %d stencil members" % (gid, len(members)))
            stencils[gid] = Stencil(members, def21, radii[gid], minimal)
    return stencils


def _radius2_members(b, lc, co, active):
    """Same-block active cells within Chebyshev index distance 2."""
    i0 = b.cell_i[lc]
    j0 = b.cell_j[lc]
    out = []
    for dj in range(-2, 3):
        for di in range(-2, 3):
            if di == 0 and dj == 0:
                continue
            i, j = i0 + di, j0 + dj
            if not b._valid_cell(np.int64(i), np.int64(j)):
                continue
            g = co + int(b.cell_id(i, j))
            if active[g]:
                out.append(g)
    return np.array(sorted(out), dtype=np.int64)


def _cross_partition_members(mesh, geom, gid, own_members, radius, trees, part_ids):
    """Other-partition active cells strictly inside the stencil circle.

    Candidates whose center lies inside the owner cell or inside any
    same-partition member cell are redundant and dropped.
    """
    other = 1 - int(mesh.cell_partition[gid])
    tree = trees[other]
    if tree is None:
        return np.zeros(0, dtype=np.int64)
    x0 = geom.cell_centroid[gid]
    idx = tree.query_ball_point(x0, radius)
    if not idx:
        return np.zeros(0, dtype=np.int64)
    cand = part_ids[other][np.asarray(idx, dtype=np.int64)]
    d = np.sqrt(((geom.cell_centroid[cand] - x0) ** 2).sum(axis=1))
    cand = cand[d < radius * (1.0 - 1e-14)]
    if not len(cand):
        return np.zeros(0, dtype=np.int64)
    keep = np.ones(len(cand), dtype=bool)
    blockers = np.concatenate([[gid], own_members])
    pts = geom.cell_centroid[cand]
    for bcell in blockers:
        poly = geom.cell_corners[bcell]
        keep &= ~points_in_polygon(pts, poly)
        if not keep.any():
            break
    return np.sort(cand[keep])


def find_donor(mesh, geom, cell_class, cid):
    """Donor of one fringe cell: nearest other-partition field cell center.

    Distance ties resolve to the smallest cell id.
    """
    other = 1 - int(mesh.cell_partition[cid])
    sel = (cell_class == FIELD) & (mesh.cell_partition == other)
    ids = np.nonzero(sel)[0]
    if not len(ids):
        raise ConfigurationError("no donor candidates in partition %d" % other)
    d = np.sqrt(((geom.cell_centroid[ids] - geom.cell_centroid[cid]) ** 2).sum(axis=1))
    dmin = d.min()
    return int(ids[d <= dmin + 1e-12].min())


def _find_donors(mesh, geom, cell_class):
    """Vectorized donor search for all fringe cells."""
    nc = mesh.ncell
    donors = np.full(nc, -1, dtype=np.int64)
    fringe = np.nonzero(cell_class == FRINGE)[0]
    for other in (0, 1):
        sel = (cell_class == FIELD) & (mesh.cell_partition == other)
        ids = np.nonzero(sel)[0]
        recv = fringe[mesh.cell_partition[fringe] == 1 - other]
        if not len(recv):
            continue
        if not len(ids):
            raise ConfigurationError("no donor candidates in partition %d" % other)
        tree = cKDTree(geom.cell_centroid[ids])
        dmin, _ = tree.query(geom.cell_centroid[recv])
        for r, dm in zip(recv, dmin):
            near = tree.query_ball_point(geom.cell_centroid[r], dm + 1e-12)
            donors[r] = ids[np.asarray(near, dtype=np.int64)].min()
    return donors


def reconcile(mesh, geom, n_layers=NLAYERS):
    """Classify, validate, and equip a configuration with stencils and donors."""
    cell_class, fringe_ring = classify(mesh, geom, n_layers)
    stencils = build_stencils(mesh, geom, cell_class)
    donors = _find_donors(mesh, geom, cell_class)
    return OversetState(cell_class, fringe_ring, stencils, donors)


def evaluable_mask(mesh, state):
    """Cells where direct flux evaluation is possible.

    A cell qualifies when it is active, every side neighbor that exists is
    active, and none of its boundary edges lies on an interface side; a
    physical boundary side is served by its condition, an interface side
    has no trace of its own.
    """
    nc = mesh.ncell
    ok = np.zeros(nc, dtype=bool)
    for k, b in enumerate(mesh.blocks):
        co = mesh.cell_offset[k]
        cells = mesh.block_cells(k)
        nbrs = b.side_neighbors
        valid = nbrs >= 0
        act = np.ones(nbrs.shape, dtype=bool)
        act[valid] = state.active[nbrs[valid] + co]
        ok[cells] = state.active[cells] & act.all(axis=1)
        for e in range(len(b.bedge_cell)):
            if b.sides.get(b.side_name(b.bedge_side[e])) == INTERFACE:
                ok[co + b.bedge_cell[e]] = False
    return ok
