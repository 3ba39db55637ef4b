"""Numerically hot kernels with optional numba acceleration.

Every kernel ships a pure numpy implementation and, when numba is
importable and not disabled through the OVERSETFV_NO_NUMBA environment
variable, a compiled twin. The active implementation is selected once at
import time; benchmarks/kernel_bench.py compares the two paths.
"""

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:
    njit = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("OVERSETFV_NO_NUMBA", "0") != "1"


def _points_in_polygon_numpy(points, poly, tol):
    """Test points against a closed polygon, boundary band counts as inside."""
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    ax = poly[:, 0][None, :]
    ay = poly[:, 1][None, :]
    bx = np.roll(poly[:, 0], -1)[None, :]
    by = np.roll(poly[:, 1], -1)[None, :]

    ex = bx - ax
    ey = by - ay
    seg2 = ex * ex + ey * ey
    seg2 = np.where(seg2 > 0.0, seg2, 1.0)
    t = ((px - ax) * ex + (py - ay) * ey) / seg2
    t = np.clip(t, 0.0, 1.0)
    dx = px - (ax + t * ex)
    dy = py - (ay + t * ey)
    on_boundary = (dx * dx + dy * dy <= tol * tol).any(axis=1)

    cond = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = ax + (py - ay) * ex / np.where(ey != 0.0, ey, 1.0)
    crossings = (cond & (px < xcross)).sum(axis=1)
    return (crossings % 2 == 1) | on_boundary


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _points_in_polygon_numba(points, poly, tol):
        n = points.shape[0]
        m = poly.shape[0]
        out = np.zeros(n, dtype=np.bool_)
        tol2 = tol * tol
        for k in range(n):
            px = points[k, 0]
            py = points[k, 1]
            inside = False
            on = False
            for e in range(m):
                ax = poly[e, 0]
                ay = poly[e, 1]
                bx = poly[(e + 1) % m, 0]
                by = poly[(e + 1) % m, 1]
                ex = bx - ax
                ey = by - ay
                seg2 = ex * ex + ey * ey
                if seg2 > 0.0:
                    t = ((px - ax) * ex + (py - ay) * ey) / seg2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                dx = px - (ax + t * ex)
                dy = py - (ay + t * ey)
                if dx * dx + dy * dy <= tol2:
                    on = True
                    break
                if (ay > py) != (by > py):
                    xc = ax + (py - ay) * ex / ey
                    if px < xc:
                        inside = not inside
            out[k] = inside or on
        return out


def points_in_polygon(points, poly, tol=1e-12):
    """Return a boolean mask of points inside or on a simple polygon."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    poly = np.ascontiguousarray(poly, dtype=np.float64)
    if points.size == 0:
        return np.zeros(0, dtype=bool)
    if USE_NUMBA:
        return _points_in_polygon_numba(points, poly, tol)
    return _points_in_polygon_numpy(points, poly, tol)


def _rusanov_numpy(uL, vL, uR, vR, wx, wy, nx, ny, elen):
    """Rusanov flux of u otimes (u - w) projected on edge normals."""
    qnL = (uL - wx) * nx + (vL - wy) * ny
    qnR = (uR - wx) * nx + (vR - wy) * ny
    smax = np.maximum(np.abs(2.0 * qnL), np.abs(2.0 * qnR))
    fu = 0.5 * (uL * qnL + uR * qnR) - 0.5 * smax * (uR - uL)
    fv = 0.5 * (vL * qnL + vR * qnR) - 0.5 * smax * (vR - vL)
    return fu * elen, fv * elen, smax


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _rusanov_numba(uL, vL, uR, vR, wx, wy, nx, ny, elen):
        n = uL.shape[0]
        fu = np.empty(n)
        fv = np.empty(n)
        smax = np.empty(n)
        for e in range(n):
            qnL = (uL[e] - wx[e]) * nx[e] + (vL[e] - wy[e]) * ny[e]
            qnR = (uR[e] - wx[e]) * nx[e] + (vR[e] - wy[e]) * ny[e]
            s = max(abs(2.0 * qnL), abs(2.0 * qnR))
            fu[e] = (0.5 * (uL[e] * qnL + uR[e] * qnR) - 0.5 * s * (uR[e] - uL[e])) * elen[e]
            fv[e] = (0.5 * (vL[e] * qnL + vR[e] * qnR) - 0.5 * s * (vR[e] - vL[e])) * elen[e]
            smax[e] = s
        return fu, fv, smax


def rusanov_edge_flux(uL, vL, uR, vR, wx, wy, nx, ny, elen):
    """Evaluate the Rusanov convective flux on a batch of edges."""
    if USE_NUMBA:
        return _rusanov_numba(uL, vL, uR, vR, wx, wy, nx, ny, elen)
    return _rusanov_numpy(uL, vL, uR, vR, wx, wy, nx, ny, elen)
