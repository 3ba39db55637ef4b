"""Linear system assembly and solution for the implicit substeps.

Momentum systems are solved iteratively with a preconditioned BiCGSTAB and
an automatic sparse-direct fallback. The projection system is solved
iteratively on single-partition meshes and through a bordered direct
factorization on composite meshes; with no outlet to anchor the pressure
level, one field cell is pinned to its transported value.
"""

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, bicgstab, spilu, splu

RTOL = 1e-10
MAXITER = 2000


class SolverError(Exception):
    """Raised when no solution path reaches the requested tolerance."""


class SolverReport:
    """Outcome of one linear solve.

    `defect` is the incompatible share of the right-hand side expressed as
    a full-length vector: the exact residual a least-squares solution of a
    singular system leaves behind. It is None when the system was regular
    or the right-hand side fully reachable.
    """

    __slots__ = ("method", "iterations", "residual", "defect")

    def __init__(self, method, iterations, residual, defect=None):
        self.method = method
        self.iterations = iterations
        self.residual = residual
        self.defect = defect

    def __repr__(self):
        return ("SolverReport(method=%r, iterations=%d, residual=%.3e)"
                % (self.method, self.iterations, self.residual))


def _preconditioner(A, kind, diag=None):
    if kind == "none" or kind is None:
        return None
    if kind == "jacobi":
        d = (A.diagonal() if diag is None else diag).copy()
        d[d == 0.0] = 1.0
        inv = 1.0 / d
        return LinearOperator(A.shape, matvec=lambda x: inv * x)
    if kind == "ilu":
        ilu = spilu(A.tocsc(), drop_tol=1e-5, fill_factor=10)
        return LinearOperator(A.shape, matvec=ilu.solve)
    raise ValueError("unknown preconditioner %r" % kind)


def _floor(anorm, xnorm, bnorm):
    # smallest residual a backward-stable solve can be expected to reach
    return 100.0 * np.finfo(float).eps * (anorm * xnorm + bnorm)


def solve(A, b, x0=None, precond="jacobi", rtol=RTOL, maxiter=MAXITER,
          fallback=True, op=None, diag=None):
    """Solve A x = b iteratively, falling back to a direct factorization.

    The convergence claim of the iterative solver is never trusted: the
    residual is recomputed from the returned vector, and the direct path
    is taken whenever it misses the tolerance. A solve that stagnates at
    the round-off floor of the problem is accepted: no method can push
    the residual below machine precision scaled by the operator and
    solution norms. `op` substitutes a matvec closure for the system,
    with A supplying the sparsity used by the preconditioner; such
    implicit systems and systems that must never be factorized directly
    pass fallback=False.
    """
    A = A.tocsr()
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b), SolverReport("trivial", 0, 0.0)
    apply_op = (lambda v: A @ v) if op is None else op
    sys_op = A if op is None else LinearOperator(A.shape, matvec=op)
    anorm = np.abs(A).sum(axis=1).max()
    x0n = np.linalg.norm(x0) if x0 is not None else 0.0
    target = max(rtol * nb, _floor(anorm, x0n, nb))
    count = [0]

    def cb(_):
        count[0] += 1

    M = _preconditioner(A, precond, diag)
    x, _ = bicgstab(sys_op, b, x0=x0, rtol=0.0, atol=target,
                    maxiter=maxiter, M=M, callback=cb)
    res = np.linalg.norm(apply_op(x) - b)
    accept = max(rtol * nb, _floor(anorm, np.linalg.norm(x), nb))
    if res <= 10.0 * accept:
        return x, SolverReport("bicgstab", count[0], res / nb)
    if not fallback:
        raise SolverError("no convergence after %d iterations, residual %.3e"
                          % (count[0], res / nb))
    lu = splu(A.tocsc())
    x = lu.solve(b)
    res = np.linalg.norm(A @ x - b) / nb
    if not np.isfinite(res) or res > 1e-6:
        raise SolverError("direct fallback residual %.3e" % res)
    return x, SolverReport("splu", 1, res)


class SparseSystem:
    """A square sparse operator with an optional cached factorization."""

    def __init__(self, A):
        self.A = A.tocsr()
        self._lu = None

    def factor(self):
        if self._lu is None:
            self._lu = splu(self.A.tocsc())
        return self._lu

    def solve_direct(self, b):
        x = self.factor().solve(b)
        nb = np.linalg.norm(b)
        res = np.linalg.norm(self.A @ x - b) / nb if nb else 0.0
        return x, SolverReport("splu", 1, res)

    def solve_iterative(self, b, x0=None, precond="jacobi"):
        return solve(self.A, b, x0=x0, precond=precond)


def assemble_momentum(geom, state, Kmat, frows, hrows, coef):
    """Helmholtz-type system of one implicit stage.

    Field rows carry cell volume minus the scaled viscous matrix, fringe
    rows carry the donor extrapolation, hole rows the identity. The same
    matrix serves both velocity components.
    """
    vol = np.where(state.field_mask, geom.cell_area, 0.0)
    A = sparse.diags(vol) - coef * Kmat + frows + hrows
    return SparseSystem(A)


def _null_modes(geom, state, A):
    """Verified exact null modes of the ungauged projection operator.

    The operator always annihilates the active-region constant. On a
    uniform fully periodic block the least-squares gradient additionally
    kills the three grid-parity modes and, when the side length divides by
    three, a quartet of diagonal modes at two thirds of the Nyquist
    wavenumber. Candidates are generated from the grid indices and kept
    only when the operator verifiably annihilates them, so any
    irregularity prunes the list down to the modes actually present.
    """
    mesh = geom.mesh
    cands = [np.where(state.active, 1.0, 0.0)]
    for k, blk in enumerate(mesh.blocks):
        if not (blk.periodic_i and blk.periodic_j):
            continue
        cells = mesh.block_cells(k)
        i = (cells - mesh.cell_offset[k]) % blk.ni
        j = (cells - mesh.cell_offset[k]) // blk.ni
        local = []
        if blk.ni % 2 == 0 and blk.nj % 2 == 0:
            local += [(-1.0) ** i, (-1.0) ** j, (-1.0) ** (i + j)]
        if blk.ni % 3 == 0 and blk.nj % 3 == 0:
            for s in (i + j, i - j):
                ang = 2.0 * np.pi * s / 3.0
                local += [np.cos(ang), np.sin(ang)]
        for vec in local:
            full = np.zeros(mesh.ncell)
            full[cells] = vec
            cands.append(full)
    anorm = np.abs(A).sum(axis=1).max()
    kept = []
    for c in cands:
        cn = np.linalg.norm(c)
        if cn > 0.0 and np.linalg.norm(A @ c) <= 1e-10 * anorm * cn:
            kept.append(c / cn)
    if not kept:
        return None
    return np.linalg.qr(np.stack(kept, axis=1))[0]


class PressureSystem:
    """Projection system with the all-Neumann gauge pinned to one cell.

    With an outlet present the operator is nonsingular as assembled.
    Otherwise the operator annihilates the active-region constant plus, on
    uniform periodic regions, a handful of grid-scale modes, and the
    right-hand side can carry an incompatible share, which stalls or
    derails every plain iteration. Two routes complete the rank:

    Single-partition systems keep the iterative route: the verified null
    modes regularize the operator, the returned field is stripped of every
    such mode, and the irreducible part of the right-hand side lands in
    the null directions where it belongs.

    Composite systems mix surface-integral rows with extrapolation rows,
    which defeats diagonally preconditioned Krylov iterations outright, so
    they take a bordered direct factorization instead: the operator is
    extended with the null modes as Lagrange columns and constraints,
    which makes it regular, keeps the solution orthogonal to the modes,
    and returns the multiplier — the exact least-squares residual the
    mass defect of the overlap leaves behind, reported as the defect.

    Either way the gauge is applied afterwards by shifting the active
    region level so the lowest-numbered field cell keeps its value from
    the supplied guess, which is deterministic and leaves every gradient
    untouched.
    """

    def __init__(self, geom, state, Khat, frows, hrows, has_outlet):
        A = (Khat + frows + hrows).tocsr()
        self.system = SparseSystem(A)
        self.composite = frows.nnz > 0
        self.pin = None if has_outlet else int(state.field_cells[0])
        self.modes = None
        self._bordered = None
        if self.pin is not None:
            self.modes = _null_modes(geom, state, A)
            self.active = state.active
            diag = A.diagonal().copy()
            # push the completed rank to the same side of the spectrum as
            # the bulk, keeping the operator definite for the iteration
            side = -1.0 if np.median(diag[state.field_mask]) < 0.0 else 1.0
            self.scale = side * np.abs(A).sum(axis=1).max()
            if self.modes is not None:
                diag += self.scale * (self.modes ** 2).sum(axis=1)
            self.diag = diag

    def _regularized(self, v):
        A, W = self.system.A, self.modes
        return A @ v + self.scale * (W @ (W.T @ v))

    def _bordered_system(self):
        if self._bordered is None:
            W = sparse.csr_matrix(self.scale * self.modes)
            self._bordered = SparseSystem(
                sparse.bmat([[self.system.A, W], [W.T, None]]))
        return self._bordered

    def solve(self, rhs, guess, precond="jacobi"):
        b = np.asarray(rhs, dtype=float)
        if self.pin is None:
            if self.composite:
                return self.system.solve_direct(b)
            return solve(self.system.A, b, x0=guess, precond=precond)
        g = np.asarray(guess, dtype=float)
        # start from zero so the iteration path is bitwise independent of
        # the guess; the guess then enters only through the level shift
        # below, whose gradient vanishes identically
        if self.modes is None:
            x, rep = solve(self.system.A, b, precond=precond,
                           fallback=False)
        elif self.composite:
            n = len(b)
            k = self.modes.shape[1]
            xx = self._bordered_system().factor().solve(
                np.concatenate([b, np.zeros(k)]))
            x, lam = xx[:n], xx[n:]
            defect = (self.scale * self.modes) @ lam
            nb = np.linalg.norm(b)
            res = np.linalg.norm(self.system.A @ x + defect - b)
            rep = SolverReport("splu", 1, res / nb if nb else 0.0, defect)
        else:
            x, rep = solve(self.system.A, b, precond="jacobi",
                           fallback=False, op=self._regularized,
                           diag=self.diag)
            # strip the null-mode share of the solution: the composed
            # operator cannot see it, but the raw gradient used in the
            # velocity correction can, and any leftover would feed
            # grid-scale velocity back into the next step
            x = x - self.modes @ (self.modes.T @ x)
        x = x + np.where(self.active, g[self.pin] - x[self.pin], 0.0)
        return x, rep
