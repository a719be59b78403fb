"""Thin wrappers around scipy's Krylov solvers with uniform failure reporting."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError

DEFAULT_RTOL = 1e-10


def default_maxiter(grid) -> int:
    return 10 * grid.nx * grid.ny


def jacobi(A):
    d = A.diagonal()
    return sp.diags(1.0 / d)


def _check(A, b, x, rtol, what):
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(b - A @ x) / bnorm
    # scipy tests the recursively updated residual; allow slack for drift
    if not np.isfinite(res) or res > 10 * rtol:
        raise SolverError(f"{what} did not converge", res)
    return x


def pcg(A, b, x0=None, M=None, rtol=DEFAULT_RTOL, maxiter=None, what="CG solve"):
    """Preconditioned conjugate gradients for symmetric positive definite ``A``."""
    if not np.any(b):
        return np.zeros_like(b)
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    return _check(A, b, x, rtol, what)


def bicgstab(A, b, x0=None, M=None, rtol=DEFAULT_RTOL, maxiter=None, what="BiCGStab solve"):
    """Stabilized biconjugate gradients for nonsymmetric ``A``."""
    if not np.any(b):
        return np.zeros_like(b)
    x, info = spla.bicgstab(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    return _check(A, b, x, rtol, what)


class PoissonSolver:
    """PCG with an algebraic-multigrid preconditioner for the pressure matrix.

    For periodic grids the matrix has the constants as null space; the first
    unknown is pinned to zero, which leaves an SPD system, and callers remove
    the mean afterwards.
    """

    def __init__(self, P, singular: bool):
        import pyamg

        self.singular = singular
        self.A = P[1:, 1:].tocsr() if singular else P.tocsr()
        self.M = pyamg.smoothed_aggregation_solver(self.A).aspreconditioner(cycle="V")

    def solve(self, rhs, rtol=DEFAULT_RTOL, maxiter=None):
        if self.singular:
            rhs = rhs - rhs.mean()
            x = np.zeros_like(rhs)
            x[1:] = pcg(self.A, rhs[1:], M=self.M, rtol=rtol, maxiter=maxiter,
                        what="pressure Poisson solve")
            return x - x.mean()
        return pcg(self.A, rhs, M=self.M, rtol=rtol, maxiter=maxiter, what="pressure Poisson solve")
