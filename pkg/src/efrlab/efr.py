"""Filter and relax steps.

The differential filter solves

    (I - 2 delta^2 Lap - gamma grad div) filtered = vel

with the Dirichlet values of ``vel`` kept on fixed faces and a zero normal
derivative at the outflow.  Relaxation blends ``vel`` and ``filtered``.

On periodic grids the filter is diagonal in Fourier space and is applied
exactly with FFTs (continuous Helmholtz symbol; the grad-div part uses the
symbols of the discrete divergence).  On walled grids the mass-weighted
system is symmetric positive definite, also with ``gamma > 0``, and is
solved with Jacobi-preconditioned CG.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, InvalidSpecError
from .evolve import FlowConfig, evolve_step
from .fields import State, VectorField
from .grid import Grid
from .linsolve import DEFAULT_RTOL, default_maxiter, jacobi, pcg
from .stencils import operators


@dataclass(frozen=True)
class EfrParams:
    """Filter radius ``delta`` and relaxation weight ``chi``."""

    delta: float
    chi: float

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta >= 0):
            raise DomainError(f"filter radius must be >= 0, got {self.delta}")
        validate_chi(self.chi)


@dataclass(frozen=True)
class FilterConfig:
    """Grad-div coefficient and linear-solver controls of the filter."""

    grad_div_gamma: float = 0.0
    rtol: float = DEFAULT_RTOL
    maxiter: int | None = None

    def __post_init__(self):
        if not (np.isfinite(self.grad_div_gamma) and self.grad_div_gamma >= 0):
            raise InvalidSpecError("grad-div coefficient must be >= 0")


def validate_chi(chi: float) -> None:
    if not (np.isfinite(chi) and 0.0 <= chi <= 1.0):
        raise DomainError(f"relaxation parameter must lie in [0, 1], got {chi}")


def _spectral_filter(vel: VectorField, delta: float, gamma: float) -> VectorField:
    g = vel.grid
    nx, ny = g.nx, g.ny
    kx = 2 * np.pi * np.fft.fftfreq(nx, d=g.dx)[:, None]
    ky = 2 * np.pi * np.fft.rfftfreq(ny, d=g.dy)[None, :]
    a = 1.0 + 2.0 * delta ** 2 * (kx ** 2 + ky ** 2)
    uh = np.fft.rfft2(vel.u)
    vh = np.fft.rfft2(vel.v)
    if gamma > 0:
        # discrete divergence symbols of the forward face differences
        sx = (np.exp(2j * np.pi * np.fft.fftfreq(nx))[:, None] - 1.0) / g.dx
        sy = (np.exp(2j * np.pi * np.fft.rfftfreq(ny))[None, :] - 1.0) / g.dy
        div = sx * uh + sy * vh
        c = gamma * div / (a + gamma * (np.abs(sx) ** 2 + np.abs(sy) ** 2))
        uh = uh - np.conj(sx) * c
        vh = vh - np.conj(sy) * c
    u = np.fft.irfft2(uh / a, s=(nx, ny))
    v = np.fft.irfft2(vh / a, s=(nx, ny))
    return VectorField(g, u, v)


def filter_matrix(grid: Grid, delta: float, gamma: float):
    """Mass-weighted SPD filter matrix and its fixed-value coupling.

    Returns ``(A, B)`` such that the filtered unknowns solve
    ``A x = M vel + B g`` with ``g`` the full vector of fixed values.
    """
    ops = operators(grid)
    M = sp.diags(ops.mass)
    c = 2.0 * delta ** 2
    A = M - c * (M @ ops.L)
    B = c * (M @ ops.BL)
    if gamma > 0:
        A = A + gamma * (ops.D.T @ ops.D)
        B = B - gamma * (ops.D.T @ ops.Dfix)
    return A.tocsr(), B.tocsr()


def differential_filter(vel: VectorField, delta: float, fc: FilterConfig | None = None,
                        grid: Grid | None = None, bc: VectorField | None = None) -> VectorField:
    """Apply the differential filter with radius ``delta``.

    Parameters
    ----------
    vel : VectorField
        Field to filter.
    delta : float
        Filter radius (``>= 0``).
    fc : FilterConfig, optional
        Grad-div coefficient and solver controls.
    grid : Grid, optional
        Defaults to ``vel.grid``.
    bc : VectorField, optional
        Source of Dirichlet values on fixed faces; defaults to ``vel`` itself.

    Raises
    ------
    SolverError
        CG did not reach the tolerance.
    """
    fc = fc or FilterConfig()
    grid = grid or vel.grid
    if not (np.isfinite(delta) and delta >= 0):
        raise DomainError(f"filter radius must be >= 0, got {delta}")
    gamma = fc.grad_div_gamma
    if delta == 0 and gamma == 0:
        return vel.copy()
    if grid.periodic:
        return _spectral_filter(vel, delta, gamma)
    bc = bc or vel
    ops = operators(grid)
    A, B = filter_matrix(grid, delta, gamma)
    x0 = ops.gather(vel.u, vel.v)
    rhs = ops.mass * x0 + B @ ops.full_vector(bc.u, bc.v)
    maxiter = fc.maxiter or default_maxiter(grid)
    x = pcg(A, rhs, x0=x0, M=jacobi(A), rtol=fc.rtol, maxiter=maxiter, what="filter solve")
    u, v = ops.scatter(x, bc.u, bc.v)
    return VectorField(grid, u, v)


def relax(vel: VectorField, filtered: VectorField, chi: float) -> VectorField:
    """Convex combination ``(1 - chi) vel + chi filtered``.

    ``chi = 0`` returns an exact copy of ``vel`` and ``chi = 1`` of ``filtered``.

    Raises
    ------
    DomainError
        ``chi`` outside ``[0, 1]``.
    """
    validate_chi(chi)
    if vel.grid is not filtered.grid:
        raise ValueError("relax needs fields on the same grid")
    if chi == 0:
        return vel.copy()
    if chi == 1:
        return filtered.copy()
    return VectorField(vel.grid, (1.0 - chi) * vel.u + chi * filtered.u,
                       (1.0 - chi) * vel.v + chi * filtered.v)


def filter_relax(evolved: State, params: EfrParams, fc: FilterConfig | None = None) -> State:
    """Steps two and three applied to an evolved state; pressure passes through."""
    if params.chi == 0:
        return State(evolved.velocity.copy(), evolved.pressure, evolved.time)
    filtered = differential_filter(evolved.velocity, params.delta, fc)
    return State(relax(evolved.velocity, filtered, params.chi), evolved.pressure, evolved.time)


def efr_step(prev: State, params: EfrParams, cfg: FlowConfig, fc: FilterConfig | None,
             grid: Grid) -> State:
    """Evolve, filter (skipped when ``chi = 0``) and relax."""
    return filter_relax(evolve_step(prev, cfg, grid), params, fc)
