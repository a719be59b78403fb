"""Field containers and the discrete operators and norms built on them.

Fields store full staggered arrays (see :mod:`efrlab.grid`); solid cells and
fixed faces hold their boundary values.  Norms use midpoint quadrature with
half weights on faces lying on a non-periodic domain boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .stencils import advecting_velocity, operators


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell-centered scalar (pressure)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(f"scalar field shape {self.values.shape} does not match grid")

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros((grid.nx, grid.ny)))

    def dofs(self) -> np.ndarray:
        """Values at fluid cells only."""
        return self.values[self.grid.fluid]

    def __add__(self, other):
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, a):
        return ScalarField(self.grid, a * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField:
    """Staggered velocity: ``u`` on x-faces, ``v`` on y-faces."""

    grid: Grid
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.grid.u_shape or self.v.shape != self.grid.v_shape:
            raise ValueError(
                f"vector field shapes {self.u.shape}, {self.v.shape} do not match grid "
                f"{self.grid.u_shape}, {self.grid.v_shape}")

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.u_shape), np.zeros(grid.v_shape))

    @classmethod
    def from_functions(cls, grid: Grid, fu, fv) -> "VectorField":
        """Sample ``fu(x, y)`` at x-faces and ``fv(x, y)`` at y-faces."""
        xu, yu = grid.u_coords()
        xv, yv = grid.v_coords()
        u = np.broadcast_to(np.asarray(fu(xu, yu), dtype=float), grid.u_shape).copy()
        v = np.broadcast_to(np.asarray(fv(xv, yv), dtype=float), grid.v_shape).copy()
        return cls(grid, u, v)

    def dofs(self) -> np.ndarray:
        """Values at velocity unknowns, ``[u..., v...]``."""
        return np.concatenate([self.u[self.grid.u_active], self.v[self.grid.v_active]])

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.u.copy(), self.v.copy())

    def __add__(self, other):
        return VectorField(self.grid, self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return VectorField(self.grid, self.u - other.u, self.v - other.v)

    def __mul__(self, a):
        return VectorField(self.grid, a * self.u, a * self.v)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class State:
    """Velocity and pressure at one time instant."""

    velocity: VectorField
    pressure: ScalarField
    time: float = 0.0

    def __post_init__(self):
        if self.velocity.grid is not self.pressure.grid:
            raise ValueError("velocity and pressure live on different grids")
        if self.time < 0:
            raise ValueError("state time must be nonnegative")

    @property
    def grid(self) -> Grid:
        return self.velocity.grid

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0) -> "State":
        return cls(VectorField.zeros(grid), ScalarField.zeros(grid), time)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.velocity.u).all() and np.isfinite(self.velocity.v).all()
                    and np.isfinite(self.pressure.values).all())


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def l2_norm_sq(f) -> float:
    """Squared discrete L2 norm, ``sum(value**2 * weight)``."""
    g = f.grid
    if isinstance(f, ScalarField):
        return float(np.sum(f.values ** 2 * g.p_weight))
    return float(np.sum(f.u ** 2 * g.u_weight) + np.sum(f.v ** 2 * g.v_weight))


def _cell_derivative(c: np.ndarray, h: float, axis: int, periodic: bool, fluid: np.ndarray):
    """Derivative of a cell-centered array along ``axis``.

    Central differences where both neighbours are fluid cells, one-sided
    where only one is, zero where neither is.
    """
    if periodic:
        return (np.roll(c, -1, axis) - np.roll(c, 1, axis)) / (2 * h)
    cp = np.moveaxis(c, axis, 0)
    fl = np.moveaxis(fluid, axis, 0)
    out = np.zeros_like(cp)
    has_lo = np.zeros_like(fl)
    has_hi = np.zeros_like(fl)
    has_lo[1:] = fl[:-1]
    has_hi[:-1] = fl[1:]
    lo = np.zeros_like(cp)
    hi = np.zeros_like(cp)
    lo[1:] = cp[:-1]
    hi[:-1] = cp[1:]
    both = has_lo & has_hi
    out[both] = (hi[both] - lo[both]) / (2 * h)
    fwd = has_hi & ~has_lo
    out[fwd] = (hi[fwd] - cp[fwd]) / h
    bwd = has_lo & ~has_hi
    out[bwd] = (cp[bwd] - lo[bwd]) / h
    return np.moveaxis(out, 0, axis)


def cell_gradient(f: VectorField):
    """Velocity gradient at cell centers.

    Returns
    -------
    du_dx, du_dy, dv_dx, dv_dy : ndarray
        ``(nx, ny)`` arrays, zero on solid cells.  Normal derivatives come
        straight from face differences; tangential ones from central
        differences of cell-averaged components.
    """
    g = f.grid
    u, v = f.u, f.v
    if g.periodic:
        u_e, v_n = np.roll(u, -1, 0), np.roll(v, -1, 1)
    else:
        u, u_e = u[:-1], u[1:]
        v, v_n = v[:, :-1], v[:, 1:]
    du_dx = (u_e - u) / g.dx
    dv_dy = (v_n - v) / g.dy
    uc = 0.5 * (u + u_e)
    vc = 0.5 * (v + v_n)
    fluid = g.fluid
    du_dy = _cell_derivative(uc, g.dy, 1, g.periodic, fluid)
    dv_dx = _cell_derivative(vc, g.dx, 0, g.periodic, fluid)
    out = []
    for a in (du_dx, du_dy, dv_dx, dv_dy):
        out.append(np.where(fluid, a, 0.0))
    return tuple(out)


def h1_seminorm_sq(f: VectorField) -> float:
    """Squared H1 seminorm, ``sum over fluid cells of |grad u|^2 * area``."""
    grads = cell_gradient(f)
    return float(sum(np.sum(a ** 2) for a in grads) * f.grid.cell_area)


def h1_norm_sq(f: VectorField) -> float:
    return l2_norm_sq(f) + h1_seminorm_sq(f)


def divergence(f: VectorField) -> ScalarField:
    """Cell-centered divergence from face differences (zero on solid cells)."""
    g = f.grid
    if g.periodic:
        d = (np.roll(f.u, -1, 0) - f.u) / g.dx + (np.roll(f.v, -1, 1) - f.v) / g.dy
    else:
        d = (f.u[1:] - f.u[:-1]) / g.dx + (f.v[:, 1:] - f.v[:, :-1]) / g.dy
    return ScalarField(g, np.where(g.fluid, d, 0.0))


def avg_abs_divergence(f: VectorField) -> float:
    """Mean of ``|div u|`` over fluid cells."""
    return float(np.mean(np.abs(divergence(f).dofs())))


# ---------------------------------------------------------------------------
# plumbing operators
# ---------------------------------------------------------------------------

def gradient(p: ScalarField) -> VectorField:
    """Discrete pressure gradient at velocity unknowns (zero at fixed faces).

    This is the negative adjoint of :func:`divergence`, so ``divergence(gradient(p))``
    is the 5-point Laplacian with the grid's pressure boundary conditions.
    """
    ops = operators(p.grid)
    x = ops.G @ ops.gather_p(p.values)
    u, v = ops.scatter(x, np.zeros(p.grid.u_shape), np.zeros(p.grid.v_shape))
    return VectorField(p.grid, u, v)


def laplacian(f: VectorField) -> VectorField:
    """Vector Laplacian at unknowns using the grid's boundary rules; zero at fixed faces."""
    g = f.grid
    ops = operators(g)
    y = ops.L @ ops.gather(f.u, f.v) + ops.BL @ ops.full_vector(f.u, f.v)
    u, v = ops.scatter(y, np.zeros(g.u_shape), np.zeros(g.v_shape))
    return VectorField(g, u, v)


def advection(f: VectorField, a: VectorField | None = None, upwind: bool = False) -> VectorField:
    """Advection term ``(a . grad) f`` at unknowns; ``a`` defaults to ``f``."""
    g = f.grid
    a = f if a is None else a
    ops = operators(g)
    ua, va_u, ua_v, va = advecting_velocity(g, a.u, a.v)
    out = []
    for comp, arr, ax, ay in (("u", f.u, ua, va_u), ("v", f.v, ua_v, va)):
        c = ops.cu if comp == "u" else ops.cv
        C, Cf = ops.advection_matrices(comp, ax.ravel()[c.flat], ay.ravel()[c.flat], upwind)
        out.append(C @ arr.ravel()[c.flat] + Cf @ arr.ravel())
    u, v = ops.scatter(np.concatenate(out), np.zeros(g.u_shape), np.zeros(g.v_shape))
    return VectorField(g, u, v)


def axpy(a: float, x, y):
    """Return ``a*x + y`` for two fields of the same kind."""
    return x * a + y


def field_max(f) -> float:
    if isinstance(f, ScalarField):
        return float(f.values[f.grid.fluid].max())
    return float(max(f.u.max(), f.v.max()))


def field_min(f) -> float:
    if isinstance(f, ScalarField):
        return float(f.values[f.grid.fluid].min())
    return float(min(f.u.min(), f.v.min()))


def max_abs(f) -> float:
    if isinstance(f, ScalarField):
        return float(np.abs(f.values).max())
    return float(max(np.abs(f.u).max(), np.abs(f.v).max()))
