"""One BDF1 step of the incompressible Navier-Stokes equations.

The step is a semi-implicit incremental projection:

1. momentum predictor with implicit diffusion and advection linearized about
   the previous velocity, using the previous pressure gradient;
2. pressure-increment Poisson solve enforcing the discrete divergence-free
   constraint in every fluid cell;
3. velocity correction and pressure update.

Inlet and walls carry Dirichlet data; the outflow uses a zero normal velocity
gradient together with zero pressure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import BlowUpError, InvalidSpecError
from .fields import ScalarField, State, VectorField
from .grid import Grid
from .linsolve import DEFAULT_RTOL, bicgstab, default_maxiter, jacobi
from .stencils import advecting_velocity, operators

BLOWUP_THRESHOLD = 1e6


@dataclass(frozen=True)
class FlowConfig:
    """Physical and temporal parameters of a simulation.

    Parameters
    ----------
    nu : float
        Kinematic viscosity.
    dt : float
        Time step.
    t0, T : float
        Time window.
    U, L : float
        Characteristic velocity and length, used for ``Re`` and ``eta``.
    inlet_umax : float
        Peak of the parabolic inlet profile (channel geometries).
    upwind : bool
        Use first-order upwind advection instead of central differences.
    forcing : callable, optional
        ``forcing(x, y, t) -> (fx, fy)`` body force, evaluated at the faces.
    rtol : float
        Relative tolerance of the linear solves.
    """

    nu: float = 1e-4
    dt: float = 0.004
    t0: float = 0.0
    T: float = 4.0
    U: float = 1.0
    L: float = 0.1
    inlet_umax: float = 1.5
    upwind: bool = False
    forcing: Optional[Callable] = field(default=None, compare=False)
    rtol: float = DEFAULT_RTOL

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidSpecError("viscosity must be positive")
        if not self.dt > 0:
            raise InvalidSpecError("time step must be positive")
        if not self.T >= self.t0:
            raise InvalidSpecError("final time must not precede the initial time")
        if not (self.U > 0 and self.L > 0):
            raise InvalidSpecError("characteristic scales must be positive")

    @property
    def Re(self) -> float:
        return self.U * self.L / self.nu

    @property
    def eta(self) -> float:
        """Kolmogorov-type length ``L * Re**(-3/4)``."""
        return self.L * self.Re ** -0.75

    @property
    def n_steps(self) -> int:
        n = (self.T - self.t0) / self.dt
        steps = int(round(n))
        if abs(n - steps) > 1e-9 * max(1.0, n):
            raise InvalidSpecError("time window is not an integer number of steps")
        return steps

    def time(self, n: int) -> float:
        return self.t0 + n * self.dt


def inlet_profile(y, umax: float = 1.5, height: float = 0.41):
    """Parabolic inlet velocity ``(4 umax y (H - y) / H**2, 0)``.

    With the defaults this is ``6/0.41**2 * y * (0.41 - y)``.
    """
    y = np.asarray(y, dtype=float)
    return 4.0 * umax * y * (height - y) / height ** 2, np.zeros_like(y)


def boundary_velocity(grid: Grid, cfg: FlowConfig, t: float) -> VectorField:
    """Dirichlet data at fixed faces (unknown faces are zero)."""
    u = np.zeros(grid.u_shape)
    v = np.zeros(grid.v_shape)
    if not grid.periodic:
        _, yu = grid.u_coords()
        u[0] = inlet_profile(yu[0], cfg.inlet_umax, grid.spec.Ly)[0]
    return VectorField(grid, u, v)


def _check_finite(x: np.ndarray, t: float):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > BLOWUP_THRESHOLD:
        raise BlowUpError(t)


def evolve_step(prev: State, cfg: FlowConfig, grid: Grid) -> State:
    """Advance ``prev`` by one time step of ``cfg.dt``.

    Returns the evolved velocity and the updated pressure at
    ``prev.time + cfg.dt``.

    Raises
    ------
    SolverError
        A linear solve failed to reach ``cfg.rtol``.
    BlowUpError
        The input or the result is non-finite, or the result exceeds the
        blow-up threshold.
    """
    if not prev.is_finite():
        raise BlowUpError(prev.time, "non-finite input state")
    ops = operators(grid)
    dt, nu = cfg.dt, cfg.nu
    t1 = prev.time + dt
    bc = boundary_velocity(grid, cfg, t1)
    g = ops.full_vector(bc.u, bc.v)
    maxiter = default_maxiter(grid)

    un, vn = prev.velocity.u, prev.velocity.v
    xn = ops.gather(un, vn)
    pn = ops.gather_p(prev.pressure.values)
    rhs = xn / dt + ops.G @ (-pn) + nu * (ops.BL @ g)   # -grad p = -G p
    if cfg.forcing is not None:
        xu, yu = grid.u_coords()
        xv, yv = grid.v_coords()
        fu, _ = cfg.forcing(xu, yu, t1)
        _, fv = cfg.forcing(xv, yv, t1)
        rhs += ops.gather(np.broadcast_to(fu, grid.u_shape), np.broadcast_to(fv, grid.v_shape))

    ua, va_u, ua_v, va = advecting_velocity(grid, un, vn)
    xstar = np.empty(ops.n)
    parts = (("u", slice(0, ops.nu), ua, va_u, bc.u, ops.L_blocks[0]),
             ("v", slice(ops.nu, ops.n), ua_v, va, bc.v, ops.L_blocks[1]))
    for comp, sl, ax, ay, fixed, Lc in parts:
        c = ops.cu if comp == "u" else ops.cv
        if c.n == 0:
            continue
        C, Cf = ops.advection_matrices(comp, ax.ravel()[c.flat], ay.ravel()[c.flat], cfg.upwind)
        A = (sp.identity(c.n, format="csr") / dt + C - nu * Lc).tocsr()
        b = rhs[sl] - Cf @ fixed.ravel()
        xstar[sl] = bicgstab(A, b, x0=xn[sl], M=jacobi(A), rtol=cfg.rtol, maxiter=maxiter,
                             what=f"{comp}-momentum solve")

    div_star = ops.D @ xstar + ops.Dfix @ g
    phi = ops.poisson.solve(-div_star / dt, rtol=cfg.rtol, maxiter=maxiter)
    x = xstar - dt * (ops.G @ phi)
    p = pn + phi
    if grid.periodic:
        p -= p.mean()
    _check_finite(x, t1)
    _check_finite(p, t1)
    u, v = ops.scatter(x, bc.u, bc.v)
    return State(VectorField(grid, u, v), ScalarField(grid, ops.scatter_p(p)), t1)


def trial_evolve(prev: State, cfg: FlowConfig, grid: Grid) -> State:
    """Side-effect-free evolve step used for look-ahead pressure evaluation.

    :func:`evolve_step` never mutates its inputs, so this is the same
    computation; it exists to make the intent explicit at call sites.
    """
    return evolve_step(prev, cfg, grid)
