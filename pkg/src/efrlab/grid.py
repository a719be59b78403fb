"""Staggered (MAC) grid descriptors and fine-to-coarse restriction.

Velocity components live on cell faces: ``u`` on faces normal to x and ``v``
on faces normal to y.  Pressure lives at cell centers.  Arrays are stored in
``[i, j]`` order (x index first).

Array shapes
------------
periodic box
    ``u``, ``v`` and ``p`` are all ``(nx, ny)``; ``u[i, j]`` sits at
    ``(i*dx, (j+1/2)*dy)`` and ``v[i, j]`` at ``((i+1/2)*dx, j*dy)``.
walled domains
    ``u`` is ``(nx+1, ny)`` and includes the inlet (``i=0``) and outflow
    (``i=nx``) faces; ``v`` is ``(nx, ny+1)`` and includes both walls.

Faces that are not unknowns (inlet, walls, faces touching a solid cell) are
held at fixed values supplied as boundary data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import IncompatibleGridsError, InvalidSpecError

GEOMETRY_KINDS = ("channel_cylinder", "channel", "periodic_box")

# cell_kind codes
FLUID = 0
SOLID = 1


@dataclass(frozen=True)
class GeometrySpec:
    """Domain description.

    Parameters
    ----------
    kind : {'channel_cylinder', 'channel', 'periodic_box'}
        ``channel`` is the cylinder-free channel, useful for verification.
    Lx, Ly : float
        Domain extent.  Defaults to the cylinder benchmark channel.
    center : tuple of float
        Cylinder center (channel_cylinder only).
    radius : float
        Cylinder radius (channel_cylinder only).
    """

    kind: str = "channel_cylinder"
    Lx: float = 2.2
    Ly: float = 0.41
    center: tuple = (0.2, 0.2)
    radius: float = 0.05

    @classmethod
    def channel_cylinder(cls, **kw) -> "GeometrySpec":
        return cls(kind="channel_cylinder", **kw)

    @classmethod
    def periodic_box(cls, Lx=1.0, Ly=1.0) -> "GeometrySpec":
        return cls(kind="periodic_box", Lx=Lx, Ly=Ly)

    @classmethod
    def channel(cls, Lx=2.2, Ly=0.41) -> "GeometrySpec":
        return cls(kind="channel", Lx=Lx, Ly=Ly)

    @property
    def periodic(self) -> bool:
        return self.kind == "periodic_box"

    @property
    def has_obstacle(self) -> bool:
        return self.kind == "channel_cylinder"

    def validate(self) -> None:
        if self.kind not in GEOMETRY_KINDS:
            raise InvalidSpecError(f"unknown geometry kind {self.kind!r}")
        if not (np.isfinite(self.Lx) and np.isfinite(self.Ly)) or self.Lx <= 0 or self.Ly <= 0:
            raise InvalidSpecError(f"degenerate extent ({self.Lx}, {self.Ly})")
        if self.has_obstacle:
            cx, cy = self.center
            r = self.radius
            if not r > 0:
                raise InvalidSpecError("cylinder radius must be positive")
            if not (0 < cx - r and cx + r < self.Lx and 0 < cy - r and cy + r < self.Ly):
                raise InvalidSpecError("cylinder must lie strictly inside the channel")


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable MAC grid.

    Use :func:`build_grid` rather than constructing directly.
    """

    spec: GeometrySpec
    nx: int
    ny: int
    cell_kind: np.ndarray = field(repr=False)

    # ------------------------------------------------------------------ basic
    @property
    def dx(self) -> float:
        return self.spec.Lx / self.nx

    @property
    def dy(self) -> float:
        return self.spec.Ly / self.ny

    @property
    def extent(self) -> tuple:
        return (self.spec.Lx, self.spec.Ly)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def periodic(self) -> bool:
        return self.spec.periodic

    @property
    def solid(self) -> np.ndarray:
        return self.cell_kind == SOLID

    @property
    def fluid(self) -> np.ndarray:
        return self.cell_kind == FLUID

    @property
    def boundary_tags(self) -> dict:
        """Tag of each domain side (and of the obstacle surface, if any)."""
        if self.periodic:
            return {"x_lo": "periodic", "x_hi": "periodic", "y_lo": "periodic", "y_hi": "periodic"}
        tags = {"x_lo": "inlet", "x_hi": "outflow", "y_lo": "wall", "y_hi": "wall"}
        if self.spec.has_obstacle:
            tags["obstacle"] = "wall"
        return tags

    @property
    def u_shape(self) -> tuple:
        return (self.nx, self.ny) if self.periodic else (self.nx + 1, self.ny)

    @property
    def v_shape(self) -> tuple:
        return (self.nx, self.ny) if self.periodic else (self.nx, self.ny + 1)

    # ------------------------------------------------------------ coordinates
    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def u_coords(self):
        x = np.arange(self.u_shape[0]) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def v_coords(self):
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = np.arange(self.v_shape[1]) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    # ------------------------------------------------------------ face masks
    @cached_property
    def u_active(self) -> np.ndarray:
        """Mask of x-face velocity unknowns."""
        if self.periodic:
            return np.ones(self.u_shape, dtype=bool)
        s = self.solid
        act = np.zeros(self.u_shape, dtype=bool)
        act[1:self.nx] = ~(s[:-1] | s[1:])
        act[self.nx] = ~s[-1]
        return act

    @cached_property
    def v_active(self) -> np.ndarray:
        """Mask of y-face velocity unknowns."""
        if self.periodic:
            return np.ones(self.v_shape, dtype=bool)
        s = self.solid
        act = np.zeros(self.v_shape, dtype=bool)
        act[:, 1:self.ny] = ~(s[:, :-1] | s[:, 1:])
        return act

    @cached_property
    def u_weight(self) -> np.ndarray:
        """Quadrature weight of each x-face value (half cells on x boundaries)."""
        weights = np.full(self.u_shape, self.cell_area)
        if not self.periodic:
            weights[0] *= 0.5
            weights[-1] *= 0.5
        return weights

    @cached_property
    def v_weight(self) -> np.ndarray:
        weights = np.full(self.v_shape, self.cell_area)
        if not self.periodic:
            weights[:, 0] *= 0.5
            weights[:, -1] *= 0.5
        return weights

    @cached_property
    def p_weight(self) -> np.ndarray:
        return np.where(self.fluid, self.cell_area, 0.0)

    @cached_property
    def u_tags(self) -> np.ndarray:
        """Per x-face tag: '' interior unknown, else inlet/outflow/wall/solid/periodic."""
        return self._face_tags("u")

    @cached_property
    def v_tags(self) -> np.ndarray:
        return self._face_tags("v")

    def _face_tags(self, comp):
        shape = self.u_shape if comp == "u" else self.v_shape
        tags = np.full(shape, "", dtype="<U8")
        if self.periodic:
            return tags
        s = np.pad(self.solid, 1, constant_values=False)
        if comp == "u":
            lo, hi = s[:-1, 1:-1], s[1:, 1:-1]  # cells left and right of each x-face
        else:
            lo, hi = s[1:-1, :-1], s[1:-1, 1:]
        tags[lo ^ hi] = "wall"
        tags[lo & hi] = "solid"
        if comp == "u":
            tags[0] = "inlet"
            tags[-1] = np.where(self.solid[-1], tags[-1], "outflow")
        else:
            tags[:, 0] = "wall"
            tags[:, -1] = "wall"
        return tags

    @property
    def dof_counts(self) -> dict:
        nu = int(self.u_active.sum())
        nv = int(self.v_active.sum())
        return {"u": nu, "v": nv, "velocity": nu + nv, "pressure": int(self.fluid.sum())}

    def compatible_key(self) -> tuple:
        return (self.spec.kind, self.spec.Lx, self.spec.Ly, tuple(self.spec.center), self.spec.radius)

    def __repr__(self):
        return f"Grid({self.spec.kind}, nx={self.nx}, ny={self.ny}, extent={self.extent})"


def build_grid(spec: GeometrySpec, nx: int, ny: int) -> Grid:
    """Build a MAC grid over ``spec``.

    A cell is solid when its center lies strictly inside the cylinder; a center
    exactly on the circle counts as fluid.
    """
    spec.validate()
    if int(nx) != nx or int(ny) != ny or nx < 4 or ny < 4:
        raise InvalidSpecError(f"grid needs integer nx, ny >= 4, got ({nx}, {ny})")
    nx, ny = int(nx), int(ny)
    kind = np.full((nx, ny), FLUID, dtype=np.int8)
    if spec.has_obstacle:
        x = (np.arange(nx) + 0.5) * (spec.Lx / nx)
        y = (np.arange(ny) + 0.5) * (spec.Ly / ny)
        X, Y = np.meshgrid(x, y, indexing="ij")
        cx, cy = spec.center
        kind[(X - cx) ** 2 + (Y - cy) ** 2 < spec.radius ** 2] = SOLID
    kind.setflags(write=False)
    return Grid(spec=spec, nx=nx, ny=ny, cell_kind=kind)


# ---------------------------------------------------------------------------
# Restriction
# ---------------------------------------------------------------------------
#
# Each direction uses a normalized B-spline stencil built from r-point box
# averages: order 1 (box) for pressure cells, order 2 (hat) along the normal
# direction of a face component, order 3 along its tangential direction.
# These stencils preserve constants and discrete integrals, are exact for
# linear fields, compose exactly for nested ratios, and (because the hat and
# the order-3 stencil differ by exactly one box factor) map discretely
# solenoidal fields to discretely solenoidal fields.


def _bspline(r: int, order: int) -> np.ndarray:
    box = np.full(r, 1.0 / r)
    weights = np.ones(1)
    for _ in range(order):
        weights = np.convolve(weights, box)
    return weights


def _restriction_matrix(n_fine, n_coarse, r, order, location, periodic, sign):
    """Dense 1D restriction matrix of shape ``(n_coarse, n_fine)``.

    ``location`` is 'node' (values at i*h, n = cells+1 unless periodic) or
    'cell' (values at (i+1/2)*h).  Off-range stencil entries wrap when
    periodic and reflect about the boundary otherwise, with ``sign`` = -1 for
    odd reflection.
    """
    weights = _bspline(r, order)
    # stencil start relative to the fine index of the coarse location
    offset = (len(weights) - 1) // 2 if location == "node" else (order - 1) * (r - 1) // 2
    R = np.zeros((n_coarse, n_fine))
    for I in range(n_coarse):
        start = r * I - offset
        for m, weight in enumerate(weights):
            f = start + m
            s = 1.0
            if periodic:
                f %= n_fine
            elif location == "node":
                last = n_fine - 1
                if f < 0:
                    f, s = -f, sign
                elif f > last:
                    f, s = 2 * last - f, sign
            else:
                if f < 0:
                    f, s = -1 - f, sign
                elif f >= n_fine:
                    f, s = 2 * n_fine - 1 - f, sign
            R[I, f] += s * weight
    return R


def _ratio(fine: Grid, coarse: Grid):
    if fine.compatible_key() != coarse.compatible_key():
        raise IncompatibleGridsError("fine and coarse grids differ in geometry or extent")
    if fine.nx % coarse.nx or fine.ny % coarse.ny:
        raise IncompatibleGridsError(
            f"fine resolution ({fine.nx}, {fine.ny}) is not an integer multiple "
            f"of coarse ({coarse.nx}, {coarse.ny})")
    return fine.nx // coarse.nx, fine.ny // coarse.ny


def restriction_operators(fine: Grid, coarse: Grid) -> dict:
    """Pairs of 1D matrices ``(Rx, Ry)`` per component: ``coarse = Rx @ fine @ Ry.T``."""
    rx, ry = _ratio(fine, coarse)
    per = fine.periodic
    ops = {}
    ux, uy = fine.u_shape, coarse.u_shape
    vx, vy = fine.v_shape, coarse.v_shape
    ops["u"] = (_restriction_matrix(ux[0], uy[0], rx, 2, "node", per, 1.0),
                _restriction_matrix(ux[1], uy[1], ry, 3, "cell", per, 1.0))
    ops["v"] = (_restriction_matrix(vx[0], vy[0], rx, 3, "cell", per, -1.0),
                _restriction_matrix(vx[1], vy[1], ry, 2, "node", per, -1.0))
    ops["p"] = (_restriction_matrix(fine.nx, coarse.nx, rx, 1, "cell", per, 1.0),
                _restriction_matrix(fine.ny, coarse.ny, ry, 1, "cell", per, 1.0))
    return ops


def restrict_array(a: np.ndarray, Rx: np.ndarray, Ry: np.ndarray) -> np.ndarray:
    return Rx @ a @ Ry.T


def restrict(fine_state, fine: Grid, coarse: Grid):
    """Restrict a fine-grid :class:`~efrlab.fields.State` onto ``coarse``.

    Fixed coarse faces touching solid cells or walls are reset to zero and
    coarse solid cells carry zero pressure; the inlet column keeps its
    averaged value.

    Raises
    ------
    IncompatibleGridsError
        If geometry/extent differ or the resolution ratio is not an integer.
    """
    from .fields import ScalarField, State, VectorField

    if fine is coarse or (fine.nx == coarse.nx and fine.ny == coarse.ny
                          and fine.compatible_key() == coarse.compatible_key()):
        return State(VectorField(coarse, fine_state.velocity.u.copy(), fine_state.velocity.v.copy()),
                     ScalarField(coarse, fine_state.pressure.values.copy()), fine_state.time)
    ops = restriction_operators(fine, coarse)
    u = restrict_array(fine_state.velocity.u, *ops["u"])
    v = restrict_array(fine_state.velocity.v, *ops["v"])
    p = restrict_array(fine_state.pressure.values, *ops["p"])
    if not coarse.periodic:
        keep = coarse.u_active.copy()
        keep[0] = True
        u = np.where(keep, u, 0.0)
        v = np.where(coarse.v_active, v, 0.0)
        p = np.where(coarse.fluid, p, 0.0)
    return State(VectorField(coarse, u, v), ScalarField(coarse, p), fine_state.time)


def solid_area(grid: Grid) -> float:
    return float(grid.solid.sum()) * grid.cell_area


def cylinder_area(spec: GeometrySpec) -> float:
    return math.pi * spec.radius ** 2
