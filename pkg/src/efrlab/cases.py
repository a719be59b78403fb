"""Initial conditions for the built-in flow problems."""
from __future__ import annotations

import math

import numpy as np

from .errors import InvalidSpecError
from .evolve import inlet_profile
from .fields import ScalarField, State, VectorField
from .grid import Grid


def zero(grid: Grid, t: float = 0.0) -> State:
    """Fluid at rest, including the boundary faces."""
    return State.zeros(grid, t)


def taylor_green(grid: Grid, nu: float, t: float = 0.0) -> State:
    """Taylor-Green vortex on the periodic box ``[0, 2*pi]^2`` at time ``t``."""
    decay = math.exp(-2.0 * nu * t)
    vel = VectorField.from_functions(
        grid, lambda x, y: np.sin(x) * np.cos(y) * decay,
        lambda x, y: -np.cos(x) * np.sin(y) * decay)
    X, Y = grid.cell_centers()
    p = 0.25 * (np.cos(2 * X) + np.cos(2 * Y)) * decay ** 2
    return State(vel, ScalarField(grid, p - p.mean()), t)


def shear_layer(grid: Grid, thickness: float = 1.0 / 80, amplitude: float = 0.05,
                t: float = 0.0) -> State:
    """Doubly periodic shear layer on the unit box.

    Two ``tanh`` layers at ``y = 1/4`` and ``y = 3/4`` with opposite sign,
    perturbed by a transverse velocity ``amplitude * sin(2 pi x)``.  The
    sampled field is discretely divergence free.
    """
    if not grid.periodic:
        raise InvalidSpecError("the shear layer needs a periodic box")
    Lx, Ly = grid.extent

    def fu(x, y):
        s = y / Ly
        return np.where(s <= 0.5, np.tanh((s - 0.25) / thickness), np.tanh((0.75 - s) / thickness))

    def fv(x, y):
        return amplitude * np.sin(2 * np.pi * x / Lx)

    return State(VectorField.from_functions(grid, fu, fv), ScalarField.zeros(grid), t)


def poiseuille(grid: Grid, umax: float = 1.5, t: float = 0.0) -> State:
    """Parabolic channel flow filling the domain (solid faces zeroed)."""
    if grid.periodic:
        raise InvalidSpecError("Poiseuille flow needs a channel")
    vel = VectorField.from_functions(
        grid, lambda x, y: inlet_profile(y, umax, grid.spec.Ly)[0], lambda x, y: 0.0 * x)
    keep = grid.u_active.copy()
    keep[0] = True
    vel = VectorField(grid, np.where(keep, vel.u, 0.0), vel.v)
    return State(vel, ScalarField.zeros(grid), t)


INITIAL_CONDITIONS = ("zero", "taylor_green", "shear_layer", "poiseuille")


def initial_state(name: str, grid: Grid, nu: float = 1e-4, t: float = 0.0, **params) -> State:
    """Named initial condition on ``grid``."""
    if name == "zero":
        return zero(grid, t)
    if name == "taylor_green":
        return taylor_green(grid, nu, t)
    if name == "shear_layer":
        return shear_layer(grid, t=t, **params)
    if name == "poiseuille":
        return poiseuille(grid, t=t, **params)
    raise InvalidSpecError(f"unknown initial condition {name!r}")
