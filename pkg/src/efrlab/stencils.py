"""Sparse stencil operators on the velocity unknowns of a MAC grid.

Every velocity unknown has four neighbours.  A neighbour is either another
unknown, a fixed face (boundary data), or a ghost value obtained from a
boundary rule:

* ``u`` at the outflow face mirrors its upstream neighbour (zero normal
  derivative with the face on the boundary);
* ``u`` next to a channel wall reflects with opposite sign (no slip);
* ``v`` next to the inlet reflects with opposite sign (zero inlet v);
* ``v`` next to the outflow copies itself (zero normal derivative half a cell
  away).

These rules are encoded once per grid as sparse "neighbour" matrices ``N``
(acting on unknowns) and ``F`` (picking fixed values from the full arrays),
from which the Laplacian, advection and divergence operators are assembled.
Rows of outflow ``u`` faces carry half weight in the mass vector so that the
mass-weighted Laplacian is symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .grid import Grid

DIRECTIONS = {"xm": (-1, 0), "xp": (1, 0), "ym": (0, -1), "yp": (0, 1)}


@dataclass(frozen=True, eq=False)
class ComponentStencil:
    """Neighbour tables of one velocity component."""

    shape: tuple
    flat: np.ndarray      # flat index into the full array for each unknown
    index: np.ndarray     # full-shape map to unknown number, -1 when fixed
    mass: np.ndarray      # relative quadrature weight of each unknown
    N: dict               # direction -> (n, n) csr
    F: dict               # direction -> (n, full size) csr

    @property
    def n(self) -> int:
        return self.flat.size

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def _component(grid: Grid, comp: str) -> ComponentStencil:
    shape = grid.u_shape if comp == "u" else grid.v_shape
    active = grid.u_active if comp == "u" else grid.v_active
    mx, my = shape
    n = int(active.sum())
    index = np.full(shape, -1, dtype=np.int64)
    index[active] = np.arange(n)
    I, J = np.nonzero(active)
    rows = np.arange(n)
    mass = np.ones(n)
    if comp == "u" and not grid.periodic:
        mass[I == mx - 1] = 0.5

    N, F = {}, {}
    for name, (di, dj) in DIRECTIONS.items():
        ti, tj = I + di, J + dj
        self_coef = np.zeros(n)
        valid = np.ones(n, dtype=bool)
        if grid.periodic:
            ti %= mx
            tj %= my
        elif comp == "u":
            out_x = ti >= mx                     # outflow mirror
            ti = np.where(out_x, mx - 2, ti)
            out_y = (tj < 0) | (tj >= my)        # no-slip reflection
            self_coef[out_y] -= 1.0
            valid &= ~out_y
        else:
            out_lo = ti < 0                      # inlet reflection
            out_hi = ti >= mx                    # outflow zero gradient
            self_coef[out_lo] -= 1.0
            self_coef[out_hi] += 1.0
            valid &= ~(out_lo | out_hi)
        ti_v, tj_v, r_v = ti[valid], tj[valid], rows[valid]
        tgt = index[ti_v, tj_v]
        is_unk = tgt >= 0
        Nm = sp.csr_matrix((np.ones(is_unk.sum()), (r_v[is_unk], tgt[is_unk])), shape=(n, n))
        N[name] = (Nm + sp.diags(self_coef)).tocsr()
        fixed_flat = np.ravel_multi_index((ti_v[~is_unk], tj_v[~is_unk]), shape)
        F[name] = sp.csr_matrix((np.ones(fixed_flat.size), (r_v[~is_unk], fixed_flat)),
                                shape=(n, mx * my))
    return ComponentStencil(shape=shape, flat=np.flatnonzero(active), index=index,
                            mass=mass, N=N, F=F)


class GridOperators:
    """Assembled sparse operators for one grid (built once, cached).

    The combined velocity unknown vector is ``x = [u_unknowns, v_unknowns]``
    and the combined full vector is ``g = [u.ravel(), v.ravel()]``.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.cu = _component(grid, "u")
        self.cv = _component(grid, "v")
        self.nu, self.nv = self.cu.n, self.cv.n
        self.n = self.nu + self.nv
        self.mass = np.concatenate([self.cu.mass, self.cv.mass])
        dx2, dy2 = grid.dx ** 2, grid.dy ** 2

        def lap(c):
            Ic = sp.identity(c.n, format="csr")
            Lm = ((c.N["xm"] + c.N["xp"] - 2 * Ic) / dx2 + (c.N["ym"] + c.N["yp"] - 2 * Ic) / dy2)
            Lf = (c.F["xm"] + c.F["xp"]) / dx2 + (c.F["ym"] + c.F["yp"]) / dy2
            return Lm.tocsr(), Lf.tocsr()

        Lu, Lfu = lap(self.cu)
        Lv, Lfv = lap(self.cv)
        self.L_blocks = (Lu, Lv)
        self.L = sp.block_diag([Lu, Lv], format="csr")
        self.BL = sp.block_diag([Lfu, Lfv], format="csr")

        self.p_flat = np.flatnonzero(grid.fluid)
        self.np = self.p_flat.size
        self.D, self.Dfix = self._divergence()
        Minv = sp.diags(1.0 / self.mass)
        self.P = (self.D @ Minv @ self.D.T).tocsr()
        self.G = (-Minv @ self.D.T).tocsr()   # cell values -> face unknowns
        self._poisson = None

    # ---------------------------------------------------------------- layout
    def gather(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.concatenate([u.ravel()[self.cu.flat], v.ravel()[self.cv.flat]])

    def scatter(self, x: np.ndarray, u_fixed: np.ndarray, v_fixed: np.ndarray):
        """Full arrays carrying ``x`` at unknowns and the fixed arrays elsewhere."""
        u = np.array(u_fixed, dtype=float, copy=True)
        v = np.array(v_fixed, dtype=float, copy=True)
        u.ravel()[self.cu.flat] = x[:self.nu]
        v.ravel()[self.cv.flat] = x[self.nu:]
        return u, v

    @staticmethod
    def full_vector(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.concatenate([u.ravel(), v.ravel()])

    def gather_p(self, p: np.ndarray) -> np.ndarray:
        return p.ravel()[self.p_flat]

    def scatter_p(self, q: np.ndarray) -> np.ndarray:
        p = np.zeros(self.grid.nx * self.grid.ny)
        p[self.p_flat] = q
        return p.reshape(self.grid.nx, self.grid.ny)

    # ------------------------------------------------------------ divergence
    def _divergence(self):
        g = self.grid
        nx, ny = g.nx, g.ny
        su = self.cu.size
        ci, cj = np.nonzero(g.fluid)
        rows = np.arange(ci.size)
        ent_r, ent_c, ent_v = [], [], []
        fix_r, fix_c, fix_v = [], [], []

        def add(comp, fi, fj, coef):
            c = self.cu if comp == "u" else self.cv
            tgt = c.index[fi, fj]
            unk = tgt >= 0
            ent_r.append(rows[unk])
            ent_c.append(tgt[unk] + (0 if comp == "u" else self.nu))
            ent_v.append(np.full(unk.sum(), coef))
            flat = np.ravel_multi_index((fi[~unk], fj[~unk]), c.shape) + (0 if comp == "u" else su)
            fix_r.append(rows[~unk])
            fix_c.append(flat)
            fix_v.append(np.full((~unk).sum(), coef))

        east = (ci + 1) % nx if g.periodic else ci + 1
        north = (cj + 1) % ny if g.periodic else cj + 1
        add("u", ci, cj, -1.0 / g.dx)
        add("u", east, cj, 1.0 / g.dx)
        add("v", ci, cj, -1.0 / g.dy)
        add("v", ci, north, 1.0 / g.dy)
        cat = np.concatenate
        D = sp.csr_matrix((cat(ent_v), (cat(ent_r), cat(ent_c))), shape=(ci.size, self.n))
        Dfix = sp.csr_matrix((cat(fix_v), (cat(fix_r), cat(fix_c))),
                             shape=(ci.size, su + self.cv.size))
        D.sum_duplicates()
        return D, Dfix

    # ----------------------------------------------------------- advection
    def advection_matrices(self, comp: str, ax: np.ndarray, ay: np.ndarray, upwind: bool = False):
        """Linearized advection ``a . grad`` acting on one component.

        Returns ``(C, Cf)`` with ``C`` acting on that component's unknowns and
        ``Cf`` on its full array of fixed values.
        """
        c = self.cu if comp == "u" else self.cv
        g = self.grid
        if not upwind:
            Cx = (c.N["xp"] - c.N["xm"]) / (2 * g.dx)
            Cxf = (c.F["xp"] - c.F["xm"]) / (2 * g.dx)
            Cy = (c.N["yp"] - c.N["ym"]) / (2 * g.dy)
            Cyf = (c.F["yp"] - c.F["ym"]) / (2 * g.dy)
            C = sp.diags(ax) @ Cx + sp.diags(ay) @ Cy
            Cf = sp.diags(ax) @ Cxf + sp.diags(ay) @ Cyf
            return C.tocsr(), Cf.tocsr()
        Ic = sp.identity(c.n, format="csr")
        axp, axm = np.maximum(ax, 0), np.minimum(ax, 0)
        ayp, aym = np.maximum(ay, 0), np.minimum(ay, 0)
        C = (sp.diags(axp) @ (Ic - c.N["xm"]) + sp.diags(axm) @ (c.N["xp"] - Ic)) / g.dx \
            + (sp.diags(ayp) @ (Ic - c.N["ym"]) + sp.diags(aym) @ (c.N["yp"] - Ic)) / g.dy
        Cf = (sp.diags(-axp) @ c.F["xm"] + sp.diags(axm) @ c.F["xp"]) / g.dx \
            + (sp.diags(-ayp) @ c.F["ym"] + sp.diags(aym) @ c.F["yp"]) / g.dy
        return C.tocsr(), Cf.tocsr()

    # ----------------------------------------------------------- poisson
    @property
    def poisson(self):
        if self._poisson is None:
            from .linsolve import PoissonSolver
            self._poisson = PoissonSolver(self.P, singular=self.grid.periodic)
        return self._poisson


@lru_cache(maxsize=32)
def operators(grid: Grid) -> GridOperators:
    """Cached :class:`GridOperators` for ``grid`` (grids hash by identity)."""
    return GridOperators(grid)


def advecting_velocity(grid: Grid, u: np.ndarray, v: np.ndarray):
    """Velocity vector interpolated to every x-face and every y-face.

    Returns ``(ua, va_at_u, ua_at_v, va)`` as full arrays: the advecting
    velocity components at x-faces and at y-faces.
    """
    if grid.periodic:
        v_at_u = 0.25 * (v + np.roll(v, 1, 0) + np.roll(v, -1, 1) + np.roll(np.roll(v, 1, 0), -1, 1))
        u_at_v = 0.25 * (u + np.roll(u, -1, 0) + np.roll(u, 1, 1) + np.roll(np.roll(u, -1, 0), 1, 1))
        return u, v_at_u, u_at_v, v
    vp = np.pad(v, ((1, 1), (0, 0)), mode="edge")
    v_at_u = 0.25 * (vp[:-1, :-1] + vp[1:, :-1] + vp[:-1, 1:] + vp[1:, 1:])
    up = np.pad(u, ((0, 0), (1, 1)), mode="edge")
    u_at_v = 0.25 * (up[:-1, :-1] + up[1:, :-1] + up[:-1, 1:] + up[1:, 1:])
    return u, v_at_u, u_at_v, v
