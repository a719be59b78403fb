"""Bounded minimization of small (1-2 parameter) objectives.

:func:`minimize_bounded` is a projected quasi-Newton method: BFGS updates of
an inverse Hessian in coordinates scaled to the unit box, finite-difference
gradients, and a backtracking line search along the projected path.  The
best point seen is always returned, so the result never exceeds the value
at the starting point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError

ARMIJO = 1e-4
MAX_BACKTRACKS = 30


@dataclass(frozen=True)
class Bounds:
    """Closed box ``lo <= x <= hi``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidSpecError("bounds need matching 1D lo/hi")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidSpecError("bounds must be finite")
        if np.any(lo > hi):
            raise InvalidSpecError("lower bound exceeds upper bound")
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @classmethod
    def from_pairs(cls, *pairs) -> "Bounds":
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_arr(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_arr(self) -> np.ndarray:
        return np.array(self.hi)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo_arr) and np.all(x <= self.hi_arr))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo_arr, self.hi_arr)


@dataclass(frozen=True)
class OptOptions:
    max_iter: int = 25
    tol: float = 1e-8
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.max_iter < 0 or not self.tol > 0 or not self.fd_step > 0:
            raise InvalidSpecError("invalid optimizer options")


@dataclass
class OptResult:
    """Outcome of a bounded minimization.

    Attributes
    ----------
    x : ndarray
        Best point found (always within bounds).
    fun : float
        Objective value at ``x``.
    nit : int
        Iterations performed.
    converged : bool
        True when a step or objective-change criterion was met.
    nfev : int
        Objective evaluations.
    fun0 : float
        Objective at the (clamped) starting point.
    clamped : bool
        The starting point had to be clamped into the bounds.
    message : str
    """

    x: np.ndarray
    fun: float
    nit: int
    converged: bool
    nfev: int
    fun0: float = float("nan")
    clamped: bool = False
    aborted: bool = False
    message: str = ""
    history: list = field(default_factory=list, repr=False)


class _NaNAbort(Exception):
    pass


def minimize_bounded(f, bounds: Bounds, x0, opts: OptOptions | None = None) -> OptResult:
    """Minimize ``f`` over the box ``bounds`` starting from ``x0``.

    Parameters
    ----------
    f : callable
        Objective taking a 1D array.
    bounds : Bounds
    x0 : array_like
        Starting point; clamped into the box if outside (``clamped`` is set).
    opts : OptOptions, optional
        ``max_iter`` iterations; ``tol`` bounds the scaled step and the
        projected gradient, ``tol**2`` the relative objective change;
        ``fd_step`` is relative to the bound width.

    Notes
    -----
    A NaN objective value aborts the search; the best finite iterate is
    returned with ``converged=False``.  Ties between equal values keep the
    smaller parameter vector (lexicographically).
    """
    opts = opts or OptOptions()
    lo, hi = bounds.lo_arr, bounds.hi_arr
    width = hi - lo
    free_dims = width > 0
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != lo.shape:
        raise InvalidSpecError("starting point dimension does not match bounds")
    xc = bounds.clip(x0)
    clamped = bool(np.any(xc != x0))
    scale = np.where(free_dims, width, 1.0)

    def to_x(z):
        return np.where(free_dims, lo + z * scale, lo)

    nfev = 0
    best = {"z": None, "f": np.inf}

    def F(z):
        nonlocal nfev
        z = np.clip(z, 0.0, 1.0)
        x = to_x(z)
        val = float(f(x))
        nfev += 1
        if np.isnan(val):
            raise _NaNAbort
        if val < best["f"] or (val == best["f"] and tuple(z) < tuple(best["z"])):
            best["z"], best["f"] = z.copy(), val
        return val

    def result(nit, converged, aborted=False, message=""):
        x = to_x(best["z"])
        x = bounds.clip(x)
        assert bounds.contains(x)
        return OptResult(x=x, fun=best["f"], nit=nit, converged=converged, nfev=nfev,
                         fun0=fun0, clamped=clamped, aborted=aborted, message=message)

    z = np.where(free_dims, (xc - lo) / scale, 0.0)
    best["z"] = z.copy()
    try:
        fz = F(z)
    except _NaNAbort:
        x = xc
        return OptResult(x=x, fun=float("nan"), nit=0, converged=False, nfev=nfev,
                         clamped=clamped, aborted=True, message="objective is NaN at start")
    fun0 = fz
    h = opts.fd_step
    n = z.size
    H = np.eye(n)
    curved = False
    g = None
    nit = 0
    try:
        for nit in range(1, opts.max_iter + 1):
            if g is None:
                g = _fd_gradient(F, z, fz, h, free_dims)
            free = free_dims & ~(((z <= 0.0) & (g > 0)) | ((z >= 1.0) & (g < 0)))
            if not np.any(free) or np.max(np.abs(g[free])) <= opts.tol * max(1.0, abs(fz)):
                return result(nit, True, message="projected gradient vanishes")
            d = np.zeros(n)
            Hf = H[np.ix_(free, free)]
            d[free] = -Hf @ g[free]
            if d @ g >= 0:
                d = np.where(free, -g, 0.0)
            if not curved:
                # no curvature yet: first trial spans the box, backtracking sizes it
                d = d / np.max(np.abs(d))
            t = 1.0
            accepted = False
            for _ in range(MAX_BACKTRACKS):
                z_new = np.clip(z + t * d, 0.0, 1.0)
                step = z_new - z
                if np.max(np.abs(step)) < opts.tol:
                    break
                f_new = F(z_new)
                if f_new <= fz + ARMIJO * (g @ step):
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                return result(nit, True, message="no descent step above tolerance")
            g_new = _fd_gradient(F, z_new, f_new, h, free_dims)
            s, y = z_new - z, g_new - g
            df = fz - f_new
            was_at_bound = (z <= 0.0) | (z >= 1.0)
            z, fz, g = z_new, f_new, g_new
            sy = s @ y
            if np.any(was_at_bound != ((z <= 0.0) | (z >= 1.0))):
                # active set changed: curvature pairs are stale, restart the scaling
                H = np.eye(n)
                curved = False
            elif sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                if not curved:
                    H = (sy / (y @ y)) * np.eye(n)
                    curved = True
                rho = 1.0 / sy
                V = np.eye(n) - rho * np.outer(s, y)
                H = V @ H @ V.T + rho * np.outer(s, s)
            # objective changes scale with the square of the parameter error
            if np.max(np.abs(s)) < opts.tol or abs(df) < opts.tol ** 2 * max(1.0, abs(fz)):
                return result(nit, True, message="step or objective change below tolerance")
    except _NaNAbort:
        return result(nit, False, aborted=True, message="objective returned NaN")
    return result(nit, False, message="maximum iterations reached")


def _fd_gradient(F, z, fz, h, free_dims):
    """Central differences inside the box, second-order one-sided next to a bound."""
    g = np.zeros_like(z)
    for i in np.flatnonzero(free_dims):
        e = np.zeros_like(z)
        e[i] = h
        up_ok = z[i] + h <= 1.0
        dn_ok = z[i] - h >= 0.0
        if up_ok and dn_ok:
            g[i] = (F(z + e) - F(z - e)) / (2 * h)
        elif up_ok:
            g[i] = (-3 * fz + 4 * F(z + e) - F(z + 2 * e)) / (2 * h)
        else:
            g[i] = (3 * fz - 4 * F(z - e) + F(z - 2 * e)) / (2 * h)
    return g


def grid_search_oracle(f, bounds: Bounds, n_per_dim: int) -> OptResult:
    """Exhaustive search on a uniform lattice including the endpoints.

    Ties go to the lowest lattice index (first parameter varies slowest).
    """
    if n_per_dim < 2:
        raise InvalidSpecError("grid search needs at least two points per dimension")
    axes = [np.linspace(a, b, n_per_dim) for a, b in zip(bounds.lo, bounds.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    vals = np.array([float(f(p)) for p in pts])
    finite = np.where(np.isnan(vals), np.inf, vals)
    k = int(np.argmin(finite))
    return OptResult(x=pts[k], fun=float(vals[k]), nit=0, converged=True, nfev=len(pts),
                     fun0=float(vals[0]))


def optimization_schedule(n: int, k: int) -> bool:
    """True when step ``n`` is an optimization instant for cadence ``k``."""
    if k < 1:
        raise InvalidSpecError("cadence must be >= 1")
    return n % k == 0
