"""Local and global objective functionals for parameter optimization."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .efr import FilterConfig, differential_filter, relax
from .errors import DegenerateReferenceError, InvalidSpecError
from .evolve import FlowConfig, trial_evolve
from .fields import ScalarField, State, VectorField, cell_gradient, h1_seminorm_sq, l2_norm_sq
from .grid import Grid

LOSS_KINDS = ("local", "global")
OBJECTIVE_VARIANTS = ("chi", "delta", "delta_chi")


@dataclass(frozen=True)
class LossSpec:
    """Loss family and term weights.

    Parameters
    ----------
    kind : {'local', 'global'}
    w_u, w_gradu, w_p : float
        Nonnegative weights of the velocity, velocity-gradient and pressure
        terms.  The pressure term exists only for the global kind.
    area_weighted : bool
        Local kind only: weight squared differences by quadrature weights
        instead of taking a plain mean over unknowns.
    """

    kind: str = "global"
    w_u: float = 1.0
    w_gradu: float = 1.0
    w_p: float = 0.0
    area_weighted: bool = False

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidSpecError(f"unknown loss kind {self.kind!r}")
        for name in ("w_u", "w_gradu", "w_p"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val >= 0):
                raise InvalidSpecError(f"loss weight {name} must be >= 0")
        if self.w_p > 0 and self.kind != "global":
            raise InvalidSpecError("the pressure term requires the global loss")
        if self.w_u == 0 and self.w_gradu == 0 and self.w_p == 0:
            raise InvalidSpecError("at least one loss weight must be positive")

    @property
    def label(self) -> str:
        terms = [n for n, weight in (("u", self.w_u), ("gradu", self.w_gradu), ("p", self.w_p)) if weight > 0]
        return f"{self.kind}[{','.join(terms)}]"


@dataclass
class Counters:
    """Work accounting for objective evaluations."""

    evaluations: int = 0
    filter_solves: int = 0
    trial_evolves: int = 0


@dataclass
class LossContext:
    """Everything an objective evaluation needs at one optimization instant.

    Attributes
    ----------
    evolved : State
        Output of the evolve step (velocity and pressure) at the optimized time level.
    ref : State
        Restricted reference at the same time level.
    ref_next : State or None
        Reference one step later, needed by the pressure term.
    delta : float
        Filter radius held fixed by the ``chi`` variant.
    """

    grid: Grid
    flow: FlowConfig
    filter: FilterConfig
    evolved: State
    ref: State
    ref_next: Optional[State] = None
    delta: float = 0.0
    counters: Counters = field(default_factory=Counters)
    _filtered_cache: dict = field(default_factory=dict, repr=False)
    _ref_norms: dict = field(default_factory=dict, repr=False)

    def filtered(self, delta: float, cache: bool = False) -> VectorField:
        """Filtered evolved velocity; cached per radius when ``cache`` is set."""
        if cache and delta in self._filtered_cache:
            return self._filtered_cache[delta]
        self.counters.filter_solves += 1
        filtered = differential_filter(self.evolved.velocity, delta, self.filter, self.grid)
        if cache:
            self._filtered_cache[delta] = filtered
        return filtered

    def ref_norm(self, term: str) -> float:
        if term not in self._ref_norms:
            if term == "u":
                val = l2_norm_sq(self.ref.velocity)
            elif term == "gradu":
                val = h1_seminorm_sq(self.ref.velocity)
            else:
                if self.ref_next is None:
                    raise DegenerateReferenceError("pressure term needs the next reference snapshot")
                val = l2_norm_sq(self.ref_next.pressure)
            self._ref_norms[term] = val
        return self._ref_norms[term]


def _mse(a: np.ndarray, b: np.ndarray, weights=None) -> float:
    d2 = (a - b) ** 2
    if weights is None:
        return float(np.mean(d2))
    return float(np.sum(d2 * weights) / np.sum(weights))


def local_loss(u: VectorField, ctx: LossContext, spec: LossSpec) -> float:
    """``w_u * MSE(u, u_ref) + w_gradu * MSE(grad u, grad u_ref)``.

    Means run over velocity unknowns and over the four gradient entries of
    every fluid cell.
    """
    ref = ctx.ref.velocity
    g = u.grid
    total = 0.0
    if spec.w_u > 0:
        wts = None
        if spec.area_weighted:
            wts = np.concatenate([g.u_weight[g.u_active], g.v_weight[g.v_active]])
        total += spec.w_u * _mse(u.dofs(), ref.dofs(), wts)
    if spec.w_gradu > 0:
        fluid = g.fluid
        a = np.concatenate([d[fluid] for d in cell_gradient(u)])
        b = np.concatenate([d[fluid] for d in cell_gradient(ref)])
        wts = np.tile(g.p_weight[fluid], 4) if spec.area_weighted else None
        total += spec.w_gradu * _mse(a, b, wts)
    return total


def _relative_gap(value: float, ref_value: float, what: str) -> float:
    if ref_value == 0:
        raise DegenerateReferenceError(f"reference {what} norm is zero")
    return abs((value - ref_value) / ref_value)


def global_contributions(u: VectorField, ctx: LossContext, pressure: ScalarField | None = None,
                         terms=("u", "gradu", "p")) -> dict:
    """Unweighted relative squared-norm gaps of each requested term."""
    out = {}
    if "u" in terms:
        out["u"] = _relative_gap(l2_norm_sq(u), ctx.ref_norm("u"), "velocity")
    if "gradu" in terms:
        out["gradu"] = _relative_gap(h1_seminorm_sq(u), ctx.ref_norm("gradu"), "velocity gradient")
    if "p" in terms:
        if pressure is None:
            raise ValueError("pressure term requested without a pressure field")
        out["p"] = _relative_gap(l2_norm_sq(pressure), ctx.ref_norm("p"), "pressure")
    return out


def global_loss(u: VectorField, ctx: LossContext, spec: LossSpec,
                pressure: ScalarField | None = None) -> float:
    """Weighted sum of relative squared-norm gaps.

    ``pressure`` is the look-ahead pressure produced by a trial evolve from
    the candidate state; it is required when ``spec.w_p > 0``.

    Raises
    ------
    DegenerateReferenceError
        A weighted term has a zero reference norm.
    """
    terms = [t for t, weight in (("u", spec.w_u), ("gradu", spec.w_gradu), ("p", spec.w_p)) if weight > 0]
    parts = global_contributions(u, ctx, pressure, terms)
    weights = {"u": spec.w_u, "gradu": spec.w_gradu, "p": spec.w_p}
    return float(sum(weights[t] * parts[t] for t in terms))


def candidate_velocity(variant: str, params, ctx: LossContext) -> VectorField:
    """EFR output for parameter vector ``params`` under ``variant``.

    ``chi``: ``params = (chi,)`` with the filter at ``ctx.delta`` computed once;
    ``delta``: ``params = (delta,)`` with ``chi = 1``;
    ``delta_chi``: ``params = (delta, chi)``.
    """
    evolved = ctx.evolved.velocity
    if variant == "chi":
        chi = float(params[0])
        if chi == 0:
            return relax(evolved, evolved, 0.0)
        return relax(evolved, ctx.filtered(ctx.delta, cache=True), chi)
    if variant == "delta":
        return ctx.filtered(float(params[0]))
    if variant == "delta_chi":
        delta, chi = float(params[0]), float(params[1])
        return relax(evolved, ctx.filtered(delta), chi)
    raise InvalidSpecError(f"unknown objective variant {variant!r}")


def evaluate_candidate(variant: str, params, ctx: LossContext, spec: LossSpec) -> float:
    """Loss of the EFR output at ``params``, including the look-ahead pressure if weighted."""
    ctx.counters.evaluations += 1
    u = candidate_velocity(variant, params, ctx)
    if spec.kind == "local":
        return local_loss(u, ctx, spec)
    pressure = None
    if spec.w_p > 0:
        ctx.counters.trial_evolves += 1
        ahead = trial_evolve(State(u, ctx.evolved.pressure, ctx.evolved.time), ctx.flow, ctx.grid)
        pressure = ahead.pressure
    return global_loss(u, ctx, spec, pressure)


def make_objective(variant: str, ctx: LossContext, spec: LossSpec):
    """Objective ``params -> loss`` for one optimization instant.

    The returned callable is deterministic; for ``variant='chi'`` the filter
    is solved once and reused across evaluations.
    """
    if variant not in OBJECTIVE_VARIANTS:
        raise InvalidSpecError(f"unknown objective variant {variant!r}")

    def objective(params) -> float:
        return evaluate_candidate(variant, np.atleast_1d(np.asarray(params, dtype=float)), ctx, spec)

    return objective
