"""Full simulations: fine-grid reference, fixed-parameter baselines and
optimized EFR runs with on-the-fly parameter tuning."""
from __future__ import annotations

import dataclasses
import time as _time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .cases import initial_state
from .efr import FilterConfig, differential_filter, relax
from .errors import IncompatibleGridsError, InvalidSpecError
from .evolve import FlowConfig, evolve_step
from .fields import State, avg_abs_divergence, h1_seminorm_sq, l2_norm_sq, max_abs
from .grid import GeometrySpec, Grid, build_grid, restrict
from .loss import Counters, LossContext, LossSpec, evaluate_candidate, make_objective
from .optimizer import Bounds, OptOptions, OptResult, minimize_bounded, optimization_schedule

VARIANTS = ("dns", "no_efr", "standard_efr", "standard_ef", "chi_opt", "delta_opt_ef",
            "delta_chi_opt")
BASELINE_VARIANTS = ("no_efr", "standard_efr", "standard_ef")
OPT_VARIANTS = {"chi_opt": "chi", "delta_opt_ef": "delta", "delta_chi_opt": "delta_chi"}

__all__ = ["RunConfig", "ReferenceSeries", "ParamTrajectory", "RunResult", "run_dns",
           "run_baseline", "run_opt_efr", "run", "evaluate_candidate", "get_grid"]


@lru_cache(maxsize=16)
def get_grid(spec: GeometrySpec, nx: int, ny: int) -> Grid:
    """Shared grid instance (so assembled operators are reused across runs)."""
    return build_grid(spec, nx, ny)


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one simulation.

    ``delta0`` defaults to the flow's ``eta`` and ``chi0`` to ``5*dt``;
    ``no_efr`` forces ``chi = 0`` and the EF variants force ``chi = 1``.
    """

    flow: FlowConfig = field(default_factory=FlowConfig)
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    coarse: tuple = (64, 12)
    fine: Optional[tuple] = (128, 24)
    filter: FilterConfig = field(default_factory=FilterConfig)
    variant: str = "delta_chi_opt"
    loss: LossSpec = field(default_factory=LossSpec)
    k: int = 10
    delta0: Optional[float] = None
    chi0: Optional[float] = None
    delta_bounds: tuple = (1e-5, 1e-3)
    chi_bounds: tuple = (0.0, 1.0)
    opt: OptOptions = field(default_factory=OptOptions)
    initial: str = "zero"
    initial_params: tuple = ()
    snapshot_stride: int = 1
    output_dir: Optional[str] = None
    ref_dir: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise InvalidSpecError(f"unknown variant {self.variant!r}")
        if self.k < 1:
            raise InvalidSpecError("cadence k must be >= 1")
        if self.snapshot_stride < 1:
            raise InvalidSpecError("snapshot stride must be >= 1")
        for name, (lo, hi) in (("delta", self.delta_bounds), ("chi", self.chi_bounds)):
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise InvalidSpecError(f"{name} bounds are inverted or not finite")
        if self.delta_bounds[0] < 0:
            raise InvalidSpecError("delta bounds must be nonnegative")
        if self.chi_bounds[0] < 0 or self.chi_bounds[1] > 1:
            raise InvalidSpecError("chi bounds must lie within [0, 1]")
        if self.variant == "delta_opt_ef" and self.chi0 is not None and self.chi0 != 1:
            raise InvalidSpecError("delta_opt_ef fixes chi = 1")
        if self.variant == "standard_ef" and self.chi0 is not None and self.chi0 != 1:
            raise InvalidSpecError("standard_ef fixes chi = 1")
        if self.variant == "standard_efr" and self.chi0 == 0:
            raise InvalidSpecError("standard_efr with chi = 0 is the no_efr variant")
        if self.variant == "no_efr" and self.chi0 not in (None, 0):
            raise InvalidSpecError("no_efr fixes chi = 0")
        if self.delta0 is not None and not self.delta0 >= 0:
            raise InvalidSpecError("delta0 must be >= 0")
        if self.chi0 is not None and not 0 <= self.chi0 <= 1:
            raise InvalidSpecError("chi0 must lie in [0, 1]")

    # ------------------------------------------------------------- resolved
    @property
    def delta_init(self) -> float:
        return self.flow.eta if self.delta0 is None else float(self.delta0)

    @property
    def chi_init(self) -> float:
        if self.variant == "no_efr":
            return 0.0
        if self.variant in ("standard_ef", "delta_opt_ef"):
            return 1.0
        return 5.0 * self.flow.dt if self.chi0 is None else float(self.chi0)

    def coarse_grid(self) -> Grid:
        return get_grid(self.geometry, *self.coarse)

    def fine_grid(self) -> Grid:
        if self.fine is None:
            raise InvalidSpecError("no fine grid configured")
        return get_grid(self.geometry, *self.fine)

    def initial_state(self, grid: Grid) -> State:
        return initial_state(self.initial, grid, nu=self.flow.nu, t=self.flow.t0,
                             **dict(self.initial_params))

    def with_(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class ReferenceSeries:
    """Restricted reference snapshots at every coarse time level."""

    snapshots: list
    times: np.ndarray
    geometry: GeometrySpec
    fine: tuple
    coarse: tuple
    dt: float
    wall_clock_s: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.snapshots) != self.times.size:
            raise InvalidSpecError("snapshot and time counts differ")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise InvalidSpecError("reference times must increase strictly")

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, n) -> State:
        return self.snapshots[n]

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    def check_aligned(self, flow: FlowConfig) -> None:
        n = flow.n_steps
        if len(self) != n + 1:
            raise IncompatibleGridsError(f"reference has {len(self)} snapshots, run needs {n + 1}")
        expected = flow.t0 + flow.dt * np.arange(n + 1)
        if not np.allclose(self.times, expected, rtol=0, atol=1e-9 * max(1.0, flow.T)):
            raise IncompatibleGridsError("reference time lattice does not match the run")


@dataclass
class InstantRecord:
    """One optimization instant."""

    step: int
    time: float
    x0: np.ndarray
    result: OptResult
    applied: tuple
    aborted: bool
    counters: Counters

    @property
    def warm_value(self) -> float:
        return self.result.fun0

    @property
    def applied_value(self) -> float:
        return self.result.fun0 if self.aborted else self.result.fun


@dataclass
class ParamTrajectory:
    """Parameters applied at every time level plus per-instant records."""

    delta: list = field(default_factory=list)
    chi: list = field(default_factory=list)
    instants: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def append(self, delta: float, chi: float) -> None:
        self.delta.append(float(delta))
        self.chi.append(float(chi))

    def as_arrays(self):
        return np.array(self.delta), np.array(self.chi)


@dataclass
class RunResult:
    """Snapshots, parameter history, timing and diagnostics of one run."""

    variant: str
    snapshots: list
    steps: list
    trajectory: ParamTrajectory
    wall_clock_s: float
    diagnostics: dict
    config: Optional[RunConfig] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])


def _diagnostics_row(state: State) -> dict:
    vel = state.velocity
    return {"time": state.time, "l2_u": l2_norm_sq(vel), "h1_u": h1_seminorm_sq(vel),
            "avg_div": avg_abs_divergence(vel), "max_abs_u": max_abs(vel)}


def _collect(rows):
    return {k: np.array([r[k] for r in rows]) for k in rows[0]} if rows else {}


def run_dns(cfg: RunConfig, initial: State | None = None) -> ReferenceSeries:
    """Unregularized run on the fine grid, restricted to the coarse grid at every step."""
    fine = cfg.fine_grid()
    coarse = cfg.coarse_grid()
    flow = cfg.flow
    state = initial if initial is not None else cfg.initial_state(fine)
    t_start = _time.perf_counter()
    snaps = [restrict(state, fine, coarse)]
    for n in range(flow.n_steps):
        state = dataclasses.replace(evolve_step(state, flow, fine), time=flow.time(n + 1))
        snaps.append(restrict(state, fine, coarse))
    wall = _time.perf_counter() - t_start
    return ReferenceSeries(snapshots=snaps, times=[s.time for s in snaps], geometry=cfg.geometry,
                           fine=tuple(cfg.fine), coarse=tuple(cfg.coarse), dt=flow.dt,
                           wall_clock_s=wall)


def run_baseline(cfg: RunConfig, initial: State | None = None,
                 ref: ReferenceSeries | None = None) -> RunResult:
    """Fixed-parameter run: ``no_efr``, ``standard_efr`` or ``standard_ef``.

    When ``ref`` is given and ``initial`` is not, the run starts from the
    restricted reference initial state, as optimized runs do.
    """
    if cfg.variant not in BASELINE_VARIANTS:
        raise InvalidSpecError(f"{cfg.variant!r} is not a baseline variant")
    if ref is not None:
        ref.check_aligned(cfg.flow)
    return _run_coarse(cfg, ref, initial)


def run_opt_efr(cfg: RunConfig, ref: ReferenceSeries, initial: State | None = None) -> RunResult:
    """Optimized EFR run following the periodic re-optimization loop.

    At every step the state is evolved; at optimization instants the loss of
    the candidate EFR output against the restricted reference is minimized,
    warm-started from the previous optimum; the current parameters are then
    used to filter and relax.  The run starts from ``ref[0]`` unless
    ``initial`` is given.  An optimizer abort keeps the previous
    parameters and is recorded in ``trajectory.events``.
    """
    if cfg.variant not in OPT_VARIANTS:
        raise InvalidSpecError(f"{cfg.variant!r} is not an optimized variant")
    ref.check_aligned(cfg.flow)
    if ref.grid.nx != cfg.coarse[0] or ref.grid.ny != cfg.coarse[1]:
        raise IncompatibleGridsError("reference is not on the run's coarse grid")
    return _run_coarse(cfg, ref, initial)


def run(cfg: RunConfig, ref: ReferenceSeries | None = None, initial: State | None = None):
    """Dispatch on ``cfg.variant``."""
    if cfg.variant == "dns":
        return run_dns(cfg, initial)
    if cfg.variant in BASELINE_VARIANTS:
        return run_baseline(cfg, initial, ref)
    if ref is None:
        raise InvalidSpecError(f"variant {cfg.variant!r} needs a reference series")
    return run_opt_efr(cfg, ref, initial)


def _bounds_and_start(cfg: RunConfig, current):
    kind = OPT_VARIANTS[cfg.variant]
    if kind == "chi":
        return Bounds.from_pairs(cfg.chi_bounds), np.array([current[1]])
    if kind == "delta":
        return Bounds.from_pairs(cfg.delta_bounds), np.array([current[0]])
    return Bounds.from_pairs(cfg.delta_bounds, cfg.chi_bounds), np.array(current)


def _apply_solution(kind: str, x, current):
    if kind == "chi":
        return (current[0], float(x[0]))
    if kind == "delta":
        return (float(x[0]), 1.0)
    return (float(x[0]), float(x[1]))


def _run_coarse(cfg: RunConfig, ref: ReferenceSeries | None, initial: State | None) -> RunResult:
    grid = cfg.coarse_grid()
    flow = cfg.flow
    n_steps = flow.n_steps
    if initial is not None:
        state = initial
    elif ref is not None:
        state = ref[0]
    else:
        state = cfg.initial_state(grid)
    current = (cfg.delta_init, cfg.chi_init)
    kind = OPT_VARIANTS.get(cfg.variant)

    traj = ParamTrajectory()
    traj.append(*current)
    snaps, steps, diag = [state], [0], [_diagnostics_row(state)]
    t_start = _time.perf_counter()
    for n in range(n_steps):
        evolved = dataclasses.replace(evolve_step(state, flow, grid), time=flow.time(n + 1))
        filtered = None
        if kind is not None and optimization_schedule(n, cfg.k):
            ref_next = ref[n + 2] if n + 2 < len(ref) else None
            spec = cfg.loss
            if spec.w_p > 0 and ref_next is None:
                # no look-ahead reference beyond the window; drop the pressure term
                spec = dataclasses.replace(spec, w_p=0.0)
            ctx = LossContext(grid=grid, flow=flow, filter=cfg.filter, evolved=evolved,
                              ref=ref[n + 1], ref_next=ref_next, delta=current[0])
            bounds, x0 = _bounds_and_start(cfg, current)
            res = minimize_bounded(make_objective(kind, ctx, spec), bounds, x0, cfg.opt)
            aborted = res.aborted or not np.isfinite(res.fun)
            if aborted:
                traj.events.append({"step": n, "time": evolved.time, "event": "optimizer_abort",
                                    "message": res.message})
            else:
                current = _apply_solution(kind, res.x, current)
            if kind == "chi":
                filtered = ctx._filtered_cache.get(current[0])
            traj.instants.append(InstantRecord(step=n, time=evolved.time, x0=x0, result=res,
                                               applied=current, aborted=aborted, counters=ctx.counters))
        delta, chi = current
        if chi == 0:
            vel = evolved.velocity
        else:
            if filtered is None:
                filtered = differential_filter(evolved.velocity, delta, cfg.filter, grid)
            vel = relax(evolved.velocity, filtered, chi)
        state = State(vel, evolved.pressure, evolved.time)
        traj.append(delta, chi)
        diag.append(_diagnostics_row(state))
        if (n + 1) % cfg.snapshot_stride == 0 or n + 1 == n_steps:
            snaps.append(state)
            steps.append(n + 1)
    wall = _time.perf_counter() - t_start
    return RunResult(variant=cfg.variant, snapshots=snaps, steps=steps, trajectory=traj,
                     wall_clock_s=wall, diagnostics=_collect(diag), config=cfg)
