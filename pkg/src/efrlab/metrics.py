"""Post-processing: error series, time-averaged loss contributions, gains,
parameter histograms, box-plot statistics and Pareto tables."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .fields import h1_norm_sq, h1_seminorm_sq, l2_norm_sq

NAN = float("nan")


@dataclass
class ErrorSeries:
    """Relative errors per stored step; NaN where the reference norm vanishes."""

    steps: np.ndarray
    times: np.ndarray
    e_l2_u: np.ndarray
    e_l2_p: np.ndarray
    e_h1_u: np.ndarray

    def rows(self):
        for i in range(self.steps.size):
            yield (int(self.steps[i]), float(self.times[i]), float(self.e_l2_u[i]),
                   float(self.e_l2_p[i]), float(self.e_h1_u[i]))


@dataclass(frozen=True)
class SummaryStats:
    median: float
    q1: float
    q3: float
    mean: float
    min: float
    max: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return NAN
    return math.sqrt(num / den)


def _pairs(run, ref):
    steps = getattr(run, "steps", None)
    if steps is None:
        steps = list(range(len(run.snapshots)))
    for n, snap in zip(steps, run.snapshots):
        r = ref[n]
        if abs(r.time - snap.time) > 1e-9 * max(1.0, abs(r.time)):
            raise ValueError(f"time mismatch at step {n}: run {snap.time}, reference {r.time}")
        yield n, snap, r


def relative_errors(run, ref) -> ErrorSeries:
    """L2 velocity, L2 pressure and H1 velocity relative errors per step."""
    steps, times, eu, ep, eh = [], [], [], [], []
    for n, s, r in _pairs(run, ref):
        du = s.velocity - r.velocity
        dp = s.pressure - r.pressure
        steps.append(n)
        times.append(s.time)
        eu.append(_ratio(l2_norm_sq(du), l2_norm_sq(r.velocity)))
        ep.append(_ratio(l2_norm_sq(dp), l2_norm_sq(r.pressure)))
        eh.append(_ratio(h1_norm_sq(du), h1_norm_sq(r.velocity)))
    return ErrorSeries(np.array(steps), np.array(times), np.array(eu), np.array(ep), np.array(eh))


def _gap(value: float, ref_value: float) -> float:
    if ref_value == 0:
        return NAN
    return abs((value - ref_value) / ref_value)


def contribution_series(run, ref) -> dict:
    """Per-step global contributions ``|(|a|^2 - |a_ref|^2) / |a_ref|^2|``.

    Keys ``'u'``, ``'gradu'``, ``'p'`` plus ``'time'``; undefined steps are NaN.
    """
    out = {"time": [], "u": [], "gradu": [], "p": []}
    for _, s, r in _pairs(run, ref):
        out["time"].append(s.time)
        out["u"].append(_gap(l2_norm_sq(s.velocity), l2_norm_sq(r.velocity)))
        out["gradu"].append(_gap(h1_seminorm_sq(s.velocity), h1_seminorm_sq(r.velocity)))
        out["p"].append(_gap(l2_norm_sq(s.pressure), l2_norm_sq(r.pressure)))
    return {k: np.array(v) for k, v in out.items()}


def time_avg_contributions(run, ref, spec=None, t_start: float | None = None) -> dict:
    """Time averages of the global contributions over the stored steps.

    Steps with an undefined contribution are excluded; ``t_start`` drops
    earlier steps.  ``spec`` (a LossSpec), if given, restricts the output to
    its weighted terms.
    """
    series = contribution_series(run, ref)
    keep = np.ones(series["time"].size, dtype=bool)
    if t_start is not None:
        keep &= series["time"] >= t_start - 1e-12
    terms = ("u", "gradu", "p")
    if spec is not None:
        weights = (("u", spec.w_u), ("gradu", spec.w_gradu), ("p", spec.w_p))
        terms = tuple(t for t, weight in weights if weight > 0)
    out = {}
    for t in terms:
        vals = series[t][keep]
        vals = vals[np.isfinite(vals)]
        out[t] = float(np.mean(vals)) if vals.size else NAN
    return out


def time_average(series, times=None, t_start: float | None = None) -> float:
    """Mean of the finite entries, optionally from ``t_start`` on."""
    a = np.asarray(series, dtype=float)
    if t_start is not None and times is not None:
        a = a[np.asarray(times) >= t_start - 1e-12]
    a = a[np.isfinite(a)]
    return float(np.mean(a)) if a.size else NAN


def gain(opt_error: float, baseline_error: float) -> float:
    """Percentage improvement ``100 (baseline - opt) / baseline``.

    Raises
    ------
    DomainError
        ``baseline_error`` is not positive.
    """
    if not baseline_error > 0:
        raise DomainError("baseline error must be positive")
    return 100.0 * (baseline_error - opt_error) / baseline_error


def param_histogram(values, bins=10, range=None):
    """Fraction of samples per bin (``n_points / n_total``).

    ``values`` may be a ParamTrajectory-like sequence or an array.  Returns
    ``(fractions, edges)``.  A constant series with integer ``bins`` puts all
    mass in a single bin.
    """
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("empty trajectory")
    if range is None and np.ndim(bins) == 0 and a.min() == a.max():
        range = (a.min() - 0.5, a.max() + 0.5)
    counts, edges = np.histogram(a, bins=bins, range=range)
    return counts / a.size, edges


def boxplot_stats(series) -> SummaryStats:
    """Median, quartiles (linear interpolation), mean and extremes."""
    a = np.asarray(series, dtype=float).ravel()
    a = a[np.isfinite(a)]
    if a.size == 0:
        raise ValueError("empty series")
    q1, med, q3 = np.percentile(a, [25, 50, 75], method="linear")
    return SummaryStats(median=float(med), q1=float(q1), q3=float(q3), mean=float(a.mean()),
                        min=float(a.min()), max=float(a.max()))


PARETO_COLUMNS = ("variant", "k", "wall_clock_s", "rel_time_pct", "avg_Lu", "avg_Lgradu", "avg_Lp")


@dataclass(frozen=True)
class ParetoRow:
    variant: str
    k: int
    wall_clock_s: float
    rel_time_pct: float
    avg_Lu: float
    avg_Lgradu: float
    avg_Lp: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in PARETO_COLUMNS)


def pareto_row(variant: str, k: int, wall_clock_s: float, dns_wall_clock_s: float,
               contributions: dict) -> ParetoRow:
    return ParetoRow(variant=variant, k=int(k), wall_clock_s=float(wall_clock_s),
                     rel_time_pct=100.0 * wall_clock_s / dns_wall_clock_s,
                     avg_Lu=contributions.get("u", NAN), avg_Lgradu=contributions.get("gradu", NAN),
                     avg_Lp=contributions.get("p", NAN))


def pareto_table(runs, ref, dns_wall_clock_s: float | None = None) -> list:
    """One row per run, sorted by ``(variant, k)``.

    ``runs`` holds RunResult objects (their ``config`` supplies the cadence;
    baselines report ``k = 0``).  The DNS time defaults to
    ``ref.wall_clock_s``.
    """
    dns = ref.wall_clock_s if dns_wall_clock_s is None else dns_wall_clock_s
    if not dns > 0:
        raise DomainError("DNS wall-clock time must be positive")
    rows = []
    for r in runs:
        k = run_cadence(r)
        rows.append(pareto_row(r.variant, k, r.wall_clock_s, dns, time_avg_contributions(r, ref)))
    return sorted(rows, key=lambda row: (row.variant, row.k))


def run_cadence(run) -> int:
    from .orchestrator import OPT_VARIANTS
    cfg = getattr(run, "config", None)
    if cfg is None or run.variant not in OPT_VARIANTS:
        return 0
    return int(cfg.k)
