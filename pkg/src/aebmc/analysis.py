"""Statistics over rollout results: summaries, convergence, collision risk, latency budget."""
from __future__ import annotations

import logging
import math
import os
import statistics
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .backends import DEFAULT_CHUNK_SIZE, ResultArrays, run_executor, run_parallel
from .dynamics import PhysicalConstants, SimConfig, VehicleGeometry
from .sampling import UncertaintyModel, draw_batch

__all__ = [
    "DEFAULT_RISK_LEVELS",
    "CONVERGENCE_BASELINE_N",
    "DistributionSummary",
    "ConvergenceRow",
    "RiskCurve",
    "TimingBudget",
    "TimingReport",
    "summarize",
    "convergence_table",
    "convergence_rows",
    "collision_probability",
    "collision_curve",
    "min_safe_headway",
    "risk_curve",
    "ttc_for_headway",
    "max_samples_within_budget",
]

log = logging.getLogger(__name__)

DEFAULT_RISK_LEVELS = (0.05, 0.01, 0.001)
CONVERGENCE_BASELINE_N = 12_000


def _as_arrays(results) -> ResultArrays:
    res = ResultArrays.from_results(results)
    if len(res) == 0:
        raise ValueError("no results")
    return res


def _mean_sd(d: np.ndarray) -> tuple[float, float]:
    # shifting by the first value keeps constant samples exact
    dev = d - d[0]
    mean = float(d[0] + np.mean(dev))
    sd = float(np.std(dev, ddof=1)) if d.size > 1 else 0.0
    return mean, sd


def _exceedance_keys(res: ResultArrays) -> np.ndarray:
    # a rollout that never stopped exceeds every finite headway
    return np.where(res.horizon, np.inf, res.d_stop)


# ------------------------------------------------------------ summaries


@dataclass
class DistributionSummary:
    n: int
    mean: float
    sd: float
    min: float
    max: float
    median: float
    skewness: float
    right_skewed: bool
    horizon_count: int
    bin_edges: np.ndarray
    counts: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean_m": self.mean,
            "sd_m": self.sd,
            "min_m": self.min,
            "max_m": self.max,
            "median_m": self.median,
            "skewness": self.skewness,
            "right_skewed": self.right_skewed,
            "horizon_count": self.horizon_count,
            "histogram": {
                "bin_edges_m": [float(e) for e in self.bin_edges],
                "counts": [int(c) for c in self.counts],
            },
        }


def summarize(results, bin_width: float = 2.0) -> DistributionSummary:
    """Moments, extrema and a fixed-width histogram of the stopping distances.

    The histogram spans ``[floor(min), ceil(max)]`` in ``bin_width`` steps (the
    last edge may overshoot ``ceil(max)``). Horizon-terminated rollouts enter
    the statistics at their horizon position and are counted separately.
    """
    if not bin_width > 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    res = _as_arrays(results)
    d = res.d_stop
    n = d.size
    mean, sd = _mean_sd(d)
    median = float(np.median(d))
    dev = d - mean
    m2 = float(np.mean(dev * dev))
    skew = float(np.mean(dev * dev * dev)) / m2 ** 1.5 if m2 > 0 else 0.0

    lo, hi = math.floor(float(d.min())), math.ceil(float(d.max()))
    n_bins = max(1, math.ceil((hi - lo) / bin_width))
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(d, bins=edges)
    return DistributionSummary(
        n=int(n), mean=mean, sd=sd, min=float(d.min()), max=float(d.max()), median=median,
        skewness=skew, right_skewed=mean > median,
        horizon_count=int(np.count_nonzero(res.horizon)),
        bin_edges=edges, counts=counts,
    )


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    mean: float
    sd: float
    delta_mean: float
    delta_sd: float


def convergence_rows(results, n_values, baseline: int = CONVERGENCE_BASELINE_N) -> list[ConvergenceRow]:
    """Mean/sd of each prefix ``results[:n]`` with deltas against the ``baseline`` prefix."""
    res = _as_arrays(results)
    n_values = [int(n) for n in n_values]
    if baseline not in n_values:
        raise ValueError(f"n_values must include the baseline n={baseline}")
    if max(n_values) > len(res):
        raise ValueError(f"need {max(n_values)} results, have {len(res)}")
    if min(n_values) < 2:
        raise ValueError("every n must be >= 2 for a sample standard deviation")

    def stats(n):
        return _mean_sd(res.d_stop[:n])

    base_mean, base_sd = stats(baseline)
    rows = []
    for n in n_values:
        mean, sd = stats(n)
        rows.append(ConvergenceRow(n, mean, sd, mean - base_mean, sd - base_sd))
    return rows


def convergence_table(
    model: UncertaintyModel,
    n_values,
    config: SimConfig,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
    baseline: int = CONVERGENCE_BASELINE_N,
    executor: str = "parallel",
    worker_count: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> list[ConvergenceRow]:
    """Convergence of mean and sd over nested prefixes of one master batch.

    The master batch has ``max(n_values)`` samples; since batches are
    prefix-stable, every row is the leading slice of the same stream.
    """
    n_max = max(int(n) for n in n_values)
    batch = draw_batch(model, n_max, tau_nominal=geom.tau)
    report = run_executor(executor, batch, config, geom, consts, worker_count, chunk_size)
    return convergence_rows(report.results, n_values, baseline)


# ------------------------------------------------------------------ risk


def collision_probability(results, h0: float) -> float:
    """Fraction of rollouts whose stopping distance exceeds headway ``h0``."""
    if not h0 >= 0:
        raise ValueError(f"h0 must be >= 0, got {h0}")
    keys = _exceedance_keys(_as_arrays(results))
    return int(np.count_nonzero(keys > h0)) / keys.size


def collision_curve(results, headways) -> np.ndarray:
    """:func:`collision_probability` evaluated on a grid of headways."""
    keys = np.sort(_exceedance_keys(_as_arrays(results)))
    h = np.asarray(headways, dtype=float)
    if np.any(h < 0):
        raise ValueError("headways must be >= 0")
    exceed = keys.size - np.searchsorted(keys, h, side="right")
    return exceed / keys.size


def min_safe_headway(results, risk: float) -> float:
    """Smallest sampled headway whose collision probability is at most ``risk``.

    This is the ``ceil((1 - risk) * n)``-th order statistic, computed with the
    exact binary value of ``risk`` so that e.g. ``0.05 * 12000`` lands on 600
    rather than drifting across an integer. Returns ``inf`` when the order
    statistic is a rollout that never stopped.
    """
    if not 0 < risk < 1:
        raise ValueError(f"risk must lie in (0, 1), got {risk}")
    keys = np.sort(_exceedance_keys(_as_arrays(results)))
    n = keys.size
    if n * risk < 1:
        warnings.warn(
            f"risk {risk} with n={n} leaves fewer than one expected exceedance; "
            "the headway is the sample maximum",
            stacklevel=2,
        )
    k = math.ceil(n * (1 - Fraction(risk)))
    return float(keys[k - 1])


def ttc_for_headway(h0: float, v_rel: float) -> float:
    """Time to collision (s) for headway ``h0`` (m) at closing speed ``v_rel`` (m/s)."""
    if not v_rel > 0:
        raise ValueError(f"v_rel must be > 0, got {v_rel}")
    return h0 / v_rel


@dataclass
class RiskCurve:
    headways: np.ndarray
    probabilities: np.ndarray
    thresholds: dict = field(default_factory=dict)

    def ttc(self, v_rel: float) -> dict:
        return {r: ttc_for_headway(h, v_rel) for r, h in self.thresholds.items()}


def risk_curve(results, headways=None, risk_levels=DEFAULT_RISK_LEVELS, step: float = 0.5) -> RiskCurve:
    """Collision-probability curve plus the minimum safe headway per risk level.

    Without an explicit grid, headways run from 0 to just past the largest
    finite stopping distance in ``step`` increments.
    """
    res = _as_arrays(results)
    if headways is None:
        top = math.ceil(float(np.max(res.d_stop))) + step
        headways = step * np.arange(int(math.ceil(top / step)) + 1)
    headways = np.asarray(headways, dtype=float)
    if np.any(np.diff(headways) <= 0):
        raise ValueError("headway grid must be strictly increasing")
    levels = sorted({float(r) for r in risk_levels}, reverse=True)
    thresholds = {r: min_safe_headway(res, r) for r in levels}
    return RiskCurve(headways, collision_curve(res, headways), thresholds)


# ------------------------------------------------------------ real time


@dataclass(frozen=True)
class TimingBudget:
    """Reaction-time budget split (ms); what is left after perception and decision goes to sampling."""

    total_ms: float = 700.0
    perception_ms: float = 120.0
    decision_ms: float = 50.0

    def __post_init__(self):
        if self.perception_ms < 0 or self.decision_ms < 0:
            raise ValueError("perception_ms and decision_ms must be >= 0")
        if not self.mc_budget_ms > 0:
            raise ValueError(
                f"perception ({self.perception_ms}) + decision ({self.decision_ms}) "
                f"must leave a positive Monte Carlo budget out of {self.total_ms} ms"
            )

    @property
    def mc_budget_ms(self) -> float:
        return self.total_ms - self.perception_ms - self.decision_ms

    @classmethod
    def monte_carlo_only(cls, mc_budget_ms: float) -> "TimingBudget":
        return cls(total_ms=mc_budget_ms, perception_ms=0.0, decision_ms=0.0)


@dataclass
class TimingReport:
    budget_total: float
    perception: float
    decision: float
    mc_budget: float
    max_n_within_budget: int
    meets_convergence_threshold: bool
    # median pipeline time at max_n: sampling + simulation (ms)
    time_at_max_n_ms: float | None = None
    # median simulation-only time at max_n (ms)
    simulation_time_at_max_n_ms: float | None = None
    worker_count: int = 1
    capped: bool = False
    probes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "budget_total_ms": self.budget_total,
            "perception_ms": self.perception,
            "decision_ms": self.decision,
            "mc_budget_ms": self.mc_budget,
            "max_n_within_budget": self.max_n_within_budget,
            "meets_convergence_threshold": self.meets_convergence_threshold,
            "convergence_threshold_n": CONVERGENCE_BASELINE_N,
            "time_at_max_n_ms": self.time_at_max_n_ms,
            "simulation_time_at_max_n_ms": self.simulation_time_at_max_n_ms,
            "worker_count": self.worker_count,
            "capped": self.capped,
            "probes": [{"n": n, "feasible": ok, "median_ms": t} for n, ok, t in self.probes],
        }


def max_samples_within_budget(
    budget,
    model: UncertaintyModel,
    config: SimConfig,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
    worker_count: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    repeats: int = 5,
    n_cap: int | None = None,
    resolution: float = 1 / 32,
) -> TimingReport:
    """Largest sample count whose sampling + parallel simulation fits the budget.

    ``budget`` is a :class:`TimingBudget` or a bare Monte Carlo budget in ms.
    A candidate ``n`` is feasible when the median of ``repeats`` timed runs is
    within budget; runs stop as soon as a majority decides the median. The
    search calibrates a starting point from one timed run, doubles until a
    candidate fails, then bisects until the bracket is narrower than
    ``resolution * lo``. ``n_cap`` bounds the search (the result is then
    flagged ``capped``). The machine should be otherwise idle while this runs.
    """
    if not isinstance(budget, TimingBudget):
        budget = TimingBudget.monte_carlo_only(float(budget))
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    worker_count = worker_count or os.cpu_count() or 1
    limit_s = budget.mc_budget_ms / 1000.0
    need = repeats // 2 + 1
    probes = []
    timings = {}

    def timed(n):
        t0 = time.perf_counter()
        batch = draw_batch(model, n, tau_nominal=geom.tau)
        rep = run_parallel(batch, config, geom, consts, worker_count, chunk_size)
        return time.perf_counter() - t0, rep.wall_time

    def feasible(n):
        runs = []
        ok = bad = 0
        while ok < need and bad < need:
            total, sim = timed(n)
            runs.append((total, sim))
            if total <= limit_s:
                ok += 1
            else:
                bad += 1
        med = statistics.median(r[0] for r in runs)
        timings[n] = (med, statistics.median(r[1] for r in runs))
        probes.append((n, ok >= need, med * 1000.0))
        log.debug("n=%d median=%.1f ms feasible=%s", n, med * 1000.0, ok >= need)
        return ok >= need

    timed(min(256, n_cap or 256))  # JIT and cache warm-up

    def report(n, capped=False):
        med, sim = timings.get(n, (None, None))
        return TimingReport(
            budget_total=budget.total_ms, perception=budget.perception_ms, decision=budget.decision_ms,
            mc_budget=budget.mc_budget_ms, max_n_within_budget=n,
            meets_convergence_threshold=n >= CONVERGENCE_BASELINE_N,
            time_at_max_n_ms=None if med is None else med * 1000.0,
            simulation_time_at_max_n_ms=None if sim is None else sim * 1000.0,
            worker_count=worker_count, capped=capped, probes=probes,
        )

    if not feasible(1):
        warnings.warn("budget is smaller than a single-sample run", stacklevel=2)
        return report(0)

    n_cal = 1024 if n_cap is None else max(1, min(1024, n_cap))
    t_cal, _ = timed(n_cal)
    guess = limit_s / (t_cal / n_cal)
    lo, hi = 1, None
    n = max(2, int(guess / 2))
    while hi is None:
        if n_cap is not None and n >= n_cap:
            if feasible(n_cap):
                return report(n_cap, capped=True)
            hi = n_cap
        elif feasible(n):
            lo = n
            n *= 2
        else:
            hi = n
    while hi - lo > max(1, int(lo * resolution)):
        mid = (lo + hi) // 2
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return report(lo)
