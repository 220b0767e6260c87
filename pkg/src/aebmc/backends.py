"""Sequential and data-parallel executors over the shared rollout kernel.

The sequential executor is the reference: one worker, one rollout at a
time, in index order. The parallel executor splits the batch into
contiguous chunks handed to a thread pool; inside a chunk the kernel runs
``LANES`` rollouts in lockstep, refilling a lane from the chunk as soon as
its rollout stops (the CPU analogue of one GPU thread per sample). Each
lane performs exactly the scalar operation sequence, so the two executors
agree bit for bit.
"""
from __future__ import annotations

import json
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import PhysicalConstants, SimConfig, VehicleGeometry, _drag_coeff, _friction_limit, _grade_accel
from .integrator import RolloutResult, _rk4, _rollout
from .sampling import SampleBatch

__all__ = [
    "LANES",
    "DEFAULT_CHUNK_SIZE",
    "ResultArrays",
    "ExecutionReport",
    "ConsistencyVerdict",
    "run_sequential",
    "run_parallel",
    "run_executor",
    "verify_consistency",
    "fit_timing_model",
    "median_time",
    "timing_sweep",
]

LANES = 16
DEFAULT_CHUNK_SIZE = 256


@dataclass(eq=False)
class ResultArrays:
    """Per-sample outputs stored column-wise; indexing yields :class:`RolloutResult`."""

    d_stop: np.ndarray
    steps: np.ndarray
    horizon: np.ndarray
    dt: float

    @classmethod
    def empty(cls, n: int, dt: float) -> "ResultArrays":
        return cls(np.zeros(n), np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.bool_), dt)

    @classmethod
    def from_results(cls, results, dt: float | None = None) -> "ResultArrays":
        if isinstance(results, ResultArrays):
            return results
        results = list(results)
        if dt is None:
            dt = results[0].t_stop / results[0].steps if results and results[0].steps else 0.0
        return cls(
            np.array([r.d_stop for r in results], dtype=float),
            np.array([r.steps for r in results], dtype=np.int64),
            np.array([r.terminated_by_horizon for r in results], dtype=np.bool_),
            dt,
        )

    @property
    def t_stop(self) -> np.ndarray:
        return self.steps * self.dt

    def __len__(self) -> int:
        return int(self.d_stop.size)

    def __getitem__(self, i: int) -> RolloutResult:
        steps = int(self.steps[i])
        return RolloutResult(float(self.d_stop[i]), steps * self.dt, steps, bool(self.horizon[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def prefix(self, n: int) -> "ResultArrays":
        return ResultArrays(self.d_stop[:n], self.steps[:n], self.horizon[:n], self.dt)

    def to_csv(self, path) -> None:
        """Write ``index,d_stop_m,t_stop_s,horizon_flag`` with 17 significant digits."""
        t = self.t_stop
        with open(path, "w", newline="\n") as fh:
            fh.write("index,d_stop_m,t_stop_s,horizon_flag\n")
            for i in range(len(self)):
                fh.write(f"{i},{float(self.d_stop[i]):.17g},{float(t[i]):.17g},{int(self.horizon[i])}\n")

    @classmethod
    def read_csv(cls, path, dt: float) -> "ResultArrays":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        steps = np.rint(rows[:, 2] / dt).astype(np.int64)
        return cls(np.ascontiguousarray(rows[:, 1]), steps, rows[:, 3].astype(np.bool_), dt)


@dataclass(eq=False)
class ExecutionReport:
    results: ResultArrays
    wall_time: float
    executor_id: str
    worker_count: int
    chunk_size: int | None = None

    @property
    def n(self) -> int:
        return len(self.results)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = self.results.d_stop
        out = {
            "executor_id": self.executor_id,
            "worker_count": self.worker_count,
            "n": self.n,
            "summary": {
                "mean_d_stop_m": float(np.mean(d)),
                "sd_d_stop_m": float(np.std(d, ddof=1)) if self.n > 1 else 0.0,
                "min_d_stop_m": float(np.min(d)),
                "max_d_stop_m": float(np.max(d)),
                "horizon_count": int(np.count_nonzero(self.results.horizon)),
            },
        }
        if include_timing:
            out["wall_time_s"] = self.wall_time
        return out

    def to_json(self, path, include_timing: bool = True) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(include_timing), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------- kernels


@njit(cache=True, nogil=True, error_model="numpy")
def _run_sequential(v0, mu, theta, mass, c_d, tau, a_cmd, dt, max_steps,
                    cg_height, wheelbase, g, rho, frontal_area, out_d, out_steps, out_h):
    for i in range(v0.size):
        d, s, hz = _rollout(v0[i], mu[i], theta[i], mass[i], c_d[i], tau[i], a_cmd, dt, max_steps,
                            cg_height, wheelbase, g, rho, frontal_area)
        out_d[i] = d
        out_steps[i] = s
        out_h[i] = hz


@njit(cache=True, nogil=True, error_model="numpy")
def _lane_step(xs, vs, av, a_min, drag_k, grade, a_cmd, taus, dt, n_lanes):
    # n_lanes is a runtime bound on purpose: a constant trip count gets fully
    # unrolled into scalar code instead of SIMD. Vector lanes do the same IEEE
    # operations as the scalar path (no FMA contraction without fast-math).
    for j in range(n_lanes):
        xs[j], vs[j], av[j] = _rk4(xs[j], vs[j], av[j], a_min[j], drag_k[j], grade[j], a_cmd, taus[j], dt)


@njit(cache=True, nogil=True, error_model="numpy")
def _run_lanes(v0, mu, theta, mass, c_d, tau, lo, hi, a_cmd, dt, max_steps,
               cg_height, wheelbase, g, rho, frontal_area, out_d, out_steps, out_h):
    xs = np.zeros(LANES)
    vs = np.zeros(LANES)
    av = np.zeros(LANES)
    a_min = np.zeros(LANES)
    drag_k = np.zeros(LANES)
    grade = np.zeros(LANES)
    taus = np.ones(LANES)
    idx = np.full(LANES, -1, dtype=np.int64)
    count = np.zeros(LANES, dtype=np.int64)

    nxt = lo
    active = 0
    for j in range(LANES):
        if nxt < hi:
            i = nxt
            nxt += 1
            idx[j] = i
            active += 1
            vs[j] = v0[i]
            a_min[j] = _friction_limit(mu[i], cg_height, wheelbase, g)
            drag_k[j] = _drag_coeff(rho, c_d[i], frontal_area, mass[i])
            grade[j] = _grade_accel(g, theta[i])
            taus[j] = tau[i]

    while active > 0:
        _lane_step(xs, vs, av, a_min, drag_k, grade, a_cmd, taus, dt, xs.size)
        for j in range(LANES):
            i = idx[j]
            if i < 0:
                continue
            count[j] += 1
            stopped = vs[j] <= 0.0
            if stopped or count[j] >= max_steps:
                out_d[i] = xs[j]
                out_steps[i] = count[j]
                out_h[i] = not stopped
                count[j] = 0
                xs[j] = 0.0
                av[j] = 0.0
                if nxt < hi:
                    i = nxt
                    nxt += 1
                    idx[j] = i
                    vs[j] = v0[i]
                    a_min[j] = _friction_limit(mu[i], cg_height, wheelbase, g)
                    drag_k[j] = _drag_coeff(rho, c_d[i], frontal_area, mass[i])
                    grade[j] = _grade_accel(g, theta[i])
                    taus[j] = tau[i]
                else:
                    # idle lane: a zero state keeps it finite until the chunk drains
                    idx[j] = -1
                    active -= 1
                    vs[j] = 0.0
                    taus[j] = 1.0


def _scenario_args(config: SimConfig, geom: VehicleGeometry, consts: PhysicalConstants):
    return (config.a_brake_cmd, config.dt, config.max_steps,
            geom.cg_height, geom.wheelbase, consts.g, consts.rho, consts.frontal_area)


def run_sequential(
    batch: SampleBatch,
    config: SimConfig,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
) -> ExecutionReport:
    """Reference executor: every rollout in index order on the calling thread."""
    if batch.n < 1:
        raise ValueError("batch is empty")
    out = ResultArrays.empty(batch.n, config.dt)
    args = _scenario_args(config, geom, consts)
    t0 = time.perf_counter()
    _run_sequential(*batch.columns(), *args, out.d_stop, out.steps, out.horizon)
    wall = time.perf_counter() - t0
    return ExecutionReport(out, wall, "sequential", 1)


def run_parallel(
    batch: SampleBatch,
    config: SimConfig,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
    worker_count: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> ExecutionReport:
    """Data-parallel executor: contiguous chunks over a pool of ``worker_count`` threads.

    Workers write only to their own index range of pre-allocated output
    arrays; the kernel releases the GIL. Chunking affects timing, never values.
    """
    if worker_count is None:
        worker_count = os.cpu_count() or 1
    if worker_count < 1:
        raise ValueError(f"worker_count must be >= 1, got {worker_count}")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    if batch.n < 1:
        raise ValueError("batch is empty")
    n = batch.n
    out = ResultArrays.empty(n, config.dt)
    cols = batch.columns()
    args = _scenario_args(config, geom, consts)

    def work(lo):
        _run_lanes(*cols, lo, min(n, lo + chunk_size), *args, out.d_stop, out.steps, out.horizon)

    t0 = time.perf_counter()
    if worker_count == 1:
        for lo in range(0, n, chunk_size):
            work(lo)
    else:
        with ThreadPoolExecutor(max_workers=worker_count) as pool:
            # list() re-raises the first worker exception, if any
            list(pool.map(work, range(0, n, chunk_size)))
    wall = time.perf_counter() - t0
    return ExecutionReport(out, wall, "parallel", worker_count, chunk_size)


def run_executor(executor: str, batch, config, geom, consts, worker_count=None,
                 chunk_size=DEFAULT_CHUNK_SIZE) -> ExecutionReport:
    if executor == "sequential":
        return run_sequential(batch, config, geom, consts)
    if executor == "parallel":
        return run_parallel(batch, config, geom, consts, worker_count, chunk_size)
    raise ValueError(f"unknown executor {executor!r}")


@dataclass(frozen=True)
class ConsistencyVerdict:
    max_abs_deviation: float
    bitwise_equal: bool
    n: int
    mismatched: int
    first_mismatch: int | None = None

    @property
    def passed(self) -> bool:
        return self.max_abs_deviation == 0.0 and self.bitwise_equal

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "max_abs_deviation_m": self.max_abs_deviation,
            "bitwise_equal": self.bitwise_equal,
            "mismatched": self.mismatched,
            "first_mismatch": self.first_mismatch,
            "passed": self.passed,
        }


def verify_consistency(report_a, report_b) -> ConsistencyVerdict:
    """Compare two executions sample by sample.

    Accepts :class:`ExecutionReport` or :class:`ResultArrays`. Passes only if the
    largest stopping-distance difference is exactly zero and every result word
    (distance bits, step count, horizon flag) is identical.
    """
    a = getattr(report_a, "results", report_a)
    b = getattr(report_b, "results", report_b)
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    da = np.ascontiguousarray(a.d_stop, dtype=np.float64)
    db = np.ascontiguousarray(b.d_stop, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        dev = np.abs(da - db)
    delta = float(np.max(dev)) if dev.size else 0.0
    differ = (da.view(np.uint64) != db.view(np.uint64)) | (a.steps != b.steps) | (a.horizon != b.horizon)
    bad = np.flatnonzero(differ)
    return ConsistencyVerdict(
        max_abs_deviation=delta,
        bitwise_equal=bad.size == 0,
        n=len(a),
        mismatched=int(bad.size),
        first_mismatch=int(bad[0]) if bad.size else None,
    )


def fit_timing_model(measurements, relative: bool = True) -> tuple[float, float]:
    """Least-squares ``wall_time ~ t_overhead + t_per_sample * n``.

    ``measurements`` is a sequence of ``(n, wall_time)`` pairs with at least
    three distinct ``n``. Returns ``(t_overhead, t_per_sample)``.

    Timing noise grows roughly in proportion to the run time, so by default
    residuals are weighted by ``1 / wall_time**2`` (relative error). With
    plain least squares over sizes spanning decades, the largest run's jitter
    swamps any fixed overhead. ``relative=False`` gives the unweighted fit.
    """
    pts = np.asarray(list(measurements), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or np.unique(pts[:, 0]).size < 3:
        raise ValueError("need at least 3 distinct sample counts")
    n, t = pts[:, 0], pts[:, 1]
    if relative and np.any(t <= 0):
        raise ValueError("relative weighting needs positive wall times")
    w = 1.0 / (t * t) if relative else np.ones_like(t)
    n_bar = np.dot(w, n) / w.sum()
    t_bar = np.dot(w, t) / w.sum()
    dn = n - n_bar
    slope = float(np.dot(w * dn, t - t_bar) / np.dot(w * dn, dn))
    return float(t_bar - slope * n_bar), slope


def median_time(fn, repeats: int = 5, warmup: int = 1) -> float:
    """Median wall time of ``fn()`` over ``repeats`` runs after ``warmup`` discarded runs."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def timing_sweep(executor: str, batch: SampleBatch, ns, config, geom, consts, worker_count=None,
                 chunk_size=DEFAULT_CHUNK_SIZE, repeats: int = 5, warmup: int = 1) -> list[tuple[int, float]]:
    """Median executor wall time (sampling excluded) for each prefix length in ``ns``.

    Repeats are interleaved across sizes (round-robin) so slow drift in
    machine speed spreads over all points instead of biasing one of them.
    """
    subs = [batch.prefix(int(n)) for n in ns]

    def once(sub):
        return run_executor(executor, sub, config, geom, consts, worker_count, chunk_size).wall_time

    for sub in subs:
        for _ in range(warmup):
            once(sub)
    times = [[] for _ in subs]
    for _ in range(repeats):
        for k, sub in enumerate(subs):
            times[k].append(once(sub))
    return [(int(n), statistics.median(ts)) for n, ts in zip(ns, times)]
