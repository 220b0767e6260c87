"""Monte Carlo evaluation of automatic emergency braking.

Typical use::

    from aebmc import RunConfig, draw_batch, run_parallel, summarize, min_safe_headway

    cfg = RunConfig.default()
    batch = draw_batch(cfg.uncertainty, 12_000)
    report = run_parallel(batch, cfg.sim, cfg.geom, cfg.consts)
    summarize(report.results).mean
    min_safe_headway(report.results, 0.01)
"""
__version__ = "0.1.0"

from .analysis import (
    DistributionSummary,
    RiskCurve,
    TimingBudget,
    TimingReport,
    collision_curve,
    collision_probability,
    convergence_rows,
    convergence_table,
    max_samples_within_budget,
    min_safe_headway,
    risk_curve,
    summarize,
    ttc_for_headway,
)
from .backends import (
    ConsistencyVerdict,
    ExecutionReport,
    ResultArrays,
    fit_timing_model,
    run_executor,
    run_parallel,
    run_sequential,
    timing_sweep,
    verify_consistency,
)
from .config import ConfigError, RunConfig, build_config
from .dynamics import (
    PhysicalConstants,
    ScenarioSample,
    SimConfig,
    SimState,
    VehicleGeometry,
    friction_limit,
    longitudinal_accel,
    state_derivative,
)
from .integrator import RolloutResult, integrate_fixed, rk4_step, simulate_rollout, trace_rollout
from .sampling import SampleBatch, UncertaintyModel, draw_batch, standard_normal_at
