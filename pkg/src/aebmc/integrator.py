"""Fixed-step RK4 rollouts of the braking system.

A rollout starts at ``(0, v0, 0)`` and steps until the first state with
``v <= 0``. The stopping distance is the position at that step; there is no
zero-crossing interpolation, so the overshoot is at most ``v * dt``.

Stage arithmetic order (all three components integrated jointly)::

    k1 = f(s)
    k2 = f(s + (dt/2) * k1)
    k3 = f(s + (dt/2) * k2)
    k4 = f(s + dt * k3)
    s' = s + (dt/6) * (((k1 + 2*k2) + 2*k3) + k4)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import (
    PhysicalConstants,
    ScenarioSample,
    SimConfig,
    SimState,
    VehicleGeometry,
    _accel,
    _actuator_rate,
    _drag_coeff,
    _friction_limit,
    _grade_accel,
)

__all__ = ["RolloutResult", "rk4_step", "simulate_rollout", "integrate_fixed", "trace_rollout"]


@dataclass(frozen=True)
class RolloutResult:
    d_stop: float
    t_stop: float
    steps: int
    terminated_by_horizon: bool


@njit(cache=True, nogil=True, error_model="numpy")
def _rk4(x, v, a, a_min, drag_k, grade, a_cmd, tau, dt):
    half = 0.5 * dt
    sixth = dt / 6.0

    k1x = v
    k1v = _accel(v, a, a_min, drag_k, grade)
    k1a = _actuator_rate(a, a_cmd, tau)

    v2 = v + half * k1v
    a2 = a + half * k1a
    k2x = v2
    k2v = _accel(v2, a2, a_min, drag_k, grade)
    k2a = _actuator_rate(a2, a_cmd, tau)

    v3 = v + half * k2v
    a3 = a + half * k2a
    k3x = v3
    k3v = _accel(v3, a3, a_min, drag_k, grade)
    k3a = _actuator_rate(a3, a_cmd, tau)

    v4 = v + dt * k3v
    a4 = a + dt * k3a
    k4x = v4
    k4v = _accel(v4, a4, a_min, drag_k, grade)
    k4a = _actuator_rate(a4, a_cmd, tau)

    x_new = x + sixth * (((k1x + 2.0 * k2x) + 2.0 * k3x) + k4x)
    v_new = v + sixth * (((k1v + 2.0 * k2v) + 2.0 * k3v) + k4v)
    a_new = a + sixth * (((k1a + 2.0 * k2a) + 2.0 * k3a) + k4a)
    return x_new, v_new, a_new


@njit(cache=True, nogil=True, error_model="numpy")
def _rollout(v0, mu, theta, mass, c_d, tau, a_cmd, dt, max_steps, cg_height, wheelbase, g, rho, frontal_area):
    """Returns ``(d_stop, steps, hit_horizon)`` for one parameter draw."""
    a_min = _friction_limit(mu, cg_height, wheelbase, g)
    drag_k = _drag_coeff(rho, c_d, frontal_area, mass)
    grade = _grade_accel(g, theta)

    x = 0.0
    v = v0
    a = 0.0
    steps = 0
    while steps < max_steps:
        x, v, a = _rk4(x, v, a, a_min, drag_k, grade, a_cmd, tau, dt)
        steps += 1
        if v <= 0.0:
            return x, steps, False
    return x, steps, True


@njit(cache=True, nogil=True, error_model="numpy")
def _integrate_fixed(x, v, a, a_min, drag_k, grade, a_cmd, tau, dt, n_steps):
    for _ in range(n_steps):
        x, v, a = _rk4(x, v, a, a_min, drag_k, grade, a_cmd, tau, dt)
    return x, v, a


@njit(cache=True, nogil=True, error_model="numpy")
def _trace(v0, a_min, drag_k, grade, a_cmd, tau, dt, max_steps, out):
    # out rows: x, v, a_brake, total accel; returns number of stored states
    x = 0.0
    v = v0
    a = 0.0
    out[0, 0] = x
    out[0, 1] = v
    out[0, 2] = a
    out[0, 3] = _accel(v, a, a_min, drag_k, grade)
    k = 0
    while k < max_steps:
        x, v, a = _rk4(x, v, a, a_min, drag_k, grade, a_cmd, tau, dt)
        k += 1
        out[k, 0] = x
        out[k, 1] = v
        out[k, 2] = a
        out[k, 3] = _accel(v, a, a_min, drag_k, grade)
        if v <= 0.0:
            break
    return k + 1


def _coefficients(sample: ScenarioSample, geom: VehicleGeometry, consts: PhysicalConstants):
    a_min = _friction_limit(sample.mu, geom.cg_height, geom.wheelbase, consts.g)
    drag_k = _drag_coeff(consts.rho, sample.c_d, consts.frontal_area, sample.mass)
    grade = _grade_accel(consts.g, sample.theta)
    return a_min, drag_k, grade


def rk4_step(
    state: SimState,
    sample: ScenarioSample,
    config: SimConfig,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
    dt: float | None = None,
) -> SimState:
    """Advance ``state`` by one classical RK4 step (``config.dt`` unless ``dt`` given)."""
    dt = config.dt if dt is None else dt
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    a_min, drag_k, grade = _coefficients(sample, geom, consts)
    x, v, a = _rk4(
        state.x, state.v, state.a_brake, a_min, drag_k, grade, config.a_brake_cmd, geom.tau, dt
    )
    return SimState(x, v, a)


def integrate_fixed(
    state: SimState,
    sample: ScenarioSample,
    config: SimConfig,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
    dt: float,
    n_steps: int,
) -> SimState:
    """Take exactly ``n_steps`` RK4 steps with no stopping rule."""
    a_min, drag_k, grade = _coefficients(sample, geom, consts)
    x, v, a = _integrate_fixed(
        state.x, state.v, state.a_brake, a_min, drag_k, grade,
        config.a_brake_cmd, geom.tau, dt, n_steps,
    )
    return SimState(x, v, a)


def simulate_rollout(
    sample: ScenarioSample,
    config: SimConfig,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
) -> RolloutResult:
    """Integrate from ``(0, v0, 0)`` until the vehicle stops or the horizon runs out.

    A rollout that is still moving at ``t_max`` is returned with
    ``terminated_by_horizon=True`` and ``d_stop`` equal to the position there.
    """
    d, steps, horizon = _rollout(
        sample.v0, sample.mu, sample.theta, sample.mass, sample.c_d, geom.tau,
        config.a_brake_cmd, config.dt, config.max_steps,
        geom.cg_height, geom.wheelbase, consts.g, consts.rho, consts.frontal_area,
    )
    return RolloutResult(d, steps * config.dt, int(steps), bool(horizon))


def trace_rollout(
    sample: ScenarioSample,
    config: SimConfig,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
) -> np.ndarray:
    """Full trajectory of one rollout as an ``(k, 4)`` array of x, v, a_brake, total accel.

    Shares the step kernel with :func:`simulate_rollout`, so the last row
    matches its stopping distance bit for bit.
    """
    a_min, drag_k, grade = _coefficients(sample, geom, consts)
    out = np.empty((config.max_steps + 1, 4))
    k = _trace(sample.v0, a_min, drag_k, grade, config.a_brake_cmd, geom.tau, config.dt, config.max_steps, out)
    return out[:k]
