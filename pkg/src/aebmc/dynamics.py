"""Longitudinal emergency-braking dynamics.

The state is ``(x, v, a_brake)``: position, speed and the realized braking
deceleration behind a first-order actuator lag. Braking is capped by a
tire-road friction bound that includes longitudinal load transfer.

The ``_``-prefixed functions are the numba kernels shared by every executor.
They work on plain floats so that one compiled code path serves the scalar
API below, the sequential loop and the thread-pool workers. Arithmetic is
IEEE double, evaluated in the written order with no fastmath and no fused
multiply-add, which is what makes results bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from numba import njit

__all__ = [
    "PhysicalConstants",
    "VehicleGeometry",
    "ScenarioSample",
    "SimState",
    "SimConfig",
    "friction_limit",
    "clamp_brake",
    "longitudinal_accel",
    "actuator_rate",
    "state_derivative",
]


@dataclass(frozen=True)
class PhysicalConstants:
    """Environment constants: gravity (m/s^2), air density (kg/m^3), frontal area (m^2)."""

    g: float = 9.81
    rho: float = 1.225
    frontal_area: float = 2.2

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"g must be > 0, got {self.g}")
        # rho = 0 switches drag off; useful for analytic checks
        if not self.rho >= 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if not self.frontal_area > 0:
            raise ValueError(f"frontal_area must be > 0, got {self.frontal_area}")


@dataclass(frozen=True)
class VehicleGeometry:
    """CG height (m), wheelbase (m) and brake-actuator time constant (s)."""

    cg_height: float = 0.5
    wheelbase: float = 2.7
    tau: float = 0.15

    def __post_init__(self):
        if not self.wheelbase > 0:
            raise ValueError(f"wheelbase must be > 0, got {self.wheelbase}")
        if not 0 < self.cg_height < self.wheelbase:
            raise ValueError(
                f"cg_height must lie in (0, wheelbase={self.wheelbase}), got {self.cg_height}"
            )
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class ScenarioSample:
    """One parameter draw: initial speed, friction, grade (rad), mass, drag coefficient."""

    v0: float = 30.0
    mu: float = 0.8
    theta: float = 0.0
    mass: float = 1500.0
    c_d: float = 0.3

    def __post_init__(self):
        if not self.v0 > 0:
            raise ValueError(f"v0 must be > 0, got {self.v0}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not abs(self.theta) < math.pi / 2:
            raise ValueError(f"|theta| must be < pi/2, got {self.theta}")
        if not self.mass > 0:
            raise ValueError(f"mass must be > 0, got {self.mass}")
        if not self.c_d >= 0:
            raise ValueError(f"c_d must be >= 0, got {self.c_d}")


@dataclass(frozen=True)
class SimState:
    x: float
    v: float
    a_brake: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.v, self.a_brake)


@dataclass(frozen=True)
class SimConfig:
    """Integration step (s), horizon (s) and commanded deceleration (m/s^2, negative)."""

    dt: float = 0.001
    t_max: float = 10.0
    a_brake_cmd: float = -6.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_max >= self.dt:
            raise ValueError(f"t_max must be >= dt ({self.dt}), got {self.t_max}")
        if not self.a_brake_cmd < 0:
            raise ValueError(f"a_brake_cmd must be < 0, got {self.a_brake_cmd}")

    @property
    def max_steps(self) -> int:
        return int(round(self.t_max / self.dt))


# ---------------------------------------------------------------- kernels


@njit(cache=True, nogil=True, error_model="numpy")
def _friction_limit(mu, cg_height, wheelbase, g):
    # closed-form fixed point of a >= -mu*g*(1 + (h/L)*(a/g))
    denom = 1.0 + mu * cg_height / wheelbase
    return -(mu * g) / denom


@njit(cache=True, nogil=True, error_model="numpy")
def _clamp_brake(a_brake, a_min):
    if a_brake < a_min:
        return a_min
    return a_brake


@njit(cache=True, nogil=True, error_model="numpy")
def _drag_coeff(rho, c_d, frontal_area, mass):
    return rho * c_d * frontal_area / (2.0 * mass)


@njit(cache=True, nogil=True, error_model="numpy")
def _grade_accel(g, theta):
    return g * math.sin(theta)


@njit(cache=True, nogil=True, error_model="numpy")
def _accel(v, a_brake, a_min, drag_k, grade):
    return _clamp_brake(a_brake, a_min) - drag_k * v * v - grade


@njit(cache=True, nogil=True, error_model="numpy")
def _actuator_rate(a_brake, a_cmd, tau):
    return (a_cmd - a_brake) / tau


# ----------------------------------------------------------- public API


def friction_limit(mu: float, geom: VehicleGeometry, consts: PhysicalConstants) -> float:
    """Most negative realizable braking deceleration for friction ``mu`` (m/s^2).

    Returns ``-mu*g / (1 + mu*h/L)``; zero friction gives zero braking.
    """
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    if not 1.0 + mu * geom.cg_height / geom.wheelbase > 0:
        raise ValueError("friction limit undefined: 1 + mu*h/L <= 0")
    return _friction_limit(float(mu), geom.cg_height, geom.wheelbase, consts.g)


def clamp_brake(a_brake: float, a_min: float) -> float:
    """Realized braking never exceeds the friction limit ``a_min`` (<= 0)."""
    if a_min > 0:
        raise ValueError(f"a_min must be <= 0, got {a_min}")
    return _clamp_brake(float(a_brake), float(a_min))


def longitudinal_accel(
    state: SimState,
    sample: ScenarioSample,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
) -> float:
    """Total longitudinal acceleration: clamped braking, quadratic drag and grade."""
    if state.v < 0:
        raise ValueError(f"speed must be >= 0, got {state.v}")
    a_min = _friction_limit(sample.mu, geom.cg_height, geom.wheelbase, consts.g)
    drag_k = _drag_coeff(consts.rho, sample.c_d, consts.frontal_area, sample.mass)
    grade = _grade_accel(consts.g, sample.theta)
    return _accel(state.v, state.a_brake, a_min, drag_k, grade)


def actuator_rate(a_brake: float, a_brake_cmd: float, tau: float) -> float:
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    return _actuator_rate(float(a_brake), float(a_brake_cmd), float(tau))


def state_derivative(
    state: SimState,
    sample: ScenarioSample,
    config: SimConfig,
    geom: VehicleGeometry,
    consts: PhysicalConstants,
) -> tuple[float, float, float]:
    """Right-hand side ``(dx/dt, dv/dt, da/dt)`` of the coupled braking system."""
    return (
        state.v,
        longitudinal_accel(state, sample, geom, consts),
        _actuator_rate(state.a_brake, config.a_brake_cmd, geom.tau),
    )
