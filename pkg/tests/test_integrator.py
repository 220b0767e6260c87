import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aebmc import (
    PhysicalConstants,
    ScenarioSample,
    SimConfig,
    SimState,
    UncertaintyModel,
    VehicleGeometry,
    draw_batch,
    integrate_fixed,
    rk4_step,
    simulate_rollout,
    trace_rollout,
)

# Independent fine-step oracles: pure-Python RK4 at dt=1e-5, cross-checked
# against scipy DOP853 (rtol=atol=1e-12) with a v=0 terminal event.
ORACLE_D_STOP_MU08 = 77.78395990740091
ORACLE_D_STOP_MU05 = 99.90444402367028
# root of mu*g/(1 + mu*h/L) = 6 for h=0.5, L=2.7, g=9.81 (brentq)
MU_BINDING_THRESHOLD = 0.6897432622303736


def sample(**kw):
    base = dict(v0=30.0, mu=0.8, theta=0.0, mass=1500.0, c_d=0.3)
    return ScenarioSample(**{**base, **kw})


def test_rk4_exact_under_constant_acceleration(config, geom):
    no_drag = PhysicalConstants(rho=0.0)
    out = rk4_step(SimState(0.0, 30.0, -6.0), sample(), config, geom, no_drag)
    assert out.x == pytest.approx(0.029997, abs=1e-15)
    assert out.v == pytest.approx(29.994, abs=1e-13)
    assert out.a_brake == -6.0


def test_rk4_actuator_relaxation(config, geom, consts):
    out = rk4_step(SimState(0.0, 30.0, 0.0), sample(), config, geom, consts)
    assert out.a_brake == pytest.approx(-6.0 * (1 - math.exp(-0.001 / 0.15)), abs=1e-12)


def test_rk4_rejects_bad_dt(nominal, config, geom, consts):
    with pytest.raises(ValueError, match="dt"):
        rk4_step(SimState(0.0, 30.0, 0.0), nominal, config, geom, consts, dt=0.0)


@pytest.mark.parametrize("i", range(3))
def test_rk4_fourth_order(i, config, geom, consts):
    # 0.1 s from rest of the actuator: the friction clamp does not engage
    s = draw_batch(UncertaintyModel(), 3)[i]
    s0 = SimState(0.0, s.v0, 0.0)
    ref = integrate_fixed(s0, s, config, geom, consts, 1e-6, 100_000)
    errs = []
    for dt, n in ((0.02, 5), (0.01, 10)):
        r = integrate_fixed(s0, s, config, geom, consts, dt, n)
        errs.append(np.array([r.x - ref.x, r.v - ref.v, r.a_brake - ref.a_brake]))
    ratios = np.abs(errs[0]) / np.abs(errs[1])
    assert np.all((ratios >= 12) & (ratios <= 20)), ratios


def test_analytic_constant_deceleration(geom):
    # tau=1e-6 needs dt ~ tau for RK4 stability on the actuator lag
    quick = VehicleGeometry(cg_height=geom.cg_height, wheelbase=geom.wheelbase, tau=1e-6)
    res = simulate_rollout(sample(), SimConfig(dt=1e-6), quick, PhysicalConstants(rho=0.0))
    assert res.d_stop == pytest.approx(30.0 ** 2 / 12.0, abs=0.01)
    assert not res.terminated_by_horizon


def test_nominal_matches_fine_step_oracle(nominal, config, geom, consts):
    res = simulate_rollout(nominal, config, geom, consts)
    assert res.d_stop == pytest.approx(ORACLE_D_STOP_MU08, abs=0.05)
    assert res.t_stop == res.steps * config.dt
    assert not res.terminated_by_horizon


def test_low_friction_stops_later(config, geom, consts):
    hi = simulate_rollout(sample(mu=0.8), config, geom, consts)
    lo = simulate_rollout(sample(mu=0.5), config, geom, consts)
    assert lo.d_stop == pytest.approx(ORACLE_D_STOP_MU05, abs=0.05)
    assert lo.d_stop > hi.d_stop


def test_friction_threshold(config, geom, consts):
    above = [simulate_rollout(sample(mu=m), config, geom, consts).d_stop
             for m in (MU_BINDING_THRESHOLD + 1e-3, 0.8, 1.2)]
    assert above[0] == above[1] == above[2]
    below = simulate_rollout(sample(mu=MU_BINDING_THRESHOLD - 0.02), config, geom, consts)
    assert below.d_stop > above[0]


def test_horizon_flag(geom, consts):
    # steep downhill on ice: gravity beats the friction limit
    res = simulate_rollout(sample(mu=0.05, theta=0.2), SimConfig(t_max=2.0), geom, consts)
    assert res.terminated_by_horizon
    assert res.steps == 2000
    assert res.t_stop >= 2.0


def test_rollout_is_bit_reproducible(nominal, config, geom, consts):
    a = simulate_rollout(nominal, config, geom, consts)
    b = simulate_rollout(nominal, config, geom, consts)
    assert a.d_stop.hex() == b.d_stop.hex() and a.steps == b.steps


def test_trace_ends_at_rollout(nominal, config, geom, consts):
    tr = trace_rollout(nominal, config, geom, consts)
    res = simulate_rollout(nominal, config, geom, consts)
    assert tr.shape == (res.steps + 1, 4)
    assert tr[-1, 0] == res.d_stop
    assert np.all(tr[:-1, 1] > 0) and tr[-1, 1] <= 0
    assert np.all(np.diff(tr[:, 0]) >= 0)


@settings(max_examples=40, deadline=None)
@given(
    v0=st.floats(5, 45), mu=st.floats(0.3, 1.1), theta=st.floats(-0.15, 0.15),
    mass=st.floats(1100, 1900), c_d=st.floats(0.1, 0.5),
)
def test_trace_invariants(v0, mu, theta, mass, c_d, config, geom, consts):
    s = ScenarioSample(v0, mu, theta, mass, c_d)
    tr = trace_rollout(s, config, geom, consts)
    d = tr[-1, 0]
    assert d >= 0
    # speeds stay positive until the terminating step
    assert np.all(tr[:-1, 1] > 0)
    if tr[-1, 1] > 0:
        return  # horizon reached, no stopping bound applies
    # kinematic lower bound with the largest net deceleration seen on the path
    decel = np.max(-np.diff(tr[:, 1])) / config.dt
    assert d * 2 * decel >= v0 ** 2 * (1 - 1e-6)


@settings(max_examples=30, deadline=None)
@given(v1=st.floats(20, 40), v2=st.floats(20, 40))
def test_monotone_in_v0(v1, v2, config, geom, consts):
    if abs(v1 - v2) < 1e-3:
        return
    lo, hi = sorted((v1, v2))
    assert simulate_rollout(sample(v0=lo), config, geom, consts).d_stop < \
        simulate_rollout(sample(v0=hi), config, geom, consts).d_stop


@settings(max_examples=30, deadline=None)
@given(t1=st.floats(-0.2, 0.2), t2=st.floats(-0.2, 0.2))
def test_monotone_in_grade(t1, t2, config, geom, consts):
    lo, hi = sorted((t1, t2))
    assert simulate_rollout(sample(theta=hi), config, geom, consts).d_stop <= \
        simulate_rollout(sample(theta=lo), config, geom, consts).d_stop


@settings(max_examples=30, deadline=None)
@given(m1=st.floats(0.2, 1.3), m2=st.floats(0.2, 1.3))
def test_monotone_in_friction(m1, m2, config, geom, consts):
    lo, hi = sorted((m1, m2))
    assert simulate_rollout(sample(mu=hi), config, geom, consts).d_stop <= \
        simulate_rollout(sample(mu=lo), config, geom, consts).d_stop
