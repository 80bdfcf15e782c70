"""
Tests for the longitudinal vehicle model.
"""
import math

import numpy as np
import pytest

from hovmerge.vehicle_model import (ControlParams, ParameterError, VehicleState, desired_accel_follow,
                                    free_road_accel, clamp_accel, lag_step, kinematic_step, advance, apply_command)


def test_table_defaults(params):
    assert (params.alpha, params.h, params.k, params.xi, params.tau) == (2.0, 1.0, 1.0, 0.6, 0.5)
    assert (params.D, params.d_max, params.a_max, params.L, params.x_g_dist) == (7.5, 2.0, 3.0, 500.0, 150.0)
    assert params.d_prime_max == pytest.approx(3.0)
    assert params.hold_x == -150.0
    assert params.equilibrium_spacing == pytest.approx(45.5)


def test_d_prime_max_follows_d_max(params):
    assert params.with_updates(d_max=4.0).d_prime_max == pytest.approx(6.0)
    assert params.with_updates(d_max=4.0, d_prime_max=5.0).d_prime_max == 5.0


@pytest.mark.parametrize("field, value", [('h', -1.0), ('alpha', 0.0), ('tau', -0.5), ('T_v', -1.0), ('xi', -0.1)])
def test_validate_rejects_out_of_range(params, field, value):
    with pytest.raises(ParameterError, match=field):
        params.with_updates(**{field: value}).validate()


def test_follow_law_equilibrium(params):
    lead = VehicleState(id=0, x=100.0, v=30.0)
    follower = VehicleState(id=1, x=100.0 - params.D - params.h * 30.0, v=30.0)
    assert desired_accel_follow(lead, follower, params) == pytest.approx(0.0, abs=1e-12)


def test_follow_law_headway_surplus(params):
    lead = VehicleState(id=0, x=100.0, v=30.0)
    follower = VehicleState(id=1, x=100.0 - params.D - params.h * 30.0 - 5.0, v=30.0)
    assert desired_accel_follow(lead, follower, params) == pytest.approx(10.0)


def test_follow_law_deficit_with_feedback(params):
    lead = VehicleState(id=0, x=100.0, v=31.0)
    follower = VehicleState(id=1, x=100.0 - params.D - params.h * 30.0 + 2.0, v=30.0, a=0.5)
    assert desired_accel_follow(lead, follower, params) == pytest.approx(-3.3)


def test_follow_law_spacing_term_is_linear(params):
    lead = VehicleState(id=0, x=200.0, v=30.0)
    base = 200.0 - params.D - params.h * 30.0
    one = desired_accel_follow(lead, VehicleState(id=1, x=base - 3.0, v=30.0), params)
    two = desired_accel_follow(lead, VehicleState(id=1, x=base - 6.0, v=30.0), params)
    assert two == pytest.approx(2 * one, rel=1e-12)


def test_free_road_law_cruises_at_v_max(params):
    assert free_road_accel(VehicleState(id=0, x=0.0, v=params.v_max), params) == 0.0
    assert free_road_accel(VehicleState(id=0, x=0.0, v=30.0), params) == pytest.approx(8.0)


@pytest.mark.parametrize("a_desired, expected", [(10.0, 3.0), (-5.0, -2.0), (1.5, 1.5)])
def test_clamp(params, a_desired, expected):
    assert clamp_accel(a_desired, params.d_max, params) == expected


def test_lag_step():
    assert lag_step(1.0, 1.0, 0.5, 0.1) == 1.0
    assert lag_step(0.0, 3.0, 0.5, 0.1) == pytest.approx(3 * (1 - math.exp(-0.2)))
    assert lag_step(0.0, 3.0, 0.5, 50.0) == pytest.approx(3.0, abs=1e-6)


def test_lag_step_contracts_and_composes():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a, a_cmd = rng.uniform(-3, 3, size=2)
        dt = rng.uniform(1e-3, 1.0)
        once = lag_step(a, a_cmd, 0.5, dt)
        twice = lag_step(lag_step(a, a_cmd, 0.5, dt / 2), a_cmd, 0.5, dt / 2)
        assert abs(once - twice) < 1e-12
        if a != a_cmd:
            assert abs(once - a_cmd) < abs(a - a_cmd)


def test_kinematic_cruise(params):
    state = kinematic_step(VehicleState(id=0, x=0.0, v=params.v_max), 0.1, params)
    assert state.x == pytest.approx(params.v_max * 0.1)
    assert state.v == params.v_max


def test_kinematic_pins_at_v_max(params):
    state = kinematic_step(VehicleState(id=0, x=0.0, v=37.95, a=3.0), 0.1, params)
    t_hit = 0.05 / 3.0
    expected = 37.95 * t_hit + 1.5 * t_hit ** 2 + 38.0 * (0.1 - t_hit)
    assert state.v == 38.0
    assert state.x == pytest.approx(expected, rel=1e-12)
    assert state.x == pytest.approx(3.79958, abs=1e-5)
    assert state.a == 0.0
    assert state.accel_time == pytest.approx(t_hit)


def test_kinematic_stops_inside_step(params):
    state = kinematic_step(VehicleState(id=0, x=0.0, v=0.1, a=-2.0), 0.1, params)
    assert state.v == 0.0
    assert state.x == pytest.approx(0.0025)
    assert state.accel_time == pytest.approx(0.05)


def test_velocity_stays_in_bounds(params):
    rng = np.random.default_rng(11)
    for _ in range(1000):
        state = VehicleState(id=0, x=0.0, v=rng.uniform(0, params.v_max), a=rng.uniform(-3, 3))
        new = kinematic_step(state, rng.uniform(1e-3, 1.0), params)
        assert 0.0 <= new.v <= params.v_max
        assert new.x >= state.x


def test_apply_command_clamps_before_lag(params):
    state = apply_command(VehicleState(id=0, x=0.0, v=30.0), -10.0, params.d_max, 0.1, params)
    assert state.a_cmd == -2.0
    assert state.a == pytest.approx(-2.0 * (1 - math.exp(-0.2)))
    assert (state.x, state.v) == (0.0, 30.0)


def test_platoon_at_equilibrium_stays_there(params):
    spacing = params.equilibrium_spacing
    lane = [VehicleState(id=i, x=-i * spacing, v=params.v_max) for i in range(6)]
    for _ in range(2000):
        commands = [free_road_accel(lane[0], params)]
        commands += [desired_accel_follow(lead, follower, params) for lead, follower in zip(lane, lane[1:])]
        lane = [advance(vehicle, command, params.d_max, 0.1, params) for vehicle, command in zip(lane, commands)]
    for lead, follower in zip(lane, lane[1:]):
        assert lead.x - follower.x == pytest.approx(spacing, abs=1e-6)
    assert all(vehicle.v == pytest.approx(params.v_max, abs=1e-9) for vehicle in lane)


def test_fast_lag_follower_matches_linear_peak():
    p = ControlParams(tau=1e-3, xi=0.0, d_max=100.0, a_max=100.0)
    dt = 1e-3
    v_lead = p.v_max - 10.0
    lead = VehicleState(id=0, x=0.0, v=v_lead)
    follower = VehicleState(id=1, x=-(p.D + p.h * p.v_max), v=p.v_max)
    lowest = 0.0
    for _ in range(int(4.0 / dt)):
        command = desired_accel_follow(lead, follower, p)
        follower = advance(follower, command, p.d_max, dt, p)
        lead = VehicleState(id=0, x=lead.x + v_lead * dt, v=v_lead)
        lowest = min(lowest, follower.a)
    assert -lowest == pytest.approx(5.0, rel=0.02)
