"""
Tests for the simulation engine: transport, determinism, conservation and
merge safety over seeded runs.
"""
import json
import math
from dataclasses import replace

import pytest

from hovmerge.linear_analysis import UnderdampedSpectrumError
from hovmerge.merge_protocol import MergePhase, MergeStage
from hovmerge.sim_engine import (SimConfig, World, ActiveMerger, SimulationFault, step_world, run_simulation,
                                 export_event_log, _far_ahead)
from hovmerge.traffic_gen import TrafficGenConfig
from hovmerge.vehicle_model import (ControlParams, ParameterError, VehicleState, MAIN_LANE, RAMP, clamp_accel,
                                    desired_accel_follow)

DECISION_KINDS = ('release', 'enter_region', 'merge', 'overrun', 'fail')


def short_config(**changes):
    return replace(SimConfig(T_max=300.0), **changes)


def quiet_world(sim_config, lane):
    """World whose platoon stream never delivers, holding `lane`."""
    world = World.create(sim_config)
    world.stream.pending = replace(world.stream.pending, time=math.inf)
    world.main_lane = list(lane)
    world.spawned = len(lane)
    return world


def on_decision_tick(time, interval=0.1):
    ticks = time / interval
    return abs(ticks - round(ticks)) < 1e-6


def test_equilibrium_platoon_is_transported(params):
    spacing = params.equilibrium_spacing
    lane = [VehicleState(id=i, x=-100.0 - i * spacing, v=params.v_max) for i in range(5)]
    world = quiet_world(short_config(ramp_demand=False, warmup=False), lane)
    for step in range(1, 51):
        step_world(world)
        for start, vehicle in zip(lane, world.main_lane):
            assert vehicle.x == pytest.approx(start.x + params.v_max * 0.1 * step, abs=1e-9)
            assert vehicle.v == pytest.approx(params.v_max, abs=1e-12)
    assert world.metrics.sum_acc_sq == pytest.approx(0.0, abs=1e-20)
    assert world.metrics.sum_dec_sq == pytest.approx(0.0, abs=1e-20)


def test_overlap_raises_fault(params):
    lane = [VehicleState(id=0, x=0.0, v=30.0), VehicleState(id=1, x=-5.0, v=30.0)]
    world = quiet_world(short_config(ramp_demand=False, warmup=False), lane)
    with pytest.raises(SimulationFault) as info:
        step_world(world)
    assert info.value.vehicles == [0, 1]
    assert info.value.seed == 0


def test_zero_horizon_gives_empty_metrics():
    result = run_simulation(short_config(T_max=0.0, warmup=False))
    assert result.metrics['M'] == 0
    assert result.metrics['a_tot'] == 0.0
    assert result.measured_steps == 0


def test_no_ramp_demand_leaves_stream_unperturbed():
    result = run_simulation(short_config(ramp_demand=False))
    metrics = result.metrics
    assert metrics['M'] == 0
    assert (metrics['a_tot'], metrics['d_tot']) == (0.0, 0.0)
    assert metrics['t_ave'] == pytest.approx(0.0, abs=1e-6)
    assert metrics['vehicles_measured'] > 0
    assert 'release' not in result.events


def test_runs_are_deterministic():
    first, world_one = run_simulation(short_config(T_max=200.0), return_world=True)
    second, world_two = run_simulation(short_config(T_max=200.0), return_world=True)
    assert first.to_json() == second.to_json()
    assert world_one.event_log == world_two.event_log


def test_seeds_give_different_runs():
    first = run_simulation(short_config(T_max=200.0))
    second = run_simulation(short_config(T_max=200.0, traffic=TrafficGenConfig(seed=1)))
    assert first.to_json() != second.to_json()


def test_protocol_invariants_hold_every_step(params):
    world = World.create(short_config())
    merger_ids = set()
    entered = set()
    for _ in range(4000):
        previous = world.active_merger
        before = previous.vehicle if previous else None
        step_world(world)
        if previous is not None and world.active_merger is not previous:
            assert previous.phase.stage in (MergeStage.MERGED, MergeStage.FAILED)

        spawned, on_road, despawned, failed = world.conservation()
        assert spawned == on_road + despawned + failed
        xs = [vehicle.x for vehicle in world.main_lane]
        assert all(lead > follower for lead, follower in zip(xs, xs[1:]))
        assert all(vehicle.a >= -params.d_prime_max - 1e-9 for vehicle in world.main_lane)

        merger = world.active_merger
        if merger is None:
            continue
        merger_ids.add(merger.vehicle.id)
        m = merger.vehicle
        if before is not None and before.id == m.id and before.x <= 0 < m.x and m.id not in entered:
            entered.add(m.id)
            _, a = world.find(merger.a_id)
            _, b = world.find(merger.b_id)
            assert b is not None and b.x < m.x
            assert a is None or a.x > m.x

    assert len(merger_ids) > 0
    assert len(entered) > 0
    assert world.failed == 0
    for event in world.event_log:
        if event.kind in DECISION_KINDS:
            assert on_decision_tick(event.time)


def test_entry_speed_near_launch_speed():
    result, world = run_simulation(short_config(), return_world=True)
    entries = [event.v for event in world.event_log if event.kind == 'enter_region']
    assert len(entries) > 0
    assert all(27.0 <= v <= 33.0 for v in entries)
    assert result.metrics['mean_entry_speed'] == pytest.approx(30.0, rel=0.1)


def test_merged_vehicles_are_relabelled():
    _, world = run_simulation(short_config(), return_world=True)
    merged = {event.vehicle for event in world.event_log if event.kind == 'merge'}
    assert len(merged) > 0
    on_lane = [vehicle for vehicle in world.main_lane if vehicle.id in merged]
    assert all(vehicle.origin == RAMP and vehicle.lane == MAIN_LANE for vehicle in on_lane)


def test_finite_ramp_demand():
    result, world = run_simulation(short_config(ramp_arrival_rate=0.02), return_world=True)
    releases = sum(1 for event in world.event_log if event.kind == 'release')
    assert releases <= 0.02 * (300.0 + world.config.warmup_time) + 5 * math.sqrt(10)
    assert result.metrics['mean_queue_wait'] >= 0.0


def test_event_log_export(tmp_path):
    _, world = run_simulation(short_config(T_max=50.0), return_world=True)
    path = tmp_path / 'events.jsonl'
    export_event_log(world, path)
    lines = path.read_text().splitlines()
    assert len(lines) == len(world.event_log)
    record = json.loads(lines[0])
    assert set(record) == {'time', 'vehicle', 'kind', 'x', 'v'}


def test_result_serializes():
    result = run_simulation(short_config(T_max=50.0))
    data = json.loads(result.to_json())
    assert data['config']['params']['T_v'] == 2.5
    assert len(data['conservation']) == 4


def test_config_validation():
    with pytest.raises(ParameterError, match='decision_interval'):
        short_config(dt=0.03).validate()
    with pytest.raises(ParameterError, match='v_m0'):
        short_config(params=ControlParams(x_g_dist=300.0)).validate()
    with pytest.raises(UnderdampedSpectrumError):
        short_config(params=ControlParams(h=0.4)).validate()
    short_config(dt=0.05).validate()
    short_config(params=ControlParams(h=0.4), enhanced_braking=False).validate()


def test_finer_step_keeps_decision_cadence():
    _, world = run_simulation(short_config(T_max=100.0, dt=0.05), return_world=True)
    decisions = [event.time for event in world.event_log if event.kind in ('release', 'merge')]
    assert len(decisions) > 0
    assert all(on_decision_tick(time) for time in decisions)


@pytest.mark.parametrize("dt, start_step", [(0.05, 340_000), (0.02, 850_000)])
def test_decisions_continue_late_in_long_runs(dt, start_step):
    # 17000 s into a run, where a summed float clock has drifted off the tick grid
    lane = [VehicleState(id=0, x=-250.0, v=38.0), VehicleState(id=1, x=-450.0, v=38.0)]
    world = quiet_world(short_config(dt=dt, warmup=False), lane)
    world.next_id = 2
    world.step = start_step
    world.clock = start_step * dt

    step_world(world)
    assert [event.kind for event in world.event_log] == ['release']
    assert world.event_log[0].time == pytest.approx(17000.0, abs=1e-9)

    for _ in range(int(round(20.0 / dt))):
        step_world(world)
    assert world.step == start_step + 1 + int(round(20.0 / dt))
    kinds = [event.kind for event in world.event_log]
    assert 'enter_region' in kinds
    assert all(on_decision_tick(event.time) for event in world.event_log if event.kind in DECISION_KINDS)


def merger_past_region_end(params):
    a = VehicleState(id=0, x=600.0, v=30.0)
    b = VehicleState(id=1, x=480.0, v=30.0)
    m = VehicleState(id=2, x=499.0, v=30.0, lane=RAMP, origin=RAMP, spawn_x=params.hold_x)
    world = quiet_world(short_config(ramp_demand=False, warmup=False), [a, b])
    world.spawned = 3
    world.next_id = 3
    world.active_merger = ActiveMerger(vehicle=m, phase=MergePhase(stage=MergeStage.IN_REGION_UNVERIFIED,
                                                                    past_midpoint=True),
                                       a_id=0, b_id=1, v_m0=30.0, released_at=0.0)
    return world


def test_overrun_merger_brakes_to_a_stop(params):
    world = merger_past_region_end(params)
    merger = world.active_merger
    speeds = []
    for _ in range(1000):
        step_world(world)
        if world.active_merger is None:
            break
        speeds.append(merger.vehicle.v)
        assert merger.vehicle.a >= -params.d_max - 1e-9
        spawned, on_road, despawned, failed = world.conservation()
        assert spawned == on_road + despawned + failed

    overrun, fail = [event for event in world.event_log if event.vehicle == 2]
    assert (overrun.kind, fail.kind) == ('overrun', 'fail')
    assert overrun.x > params.L and overrun.v == pytest.approx(30.0)
    assert fail.v == 0.0
    assert overrun.x < fail.x < world.config.despawn_x
    assert fail.time - overrun.time > 10.0
    assert on_decision_tick(fail.time)

    after_overrun = speeds[int(round(overrun.time / 0.1)):]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(after_overrun, after_overrun[1:]))

    assert merger.phase.stage == MergeStage.FAILED
    assert world.failed == 1
    assert world.metrics.failures == 1
    assert world.ramp_queue.hold_free_since == fail.time
    assert world.conservation() == (3, 2, 0, 1)


def test_merger_without_trailing_vehicle_keeps_following(params):
    a = VehicleState(id=0, x=300.0, v=30.0)
    m = VehicleState(id=2, x=100.0, v=30.0, lane=RAMP, origin=RAMP)
    world = quiet_world(short_config(ramp_demand=False, warmup=False), [a])
    merger = ActiveMerger(vehicle=m, phase=MergePhase(stage=MergeStage.IN_REGION_UNVERIFIED), a_id=0, b_id=1,
                          v_m0=30.0, released_at=0.0)
    world.active_merger = merger
    step_world(world)
    assert world.active_merger is merger
    assert world.failed == 0
    assert merger.command == pytest.approx(clamp_accel(desired_accel_follow(a, m, params), params.d_max, params))


def test_far_ahead_lead_uses_configured_lane_end(params):
    m = VehicleState(id=5, x=100.0, v=30.0)
    lead = _far_ahead(m, params, 2500.0)
    assert lead.x == 100.0 + 2500.0 + params.L
    assert lead.v == params.v_max


@pytest.mark.slow
def test_default_run_is_safe():
    result = run_simulation(SimConfig())
    assert result.metrics['failures'] == 0
    assert result.metrics['M'] > 0
    spawned, on_road, despawned, failed = result.conservation
    assert spawned == on_road + despawned + failed


@pytest.mark.slow
def test_trailing_vehicles_carry_most_deceleration():
    result = run_simulation(SimConfig(enhanced_braking=False))
    metrics = result.metrics
    assert metrics['d_tot'] > 0
    assert metrics['d_tot_trailing'] ** 2 > 0.5 * metrics['d_tot'] ** 2


@pytest.mark.slow
def test_full_scale_queue_wait():
    result = run_simulation(SimConfig(T_max=2e4))
    assert result.metrics['mean_queue_wait'] < 20.0
    assert result.metrics['failures'] == 0
