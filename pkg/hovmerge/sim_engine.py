"""
Fixed-step simulation of the dedicated lane, the ramp queue and the single
active merger.

Every step: spawn due vehicles, run the merge protocol on the decision clock,
compute all commands from the previous states, integrate every vehicle, book
metrics and despawn vehicles past the end of the lane.
"""
import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field, replace, asdict
from typing import Optional

from hovmerge import config
from hovmerge.config import logger, sim_logger
from hovmerge.linear_analysis import recovery_time
from hovmerge.merge_protocol import (MergePhase, MergeStage, score_gap, select_gap, ramp_accel, gap_verified,
                                     region_control, try_merge, enhanced_brake_controller, ramp_launch)
from hovmerge.metrics import MetricsAccumulator, accumulate, finalize
from hovmerge.traffic_gen import TrafficGenConfig, PlatoonStream, make_streams
from hovmerge.vehicle_model import (ControlParams, ParameterError, VehicleState, MAIN_LANE, RAMP,
                                    desired_accel_follow, free_road_accel, clamp_accel, advance, apply_command,
                                    kinematic_step)

DECISION_TOLERANCE = 1e-6


class SimulationFault(RuntimeError):
    """A state the protocol must never reach, such as two vehicles overlapping."""

    def __init__(self, message, clock=None, seed=None, vehicles=()):
        super().__init__(f"{message} (t = {clock}, seed = {seed}, vehicles = {list(vehicles)})")
        self.clock = clock
        self.seed = seed
        self.vehicles = list(vehicles)


@dataclass(frozen=True)
class SimConfig:
    params: ControlParams = field(default_factory=ControlParams)
    traffic: TrafficGenConfig = field(default_factory=TrafficGenConfig)
    T_max: float = config.DESK_T_MAX
    dt: float = config.DT
    despawn_x: float = config.DESPAWN_X
    decision_interval: float = config.DECISION_INTERVAL
    enhanced_braking: bool = True
    literal_region_terms: bool = False
    ramp_demand: bool = True
    ramp_arrival_rate: Optional[float] = None
    warmup: bool = True

    @property
    def seed(self):
        return self.traffic.seed

    @property
    def warmup_time(self):
        if not self.warmup:
            return 0.0
        return (self.despawn_x - self.traffic.spawn_x) / self.params.v_max

    def validate(self):
        p = self.params.validate()
        self.traffic.validate()
        if self.T_max < 0:
            raise ParameterError(f"T_max >= 0 violated: T_max = {self.T_max}")
        if not self.dt > 0:
            raise ParameterError(f"dt > 0 violated: dt = {self.dt}")
        if not self.despawn_x > p.L:
            raise ParameterError(f"despawn_x > L violated: despawn_x = {self.despawn_x}")
        if not self.traffic.spawn_x < p.hold_x:
            raise ParameterError(f"spawn_x < -x_g_dist violated: spawn_x = {self.traffic.spawn_x}")
        steps = self.decision_interval / self.dt
        if abs(steps - round(steps)) > DECISION_TOLERANCE or round(steps) < 1:
            raise ParameterError(f"decision_interval must be a multiple of dt: {self.decision_interval} / {self.dt}")
        _, v_m0 = ramp_launch(p)
        if v_m0 > p.v_max:
            raise ParameterError(f"v_m0 <= v_max violated: v_m0 = {v_m0:.6g}, v_max = {p.v_max}")
        if self.ramp_arrival_rate is not None and not self.ramp_arrival_rate > 0:
            raise ParameterError(f"ramp_arrival_rate > 0 violated: {self.ramp_arrival_rate}")
        if self.enhanced_braking:
            # the release rule needs the real-root recovery time
            recovery_time(p)
        return self

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Event:
    time: float
    vehicle: int
    kind: str
    x: float
    v: float


@dataclass
class ActiveMerger:
    vehicle: VehicleState
    phase: MergePhase
    a_id: int
    b_id: int
    v_m0: float
    released_at: float
    command: float = 0.0
    b_command: Optional[float] = None
    # past the region end without merging, braking to a stop before removal
    stopping: bool = False


@dataclass
class BrakeWatch:
    """Trailing vehicle b behind a just-merged vehicle m, followed until it stops closing in on m."""
    b_id: int
    m_id: int
    command: Optional[float] = None
    active: bool = False


class RampQueue:
    """Vehicles waiting on the ramp; the head occupies the hold point."""

    def __init__(self, arrival_rate, rng):
        self.saturated = arrival_rate is None
        self.arrival_rate = arrival_rate
        self.rng = rng
        self.arrivals = deque()
        self.next_arrival = math.inf if self.saturated else rng.exponential(1.0 / arrival_rate)
        self.hold_free_since = 0.0

    def admit(self, clock):
        while self.next_arrival <= clock:
            self.arrivals.append(self.next_arrival)
            self.next_arrival += self.rng.exponential(1.0 / self.arrival_rate)

    def has_head(self):
        return self.saturated or len(self.arrivals) > 0

    def pop_head(self, clock):
        """Remove the head and return how long it held the hold point."""
        if self.saturated:
            return clock - self.hold_free_since
        arrived = self.arrivals.popleft()
        return clock - max(self.hold_free_since, arrived)

    def free_hold(self, clock):
        self.hold_free_since = clock

    def __len__(self):
        return len(self.arrivals)


@dataclass
class World:
    config: SimConfig
    stream: PlatoonStream
    ramp_queue: RampQueue
    metrics: MetricsAccumulator
    clock: float = 0.0
    step: int = 0
    main_lane: list = field(default_factory=list)
    active_merger: Optional[ActiveMerger] = None
    brake_watches: list = field(default_factory=list)
    event_log: list = field(default_factory=list)
    next_id: int = 0
    spawned: int = 0
    despawned: int = 0
    failed: int = 0
    T_recover: Optional[float] = None

    @classmethod
    def create(cls, sim_config):
        sim_config.validate()
        platoon_rng, ramp_rng = make_streams(sim_config.seed)
        T_recover = recovery_time(sim_config.params) if sim_config.enhanced_braking else None
        return cls(config=sim_config,
                   stream=PlatoonStream(platoon_rng, sim_config.traffic, sim_config.params),
                   ramp_queue=RampQueue(sim_config.ramp_arrival_rate, ramp_rng),
                   metrics=MetricsAccumulator(T_max=sim_config.T_max),
                   T_recover=T_recover)

    @property
    def measuring(self):
        return self.clock >= self.config.warmup_time - DECISION_TOLERANCE

    def on_road(self):
        return len(self.main_lane) + (1 if self.active_merger is not None else 0)

    def conservation(self):
        return self.spawned, self.on_road(), self.despawned, self.failed

    def find(self, vehicle_id):
        for index, vehicle in enumerate(self.main_lane):
            if vehicle.id == vehicle_id:
                return index, vehicle
        return None, None

    def log_event(self, vehicle, kind):
        self.event_log.append(Event(time=self.clock, vehicle=vehicle.id, kind=kind, x=vehicle.x, v=vehicle.v))
        logger.debug("%.1f s: vehicle %s %s at x = %.2f, v = %.2f", self.clock, vehicle.id, kind, vehicle.x,
                     vehicle.v)


@dataclass
class RunResult:
    metrics: dict
    config: dict
    events: dict
    conservation: tuple
    measured_steps: int
    warmup_time: float
    stream_stalls: int

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def steps_per_decision(interval, dt):
    return int(round(interval / dt))


def _spawn(world):
    tail = world.main_lane[-1] if world.main_lane else None
    vehicles = world.stream.inject(world.clock, tail, world.next_id)
    for vehicle in vehicles:
        world.main_lane.append(vehicle)
        world.log_event(vehicle, 'spawn')
    world.next_id += len(vehicles)
    world.spawned += len(vehicles)
    world.ramp_queue.admit(world.clock)


def _release(world, p):
    if not world.config.ramp_demand or not world.ramp_queue.has_head():
        return
    selected = select_gap(world.main_lane, p)
    if selected is None:
        return
    a, b, est = selected
    wait = world.ramp_queue.pop_head(world.clock)
    m = VehicleState(id=world.next_id, x=p.hold_x, v=0.0, lane=RAMP, spawn_time=world.clock, spawn_x=p.hold_x,
                     origin=RAMP)
    world.next_id += 1
    world.spawned += 1
    world.active_merger = ActiveMerger(vehicle=m, phase=MergePhase().advance(MergeStage.RELEASED), a_id=a.id,
                                       b_id=b.id, v_m0=est.v_m0, released_at=world.clock,
                                       command=ramp_accel(m, est.v_m0, p))
    if world.measuring:
        world.metrics.queue_head_waits.append(wait)
    world.log_event(m, 'release')


def _far_ahead(m, p, despawn_x):
    """Stand-in lead when the vehicle ahead of the gap has already left the lane."""
    return VehicleState(id=-1, x=m.x + despawn_x + p.L, v=p.v_max)


def _lane_vehicle_ahead(world, m, p):
    ahead = [vehicle for vehicle in world.main_lane if vehicle.x > m.x]
    return ahead[-1] if ahead else _far_ahead(m, p, world.config.despawn_x)


def _commit_merge(world, merger, a, b, p):
    m = merger.vehicle
    scores = score_gap(m, a, b, p)
    if scores.S_a < 0 or scores.S_b < 0 or a.x - m.x - p.D < config.MIN_LEAD_GAP:
        raise SimulationFault("merge committed outside the merge conditions", world.clock, world.config.seed,
                              (a.id, m.id, b.id))

    index, _ = world.find(b.id)
    merged = replace(m, lane=MAIN_LANE)
    world.main_lane.insert(index, merged)
    merger.phase = merger.phase.advance(MergeStage.MERGED)
    world.active_merger = None
    world.ramp_queue.free_hold(world.clock)
    if world.measuring:
        world.metrics.record_merge(world.clock)
    world.brake_watches.append(BrakeWatch(b_id=b.id, m_id=m.id))
    world.log_event(merged, 'merge')


def _start_stopping(world, merger, p):
    merger.stopping = True
    merger.command = -p.d_max
    merger.b_command = None
    world.log_event(merger.vehicle, 'overrun')


def _fail_merge(world, merger):
    merger.phase = merger.phase.advance(MergeStage.FAILED)
    world.active_merger = None
    world.failed += 1
    world.ramp_queue.free_hold(world.clock)
    if world.measuring:
        world.metrics.failures += 1
    world.log_event(merger.vehicle, 'fail')


def _update_merger(world, merger, p):
    m = merger.vehicle

    if merger.stopping:
        if m.v <= 0 or m.x >= world.config.despawn_x:
            _fail_merge(world, merger)
        else:
            merger.command = -p.d_max
        return

    if merger.phase.stage == MergeStage.RELEASED:
        if m.x <= 0:
            merger.command = ramp_accel(m, merger.v_m0, p)
            return
        merger.phase = merger.phase.advance(MergeStage.IN_REGION_UNVERIFIED)
        if world.measuring:
            world.metrics.entry_speeds.append(m.v)
        world.log_event(m, 'enter_region')

    if m.x > p.L:
        _start_stopping(world, merger, p)
        return

    b_index, b = world.find(merger.b_id)
    if b is None:
        # b overtook m and left the lane: m follows the traffic ahead until the region ends
        lead = _lane_vehicle_ahead(world, m, p)
        merger.command = clamp_accel(desired_accel_follow(lead, m, p), p.d_max, p)
        merger.b_command = None
        return
    a = world.main_lane[b_index - 1] if b_index > 0 else _far_ahead(m, p, world.config.despawn_x)

    merger.phase = merger.phase.note_position(m.x, p.L)
    verified = gap_verified(m, a, b, p)
    merger.phase = merger.phase.advance(MergeStage.IN_REGION_VERIFIED if verified
                                        else MergeStage.IN_REGION_UNVERIFIED)

    if verified and try_merge(m, a, b, p):
        _commit_merge(world, merger, a, b, p)
        return

    command = region_control(m, a, b, merger.phase, p, literal_terms=world.config.literal_region_terms)
    if command is None:
        merger.command = clamp_accel(desired_accel_follow(a, m, p), p.d_max, p)
        merger.b_command = None
    else:
        merger.command = command.a_m_cmd
        merger.b_command = command.a_b_cmd


def _update_brake_watches(world, p):
    kept = []
    for watch in world.brake_watches:
        b_index, b = world.find(watch.b_id)
        if b is None or b_index == 0 or world.main_lane[b_index - 1].id != watch.m_id:
            if b is not None and b.enhanced_brake_active:
                world.main_lane[b_index] = replace(b, enhanced_brake_active=False)
            continue
        m = world.main_lane[b_index - 1]

        if world.config.enhanced_braking:
            command, active = enhanced_brake_controller(b, m, p, world.T_recover)
        else:
            command, active = None, False
        released = b.enhanced_brake_active and not active
        if active != b.enhanced_brake_active:
            b = replace(b, enhanced_brake_active=active)
            world.main_lane[b_index] = b
            world.log_event(b, 'brake_on' if active else 'brake_off')
        watch.command = command
        watch.active = active

        # a watch ends once its braking has been released, or when b never needs it
        if released or (not active and b.v <= m.v):
            continue
        kept.append(watch)
    world.brake_watches = kept


def protocol_tick(world):
    p = world.config.params
    if world.active_merger is None:
        _release(world, p)
    else:
        _update_merger(world, world.active_merger, p)
    _update_brake_watches(world, p)


def _held_overrides(world):
    overrides = {}
    merger = world.active_merger
    if merger is not None and merger.b_command is not None:
        overrides[merger.b_id] = merger.b_command
    for watch in world.brake_watches:
        if watch.command is not None:
            overrides[watch.b_id] = min(watch.command, overrides.get(watch.b_id, math.inf))
    return overrides


def trailing_roles(world):
    """Ids of vehicles currently acting as the trailing vehicle b of a merge."""
    roles = {watch.b_id for watch in world.brake_watches}
    merger = world.active_merger
    if merger is not None and merger.phase.in_region and not merger.stopping:
        roles.add(world.active_merger.b_id)
    return roles


def _check_gaps(world):
    p = world.config.params
    for lead, follower in zip(world.main_lane, world.main_lane[1:]):
        if lead.x - follower.x - p.D <= 0:
            sim_logger.error("collision at t = %s between %s and %s (seed %s)", world.clock, lead.id, follower.id,
                             world.config.seed)
            raise SimulationFault("collision on the main lane", world.clock, world.config.seed,
                                  (lead.id, follower.id))


def _despawn(world):
    cfg = world.config
    p = cfg.params
    while world.main_lane and world.main_lane[0].x >= cfg.despawn_x:
        vehicle = world.main_lane.pop(0)
        world.despawned += 1
        world.log_event(vehicle, 'despawn')
        if vehicle.origin != MAIN_LANE or not world.measuring:
            continue
        crossed = world.clock - (vehicle.x - cfg.despawn_x) / vehicle.v if vehicle.v > 0 else world.clock
        span = (cfg.despawn_x - vehicle.spawn_x) / p.v_max
        world.metrics.delays.append((crossed - vehicle.spawn_time) - span)


def step_world(world, dt=None):
    """Advance the world by one step of dt (the configured step by default)."""
    cfg = world.config
    p = cfg.params
    dt = cfg.dt if dt is None else dt

    _spawn(world)
    if world.step % steps_per_decision(cfg.decision_interval, dt) == 0:
        protocol_tick(world)

    # commands from the states at the start of the step
    overrides = _held_overrides(world)
    lane = world.main_lane
    commands = []
    for index, vehicle in enumerate(lane):
        if index == 0:
            command = free_road_accel(vehicle, p)
        else:
            command = desired_accel_follow(lane[index - 1], vehicle, p)
        if vehicle.id in overrides:
            command = min(command, overrides[vehicle.id])
        commands.append(command)

    advanced = []
    applied = []
    spans = []
    for vehicle, command in zip(lane, commands):
        limit = p.d_prime_max if vehicle.enhanced_brake_active else p.d_max
        lagged = apply_command(vehicle, command, limit, dt, p)
        new_vehicle = kinematic_step(lagged, dt, p)
        advanced.append(new_vehicle)
        applied.append(lagged.a)
        spans.append(new_vehicle.accel_time)
    world.main_lane = advanced

    merger = world.active_merger
    if merger is not None:
        merger.vehicle = advance(merger.vehicle, merger.command, p.d_max, dt, p)

    if world.measuring:
        roles = trailing_roles(world)
        trailing = [vehicle.id in roles for vehicle in lane]
        accumulate(world.metrics, applied, dt, durations=spans, trailing=trailing)

    # decision ticks are counted in steps, not read off the clock
    world.step += 1
    world.clock = world.step * dt
    _check_gaps(world)
    _despawn(world)
    return world


def run_simulation(sim_config, return_world=False):
    """Warm up, then run T_max / dt measured steps and finalize the metrics."""
    world = World.create(sim_config)
    warmup_steps = int(round(sim_config.warmup_time / sim_config.dt))
    measured_steps = int(round(sim_config.T_max / sim_config.dt))

    for _ in range(warmup_steps + measured_steps):
        step_world(world)

    metrics = finalize(world.metrics)
    result = RunResult(metrics=metrics.to_dict(), config=sim_config.to_dict(),
                       events=dict(sorted(Counter(event.kind for event in world.event_log).items())),
                       conservation=world.conservation(), measured_steps=measured_steps,
                       warmup_time=sim_config.warmup_time, stream_stalls=world.stream.stalls)
    sim_logger.debug(result.to_dict())
    if return_world:
        return result, world
    return result


def export_event_log(world, path):
    with open(path, 'w') as f:
        for event in world.event_log:
            f.write(json.dumps(asdict(event)) + '\n')
