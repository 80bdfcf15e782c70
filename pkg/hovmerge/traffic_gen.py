"""
Main-lane platoon stream.

Platoon sizes and separations are drawn from a PCG64 generator (numpy), so a
seed reproduces the same stream on every platform.
"""
from dataclasses import dataclass

import numpy as np

from hovmerge import config
from hovmerge.vehicle_model import ParameterError, VehicleState, MAIN_LANE

SCHEDULE_EPS = 1e-9


@dataclass(frozen=True)
class TrafficGenConfig:
    N_plat: int = config.N_PLAT
    L_plat: int = config.L_PLAT
    seed: int = config.BASE_SEED
    spawn_x: float = config.SPAWN_X

    def validate(self):
        if self.N_plat < 2:
            raise ParameterError(f"N_plat >= 2 violated: N_plat = {self.N_plat}")
        if self.L_plat < 1:
            raise ParameterError(f"L_plat >= 1 violated: L_plat = {self.L_plat}")
        return self


@dataclass(frozen=True)
class PlatoonSpec:
    n_vehicles: int
    separation_from_prev: float


@dataclass(frozen=True)
class SpawnEvent:
    time: float
    platoon: int
    index: int
    n_vehicles: int


def make_streams(seed):
    """Independent generators for the platoon stream and the ramp arrivals."""
    platoon_seq, ramp_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(platoon_seq)), np.random.Generator(np.random.PCG64(ramp_seq))


def sample_platoon_size(rng, N_plat):
    n_gap = max(2, int(1 + rng.random() * N_plat))
    return n_gap + 1


def sample_separation(rng, L_plat, p):
    return max(1.0, rng.random() * L_plat) * p.equilibrium_spacing


def sample_platoon(rng, gen_config, p):
    n_vehicles = sample_platoon_size(rng, gen_config.N_plat)
    return PlatoonSpec(n_vehicles=n_vehicles, separation_from_prev=sample_separation(rng, gen_config.L_plat, p))


def mean_flow(N_plat, L_plat, p):
    """Mean incoming flow (vehicles/s), mean gaps per platoon and mean platoon separation."""
    mean_n_gap = (N_plat + 1) / 2 + 1 / N_plat
    mean_l_sep = ((L_plat ** 2 - 1) / (2 * L_plat) + 1 / L_plat) * p.equilibrium_spacing
    flow = (mean_n_gap + 1) * p.v_max / (mean_l_sep + mean_n_gap * p.equilibrium_spacing)
    return flow, mean_n_gap, mean_l_sep


def max_flow(p):
    return p.v_max / p.equilibrium_spacing


def spawn_stream(rng, gen_config, p):
    """
    Endless schedule of vehicle arrivals at spawn_x, in time order.

    Vehicles of a platoon follow each other at the equilibrium spacing; the
    first vehicle of a platoon trails the last one of the previous platoon by
    its separation. The first platoon arrives at t = 0.
    """
    clock = 0.0
    platoon = 0
    while True:
        spec = sample_platoon(rng, gen_config, p)
        if platoon > 0:
            clock += spec.separation_from_prev / p.v_max
        for index in range(spec.n_vehicles):
            if index > 0:
                clock += p.equilibrium_spacing / p.v_max
            yield SpawnEvent(time=clock, platoon=platoon, index=index, n_vehicles=spec.n_vehicles)
        platoon += 1


class PlatoonStream:
    """Turns the spawn schedule into vehicles entering the lane."""

    def __init__(self, rng, gen_config, p):
        self.gen_config = gen_config
        self.p = p
        self.events = spawn_stream(rng, gen_config, p)
        self.pending = next(self.events)
        self.stalls = 0

    def inject(self, clock, tail, next_id):
        """
        Vehicles due by `clock`, placed where their schedule puts them.

        A vehicle is never placed with less than h * v_max bumper gap behind
        `tail` (the last vehicle on the lane); if there is no room at spawn_x
        the injection stalls until the next call.
        """
        p = self.p
        spawn_x = self.gen_config.spawn_x
        injected = []
        while self.pending.time <= clock + SCHEDULE_EPS:
            last = injected[-1] if injected else tail
            x = spawn_x + p.v_max * max(0.0, clock - self.pending.time)
            v = p.v_max
            if last is not None:
                limit = last.x - p.D - p.h * p.v_max
                if limit < spawn_x:
                    self.stalls += 1
                    break
                if x > limit:
                    x = limit
                    v = min(p.v_max, last.v)

            injected.append(VehicleState(id=next_id + len(injected), x=x, v=v, lane=MAIN_LANE,
                                         spawn_time=self.pending.time, spawn_x=spawn_x, origin=MAIN_LANE))
            self.pending = next(self.events)
        return injected
