"""
Longitudinal vehicle dynamics shared by every vehicle on the lane and the ramp.

Positions are measured along the lane with the merge-region entrance at x = 0.
All functions here are pure: they read states and return new ones.
"""
import math
from dataclasses import dataclass, field, replace

from hovmerge import config

MAIN_LANE = 'main'
RAMP = 'ramp'


class ParameterError(ValueError):
    """A parameter set violates one of its invariants."""


@dataclass(frozen=True)
class ControlParams:
    alpha: float = config.ALPHA
    h: float = config.HEADWAY
    k: float = config.REL_VEL_GAIN
    xi: float = config.ACCEL_FEEDBACK
    tau: float = config.TAU
    D: float = config.VEHICLE_LENGTH
    d_max: float = config.D_MAX
    a_max: float = config.A_MAX
    v_max: float = config.V_MAX
    L: float = config.REGION_LENGTH
    x_g_dist: float = config.HOLD_DISTANCE
    T_v: float = config.T_V
    d_prime_max: float = None

    def __post_init__(self):
        if self.d_prime_max is None:
            object.__setattr__(self, 'd_prime_max', config.ENHANCED_BRAKE_FACTOR * self.d_max)

    @property
    def hold_x(self):
        return -self.x_g_dist

    @property
    def equilibrium_spacing(self):
        """Front-to-front spacing of a platoon cruising at v_max."""
        return self.h * self.v_max + self.D

    def validate(self):
        for name in ('alpha', 'h', 'k', 'tau', 'D', 'd_max', 'a_max', 'v_max', 'L', 'x_g_dist', 'd_prime_max'):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} > 0 violated: {name} = {getattr(self, name)}")
        if self.xi < 0:
            raise ParameterError(f"xi >= 0 violated: xi = {self.xi}")
        if self.T_v < 0:
            raise ParameterError(f"T_v >= 0 violated: T_v = {self.T_v}")
        return self

    def with_updates(self, **changes):
        """Copy with some fields replaced; d_prime_max follows d_max unless given."""
        if 'd_max' in changes and 'd_prime_max' not in changes:
            changes['d_prime_max'] = None
        return replace(self, **changes)


@dataclass(frozen=True)
class VehicleState:
    id: int
    x: float
    v: float
    a: float = 0.0
    a_cmd: float = 0.0
    lane: str = MAIN_LANE
    spawn_time: float = 0.0
    spawn_x: float = 0.0
    enhanced_brake_active: bool = False
    origin: str = MAIN_LANE
    # seconds of the last step during which `a` actually changed the velocity
    accel_time: float = field(default=0.0, compare=False)


def desired_accel_follow(lead, follower, p):
    """Desired acceleration of `follower` behind `lead` (unclamped)."""
    spacing = lead.x - follower.x - p.D - p.h * follower.v
    return (p.alpha / p.h) * spacing + p.k * (lead.v - follower.v) - p.xi * follower.a


def free_road_accel(state, p):
    """Command for a vehicle with nothing ahead of it: relax towards v_max."""
    return p.k * (p.v_max - state.v) - p.xi * state.a


def clamp_accel(a_desired, limit_low, p):
    return max(-limit_low, min(p.a_max, a_desired))


def lag_step(a, a_cmd, tau, dt):
    """Exact update of tau * da/dt + a = a_cmd over dt with a_cmd held."""
    return a_cmd + (a - a_cmd) * math.exp(-dt / tau)


def kinematic_step(state, dt, p):
    """
    Advance x and v over dt with the state's acceleration held constant.

    The velocity is kept inside [0, v_max]; when a bound is reached inside the
    step the vehicle continues at the bound and its realized acceleration is 0.
    """
    a, v = state.a, state.v

    if a > 0:
        if v >= p.v_max:
            return replace(state, x=state.x + p.v_max * dt, v=p.v_max, a=0.0, accel_time=0.0)
        t_hit = (p.v_max - v) / a
        if t_hit < dt:
            dx = v * t_hit + 0.5 * a * t_hit ** 2 + p.v_max * (dt - t_hit)
            return replace(state, x=state.x + dx, v=p.v_max, a=0.0, accel_time=t_hit)
    elif a < 0:
        if v <= 0:
            return replace(state, v=0.0, a=0.0, accel_time=0.0)
        t_stop = v / -a
        if t_stop < dt:
            dx = v * t_stop + 0.5 * a * t_stop ** 2
            return replace(state, x=state.x + dx, v=0.0, a=0.0, accel_time=t_stop)
    else:
        return replace(state, x=state.x + v * dt, accel_time=0.0)

    v_next = min(p.v_max, max(0.0, v + a * dt))
    return replace(state, x=state.x + v * dt + 0.5 * a * dt ** 2, v=v_next, accel_time=dt)


def apply_command(state, a_cmd, limit_low, dt, p):
    """Clamp the command and pass it through the actuator lag; x and v are untouched."""
    a_cmd = clamp_accel(a_cmd, limit_low, p)
    return replace(state, a=lag_step(state.a, a_cmd, p.tau, dt), a_cmd=a_cmd)


def advance(state, a_cmd, limit_low, dt, p):
    """Clamp the command, pass it through the actuator lag, then integrate."""
    return kinematic_step(apply_command(state, a_cmd, limit_low, dt, p), dt, p)
