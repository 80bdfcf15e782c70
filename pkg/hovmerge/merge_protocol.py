"""
Merge decisions for a ramp vehicle m entering the gap between lane vehicles
a (ahead) and b (behind).

The functions here are evaluated on the decision clock by the simulation
engine. They read vehicle states and return commands or verdicts; none of them
mutates a state.
"""
import enum
import math
from dataclasses import dataclass, replace

from hovmerge import config
from hovmerge.linear_analysis import recovery_time
from hovmerge.vehicle_model import desired_accel_follow, clamp_accel


class MergePhaseError(ValueError):
    """Illegal merge phase transition."""


class MergeStage(enum.Enum):
    QUEUED = 'queued'
    RELEASED = 'released'
    IN_REGION_UNVERIFIED = 'in_region_unverified'
    IN_REGION_VERIFIED = 'in_region_verified'
    MERGED = 'merged'
    FAILED = 'failed'


IN_REGION = (MergeStage.IN_REGION_UNVERIFIED, MergeStage.IN_REGION_VERIFIED)

_TRANSITIONS = {
    MergeStage.QUEUED: {MergeStage.RELEASED},
    MergeStage.RELEASED: {MergeStage.IN_REGION_UNVERIFIED, MergeStage.IN_REGION_VERIFIED},
    MergeStage.IN_REGION_UNVERIFIED: {MergeStage.IN_REGION_VERIFIED, MergeStage.MERGED, MergeStage.FAILED},
    MergeStage.IN_REGION_VERIFIED: {MergeStage.IN_REGION_UNVERIFIED, MergeStage.MERGED, MergeStage.FAILED},
    MergeStage.MERGED: set(),
    MergeStage.FAILED: set(),
}


@dataclass(frozen=True)
class MergePhase:
    stage: MergeStage = MergeStage.QUEUED
    past_midpoint: bool = False

    @property
    def in_region(self):
        return self.stage in IN_REGION

    def advance(self, stage):
        if stage == self.stage:
            return self
        if stage not in _TRANSITIONS[self.stage]:
            raise MergePhaseError(f"cannot go from {self.stage.value} to {stage.value}")
        return replace(self, stage=stage)

    def note_position(self, x, L):
        """past_midpoint latches once x reaches L / 2."""
        if self.past_midpoint or x < L / 2:
            return self
        return replace(self, past_midpoint=True)


@dataclass(frozen=True)
class MergeScores:
    S_a: float
    S_b: float


@dataclass(frozen=True)
class ReleaseEstimate:
    T_a: float
    T_b: float
    T_m: float
    v_m0: float


@dataclass(frozen=True)
class RegionCommand:
    a_m_cmd: float
    a_b_cmd: float = None
    rule: str = ''


def score_gap(m, a, b, p):
    S_a = a.x - m.x - p.D - p.h * m.v + p.T_v * (a.v - m.v)
    S_b = m.x - b.x - p.D - p.h * b.v + p.T_v * (m.v - b.v)
    return MergeScores(S_a=S_a, S_b=S_b)


def candidate_gap(a, b, p):
    return b.x < 0 and a.x >= b.x + 2 * (p.h * b.v + p.D)


def ramp_launch(p):
    """Time for a vehicle released from the hold point to reach x = 0 at a_max, and its speed there."""
    T_m = math.sqrt(2 * p.x_g_dist / p.a_max)
    return T_m, p.a_max * T_m


def release_estimate(a, b, p):
    if a.v <= 0 or b.v <= 0:
        return None
    T_m, v_m0 = ramp_launch(p)
    return ReleaseEstimate(T_a=-a.x / a.v, T_b=-b.x / b.v, T_m=T_m, v_m0=v_m0)


def release_check(a, b, p):
    est = release_estimate(a, b, p)
    if est is None:
        return False
    if not est.T_a < est.T_m < est.T_b:
        return False
    after_a = est.T_a + p.D / a.v + (p.h + p.T_v) * est.v_m0 / a.v - p.T_v
    before_b = est.T_b - p.D / b.v - p.h - p.T_v + p.T_v * est.v_m0 / b.v
    return after_a < est.T_m < before_b


def select_gap(main_lane, p):
    """
    Earliest-arriving gap that is a candidate and allows a release now.

    `main_lane` is ordered front to back. Returns (a, b, ReleaseEstimate) or None.
    """
    best = None
    for a, b in zip(main_lane, main_lane[1:]):
        if not candidate_gap(a, b, p) or not release_check(a, b, p):
            continue
        est = release_estimate(a, b, p)
        if best is None or est.T_a < best[2].T_a:
            best = (a, b, est)
    return best


def ramp_accel(m, v_m0, p):
    return min(p.k * (v_m0 - m.v), p.a_max)


def gap_verified(m, a, b, p):
    return a.x - b.x - p.D >= 2 * p.h * p.v_max + p.D and b.x < m.x < a.x


def _approach_a(m, a, p, literal):
    spacing = a.x - m.x - p.h * m.v - (0.0 if literal else p.D)
    return (p.alpha / p.h) * spacing + p.k * (a.v - m.v)


def _back_off_b(m, b, p, literal):
    spacing = m.x - b.x - p.h * b.v - (0.0 if literal else p.D)
    return -((p.alpha / p.h) * spacing + p.k * (m.v - b.v))


def region_control(m, a, b, phase, p, literal_terms=False):
    """
    Commands for m (and possibly b) while m is in the merge region and unmerged.

    Past the midpoint the stopping rules take precedence; otherwise a verified
    gap makes m follow a (b brakes while S_b < 0), and an unverified gap makes m
    steer towards whichever margin is negative. Returns None when no rule
    applies and the merge attempt decides.
    """
    scores = score_gap(m, a, b, p)

    if phase.past_midpoint and (scores.S_a < 0 or scores.S_b < 0):
        if scores.S_a < 0:
            a_b_cmd = -p.d_max if scores.S_b < 0 else None
            return RegionCommand(a_m_cmd=-p.d_max / 2, a_b_cmd=a_b_cmd, rule='midpoint_a')
        return RegionCommand(a_m_cmd=0.0, a_b_cmd=-p.d_max, rule='midpoint_b')

    if phase.stage == MergeStage.IN_REGION_VERIFIED:
        a_m_cmd = clamp_accel(desired_accel_follow(a, m, p), p.d_max, p)
        a_b_cmd = -p.d_max if scores.S_b < 0 else None
        return RegionCommand(a_m_cmd=a_m_cmd, a_b_cmd=a_b_cmd, rule='verified')

    if scores.S_a < 0 < scores.S_b:
        A_m = _approach_a(m, a, p, literal_terms)
    elif scores.S_b < 0 < scores.S_a:
        A_m = _back_off_b(m, b, p, literal_terms)
    else:
        return None
    a_m_cmd = min(max(-p.d_max, A_m - p.xi * m.a), p.a_max)
    return RegionCommand(a_m_cmd=a_m_cmd, rule='unverified')


def try_merge(m, a, b, p):
    scores = score_gap(m, a, b, p)
    return scores.S_a >= 0 and scores.S_b >= 0 and a.x - m.x - p.D >= config.MIN_LEAD_GAP


def brake_trigger(b, m, p):
    return (m.x - b.x - p.D - p.h * b.v) + (p.h * p.k / p.alpha) * (m.v - b.v)


def enhanced_brake_controller(b, m, p, T=None):
    """
    Hard braking of the vehicle b behind a just-merged, slower vehicle m.

    Braking at -d_prime_max starts when the trigger margin turns negative and
    ends once the follow law asks for less than d_prime_max and b's speed
    excess over m has fallen below d_prime_max * T. It also ends once b is no
    longer faster than m. Returns (command or None, active).
    """
    if not b.enhanced_brake_active:
        if brake_trigger(b, m, p) < 0:
            return -p.d_prime_max, True
        return None, False

    if T is None:
        T = recovery_time(p)
    follow = (p.alpha / p.h) * (m.x - b.x - p.D - p.h * b.v) + p.k * (m.v - b.v)
    if b.v <= m.v or (follow > -p.d_prime_max and m.v < b.v < m.v + p.d_prime_max * T):
        return None, False
    return -p.d_prime_max, True
