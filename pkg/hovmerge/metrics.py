"""
Performance measures of a run: acceleration and deceleration measures per
merge, mean trip delay of lane vehicles, merge rate and queue-head waiting time.
"""
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from utils.common_utils import mean_and_se


@dataclass
class MetricsAccumulator:
    T_max: float
    sum_acc_sq: float = 0.0
    sum_dec_sq: float = 0.0
    sum_dec_sq_trailing: float = 0.0
    M: int = 0
    failures: int = 0
    runs: int = 1
    delays: list = field(default_factory=list)
    merge_times: list = field(default_factory=list)
    queue_head_waits: list = field(default_factory=list)
    entry_speeds: list = field(default_factory=list)

    def record_merge(self, clock):
        self.M += 1
        self.merge_times.append(clock)


@dataclass
class Metrics:
    a_tot: float
    d_tot: float
    t_ave: float
    merge_rate: float
    mean_queue_wait: float
    failures: int
    M: int
    d_tot_trailing: float
    mean_entry_speed: float
    vehicles_measured: int

    def to_dict(self):
        return asdict(self)


def accumulate(acc, accelerations, dt, durations=None, trailing=None):
    """
    Add one step of main-lane accelerations.

    `durations` gives, per vehicle, the part of the step during which the
    acceleration acted (defaults to dt); `trailing` flags vehicles holding a
    trailing-vehicle command so their deceleration is also booked separately.
    """
    for i, a in enumerate(accelerations):
        span = dt if durations is None else durations[i]
        if a > 0:
            acc.sum_acc_sq += a * a * span
        elif a < 0:
            contribution = a * a * span
            acc.sum_dec_sq += contribution
            if trailing is not None and trailing[i]:
                acc.sum_dec_sq_trailing += contribution
    return acc


def _root_mean(total, acc):
    if acc.M == 0 or acc.T_max <= 0:
        return 0.0
    return math.sqrt(total / (acc.M * acc.T_max))


def _mean(values):
    return float(np.mean(values)) if len(values) > 0 else 0.0


def finalize(acc):
    horizon = acc.runs * acc.T_max
    return Metrics(
        a_tot=_root_mean(acc.sum_acc_sq, acc),
        d_tot=_root_mean(acc.sum_dec_sq, acc),
        t_ave=_mean(acc.delays),
        merge_rate=acc.M / horizon if horizon > 0 else 0.0,
        mean_queue_wait=_mean(acc.queue_head_waits),
        failures=acc.failures,
        M=acc.M,
        d_tot_trailing=_root_mean(acc.sum_dec_sq_trailing, acc),
        mean_entry_speed=_mean(acc.entry_speeds),
        vehicles_measured=len(acc.delays),
    )


AGGREGATED = ('a_tot', 'd_tot', 't_ave', 'merge_rate')


def aggregate_runs(rows, metrics=AGGREGATED):
    """Mean and standard error over runs for each metric; rows are dicts with the metric names as keys."""
    summary = {}
    for name in metrics:
        mean, se = mean_and_se([row[name] for row in rows])
        summary[name] = mean
        summary[f"{name}_se"] = se
    return summary


def merge_accumulators(accumulators):
    """Pool runs of equal T_max into one accumulator."""
    accumulators = list(accumulators)
    T_max = accumulators[0].T_max
    if any(acc.T_max != T_max for acc in accumulators):
        raise ValueError("only runs with the same T_max can be pooled")

    pooled = MetricsAccumulator(T_max=T_max, runs=0)
    for acc in accumulators:
        pooled.sum_acc_sq += acc.sum_acc_sq
        pooled.sum_dec_sq += acc.sum_dec_sq
        pooled.sum_dec_sq_trailing += acc.sum_dec_sq_trailing
        pooled.M += acc.M
        pooled.failures += acc.failures
        pooled.runs += acc.runs
        pooled.delays.extend(acc.delays)
        pooled.merge_times.extend(acc.merge_times)
        pooled.queue_head_waits.extend(acc.queue_head_waits)
        pooled.entry_speeds.extend(acc.entry_speeds)
    return pooled
