import math
import sys

import numpy as np


def is_debugging():
    return sys.gettrace() is not None


def mean_and_se(values):
    """Sample mean and standard error (ddof = 1); the error of a single value is 0."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0, 0.0
    mean = float(np.mean(values))
    if values.size == 1:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def format_sig(value, digits=6):
    # same rendering as the CSV writer
    return f"{value:.{digits}g}"

