"""Random step paths shared by several test modules."""

import math

import numpy as np

from locfell.paths import StepPath


def random_step_path(rng, max_jumps=10, span=5.0, lo=-3.0, hi=3.0, explode=0.5):
    """A step path with at most ``max_jumps`` jumps in ``(0, span)``.

    With probability ``explode`` the path has a finite explosion time after
    its last knot, and then a left limit at explosion half of the time.
    """
    k = int(rng.integers(0, max_jumps + 1))
    times = np.concatenate(([0.0], np.sort(rng.uniform(0.0, span, k))))
    times = np.unique(times)
    values = np.round(rng.uniform(lo, hi, times.size), 3)
    xi = math.inf
    ll = None
    if rng.random() < explode:
        xi = float(times[-1] + rng.uniform(0.05, 2.0))
        if rng.random() < 0.5:
            ll = float(np.round(rng.uniform(lo, hi), 3))
    return StepPath(times, values, xi, ll)


def same_knots(x, y):
    """Bitwise equality of the step representations."""
    return (np.array_equal(x.times, y.times) and np.array_equal(x.values, y.values)
            and np.array_equal(x.durations, y.durations) and x.xi == y.xi
            and x.left_limit_at_explosion == y.left_limit_at_explosion)
