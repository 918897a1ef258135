import math

import numpy as np
import pytest

from locfell.paths import (DeterministicTime, ExitTime, StepPath, check_path, constant_path,
                           grid_path, jump_path, read_path_csv, write_path_csv)
from locfell.simulators import simulate_ode
from locfell.state_space import DELTA, OpenInterval

from pathgen import random_step_path, same_knots

TAN = grid_path(np.tan, 1e-4, xi=math.pi / 2)


def test_value_examples():
    assert constant_path(1.0).evaluate(7) == 1.0
    x = jump_path([0, 1], [0, 2])
    assert x.evaluate(1) == 2 and x.evaluate(0.999) == 0
    assert StepPath([0], [1.0], 0.5).evaluate(0.5) is DELTA
    assert TAN.evaluate(1.0) == pytest.approx(math.tan(1.0), abs=1e-3)


def test_left_limit_examples():
    assert jump_path([0, 1], [0, 2]).left_limit(1) == 0
    assert StepPath([0], [1.0], 0.5).left_limit(0.5) is DELTA
    assert StepPath([0], [1.0], 0.5, 3.0).left_limit(0.5) == 3.0


def test_explosion_time_examples():
    assert constant_path(0).explosion_time() == math.inf
    assert simulate_ode("square", 2.0, dt=1e-5).explosion_time() == pytest.approx(0.5, abs=5e-3)


def test_exit_time_examples():
    U = OpenInterval(-2, 2)
    assert constant_path(0).exit_time(U) == math.inf
    assert TAN.exit_time(U) == pytest.approx(math.atan(2), abs=1e-4)
    assert constant_path(5).exit_time(U) == 0


def test_exit_counts_the_left_limit_at_explosion():
    x = StepPath([0], [0.0], 1.0, 5.0)
    assert x.exit_time(OpenInterval(-2, 2)) == 1.0


def test_stop_examples():
    x = jump_path([0, 1, 2], [0, 3, -1])
    assert same_knots(x.stop(0), constant_path(0))
    once = x.stop(1.5)
    assert same_knots(once.stop(1.5), once)
    stopped = TAN.stop(ExitTime(OpenInterval(-2, 2)))
    assert stopped.xi == math.inf
    assert stopped.evaluate(10) == pytest.approx(2, abs=1e-3)


def test_stopping_specs():
    x = jump_path([0, 1], [0, 3])
    assert DeterministicTime(0.5)(x) == 0.5
    assert ExitTime(OpenInterval(-1, 1))(x) == 1
    assert (DeterministicTime(0.5) & ExitTime(OpenInterval(-1, 1)))(x) == 0.5


def test_integral_of_step_path():
    x = jump_path([0, 1, 3], [1.0, 2.0, 0.0])
    assert x.integral(lambda v: v, 0, 4) == pytest.approx(1 + 4)
    assert x.integral(lambda v: v, 0.5, 2) == pytest.approx(0.5 + 2)


def test_invalid_paths_rejected():
    with pytest.raises(ValueError):
        StepPath([0, 0], [1, 2])
    with pytest.raises(ValueError):
        StepPath([1], [1])
    with pytest.raises(ValueError):
        StepPath([0, 2], [1, 2], xi=1.5)
    with pytest.raises(ValueError):
        StepPath([0], [math.inf])
    with pytest.raises(AttributeError):
        constant_path(0).xi = 3


def test_check_path_accepts_random_paths(rng):
    for _ in range(50):
        assert check_path(random_step_path(rng)) == []


def test_csv_round_trip(tmp_path, rng):
    for k in range(20):
        x = random_step_path(rng)
        target = tmp_path / f"p{k}.csv"
        write_path_csv(x, target)
        y = read_path_csv(target)
        assert np.array_equal(x.times, y.times) and np.array_equal(x.values, y.values)
        assert x.xi == y.xi and x.left_limit_at_explosion == y.left_limit_at_explosion
