import math

import numpy as np
import pytest

from locfell.paths import StepPath, constant_path, grid_path, jump_path
from locfell.simulators import FamilySimulator, ensemble
from locfell.skorokhod import (aldous_tightness, convergence_probe, global_distance,
                               global_distance_bruteforce, local_distance,
                               optimal_reparametrization)
from locfell.state_space import OpenInterval, StateSpace

from pathgen import random_step_path

TRUNC = StateSpace(delta_chart="truncated")
STEP = jump_path([0, 1], [0, 1])


def flow(a, dt=1e-4):
    return grid_path(lambda t: a / (1 - a * t), dt, xi=1 / a)


def test_global_distance_examples():
    assert global_distance(STEP, STEP, 2.0) == 0
    shifted = jump_path([0, 1.1], [0, 1])
    assert global_distance(STEP, shifted, 2.0) <= 0.1 + 1e-9
    assert global_distance(STEP, shifted, 2.0) == pytest.approx(0.1, abs=1e-12)
    assert global_distance(STEP, constant_path(0), 2.0, TRUNC) == 1.0


def test_optimal_reparametrization_matches_jumps():
    d, lam = optimal_reparametrization(STEP, jump_path([0, 1.1], [0, 1]), 2.0)
    assert d == pytest.approx(0.1)
    assert lam.time_distortion() == pytest.approx(0.1)
    assert lam(1.0) == pytest.approx(1.1)
    assert lam(0.0) == 0 and lam(2.0) == 2


def test_dp_matches_exhaustive_search_in_both_charts():
    rng = np.random.default_rng(7)
    for space in (StateSpace(), TRUNC):
        for _ in range(30):
            x = random_step_path(rng, max_jumps=3, span=2.0, explode=0.3)
            y = random_step_path(rng, max_jumps=3, span=2.0, explode=0.3)
            assert global_distance(x, y, 2.0, space) == pytest.approx(
                global_distance_bruteforce(x, y, 2.0, space), abs=1e-9)


def test_global_distance_rejects_bad_horizon():
    with pytest.raises(ValueError):
        global_distance(STEP, STEP, 0.0)


def test_local_distance_examples():
    tan = grid_path(np.tan, 1e-3, xi=math.pi / 2)
    assert local_distance(tan, tan) == 0
    assert local_distance(flow(2.0), flow(2.0 + 1e-3)) < 0.05
    # both constants stay put, each level compares 0 with 3 in the chart
    expected = sum(2.0 ** -n * min(1.0, abs(0 - 3 / 4)) for n in range(1, 21))
    assert local_distance(constant_path(0.0), constant_path(3.0)) == pytest.approx(expected)


def test_local_distance_is_bounded_by_one():
    rng = np.random.default_rng(8)
    for _ in range(20):
        x, y = random_step_path(rng, max_jumps=3), random_step_path(rng, max_jumps=3)
        assert 0 <= local_distance(x, y, levels=6) <= 1


def test_convergence_probe_examples():
    same = convergence_probe([STEP] * 5, STEP)
    assert np.all(same.distances == 0) and same.converging
    ks = np.array([2, 4, 8, 16, 32, 64])
    probe = convergence_probe([jump_path([0, 1 + 1 / k], [0, 1]) for k in ks], STEP)
    assert np.all(np.diff(probe.distances) < 0) and probe.converging
    rate = probe.distances * ks
    assert np.ptp(rate) <= 0.05 * rate.mean()
    stuck = convergence_probe([STEP] * 5, constant_path(0.0))
    assert np.ptp(stuck.distances) == 0 and stuck.distances[0] > 0
    assert stuck.verdict == "not converging"


def test_aldous_constant_paths_give_zero():
    ens = [[constant_path(0.0)] * 20, [constant_path(1.0)] * 20]
    rep = aldous_tightness(ens, 0.25, 1.0, OpenInterval(-5, 5), [0.2, 0.1, 0.05])
    assert np.all(rep.probs == 0)


def test_aldous_brownian_motion_decreases_with_delta():
    ens = [ensemble(FamilySimulator("diffusion"), 0.0, 1000, 21)]
    rep = aldous_tightness(ens, 0.25, 1.0, OpenInterval(-5, 5), [0.2, 0.05, 0.01, 0.002])
    assert rep.decreasing(slack=0.02)
    assert rep.limsup[-1] < 0.05
    assert rep.to_rows()[0] == ["delta", "n=1", "limsup"]


def test_aldous_deterministic_jump_saturates():
    jumper = [StepPath([0, 0.5], [0.0, 1.0])] * 10
    rep = aldous_tightness([jumper], 0.5, 1.0, OpenInterval(-5, 5), [0.2, 0.05, 0.01])
    assert np.all(rep.probs == 1.0)
