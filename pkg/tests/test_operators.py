import math
import warnings

import numpy as np
import pytest

from locfell.coefficients import drift_from_config, sigma_from_config
from locfell.operators import (GridBoundaryWarning, Pair, GFunction, chain_operator,
                               cpoisson_operator, custom_operator, default_probe_grid,
                               diffusion_operator, gaussian_bump, identity_pair, is_bounded,
                               plateau, pmp_check, poly_bump, scale_operator,
                               test_function_from_config, trig_bump, zero_function)
from locfell.time_change import const, one_plus_x2

FUNCTIONS = [gaussian_bump(0, 1), gaussian_bump(1.5, 0.7), poly_bump((1.0, 0.5), 2.0),
             poly_bump((0.3, -1.0, 2.0), 1.5, center=-1.0), trig_bump(1.0, 2.0),
             trig_bump(2.5, 1.0, center=0.5), plateau(-1, 1, 0.2)]
LAPLACE = diffusion_operator(FUNCTIONS[:1], sigma=sigma_from_config("one"))


@pytest.mark.parametrize("f", FUNCTIONS, ids=lambda f: f.label)
def test_declared_derivatives_match_finite_differences(f):
    x = np.linspace(f.support[0] - 0.5, f.support[1] + 0.5, 801)
    h = 1e-4
    for k in range(4):
        fd = (f.derivs(x + h, k) - f.derivs(x - h, k)) / (2 * h)
        nxt = f.derivs(x, k + 1)
        # relative: steep plateaus have large high derivatives, cutoffs a small d4 kink
        assert np.max(np.abs(fd - nxt)) <= 1e-3 * max(1.0, np.max(np.abs(nxt)))


@pytest.mark.parametrize("f", FUNCTIONS, ids=lambda f: f.label)
def test_functions_vanish_outside_support_and_at_delta(f):
    lo, hi = f.support
    out = np.array([lo - 1.0, lo - 1e-9, hi + 1e-9, hi + 5.0])
    assert np.max(np.abs(f(out))) < 1e-12
    assert f(np.array([np.nan]))[0] == 0 and f.d2(np.array([np.nan]))[0] == 0


def test_function_config_round_trip():
    for f in FUNCTIONS:
        g = test_function_from_config(f.to_config())
        x = np.linspace(-4, 4, 33)
        assert np.array_equal(f(x), g(x)) and f.label == g.label
    with pytest.raises(ValueError):
        test_function_from_config({"name": "nope"})


def test_gaussian_bump_second_derivative_at_center():
    assert LAPLACE.pairs[0].g(np.array([0.0]))[0] == pytest.approx(-1.0)


def test_scale_examples():
    x = np.linspace(-3, 3, 61)
    f = FUNCTIONS[0]
    same = scale_operator(LAPLACE, const(1.0))
    assert np.array_equal(same.pairs[0].g(x), LAPLACE.pairs[0].g(x))
    doubled = scale_operator(LAPLACE, const(2.0))
    assert np.allclose(doubled.pairs[0].g(x), f.d2(x))
    pushed = scale_operator(LAPLACE, one_plus_x2())
    assert pushed.pairs[0].g(np.array([1.0]))[0] == pytest.approx(f.d2(np.array([1.0]))[0])


def test_pmp_examples():
    assert pmp_check(LAPLACE) == []
    bad = pmp_check(custom_operator([identity_pair(gaussian_bump(0, 1))]))
    assert len(bad) == 1 and bad[0].argmax == pytest.approx(0.0, abs=1e-12)
    assert bad[0].g_value == pytest.approx(1.0)
    zero = custom_operator([Pair(zero_function(), GFunction("0", np.zeros_like))])
    assert pmp_check(zero, np.linspace(-1, 1, 11)) == []


def test_pmp_refines_the_argmax_for_first_order_operators():
    # on a grid, f' at the argmax is O(step); b f' would then look positive
    L = diffusion_operator(FUNCTIONS, drift_from_config({"name": "cube", "c": 1.0}))
    assert pmp_check(L, np.linspace(-8, 8, 4001)) == []


def test_pmp_warns_when_argmax_on_grid_boundary():
    with pytest.warns(GridBoundaryWarning):
        pmp_check(LAPLACE, np.linspace(0.5, 3, 101))


def test_operator_is_single_valued():
    f = gaussian_bump(0, 1)
    with pytest.raises(ValueError):
        custom_operator([identity_pair(f), LAPLACE.pairs[0]])


def test_cpoisson_and_chain_operators():
    f = gaussian_bump(0, 1)
    x = np.array([0.0, 0.5])
    cp = cpoisson_operator([f], rate=2.0, jump=1.0).pairs[0].g(x)
    assert np.allclose(cp, f(x + 1) + f(x - 1) - 2 * f(x))
    chain = chain_operator([f], 1e4).pairs[0].g(np.array([0.0]))[0]
    assert chain == pytest.approx(-1.0, abs=2e-4)


def test_default_probe_grid_covers_supports():
    L = diffusion_operator(FUNCTIONS, sigma=sigma_from_config("one"))
    grid = default_probe_grid(L)
    assert grid.size == 4001
    assert grid[0] <= min(f.support[0] for f in FUNCTIONS)
    assert grid[-1] >= max(f.support[1] for f in FUNCTIONS)


def test_is_bounded():
    assert is_bounded(LAPLACE.pairs[0].g)
    assert not is_bounded(GFunction("x^2", lambda x: x * x))
