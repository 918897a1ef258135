import math

import numpy as np
import pytest
from scipy.stats import norm

from locfell.coefficients import drift_from_config
from locfell.martingale import (bonferroni_z, feller_tail_check, generator_estimate,
                                markov_conditioning_check, martingale_statistic, martingale_suite,
                                quasi_continuity_check, semigroup_estimate,
                                unstopped_martingale_statistic)
from locfell.operators import (GFunction, Pair, cpoisson_operator, diffusion_operator,
                               gaussian_bump, plateau, scale_operator)
from locfell.paths import DeterministicTime, ExitTime, constant_path
from locfell.simulators import FamilySimulator, ensemble
from locfell.state_space import OpenInterval
from locfell.time_change import const

BUMP = gaussian_bump(0, 1)
BM = FamilySimulator("diffusion")
WIDE = OpenInterval(-5, 5)


@pytest.fixture(scope="module")
def bm_ensemble():
    return ensemble(BM, 0.0, 10_000, 31)


def test_bonferroni_threshold():
    assert bonferroni_z(1, 1e-3) == pytest.approx(norm.isf(5e-4))
    assert bonferroni_z(12, 1e-3) > bonferroni_z(1, 1e-3)


def test_deterministic_drift_statistic_vanishes():
    fam = FamilySimulator("ode", drift=drift_from_config({"name": "const", "c": 1.0}), dt=1e-4)
    ens = ensemble(fam, 0.0, 100, 1)
    pair = Pair(BUMP, GFunction("f'", BUMP.d1))
    st = martingale_statistic(ens, pair, WIDE, 0.2, 1.0)
    assert abs(st.estimate) <= 1e-4


def test_brownian_statistic_and_wrong_generator(bm_ensemble):
    L = BM.generator([BUMP])
    st = martingale_statistic(bm_ensemble, L.pairs[0], WIDE, 0.2, 1.0)
    assert st.passed() and st.N == 10_000
    wrong = scale_operator(L, const(4.0)).pairs[0]
    assert abs(martingale_statistic(bm_ensemble, wrong, WIDE, 0.2, 1.0).z) > 4


def test_weighted_statistic_passes(bm_ensemble):
    L = BM.generator([BUMP])
    st = martingale_statistic(bm_ensemble, L.pairs[0], OpenInterval(-1, 1), 0.5, 1.0,
                              weights=[(0.2, gaussian_bump(0.5, 1.0)), (0.5, plateau(-1, 0))])
    assert st.passed() and "@0.2" in st.weights


def test_suite_shape(bm_ensemble):
    L = BM.generator([BUMP, gaussian_bump(0.5, 0.8)])
    stats, ok = martingale_suite(bm_ensemble, L, [OpenInterval(-1, 1), WIDE], [(0.2, 1.0)])
    assert len(stats) == 4 and ok
    assert {r["verdict"] for r in (s.row() for s in stats)} == {"pass"}


def test_statistic_preconditions(bm_ensemble):
    pair = BM.generator([BUMP]).pairs[0]
    with pytest.raises(ValueError):
        martingale_statistic(bm_ensemble, pair, WIDE, 1.0, 0.5)
    with pytest.raises(ValueError):
        martingale_statistic(bm_ensemble, pair, WIDE, 0.5, 2.0)
    with pytest.raises(ValueError):
        martingale_statistic(bm_ensemble.paths[:50], pair, WIDE, 0.2, 0.5)
    with pytest.raises(ValueError):
        martingale_statistic(bm_ensemble, pair, WIDE, 0.2, 0.5, weights=[(0.3, BUMP)])


def test_unstopped_examples():
    zero = Pair(BUMP, GFunction("0", np.zeros_like))
    st = unstopped_martingale_statistic([constant_path(0.3)] * 100, zero, 0.0, 1.0)
    assert st.estimate == 0 and st.z == 0
    cp = FamilySimulator("cpoisson", rate=1.0, jump=1.0)
    ens = ensemble(cp, 0.0, 10_000, 7)
    assert unstopped_martingale_statistic(ens, cp.generator([BUMP]).pairs[0], 0.2, 1.0).passed()
    with pytest.raises(ValueError):
        unstopped_martingale_statistic(ens, Pair(BUMP, GFunction("x^2", lambda x: x * x)), 0.2, 1.0)


def test_exploding_paths_give_finite_statistics():
    fam = FamilySimulator("ode", drift=drift_from_config("square"), dt=1e-4)
    ens = ensemble(fam, {"points": [0.0, 2.0], "weights": [0.7, 0.3]}, 200, 3)
    assert any(p.xi < 1 for p in ens.paths)
    st = unstopped_martingale_statistic(ens, fam.generator([BUMP]).pairs[0], 0.0, 1.0)
    assert math.isfinite(st.estimate) and math.isfinite(st.se)


def test_generator_examples():
    fam = FamilySimulator("diffusion", dt=1e-4, T=0.01)
    est = generator_estimate(fam, 0.0, BUMP, OpenInterval(-2, 2), [0.01], 20_000, 5)
    assert abs(est.extrapolated + 1) <= est.half_width and not est.flagged
    still = generator_estimate(FamilySimulator("ode", T=0.01), 0.3, BUMP, WIDE, [0.01, 0.005],
                               100, 5)
    assert np.all(np.asarray(still.quotients) == 0) and still.extrapolated == 0


def test_generator_of_the_scaled_walk():
    n = 1e4
    h = n ** -0.5
    target = n * (2 * BUMP(np.array([h]))[0] - 2 * BUMP(np.array([0.0]))[0]) / 2
    est = generator_estimate(FamilySimulator("chain", n=n, T=0.01), 0.0, BUMP, WIDE, [0.01],
                             50_000, 9)
    assert abs(est.extrapolated - target) <= est.half_width


def test_semigroup_examples():
    probe = [0.0, 0.5, 5.0]
    exact, se = semigroup_estimate(BM, BUMP, 0.0, probe, 10)
    assert np.array_equal(exact, BUMP(np.array(probe))) and np.all(se == 0)
    est, se = semigroup_estimate(BM, plateau(-1, 1), 1.0, [0.0], 10_000, 4)
    assert abs(est[0] - (norm.cdf(1) - norm.cdf(-1))) <= 4 * se[0]
    cube = FamilySimulator("ode", drift=drift_from_config("neg_cube"), dt=1e-5)
    est, se = semigroup_estimate(cube, BUMP, 1.0, [100.0], 1)
    assert est[0] == pytest.approx(BUMP(np.array([100 / math.sqrt(1 + 2e4)]))[0], abs=1e-3)


def test_feller_tail_verdicts():
    rep = feller_tail_check(BM, (-1, 1), 1.0, [0.0, 10.0], 2000, 3)
    assert rep.probs[0] == pytest.approx(norm.cdf(1) - norm.cdf(-1), abs=0.05)
    assert rep.probs[-1] == 0 and rep.verdict == "Feller-consistent"
    assert [r["a"] for r in rep.rows()] == [0.0, 10.0]
    cube = FamilySimulator("ode", drift=drift_from_config("neg_cube"), dt=1e-5)
    rep = feller_tail_check(cube, (-1, 1), 1.0, [100.0], 1)
    assert rep.probs == (1.0,) and rep.hit_probs == (1.0,)
    assert rep.verdict == "locally-Feller-only"


def test_quasi_continuity_on_grid_paths(bm_ensemble):
    assert quasi_continuity_check(bm_ensemble, 0.5) == 0
    with pytest.raises(ValueError):
        quasi_continuity_check(bm_ensemble, 1.0)


def test_markov_check_passes_for_brownian_motion():
    fam = FamilySimulator("diffusion", T=3.0)
    rep = markov_conditioning_check(fam, ExitTime(OpenInterval(-1, 1)), (1.0, 2.0), BUMP, 0.5,
                                    10_000, 0.0, 12)
    assert rep.hits > 1000 and rep.passed()


def test_markov_check_exact_for_a_flow():
    fam = FamilySimulator("ode", drift=drift_from_config({"name": "linear", "k": -1.0}), T=2.0)
    rep = markov_conditioning_check(fam, DeterministicTime(0.5), (-5, 5), BUMP, 0.5, 200,
                                    {"points": [0.5, 1.0], "weights": [0.5, 0.5]}, 1)
    assert rep.z == 0


def test_markov_check_rejects_a_running_maximum_switch():
    fam = FamilySimulator("runmax", level=0.3, boost=-3.0, T=2.0)
    rep = markov_conditioning_check(fam, DeterministicTime(1.0), (-0.5, 0.0), BUMP, 0.5, 10_000,
                                    0.0, 13)
    assert abs(rep.z) > 4
