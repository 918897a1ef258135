import json
import math

import numpy as np
import pytest

from locfell.paths import read_path_csv
from locfell.simulators import (FamilySimulator, InitialLaw, TimeChangedFamily, derive_seed,
                                ensemble, family_from_config, iter_paths, simulate_chain,
                                simulate_cpoisson, simulate_diffusion, simulate_ode, worker_count)
from locfell.time_change import one_plus_x2


def within(sample, mean, k=4.0):
    se = sample.std(ddof=1) / math.sqrt(sample.size)
    return abs(sample.mean() - mean) <= k * se


def test_ode_examples():
    assert simulate_ode("square", 2.0, dt=1e-5).xi == pytest.approx(0.5, abs=5e-3)
    flat = simulate_ode("zero", 1.0)
    assert flat.xi == math.inf and np.all(flat.values == 1.0)
    cube = simulate_ode("neg_cube", 100.0, dt=1e-5)
    assert cube.evaluate(1.0) == pytest.approx(100 / math.sqrt(1 + 2e4), abs=1e-2)


def test_degenerate_diffusion_is_the_ode():
    ode = simulate_ode({"name": "linear", "k": -1.0}, 1.5, dt=1e-3)
    sde = simulate_diffusion({"name": "linear", "k": -1.0}, "zero", 1.5, dt=1e-3, seed=9)
    assert np.array_equal(ode.times, sde.times) and np.array_equal(ode.values, sde.values)


def test_brownian_variance():
    ens = ensemble(FamilySimulator("diffusion"), 0.0, 10_000, 1)
    x1 = np.array([p.evaluate(1.0) for p in ens.paths])
    assert within(x1, 0.0)
    assert within((x1 - x1.mean()) ** 2, 1.0)


def test_compound_poisson():
    assert len(simulate_cpoisson(0.0, 0.5, seed=3)) == 1
    ens = ensemble(FamilySimulator("cpoisson", rate=1.0, jump=1.0), 0.0, 10_000, 2)
    counts = np.array([np.sum(p.jump_times() <= 1.0) for p in ens.paths])
    assert within(counts.astype(float), 1.0)
    assert not any(np.any(p.jump_times() == 0.5) for p in ens.paths)
    sizes = np.concatenate([np.abs(np.diff(p.values)) for p in ens.paths])
    assert np.allclose(sizes, 1.0)


def test_chain_unit_scale_and_diffusive_limit():
    unit = simulate_chain(1, 0.0, T=50.0, seed=4)
    assert np.allclose(np.abs(np.diff(unit.values)), 1.0)
    ens = ensemble(FamilySimulator("chain", n=1e4), 0.0, 10_000, 5)
    x1 = np.array([p.evaluate(1.0) for p in ens.paths])
    assert within((x1 - x1.mean()) ** 2, 1.0)


def test_initial_laws():
    fam = FamilySimulator("diffusion", T=0.1)
    assert all(p.start == 2.5 for p in ensemble(fam, 2.5, 20, 1).paths)
    mix = ensemble(fam, {"points": [0.0, 1.0], "weights": [0.5, 0.5]}, 10_000, 1)
    assert within((mix.starts == 1.0).astype(float), 0.5)
    dead = ensemble(fam, None, 10, 1)
    assert all(p.xi == 0 for p in dead.paths)
    with pytest.raises(ValueError):
        InitialLaw((0.0, 1.0), (0.5, 0.6))


def test_seeds_are_deterministic_and_distinct():
    assert derive_seed(7, 3) == derive_seed(7, 3)
    seeds = {derive_seed(7, i) for i in range(10_000)}
    assert len(seeds) == 10_000


def test_ensemble_independent_of_worker_count():
    fam = FamilySimulator("cpoisson", rate=3.0, T=2.0)
    a = ensemble(fam, 0.0, 300, 11, workers=1)
    b = ensemble(fam, 0.0, 300, 11, workers=4)
    assert all(np.array_equal(p.values, q.values) and np.array_equal(p.times, q.times)
               for p, q in zip(a.paths, b.paths))
    streamed = list(iter_paths(fam, 0.0, 300, 11))
    assert all(np.array_equal(p.times, q.times) for p, q in zip(a.paths, streamed))


def test_worker_count_reads_environment(monkeypatch):
    monkeypatch.setenv("LOCFELL_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2


@pytest.mark.parametrize("fam", [FamilySimulator("diffusion", T=0.5),
                                 FamilySimulator("cpoisson", rate=2.0, T=0.5),
                                 FamilySimulator("chain", n=50, T=0.5)],
                         ids=lambda f: f.kind)
def test_longer_horizon_extends_the_same_path(fam):
    short = fam.simulate(0.0, 99)
    long = fam.with_horizon(2.0).simulate(0.0, 99)
    k = len(short)
    assert np.array_equal(short.times, long.times[:k])
    assert np.array_equal(short.values, long.values[:k])


def test_time_changed_family_reaches_target_horizon():
    fam = TimeChangedFamily(FamilySimulator("diffusion", T=0.25), one_plus_x2(), target=1.0)
    for s in range(20):
        p = fam.simulate(0.5, s)
        assert p.horizon >= 1.0 or p.xi < math.inf


def test_family_config_round_trip():
    blocks = [{"kind": "diffusion", "drift": {"name": "linear", "k": -2.0}, "dt": 1e-3, "T": 1.0},
              {"kind": "cpoisson", "rate": 2.0, "jump": 0.5, "T": 3.0},
              {"kind": "chain", "n": 100, "T": 1.0},
              {"time_changed": {"kind": "ode", "drift": "square"},
               "speed": {"name": "inv_one_plus_x2"}, "T": 2.0}]
    for block in blocks:
        fam = family_from_config(block)
        again = family_from_config(fam.to_config())
        assert again.family_id == fam.family_id and again.T == fam.T
    assert family_from_config({"kind": "diffusion"}).sigma.name == "one"
    with pytest.raises(ValueError):
        family_from_config({"kind": "diffusion", "colour": 1})
    with pytest.raises(ValueError):
        FamilySimulator("levy")


def test_ensemble_dump(tmp_path):
    ens = ensemble(FamilySimulator("cpoisson", T=1.0), 0.0, 5, 3)
    out = ens.dump(tmp_path / "paths")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["N"] == 5 and len(manifest["files"]) == 5
    first = read_path_csv(out / manifest["files"][0])
    assert np.array_equal(first.values, ens.paths[0].values)
