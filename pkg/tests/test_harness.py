import csv
import json
import math

import numpy as np
import pytest

from locfell.coefficients import drift_from_config
from locfell.harness import (law_convergence_table, localisation_experiment,
                             operator_convergence_table, run_config, timechange_to_feller_demo,
                             write_csv)
from locfell.operators import gaussian_bump, scale_operator, trig_bump
from locfell.simulators import FamilySimulator
from locfell.state_space import OpenInterval
from locfell.time_change import const, inv_one_plus_x2

FS = [gaussian_bump(0, 1), trig_bump(1.0, 2.0)]
BM = FamilySimulator("diffusion")


def test_operator_table_identical_sequence_is_zero():
    L = BM.generator(FS)
    rep = operator_convergence_table([L, L], L, [(-2, 2)])
    assert all(r["sup_f"] == 0 and r["sup_g"] == 0 for r in rep.rows)


def test_operator_table_chain_rate():
    chains = [FamilySimulator("chain", n=n).generator(FS[:1]) for n in (1e2, 1e3, 1e4)]
    rep = operator_convergence_table(chains, BM.generator(FS[:1]), [(-2, 2)], ratio=(5, 20))
    assert rep.accepted and rep.monotone
    # Taylor remainder: |L_n f - f''/2| <= sup|f''''| / (24 n)
    bound = np.max(np.abs(FS[0].derivs(np.linspace(-3, 3, 6001), 4))) / 24
    for r, n in zip(rep.rows, (1e2, 1e3, 1e4)):
        assert r["sup_g"] <= bound / n


def test_operator_table_mismatched_pair_is_constant():
    L = BM.generator(FS[:1])
    wrong = scale_operator(L, const(2.0))
    rep = operator_convergence_table([wrong, wrong], L, [(-3, 3)])
    x = np.linspace(-3, 3, 2001)
    expected = np.max(np.abs(FS[0].d2(x))) / 2
    assert [r["sup_g"] for r in rep.rows] == pytest.approx([expected, expected])


def test_law_table_same_family_is_exact():
    rep = law_convergence_table([BM], BM, FS[:1], [0.5, 1.0], 300, 4, U=OpenInterval(-1, 1),
                                distance_sample=3)
    assert rep.accepted and all(r["ks"] == 0 for r in rep.rows)
    assert rep.rows[0]["mean_local_distance"] == 0


def test_law_table_detects_a_mean_shift():
    shifted = FamilySimulator("diffusion", drift=drift_from_config({"name": "const", "c": 1.0}))
    rep = law_convergence_table([shifted], BM, FS[:1], [1.0], 4000, 8)
    chart = [r for r in rep.rows if r["functional"] == "chart(X_1)"][0]
    # the mean-shift KS distance between N(0,1) and N(1,1)
    assert chart["ks"] == pytest.approx(0.3829, abs=0.04)
    assert not rep.accepted


def test_localisation_same_family_agrees_exactly():
    rep = localisation_experiment(BM, BM, OpenInterval(-2, 2), FS[:1], [1.0], 300, 2)
    assert rep.agree and rep.max_pathwise_difference == 0


def test_timechange_demo_removes_explosions():
    ode = FamilySimulator("ode", drift=drift_from_config("square"), dt=1e-3, T=2.0)
    demo = timechange_to_feller_demo(ode, inv_one_plus_x2(), (-1, 1), 1.0, [2.0, 10.0], 20,
                                     init=1.0)
    assert demo.explosion_fraction_base == 1.0 and demo.explosion_fraction == 0.0


def test_timechange_demo_unit_speed_matches_base():
    demo = timechange_to_feller_demo(BM, const(1.0), (-1, 1), 1.0, [5.0, 10.0], 500,
                                     functions=FS[:1], opens=[OpenInterval(-5, 5)],
                                     time_pairs=[(0.2, 1.0)])
    assert demo.tail_verdict == "Feller-consistent" and demo.martingale_ok


def test_write_csv_round_trips_floats(tmp_path):
    rows = [{"a": 0.1, "b": "x"}, {"a": 1 / 3, "c": True}]
    cols = write_csv(rows, tmp_path / "t.csv")
    assert cols == ["a", "b", "c"]
    with open(tmp_path / "t.csv") as fh:
        got = list(csv.DictReader(fh))
    assert float(got[1]["a"]) == 1 / 3 and got[1]["c"] == "true" and got[0]["c"] == ""


def write_config(path, experiments, families=None):
    families = families or {"bm": {"kind": "diffusion", "dt": 1e-3, "T": 1.0},
                            "cp": {"kind": "cpoisson", "T": 2.0}}
    path.write_text(json.dumps({"seed": 3, "families": families, "experiments": experiments},
                               indent=1))
    return path


def test_empty_experiment_list_writes_manifest_only(tmp_path):
    cfg = write_config(tmp_path / "c.json", [])
    assert run_config(cfg, tmp_path / "out", log=lambda m: None) == 0
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["manifest.json"]


def test_config_error_exit_code(tmp_path):
    cfg = write_config(tmp_path / "c.json", [], {"bm": {"kind": "levy"}})
    messages = []
    assert run_config(cfg, tmp_path / "out", log=messages.append) == 2
    assert messages[0].startswith(f"{cfg}:")
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["status"] == "config_error"


def test_run_writes_csv_figure_and_honours_expect(tmp_path):
    f = {"name": "gaussian_bump", "center": 0, "width": 1}
    cfg = write_config(tmp_path / "c.json", [
        {"type": "pmp", "name": "ok", "family": "bm", "functions": [f]},
        {"type": "pmp", "name": "bad", "family": "bm", "functions": [f], "adversarial": True,
         "expect": "reject"},
        {"type": "quasi_continuity", "family": "cp", "t": 1.0, "N": 200},
    ])
    out = tmp_path / "out"
    assert run_config(cfg, out, gnuplot=True, log=lambda m: None) == 0
    names = {p.name for p in out.iterdir()}
    assert {"00_pmp_ok.csv", "00_pmp_ok.png", "00_pmp_ok.gp", "01_pmp_bad.csv",
            "02_quasi_continuity.csv"} <= names
    manifest = json.loads((out / "manifest.json").read_text())
    assert [e["outcome"] for e in manifest["experiments"]] == ["accept", "reject", "accept"]
    assert manifest["status"] == "ok"


def test_unexpected_outcome_exits_one(tmp_path):
    f = {"name": "gaussian_bump"}
    cfg = write_config(tmp_path / "c.json", [
        {"type": "pmp", "family": "bm", "functions": [f], "expect": "reject"}])
    assert run_config(cfg, tmp_path / "out", figures=False, log=lambda m: None) == 1


def test_type_filter(tmp_path):
    f = {"name": "gaussian_bump"}
    cfg = write_config(tmp_path / "c.json", [
        {"type": "pmp", "family": "bm", "functions": [f]},
        {"type": "quasi_continuity", "family": "cp", "t": 1.0, "N": 100}])
    run_config(cfg, tmp_path / "out", types=("quasi_continuity",), figures=False,
               log=lambda m: None)
    assert sorted(p.name for p in (tmp_path / "out").glob("*.csv")) == ["01_quasi_continuity.csv"]
