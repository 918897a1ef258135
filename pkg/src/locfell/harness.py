"""End-to-end experiments and the config runner behind the CLI.

Each experiment produces CSV rows, a pass/fail outcome and a figure
description; :func:`run_config` writes them under an output directory together
with a manifest.  Weak convergence is probed through a finite dictionary of
bounded functionals (``f(X_t)`` for dictionary ``f`` and grid times, and
stopped exit times), printed in every report.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
import sys
import traceback
import warnings
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp

from . import config as cfgmod
from .martingale import (Z_THRESHOLD, feller_tail_check, generator_estimate,
                         markov_conditioning_check, martingale_suite, quasi_continuity_check,
                         semigroup_estimate)
from .operators import (Operator, custom_operator, default_probe_grid, identity_pair, pmp_check,
                        refine_argmax, scale_operator)
from .paths import DeterministicTime, ExitTime
from .simulators import (FamilySimulator, InitialLaw, TimeChangedFamily, derive_seed, ensemble,
                         iter_paths)
from .skorokhod import DEFAULT_SPACE, aldous_tightness, local_distance
from .state_space import OpenInterval, StateSpace
from .time_change import speed

__all__ = [
    "ConvergenceReport",
    "operator_convergence_table",
    "law_convergence_table",
    "LocalisationReport",
    "localisation_experiment",
    "TimeChangeDemo",
    "timechange_to_feller_demo",
    "ExperimentResult",
    "run_experiment",
    "run_config",
    "write_csv",
]

ALPHA = 1e-3


# -- operator and law convergence --------------------------------------------------------


@dataclass
class ConvergenceReport:
    rows: list[dict]
    dictionary: list[str]
    monotone: bool
    accepted: bool
    notes: list[str] = field(default_factory=list)


def _grid_for(L: Operator, compacts, points: int = 4001) -> np.ndarray:
    lo = min([p.f.support[0] for p in L.pairs] + [c[0] for c in compacts])
    hi = max([p.f.support[1] for p in L.pairs] + [c[1] for c in compacts])
    return np.linspace(lo, hi, points)


def operator_convergence_table(L_seq, L_limit: Operator, compacts, labels=None,
                               ratio=None) -> ConvergenceReport:
    """``sup|f_n - f|`` on a full grid and ``sup_K |g_n - g|`` per probe compact.

    Pairs are matched through their test function.  ``ratio = (lo, hi)``
    additionally requires each consecutive discrepancy ratio to lie in range.
    """
    labels = list(labels) if labels is not None else list(range(1, len(L_seq) + 1))
    compacts = [tuple(map(float, c)) for c in compacts]
    grid = _grid_for(L_limit, compacts)
    rows, monotone, in_range = [], True, True
    for pair in L_limit.pairs:
        for lo, hi in compacts:
            probe = np.linspace(lo, hi, 2001)
            g_lim = pair.g(probe)
            prev = None
            for lab, Ln in zip(labels, L_seq):
                pn = Ln.pair_for(pair.f)
                sup_f = float(np.max(np.abs(pn.f(grid) - pair.f(grid))))
                sup_g = float(np.max(np.abs(pn.g(probe) - g_lim)))
                r = prev / sup_g if prev is not None and sup_g > 0 else math.nan
                if prev is not None:
                    monotone &= sup_g <= prev
                    if ratio is not None:
                        in_range &= ratio[0] <= r <= ratio[1]
                rows.append({"n": lab, "f": pair.f.label, "compact": f"[{lo:g},{hi:g}]",
                             "sup_f": sup_f, "sup_g": sup_g, "ratio": r})
                prev = sup_g
    return ConvergenceReport(rows, [p.f.label for p in L_limit.pairs], monotone,
                             monotone and in_range)


# chart value standing for the cemetery, outside the range (-1, 1) of the chart
_CHART_DELTA = 2.0


def _functional_names(functionals, times, U, horizon):
    names = [f"chart(X_{t:g})" for t in times]
    names += [f"{f.label}(X_{t:g})" for f in functionals for t in times]
    if U is not None:
        names.append(f"min(exit{U.label},{horizon:g})")
    return names


def _functional_values(path, functionals, times, U, horizon):
    """Dictionary functionals of one path.

    ``chart(X_t) = X_t / (1 + |X_t|)`` is bounded and increasing, so its KS
    distance equals that of the raw marginal ``X_t``.
    """
    vals = path.evaluate_many(times)
    chart = np.where(np.isnan(vals), _CHART_DELTA, vals / (1 + np.abs(vals)))
    out = [float(c) for c in chart]
    out += [float(v) for f in functionals for v in f(vals)]
    if U is not None:
        out.append(min(path.exit_time(U), horizon))
    return out


def _sample_functionals(fam, init, N, seed, functionals, times, U, horizon, keep=0):
    """Stream paths, returning the ``N × m`` functional matrix and the first ``keep`` paths."""
    rows, kept = [], []
    for i, p in enumerate(iter_paths(fam, init, N, seed)):
        rows.append(_functional_values(p, functionals, times, U, horizon))
        if i < keep:
            kept.append(p)
    return np.array(rows), kept


def _ks_rows(label, names, A, B, alpha):
    thr = alpha / len(names)
    rows, ok = [], True
    for j, name in enumerate(names):
        res = ks_2samp(A[:, j], B[:, j])
        accept = bool(res.pvalue >= thr)
        ok &= accept
        rows.append({"n": label, "functional": name, "ks": float(res.statistic),
                     "p_value": float(res.pvalue), "threshold": thr,
                     "verdict": "accept" if accept else "reject"})
    return rows, ok


def law_convergence_table(fam_seq, fam_limit, functionals, times, N: int, master_seed: int = 0,
                          init=0.0, U: OpenInterval | None = None, labels=None,
                          distance_sample: int = 0, space: StateSpace = DEFAULT_SPACE,
                          alpha: float = ALPHA) -> ConvergenceReport:
    """Two-sample KS tests of dictionary functionals against the limit family.

    Members and limit share the seed list.  The per-member verdict is
    Bonferroni over the functionals; the report accepts when the last member
    does.  ``distance_sample`` matched pairs also give a mean local distance.
    """
    labels = list(labels) if labels is not None else list(range(1, len(fam_seq) + 1))
    init = InitialLaw.from_config(init)
    horizon = float(fam_limit.T)
    names = _functional_names(functionals, times, U, horizon)
    ref, ref_paths = _sample_functionals(fam_limit, init, N, master_seed, functionals, times,
                                         U, horizon, distance_sample)
    rows, verdicts, worst = [], [], []
    for lab, fam in zip(labels, fam_seq):
        A, paths = _sample_functionals(fam, init, N, master_seed, functionals, times, U,
                                       horizon, distance_sample)
        part, ok = _ks_rows(lab, names, A, ref, alpha)
        if distance_sample:
            d = float(np.mean([local_distance(p, q, space, max_horizon=horizon)
                               for p, q in zip(paths, ref_paths)]))
            for r in part:
                r["mean_local_distance"] = d
        rows.extend(part)
        verdicts.append(ok)
        worst.append(max(r["ks"] for r in part))
    monotone = bool(worst[-1] <= worst[0])
    return ConvergenceReport(rows, names, monotone, verdicts[-1])


# -- localisation --------------------------------------------------------------------------


@dataclass
class LocalisationReport:
    rows: list[dict]
    agree: bool
    max_pathwise_difference: float


def localisation_experiment(famA, famB, U: OpenInterval, functionals, times, N: int,
                            master_seed: int = 0, init=0.0,
                            alpha: float = ALPHA) -> LocalisationReport:
    """Compare the laws of the paths stopped at the exit of ``U`` under matched seeds."""
    init = InitialLaw.from_config(init)
    horizon = float(min(famA.T, famB.T))
    names = _functional_names(functionals, times, U, horizon)
    grid = np.linspace(0.0, horizon, 257)
    A, B, diff = [], [], 0.0
    for pa, pb in zip(iter_paths(famA, init, N, master_seed), iter_paths(famB, init, N, master_seed)):
        sa, sb = pa.stop(pa.exit_time(U)), pb.stop(pb.exit_time(U))
        A.append(_functional_values(sa, functionals, times, U, horizon))
        B.append(_functional_values(sb, functionals, times, U, horizon))
        va, vb = sa.evaluate_many(grid), sb.evaluate_many(grid)
        d = np.where(np.isnan(va) & np.isnan(vb), 0.0, np.abs(va - vb))
        diff = max(diff, float(np.max(np.nan_to_num(d, nan=np.inf))))
    rows, ok = _ks_rows(U.label, names, np.array(A), np.array(B), alpha)
    return LocalisationReport(rows, ok, diff)


# -- time change demo --------------------------------------------------------------------


@dataclass
class TimeChangeDemo:
    rows: list[dict]
    tail_verdict: str
    martingale_ok: bool | None
    explosion_fraction_base: float
    explosion_fraction: float

    @property
    def passed(self) -> bool:
        return self.tail_verdict == "Feller-consistent" and self.martingale_ok is not False


def timechange_to_feller_demo(fam, g, K, t: float, a_sequence, N: int, master_seed: int = 0,
                              functions=None, opens=None, time_pairs=None,
                              init=0.0) -> TimeChangeDemo:
    """Tail check and (optionally) the scaled martingale suite for ``g·P``."""
    t_max = max([t] + [b for _, b in (time_pairs or [])])
    tc = TimeChangedFamily(fam, g, target=t_max)
    base = ensemble(fam, init, N, master_seed)
    changed = ensemble(tc, init, N, master_seed)
    frac_base = float(np.mean([p.xi <= fam.T for p in base.paths]))
    frac = float(np.mean([p.xi <= t_max for p in changed.paths]))
    rows = [{"check": "explosion_fraction", "item": fam.family_id, "value": frac_base},
            {"check": "explosion_fraction", "item": tc.family_id, "value": frac},
            {"check": "min_explosion_time", "item": tc.family_id,
             "value": float(min(p.xi for p in changed.paths))}]
    tail = feller_tail_check(tc, K, t, a_sequence, N, derive_seed(master_seed, 1))
    for r in tail.rows():
        rows.append({"check": "tail P(X_t in K)", "item": f"a={r['a']:g}",
                     "value": r["P(X_t in K)"], "se": r["se"]})
        rows.append({"check": "tail P(hit K before t)", "item": f"a={r['a']:g}",
                     "value": r["P(hit K before t)"]})
    rows.append({"check": "tail verdict", "item": tail.verdict, "value": tail.probs[-1]})
    mg_ok = None
    L = tc.generator(functions) if functions else None
    if L is not None and opens and time_pairs:
        stats, mg_ok = martingale_suite(changed, L, opens, time_pairs)
        for st in stats:
            rows.append({"check": "martingale", "item": f"{st.pair} {st.U} [{st.s:g},{st.t:g}]",
                         "value": st.estimate, "se": st.se, "z": st.z,
                         "verdict": "pass" if st.passed() else "fail"})
    return TimeChangeDemo(rows, tail.verdict, mg_ok, frac_base, frac)


# -- experiment runners -----------------------------------------------------------------------


@dataclass
class ExperimentResult:
    rows: list[dict]
    accepted: bool
    figure: dict
    notes: list[str] = field(default_factory=list)


def _fam(cfg, name):
    return cfg.families[name]


def _opens(spec):
    return cfgmod.intervals(spec)


def _run_pmp(exp, cfg, seed):
    fs = cfgmod.functions(exp["functions"])
    fam = _fam(cfg, exp["family"])
    if exp.get("adversarial"):
        L = custom_operator([identity_pair(f) for f in fs], "adversarial")
    else:
        L = fam.generator(fs)
        if L is None:
            raise ValueError(f"{fam.family_id} declares no generator")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        violations = pmp_check(L, default_probe_grid(L, exp.get("grid_points", 4001)))
    bad = {v.pair: v for v in violations}
    rows = []
    grid = default_probe_grid(L, exp.get("grid_points", 4001))
    for p in L.pairs:
        k = int(np.argmax(p.f(grid)))
        a0 = float(grid[k])
        if 0 < k < grid.size - 1:
            a0 = refine_argmax(p.f, float(grid[k - 1]), float(grid[k + 1]), a0)
        rows.append({"pair": p.label, "argmax": a0, "f_value": float(p.f(np.array([a0]))[0]),
                     "g_value": float(p.g(np.array([a0]))[0]),
                     "verdict": "violation" if p.label in bad else "pass"})
    fig = {"kind": "bar", "title": f"maximum principle: {L.name}",
           "labels": [r["pair"] for r in rows], "values": [r["g_value"] for r in rows],
           "ylabel": "g at argmax of f", "hlines": [0.0]}
    return ExperimentResult(rows, not violations, fig, [str(w.message) for w in caught])


def _ensemble_family(exp, cfg, t_max):
    fam = _fam(cfg, exp["family"])
    if "time_change" in exp:
        g = cfgmod.speed(exp["time_change"])
        return TimeChangedFamily(fam, g, target=t_max), g
    if fam.T < t_max:
        fam = fam.with_horizon(t_max)
    return fam, None


def _run_martingale(exp, cfg, seed):
    fs = cfgmod.functions(exp["functions"])
    times = [tuple(map(float, st)) for st in exp["times"]]
    fam, g = _ensemble_family(exp, cfg, max(t for _, t in times))
    L = fam.generator(fs)
    if L is None:
        raise ValueError(f"{fam.family_id} declares no generator")
    if "scale" in exp:
        c = float(exp["scale"])
        L = scale_operator(L, speed("const", c=c))
    weights = [(float(w["s"]), cfgmod.functions([w["phi"]])[0]) for w in exp.get("weights", [])]
    ens = ensemble(fam, exp.get("init", 0.0), exp["N"], seed)
    stats, ok = martingale_suite(ens, L, _opens(exp["opens"]), times, weights)
    rows = [st.row() for st in stats]
    fig = {"kind": "bar", "title": f"martingale statistics: {L.name}",
           "labels": [f"{r['pair']}\n{r['U']} [{r['s']:g},{r['t']:g}]" for r in rows],
           "values": [r["z"] for r in rows], "ylabel": "z",
           "hlines": [-Z_THRESHOLD, Z_THRESHOLD]}
    return ExperimentResult(rows, ok, fig)


def _run_generator(exp, cfg, seed):
    fam = _fam(cfg, exp["family"])
    f = cfgmod.functions([exp["function"]])[0]
    expected = exp.get("expected")
    rows, ests, series = [], [], []
    ok = True
    for U in _opens(exp["opens"]):
        est = generator_estimate(fam, float(exp["a"]), f, U, exp["t"], exp["N"], seed)
        for t, q, s in zip(est.t_grid, est.quotients, est.quotient_se):
            rows.append({"U": U.label, "t": t, "estimate": q, "se": s, "kind": "quotient"})
        row = {"U": U.label, "t": 0.0, "estimate": est.extrapolated, "se": est.se,
               "kind": "richardson", "half_width": est.half_width,
               "exit_fraction": est.exit_fraction, "flagged": est.flagged}
        if expected is not None:
            row["expected"] = expected
            ok &= abs(est.extrapolated - expected) <= est.half_width
        if "max_half_width" in exp:
            ok &= est.half_width <= exp["max_half_width"]
        ok &= not est.flagged
        rows.append(row)
        ests.append(est)
        series.append({"label": U.label, "x": list(est.t_grid), "y": list(est.quotients),
                       "yerr": [Z_THRESHOLD * s for s in est.quotient_se]})
    for i in range(len(ests)):
        for j in range(i + 1, len(ests)):
            d = abs(ests[i].extrapolated - ests[j].extrapolated)
            ok &= d <= Z_THRESHOLD * math.hypot(ests[i].se, ests[j].se)
    fig = {"kind": "line", "title": f"generator quotients for {f.label} at a={exp['a']:g}",
           "series": series, "xlabel": "t", "ylabel": "(E f(X_t) - f(a))/t",
           "hlines": [] if expected is None else [expected]}
    return ExperimentResult(rows, bool(ok), fig)


def _run_semigroup(exp, cfg, seed):
    fam = _fam(cfg, exp["family"])
    f = cfgmod.functions([exp["function"]])[0]
    est, se = semigroup_estimate(fam, f, float(exp["t"]), exp["probe"], exp["N"], seed)
    expected = exp.get("expected")
    rows, ok = [], True
    for k, a in enumerate(exp["probe"]):
        row = {"a": a, "estimate": float(est[k]), "se": float(se[k])}
        if expected is not None:
            row["expected"] = expected[k]
            good = abs(est[k] - expected[k]) <= Z_THRESHOLD * se[k] or est[k] == expected[k]
            row["verdict"] = "pass" if good else "fail"
            ok &= bool(good)
        rows.append(row)
    fig = {"kind": "line", "title": f"T_t f at t={exp['t']:g}",
           "series": [{"label": "estimate", "x": list(exp["probe"]), "y": list(map(float, est)),
                       "yerr": list(map(float, Z_THRESHOLD * se))}],
           "xlabel": "a", "ylabel": "E_a f(X_t)"}
    return ExperimentResult(rows, ok, fig)


def _run_feller_tail(exp, cfg, seed):
    fam = _fam(cfg, exp["family"])
    rep = feller_tail_check(fam, exp["K"], float(exp["t"]), exp["a_sequence"], exp["N"], seed,
                            exp.get("threshold", 1e-3))
    rows = rep.rows()
    for r in rows:
        r["verdict"] = rep.verdict
    fig = {"kind": "line", "title": f"tail P_a(X_t in K), {rep.verdict}",
           "series": [{"label": "P(X_t in K)", "x": list(rep.points), "y": list(rep.probs)},
                      {"label": "P(hit K before t)", "x": list(rep.points),
                       "y": list(rep.hit_probs)}],
           "xlabel": "a", "ylabel": "probability", "hlines": [rep.threshold]}
    return ExperimentResult(rows, rep.verdict == "Feller-consistent", fig)


def _run_quasi_continuity(exp, cfg, seed):
    fam = _fam(cfg, exp["family"])
    t = float(exp["t"])
    if fam.T <= t:
        fam = fam.with_horizon(2 * t)
    ens = ensemble(fam, exp.get("init", 0.0), exp["N"], seed)
    frac = quasi_continuity_check(ens, t)
    rows = [{"family": fam.family_id, "t": t, "jump_fraction": frac,
             "verdict": "pass" if frac == 0 else "fail"}]
    fig = {"kind": "bar", "title": f"recorded jumps at t={t:g}", "labels": [fam.family_id],
           "values": [frac], "ylabel": "fraction of paths"}
    return ExperimentResult(rows, frac == 0, fig)


def _run_markov(exp, cfg, seed):
    fam = _fam(cfg, exp["family"])
    stop = exp["stopping"]
    if "exit" in stop:
        tau = ExitTime(OpenInterval(*map(float, stop["exit"])))
    elif "time" in stop:
        tau = DeterministicTime(float(stop["time"]))
    else:
        raise ValueError("stopping needs 'exit' or 'time'")
    f = cfgmod.functions([exp["function"]])[0]
    rep = markov_conditioning_check(fam, tau, exp["bin"], f, float(exp["u"]), exp["N"],
                                    exp.get("init", 0.0), seed, exp.get("min_hits", 100))
    rows = [{"hits": rep.hits, "mean_continued": rep.mean_continued,
             "se_continued": rep.se_continued, "mean_fresh": rep.mean_fresh,
             "se_fresh": rep.se_fresh, "z": rep.z,
             "verdict": "pass" if rep.passed() else "fail"}]
    fig = {"kind": "bar", "title": f"Markov conditioning, z={rep.z:.2f}",
           "labels": ["continued", "fresh"], "values": [rep.mean_continued, rep.mean_fresh],
           "errors": [Z_THRESHOLD * rep.se_continued, Z_THRESHOLD * rep.se_fresh],
           "ylabel": "mean f(X_{tau+u})"}
    return ExperimentResult(rows, rep.passed(), fig)


def _run_operator_convergence(exp, cfg, seed):
    fs = cfgmod.functions(exp["functions"])
    fams = [_fam(cfg, n) for n in exp["families"]]
    L_seq = [f.generator(fs) for f in fams]
    L_lim = _fam(cfg, exp["limit"]).generator(fs)
    rep = operator_convergence_table(L_seq, L_lim, exp["compacts"], exp["families"],
                                     exp.get("ratio"))
    series = {}
    for r in rep.rows:
        key = f"{r['f']} on {r['compact']}"
        s = series.setdefault(key, {"label": key, "x": [], "y": []})
        s["x"].append(getattr(fams[exp["families"].index(r["n"])], "n", 0.0))
        s["y"].append(r["sup_g"])
    fig = {"kind": "line", "title": "operator discrepancy sup|g_n - g|",
           "series": list(series.values()), "xlabel": "n", "ylabel": "sup |g_n - g|",
           "logx": True, "logy": True}
    return ExperimentResult(rep.rows, rep.accepted, fig, [f"dictionary: {rep.dictionary}"])


def _run_law_convergence(exp, cfg, seed):
    fs = cfgmod.functions(exp["functions"])
    U = OpenInterval(*map(float, exp["exit"])) if "exit" in exp else None
    rep = law_convergence_table([_fam(cfg, n) for n in exp["families"]], _fam(cfg, exp["limit"]),
                                fs, exp["times"], exp["N"], seed, exp.get("init", 0.0), U,
                                exp["families"], exp.get("distance_sample", 0), cfg.space)
    series = {}
    for r in rep.rows:
        s = series.setdefault(r["functional"], {"label": r["functional"], "x": [], "y": []})
        s["x"].append(len(s["x"]))
        s["y"].append(r["ks"])
    fig = {"kind": "line", "title": "two-sample KS distance to the limit family",
           "series": list(series.values()), "xlabel": "member index", "ylabel": "KS",
           "xticks": exp["families"]}
    return ExperimentResult(rep.rows, rep.accepted, fig, [f"dictionary: {rep.dictionary}"])


def _run_localisation(exp, cfg, seed):
    fs = cfgmod.functions(exp["functions"])
    U = OpenInterval(*map(float, exp["U"]))
    rep = localisation_experiment(_fam(cfg, exp["family_a"]), _fam(cfg, exp["family_b"]), U, fs,
                                  exp["times"], exp["N"], seed, exp.get("init", 0.0))
    for r in rep.rows:
        r["max_pathwise_difference"] = rep.max_pathwise_difference
    fig = {"kind": "bar", "title": f"stopped laws on {U.label}",
           "labels": [r["functional"] for r in rep.rows], "values": [r["ks"] for r in rep.rows],
           "ylabel": "KS"}
    return ExperimentResult(rep.rows, rep.agree, fig)


def _run_timechange_demo(exp, cfg, seed):
    fam = _fam(cfg, exp["family"])
    g = cfgmod.speed(exp["speed"])
    fs = cfgmod.functions(exp["functions"]) if "functions" in exp else None
    times = [tuple(map(float, st)) for st in exp.get("times", [])] or None
    opens = _opens(exp["opens"]) if "opens" in exp else None
    demo = timechange_to_feller_demo(fam, g, exp["K"], float(exp["t"]), exp["a_sequence"],
                                     exp["N"], seed, fs, opens, times, exp.get("init", 0.0))
    fig = {"kind": "bar", "title": f"time change by {g.name}: {demo.tail_verdict}",
           "labels": [f"{r['check']}\n{r['item']}" for r in demo.rows[:3]],
           "values": [r["value"] for r in demo.rows[:3]], "ylabel": "value"}
    return ExperimentResult(demo.rows, demo.passed, fig)


def _run_tightness(exp, cfg, seed):
    fams = [_fam(cfg, n) for n in exp["families"]]
    ens_seq = [ensemble(f, exp.get("init", 0.0), exp["N"], seed) for f in fams]
    U = OpenInterval(*map(float, exp["U"]))
    rep = aldous_tightness(ens_seq, float(exp["eps"]), float(exp["t"]), U, exp["deltas"],
                           cfg.space, labels=exp["families"])
    table = rep.to_rows()
    header = table[0]
    rows = [dict(zip(header, r)) for r in table[1:]]
    smallest = float(rep.limsup[int(np.argmin(rep.deltas))])
    ok = rep.decreasing(slack=0.02) and smallest <= exp.get("tol", 0.1)
    fig = {"kind": "line", "title": f"Aldous statistic, eps={exp['eps']:g}",
           "series": [{"label": "limsup", "x": list(map(float, rep.deltas)),
                       "y": list(map(float, rep.limsup))}],
           "xlabel": "delta", "ylabel": "max P(d >= eps)", "logx": True}
    return ExperimentResult(rows, ok, fig, rep.warnings + rep.notes)


RUNNERS = {
    "pmp": _run_pmp,
    "martingale": _run_martingale,
    "generator": _run_generator,
    "semigroup": _run_semigroup,
    "feller_tail": _run_feller_tail,
    "quasi_continuity": _run_quasi_continuity,
    "markov": _run_markov,
    "operator_convergence": _run_operator_convergence,
    "law_convergence": _run_law_convergence,
    "localisation": _run_localisation,
    "timechange_demo": _run_timechange_demo,
    "tightness": _run_tightness,
}


def run_experiment(exp: dict, cfg, seed: int) -> ExperimentResult:
    return RUNNERS[exp["type"]](exp, cfg, seed)


# -- output ------------------------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(rows, target) -> list[str]:
    """Rows of dicts to CSV; columns in order of first appearance."""
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])
    return cols


def _gnuplot_stub(csv_name: str, cols: list[str], target: Path) -> None:
    numeric = [i + 1 for i, c in enumerate(cols)
               if c in ("z", "estimate", "ks", "sup_g", "value", "limsup", "jump_fraction",
                        "P(X_t in K)", "g_value")]
    col = numeric[0] if numeric else 2
    target.write_text(
        "set datafile separator ','\n"
        f"set key autotitle columnhead\n"
        f"set terminal pngcairo size 900,500\n"
        f"set output '{target.stem}.gnuplot.png'\n"
        f"plot '{csv_name}' using 0:{col} with linespoints\n")


def _versions() -> dict:
    out = {}
    for pkg in ("locfell", "numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def _stem(k: int, exp: dict) -> str:
    name = exp.get("name", "")
    stem = f"{k:02d}_{exp['type']}" + (f"_{name}" if name else "")
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", stem)


def _write_manifest(out: Path, manifest: dict) -> None:
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def run_config(config_path, out, types=None, gnuplot: bool = False, figures: bool = True,
               log=None) -> int:
    """Run the experiments of a config file; returns the exit code (0, 1 or 2).

    Exit 2 on a config error (reported as ``file:line: message``), 1 when any
    experiment fails or its outcome differs from its ``expect`` field, 0
    otherwise.  Every CSV and the manifest are written as soon as available.
    """
    log = log or (lambda msg: print(msg, file=sys.stderr))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    config_path = Path(config_path)
    manifest = {"config": config_path.name, "versions": _versions(), "experiments": []}
    try:
        raw = cfgmod.load_config(config_path)
        cfg = cfgmod.build_config(raw)
    except cfgmod.ConfigError as exc:
        log(str(exc))
        manifest.update(status="config_error", error=str(exc))
        _write_manifest(out, manifest)
        return 2
    manifest["config_sha256"] = hashlib.sha256(config_path.read_bytes()).hexdigest()
    manifest["seed"] = cfg.seed
    experiments = list(enumerate(cfg.experiments))
    if types is not None:
        experiments = [(k, e) for k, e in experiments if e["type"] in types]
    failed = False
    for k, exp in experiments:
        stem = _stem(k, exp)
        seed = int(exp.get("seed", derive_seed(cfg.seed, k) & 0xFFFFFFFF))
        entry = {"index": k, "type": exp["type"], "name": exp.get("name", ""), "seed": seed,
                 "expect": exp.get("expect", "accept")}
        try:
            res = run_experiment(exp, cfg, seed)
        except Exception as exc:  # recorded in the manifest, run continues
            entry.update(outcome="error", passed=False, error=f"{type(exc).__name__}: {exc}")
            log(f"FAIL {stem}: {entry['error']}")
            log(traceback.format_exc(limit=3))
            failed = True
            manifest["experiments"].append(entry)
            _write_manifest(out, manifest)
            continue
        outcome = "accept" if res.accepted else "reject"
        passed = outcome == entry["expect"]
        cols = write_csv(res.rows, out / f"{stem}.csv")
        entry.update(outcome=outcome, passed=passed, csv=f"{stem}.csv", notes=res.notes)
        if figures:
            from .plotting import render
            render(res.figure, out / f"{stem}.png")
            entry["figure"] = f"{stem}.png"
        if gnuplot:
            _gnuplot_stub(f"{stem}.csv", cols, out / f"{stem}.gp")
        log(f"{'PASS' if passed else 'FAIL'} {stem}: outcome={outcome} expect={entry['expect']}")
        failed |= not passed
        manifest["experiments"].append(entry)
        _write_manifest(out, manifest)
    manifest["status"] = "failed" if failed else "ok"
    _write_manifest(out, manifest)
    return 1 if failed else 0
