"""Monte Carlo checks of the martingale local problem and related path properties.

All statistics are pure functions of an ensemble (or of a family and a seed),
so reruns are bit-identical.  A single cell passes when ``|z| <= 4``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .operators import Pair, TestFunction, is_bounded
from .paths import StepPath
from .simulators import InitialLaw, derive_seed, ensemble
from .state_space import OpenInterval

__all__ = [
    "Z_THRESHOLD",
    "MartingaleStatistic",
    "martingale_statistic",
    "unstopped_martingale_statistic",
    "martingale_suite",
    "bonferroni_z",
    "GeneratorEstimate",
    "generator_estimate",
    "semigroup_estimate",
    "FellerTailReport",
    "feller_tail_check",
    "quasi_continuity_check",
    "MarkovReport",
    "markov_conditioning_check",
    "StoppingWarning",
]

Z_THRESHOLD = 4.0


class StoppingWarning(UserWarning):
    """The localising open set is too small for the requested times."""


def bonferroni_z(cells: int, alpha: float = 1e-3) -> float:
    """Two-sided normal critical value at family-wise level ``alpha``."""
    return float(norm.isf(alpha / (2 * max(cells, 1))))


def _z(estimate: float, se: float) -> float:
    if se > 0:
        return estimate / se
    return 0.0 if estimate == 0 else math.copysign(math.inf, estimate)


@dataclass(frozen=True)
class MartingaleStatistic:
    estimate: float
    se: float
    z: float
    N: int
    pair: str
    U: str
    s: float
    t: float
    weights: str = ""

    def passed(self, threshold: float = Z_THRESHOLD) -> bool:
        return abs(self.z) <= threshold

    def row(self) -> dict:
        return {"pair": self.pair, "U": self.U, "s": self.s, "t": self.t, "weights": self.weights,
                "estimate": self.estimate, "se": self.se, "z": self.z, "N": self.N,
                "verdict": "pass" if self.passed() else "fail"}


def _paths(ens) -> list[StepPath]:
    return list(getattr(ens, "paths", ens))


def _weights_label(weights) -> str:
    return ";".join(f"{getattr(phi, 'label', 'phi')}@{si:g}" for si, phi in weights)


class _Stack:
    """Concatenated knots of an ensemble, with per-pair and per-U caches."""

    def __init__(self, paths):
        self.paths = paths
        lens = np.array([len(p) for p in paths])
        self.offsets = np.concatenate(([0], np.cumsum(lens)))
        self.values = np.concatenate([p.values for p in paths]) if paths else np.empty(0)
        dur = np.concatenate([p.durations for p in paths]) if paths else np.empty(0)
        # the tail segment of each path never enters a finite integral sum
        self.durations = np.where(np.isfinite(dur), dur, 0.0)
        self.xi = np.array([p.xi for p in paths])
        self._g = {}
        self._tau = {}

    def taus(self, U):
        key = None if U is None else U.label
        if key not in self._tau:
            self._tau[key] = np.array([math.inf if U is None else p.exit_time(U)
                                       for p in self.paths])
        return self._tau[key]

    def values_at(self, ts):
        return np.array([p.evaluate_many([x])[0] for p, x in zip(self.paths, ts)])

    def integrals(self, g, lo, hi):
        """``∫_{lo_i}^{hi_i} g(x^i_u) du`` for every path ``i``, capped at ``xi_i``."""
        if id(g) not in self._g:
            gv = np.asarray(g(self.values), dtype=float) * np.ones_like(self.values)
            self._g[id(g)] = (g, gv, np.append(gv * self.durations, 0.0))
        _, gv, weighted = self._g[id(g)]
        hi = np.minimum(hi, self.xi)
        starts = self.offsets[:-1].copy()
        ends = starts.copy()
        heads = np.zeros(len(self.paths))
        tails = np.zeros(len(self.paths))
        live = hi > lo
        for i in np.flatnonzero(live):
            t = self.paths[i].times
            ia = int(np.searchsorted(t, lo[i], side="right")) - 1
            ib = int(np.searchsorted(t, hi[i], side="right")) - 1
            starts[i] += ia
            ends[i] += ib
            heads[i] = lo[i] - t[ia]
            tails[i] = hi[i] - t[ib]
        # empty segments sit at their own offset, so the indices stay monotone
        idx = np.empty(2 * starts.size, dtype=np.int64)
        idx[0::2], idx[1::2] = starts, ends
        sums = np.add.reduceat(weighted, idx)[0::2] if idx.size else np.empty(0)
        sums = np.where(ends > starts, sums, 0.0)
        out = sums - gv[starts] * heads + gv[ends] * tails
        return np.where(live, out, 0.0)


def _increments(stack: _Stack, pair: Pair, U, s, t, weights):
    """Per-path weighted increments; ``U=None`` means no localisation."""
    taus = stack.taus(U)
    dead = int(np.count_nonzero(s >= stack.xi))
    a, b = np.minimum(s, taus), np.minimum(t, taus)
    out = (pair.f(stack.values_at(b)) - pair.f(stack.values_at(a))
           - stack.integrals(pair.g, a, b))
    for si, phi in weights:
        out = out * phi(stack.values_at(np.minimum(si, taus)))
    return np.asarray(out, dtype=float), dead


def _statistic(ens, pair, U, s, t, weights, stack=None) -> MartingaleStatistic:
    weights = tuple(weights)
    if not 0 <= s < t:
        raise ValueError("need 0 <= s < t")
    if any(si > s for si, _ in weights):
        raise ValueError("weight times must not exceed s")
    paths = _paths(ens)
    horizon = getattr(ens, "horizon", math.inf)
    if t > horizon:
        raise ValueError(f"t={t} exceeds the ensemble horizon {horizon}")
    if len(paths) < 100:
        raise ValueError("martingale statistics need at least 100 paths")
    values, dead = _increments(stack or _Stack(paths), pair, U, s, t, weights)
    if dead > len(paths) / 2:
        raise ValueError("more than half of the paths are at the cemetery before s")
    n = values.size
    est = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n))
    return MartingaleStatistic(est, se, _z(est, se), n, pair.label,
                               "S" if U is None else U.label, float(s), float(t),
                               _weights_label(weights))


def martingale_statistic(ens, pair: Pair, U: OpenInterval, s: float, t: float,
                         weights=()) -> MartingaleStatistic:
    """Mean and SE of the weighted stopped increment.

    Each path contributes ``[f(x_{t∧τ}) - f(x_{s∧τ}) - ∫_{s∧τ}^{t∧τ} g(x_u) du]
    · Π φ_i(x_{s_i∧τ})`` with ``τ`` the exit time of ``U``.  ``weights`` is a
    sequence of ``(s_i, φ_i)`` with ``s_i <= s``.
    """
    return _statistic(ens, pair, U, s, t, weights)


def unstopped_martingale_statistic(ens, pair: Pair, s: float, t: float,
                                   weights=()) -> MartingaleStatistic:
    """Same statistic without localisation; the integral stops at the explosion time."""
    if not is_bounded(pair.g):
        raise ValueError(f"g of {pair.label} is unbounded; use the stopped statistic")
    return _statistic(ens, pair, None, s, t, weights)


def martingale_suite(ens, L, opens, time_pairs, weights=(), threshold: float = Z_THRESHOLD):
    """Every cell of ``L × opens × time_pairs``; returns the statistics and the verdict."""
    stack = _Stack(_paths(ens))
    stats = [_statistic(ens, pair, U, s, t, weights, stack)
             for pair in L.pairs for U in opens for s, t in time_pairs]
    return stats, all(st.passed(threshold) for st in stats)


# -- generator and semigroup -------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorEstimate:
    t_grid: tuple[float, ...]
    quotients: tuple[float, ...]
    quotient_se: tuple[float, ...]
    extrapolated: float
    se: float
    exit_fraction: float
    flagged: bool

    @property
    def half_width(self) -> float:
        return Z_THRESHOLD * self.se


def _stopped_values(paths, f, U, t):
    out = np.empty(len(paths))
    exits = 0
    for i, p in enumerate(paths):
        tau = p.exit_time(U)
        if tau < t:
            exits += 1
        out[i] = float(f(p.evaluate_many([min(t, tau)])[0]))
    return out, exits


def generator_estimate(fam, a: float, f: TestFunction, U: OpenInterval, t_grid, N: int,
                       master_seed: int = 0, workers: int | None = None) -> GeneratorEstimate:
    """Quotients ``(E_a f(X_{t∧τU}) - f(a))/t`` and their Richardson limit.

    All times share one ensemble.  The extrapolation ``2Q(t/2) - Q(t)`` uses
    the smallest grid time ``t`` (``t/2`` is added when missing) and is
    computed path by path, so its SE accounts for the correlation.
    """
    if not U.contains(a):
        raise ValueError("the start point must lie in U")
    t_grid = sorted(set(float(t) for t in t_grid))
    t0 = t_grid[0]
    if t0 / 2 not in t_grid:
        t_grid = [t0 / 2] + t_grid
    paths = ensemble(fam.with_horizon(max(t_grid)), InitialLaw.dirac(a), N, master_seed,
                     workers).paths
    fa = float(f(a))
    per_t = {}
    exits = 0
    for t in t_grid:
        vals, e = _stopped_values(paths, f, U, t)
        per_t[t] = (vals - fa) / t
        exits = max(exits, e)
    q = tuple(float(per_t[t].mean()) for t in t_grid)
    qse = tuple(float(per_t[t].std(ddof=1) / math.sqrt(N)) for t in t_grid)
    rich = 2 * per_t[t0 / 2] - per_t[t0]
    frac = exits / N
    flagged = frac > 0.1
    if flagged:
        warnings.warn(f"{frac:.1%} of paths leave {U.label} before t", StoppingWarning, stacklevel=2)
    return GeneratorEstimate(tuple(t_grid), q, qse, float(rich.mean()),
                             float(rich.std(ddof=1) / math.sqrt(N)), frac, flagged)


def semigroup_estimate(fam, f: TestFunction, t: float, probe, N: int, master_seed: int = 0,
                       workers: int | None = None):
    """``T_t f(a) = E_a f(X_t)`` at each probe point; returns (estimates, SEs)."""
    probe = np.asarray(probe, dtype=float)
    if t == 0:
        return f(probe), np.zeros(probe.size)
    est, se = np.empty(probe.size), np.empty(probe.size)
    fam = fam.with_horizon(t)
    for k, a in enumerate(probe):
        ens = ensemble(fam, InitialLaw.dirac(float(a)), N, derive_seed(master_seed, k), workers)
        vals = f(np.array([p.evaluate_many([t])[0] for p in ens.paths]))
        est[k] = vals.mean()
        se[k] = vals.std(ddof=1) / math.sqrt(N) if N > 1 else 0.0
    return est, se


# -- Feller tail, quasi-continuity, Markov property ----------------------------------


@dataclass(frozen=True)
class FellerTailReport:
    points: tuple[float, ...]
    probs: tuple[float, ...]
    se: tuple[float, ...]
    hit_probs: tuple[float, ...]
    threshold: float

    @property
    def verdict(self) -> str:
        return "Feller-consistent" if self.probs[-1] < self.threshold else "locally-Feller-only"

    def rows(self):
        return [{"a": a, "P(X_t in K)": p, "se": s, "P(hit K before t)": h}
                for a, p, s, h in zip(self.points, self.probs, self.se, self.hit_probs)]


def feller_tail_check(fam, K: tuple[float, float], t: float, a_sequence, N: int,
                      master_seed: int = 0, threshold: float = 1e-3,
                      workers: int | None = None) -> FellerTailReport:
    """``P_a(X_t ∈ K)`` and ``P_a(τ^{S∖K} < t∧ξ)`` along starts escaping to the cemetery."""
    lo, hi = float(K[0]), float(K[1])
    fam = fam.with_horizon(t)
    probs, ses, hits = [], [], []
    for k, a in enumerate(a_sequence):
        ens = ensemble(fam, InitialLaw.dirac(float(a)), N, derive_seed(master_seed, k), workers)
        inside = np.empty(N)
        hit = np.empty(N)
        for i, p in enumerate(ens.paths):
            v = p.evaluate_many([t])[0]
            inside[i] = lo <= v <= hi
            mask = (p.values >= lo) & (p.values <= hi)
            hit[i] = p.first_knot_where(mask) < min(t, p.xi)
        probs.append(float(inside.mean()))
        ses.append(float(inside.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0)
        hits.append(float(hit.mean()))
    return FellerTailReport(tuple(float(a) for a in a_sequence), tuple(probs), tuple(ses),
                            tuple(hits), threshold)


def quasi_continuity_check(ens, t: float) -> float:
    """Fraction of paths with a recorded jump exactly at ``t``.

    Grid paths of continuous processes carry no recorded jumps.
    """
    paths = _paths(ens)
    horizon = getattr(ens, "horizon", math.inf)
    if t >= horizon:
        raise ValueError("t must be below the ensemble horizon")
    jumps = sum(1 for p in paths if not p.continuous and np.any(p.jump_times() == t))
    return jumps / len(paths)


@dataclass(frozen=True)
class MarkovReport:
    hits: int
    mean_continued: float
    se_continued: float
    mean_fresh: float
    se_fresh: float
    z: float

    def passed(self, threshold: float = Z_THRESHOLD) -> bool:
        return abs(self.z) <= threshold


def markov_conditioning_check(fam, tau, bin: tuple[float, float], f: TestFunction, u: float,
                              N: int, init=0.0, master_seed: int = 0, min_hits: int = 100,
                              workers: int | None = None) -> MarkovReport:
    """Compare ``f(X_{τ+u})`` on paths with ``X_τ`` in ``bin`` against fresh starts.

    Each hit's position ``X_τ`` seeds one fresh path from a separate seed
    stream; a zero difference with zero SE counts as ``z = 0``.
    """
    lo, hi = float(bin[0]), float(bin[1])
    ens = ensemble(fam, init, N, master_seed, workers)
    starts, cont = [], []
    for p in ens.paths:
        s = float(tau(p))
        if not math.isfinite(s) or s + u > p.horizon:
            continue
        x = p.evaluate_many([s])[0]
        if not lo <= x <= hi:
            continue
        starts.append(x)
        cont.append(float(f(p.evaluate_many([s + u])[0])))
    n = len(starts)
    if n < min_hits:
        raise ValueError(f"only {n} paths hit the bin; need {min_hits}")
    fresh_fam = fam.with_horizon(u)
    fresh_seed = derive_seed(master_seed, 0xF4E5)
    fresh = np.array([float(f(fresh_fam.simulate(x, derive_seed(fresh_seed, i))
                              .evaluate_many([u])[0]))
                      for i, x in enumerate(starts)])
    cont = np.array(cont)
    m1, m2 = float(cont.mean()), float(fresh.mean())
    s1 = float(cont.std(ddof=1) / math.sqrt(n))
    s2 = float(fresh.std(ddof=1) / math.sqrt(n))
    return MarkovReport(n, m1, s1, m2, s2, _z(m1 - m2, math.hypot(s1, s2)))
