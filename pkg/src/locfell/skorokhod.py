"""Skorokhod-type distances on step paths and Aldous tightness diagnostics.

``global_distance`` is the exact infimum, over increasing homeomorphisms
``lam`` of ``[0, T]``, of ``max(sup_{s<T} d(x_s, y_{lam(s)}), sup_s |lam(s) - s|)``.
For step paths the supremum of the first term only depends on the order in
which the jumps of ``x`` and the (pulled back) jumps of ``y`` occur, and the
smallest time distortion realising a given order puts every jump of ``x`` at
the point of its admissible interval closest to its own time.  A bottleneck
dynamic programme over merge orders therefore gives the exact value.

``local_distance`` is a surrogate pseudo-distance for the local topology:
a ``2^-n``-weighted sum of global distances between the paths stopped when
they leave the exhaustion sets ``U_n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .paths import StepPath
from .state_space import OpenInterval, StateSpace, to_coord

__all__ = [
    "Reparametrization",
    "global_distance",
    "global_distance_bruteforce",
    "optimal_reparametrization",
    "local_distance",
    "convergence_probe",
    "ConvergenceProbe",
    "TightnessReport",
    "aldous_tightness",
    "TightnessWarning",
]

DEFAULT_SPACE = StateSpace()


class TightnessWarning(UserWarning):
    pass


# -- events --------------------------------------------------------------------


def _events(path: StepPath, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Jump times in ``(0, T)`` and the value held after each (``nan`` = cemetery).

    Returns ``(times, values)`` with ``values[0]`` the starting value, so
    ``len(values) == len(times) + 1``.
    """
    if len(path) == 0:
        return np.empty(0), np.array([np.nan])
    t, v = path.times, path.values
    keep = np.ones(t.size, dtype=bool)
    keep[1:] = v[1:] != v[:-1]
    keep &= t < T
    times, values = t[keep][1:], v[keep]
    if path.xi < T:
        times = np.append(times, path.xi)
        values = np.append(values, np.nan)
    return times, values


@numba.njit(cache=True)
def _d(ca, ra, cb, rb, mode):
    na = ca != ca
    nb = cb != cb
    if na and nb:
        return 0.0
    if na:
        return rb
    if nb:
        return ra
    diff = abs(ca - cb)
    if mode == 1 and diff > 1.0:
        diff = 1.0
    s = ra + rb
    return diff if diff < s else s


@numba.njit(cache=True)
def _bottleneck(a, xc, xr, b, yc, yr, T, mode, ub, choice):
    """Banded bottleneck DP over merge orders of the jumps of x and y.

    State (i, j): i jumps of x and j jumps of y already placed.  Moves are an
    x-jump alone, a y-jump alone, or a matched pair.  ``choice`` receives the
    move used to reach each banded cell (1 = x, 2 = y, 3 = match).
    """
    m = a.size
    n = b.size
    lo = np.empty(m + 1, np.int64)
    hi = np.empty(m + 1, np.int64)
    for i in range(m + 1):
        lo[i] = 0 if i == 0 else np.searchsorted(b, a[i - 1] - ub)
        hi[i] = n if i == m else np.searchsorted(b, a[i] + ub, side="right")
    offs = np.empty(m + 2, np.int64)
    offs[0] = 0
    for i in range(m + 1):
        offs[i + 1] = offs[i] + hi[i] - lo[i] + 1
    if choice.size < offs[m + 1]:
        choice = np.empty(0, np.int8)
    keep_choice = choice.size > 0
    width = 0
    for i in range(m + 1):
        w = hi[i] - lo[i] + 1
        if w > width:
            width = w
    prev = np.full(width, np.inf)
    cur = np.full(width, np.inf)
    for i in range(m + 1):
        for j in range(lo[i], hi[i] + 1):
            best = np.inf
            mv = 0
            if i == 0 and j == 0:
                best = 0.0
            if i > 0 and lo[i - 1] <= j <= hi[i - 1]:
                c = prev[j - lo[i - 1]]
                tl = 0.0 if j == 0 else b[j - 1]
                th = T if j == n else b[j]
                ai = a[i - 1]
                tc = 0.0
                if ai < tl:
                    tc = tl - ai
                elif ai > th:
                    tc = ai - th
                if tc > c:
                    c = tc
                if c < best:
                    best = c
                    mv = 1
            if i > 0 and j > 0 and lo[i - 1] <= j - 1 <= hi[i - 1]:
                c = prev[j - 1 - lo[i - 1]]
                tc = abs(a[i - 1] - b[j - 1])
                if tc > c:
                    c = tc
                if c < best:
                    best = c
                    mv = 3
            if j > lo[i]:
                c = cur[j - 1 - lo[i]]
                if c < best:
                    best = c
                    mv = 2
            s = _d(xc[i], xr[i], yc[j], yr[j], mode)
            cur[j - lo[i]] = best if best > s else s
            if keep_choice:
                choice[offs[i] + j - lo[i]] = mv
        for k in range(width):
            prev[k] = cur[k]
            cur[k] = np.inf
    return prev[n - lo[m]], lo, hi, offs


def _identity_cost(ta, va, tb, vb, space: StateSpace) -> float:
    """sup_{s<T} d(x_s, y_s): the cost of the identity reparametrization."""
    grid = np.union1d(ta, tb)
    grid = np.concatenate(([0.0], grid))
    xa = va[np.searchsorted(ta, grid, side="right")]
    xb = vb[np.searchsorted(tb, grid, side="right")]
    return float(np.max(space.metric_array(xa, xb)))


def _one_sided(ta, va, tb, vb, T, space, want_choice=False):
    ub = _identity_cost(ta, va, tb, vb, space)
    if not want_choice and (ub == 0.0 or ta.size == 0 or tb.size == 0):
        # with no jumps on one side every reparametrization sees the same values
        return ub, None
    xc, xr = space.chart_arrays(va)
    yc, yr = space.chart_arrays(vb)
    choice = np.empty((ta.size + 1) * (tb.size + 1) if want_choice else 0, np.int8)
    val, lo, hi, offs = _bottleneck(ta, xc, xr, tb, yc, yr, float(T), space.metric_mode,
                                    ub * (1 + 1e-12) + 1e-15, choice)
    val = min(float(val), ub)
    if want_choice:
        return val, (choice, lo, hi, offs)
    return val, None


def global_distance(x: StepPath, y: StepPath, T: float, space: StateSpace = DEFAULT_SPACE) -> float:
    """Skorokhod-type distance between ``x`` and ``y`` on ``[0, T)``.

    Symmetrised by averaging the two orders of the arguments (they agree up to
    rounding).  The cemetery is a regular point of ``S ∪ {Δ}`` here.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    ta, va = _events(x, T)
    tb, vb = _events(y, T)
    d1, _ = _one_sided(ta, va, tb, vb, T, space)
    d2, _ = _one_sided(tb, vb, ta, va, T, space)
    return 0.5 * (d1 + d2)


# -- reparametrizations ----------------------------------------------------------


@dataclass(frozen=True)
class Reparametrization:
    """Piecewise-linear increasing map of ``[0, T]`` onto itself.

    ``limit=True`` flags knot lists where two knots collapse; such a map is the
    limit of admissible homeomorphisms rather than one itself.
    """

    s: np.ndarray
    lam: np.ndarray
    T: float
    limit: bool = False

    def __post_init__(self):
        if self.s[0] != 0 or self.lam[0] != 0 or self.s[-1] != self.T or self.lam[-1] != self.T:
            raise ValueError("reparametrization must fix 0 and T")
        if np.any(np.diff(self.s) < 0) or np.any(np.diff(self.lam) < 0):
            raise ValueError("reparametrization must be nondecreasing")

    def __call__(self, s):
        return np.interp(s, self.s, self.lam)

    def time_distortion(self) -> float:
        return float(np.max(np.abs(self.lam - self.s)))


def optimal_reparametrization(x: StepPath, y: StepPath, T: float,
                              space: StateSpace = DEFAULT_SPACE) -> tuple[float, Reparametrization]:
    """Distance from ``x`` to ``y`` together with an optimal (limit) ``lam``."""
    ta, va = _events(x, T)
    tb, vb = _events(y, T)
    val, (choice, lo, hi, offs) = _one_sided(ta, va, tb, vb, T, space, want_choice=True)
    i, j = ta.size, tb.size
    pos = np.empty(ta.size)
    clamped_onto_jump = False
    while i > 0 or j > 0:
        mv = choice[offs[i] + j - lo[i]]
        if mv == 2:
            j -= 1
        elif mv == 3:
            pos[i - 1] = tb[j - 1]
            i -= 1
            j -= 1
        else:
            lo_t = 0.0 if j == 0 else tb[j - 1]
            hi_t = T if j == tb.size else tb[j]
            pos[i - 1] = min(max(ta[i - 1], lo_t), hi_t)
            clamped_onto_jump |= pos[i - 1] != ta[i - 1]
            i -= 1
    s = np.concatenate(([0.0], ta, [T]))
    lam = np.concatenate(([0.0], pos, [T]))
    lam = np.maximum.accumulate(lam)
    limit = bool(np.any(np.diff(lam) == 0) or clamped_onto_jump)
    return val, Reparametrization(s, lam, float(T), limit)


def _merge_orders(m: int, n: int):
    """All lattice paths (0,0) -> (m,n) with x, y and diagonal (match) steps."""
    if m == 0 and n == 0:
        yield ()
        return
    if m > 0:
        for rest in _merge_orders(m - 1, n):
            yield rest + ("x",)
    if n > 0:
        for rest in _merge_orders(m, n - 1):
            yield rest + ("y",)
    if m > 0 and n > 0:
        for rest in _merge_orders(m - 1, n - 1):
            yield rest + ("m",)


def global_distance_bruteforce(x: StepPath, y: StepPath, T: float,
                               space: StateSpace = DEFAULT_SPACE) -> float:
    """Exhaustive search over every monotone matching and interleaving of jumps.

    For each order the smallest time distortion is found by a linear programme
    and the spatial cost by evaluating both paths on every cell of the order.
    Exponential in the number of jumps; meant as an oracle for small paths.
    """
    from scipy.optimize import linprog

    ta, _ = _events(x, T)
    tb, _ = _events(y, T)
    m, n = ta.size, tb.size
    # witness times strictly inside each inter-jump interval of each path
    wa = np.concatenate(([0.0], ta))
    wb = np.concatenate(([0.0], tb))
    xa = [x.evaluate(t) for t in wa]
    yb = [y.evaluate(t) for t in wb]
    best = math.inf
    for order in _merge_orders(m, n):
        i = j = 0
        spatial = space.metric(xa[0], yb[0])
        bounds = []
        for step in order:
            if step == "x":
                lo_t = 0.0 if j == 0 else tb[j - 1]
                hi_t = T if j == n else tb[j]
                bounds.append((lo_t, hi_t))
                i += 1
            elif step == "y":
                j += 1
            else:
                bounds.append((tb[j], tb[j]))
                i += 1
                j += 1
            spatial = max(spatial, space.metric(xa[i], yb[j]))
        if spatial >= best:
            continue
        if m == 0:
            timecost = 0.0
        else:
            # variables p_1..p_m, z ; minimise z
            c = np.zeros(m + 1)
            c[-1] = 1.0
            rows, rhs = [], []
            for k in range(m):
                r = np.zeros(m + 1)
                r[k], r[-1] = 1.0, -1.0
                rows.append(r)
                rhs.append(ta[k])
                r = np.zeros(m + 1)
                r[k], r[-1] = -1.0, -1.0
                rows.append(r)
                rhs.append(-ta[k])
                if k + 1 < m:
                    r = np.zeros(m + 1)
                    r[k], r[k + 1] = 1.0, -1.0
                    rows.append(r)
                    rhs.append(0.0)
            res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs),
                          bounds=list(bounds) + [(0, None)], method="highs-ds")
            if res.status != 0:
                continue
            timecost = float(res.fun)
        best = min(best, max(spatial, timecost))
    return best


# -- local distance ------------------------------------------------------------------


def local_distance(x: StepPath, y: StepPath, space: StateSpace = DEFAULT_SPACE,
                   levels: int = 20, max_horizon: float | None = None) -> float:
    """Surrogate pseudo-distance for the local Skorokhod topology.

    ``sum_n 2^-n (1 ∧ global_distance(x^{tau_n}, y^{tau_n}, T_n))`` with
    ``tau_n`` the exit time of ``U_n`` and ``T_n = n`` (capped by the paths'
    sampling horizon or ``max_horizon``).  Truncated after ``levels`` terms,
    so the value is within ``2^-levels`` of the full series.
    """
    cap = min(x.horizon, y.horizon)
    if max_horizon is not None:
        cap = min(cap, max_horizon)
    total = 0.0
    last_key = last_val = None
    for n in range(1, levels + 1):
        U = space.exhaustion(n)
        xs = x.stop(x.exit_time(U))
        ys = y.stop(y.exit_time(U))
        T = min(float(n * space.exhaustion_step), cap)
        key = (len(xs), xs.xi, len(ys), ys.xi, T)
        if last_key == key:
            val = last_val
        else:
            val = min(1.0, global_distance(xs, ys, T, space))
        last_key, last_val = key, val
        total += val * 2.0 ** -n
    return total


@dataclass
class ConvergenceProbe:
    distances: np.ndarray
    tolerance: float
    jitter: float
    converging: bool

    @property
    def verdict(self) -> str:
        return "consistent with convergence" if self.converging else "not converging"


def convergence_probe(xs, x: StepPath, space: StateSpace = DEFAULT_SPACE, tol: float = 0.05,
                      jitter: float = 1e-3, **kw) -> ConvergenceProbe:
    """Local distances from each ``xs[k]`` to ``x`` and a convergence verdict.

    The verdict is positive when the last distance is below ``tol`` and the
    second half of the sequence is nonincreasing up to ``jitter``.
    """
    if len(xs) < 2:
        raise ValueError("need at least two paths")
    d = np.array([local_distance(p, x, space, **kw) for p in xs])
    tail = d[len(d) // 2:]
    ok = bool(d[-1] < tol and np.all(np.diff(tail) <= jitter))
    return ConvergenceProbe(d, tol, jitter, ok)


# -- Aldous tightness --------------------------------------------------------------


@dataclass
class TightnessReport:
    """Empirical Aldous statistics: rows are ``delta`` values, columns sequence members."""

    deltas: np.ndarray
    labels: list
    probs: np.ndarray
    three_time: np.ndarray | None
    limsup: np.ndarray
    dictionary: list[str]
    argmax: list[list[str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_rows(self, three_time: bool = False):
        table = self.three_time if three_time else self.probs
        header = ["delta"] + [f"n={lab}" for lab in self.labels] + ["limsup"]
        rows = [header]
        for k, dlt in enumerate(self.deltas):
            rows.append([repr(float(dlt))] + [repr(float(p)) for p in table[k]]
                        + [repr(float(self.limsup[k] if not three_time else table[k, -1]))])
        return rows

    def decreasing(self, slack: float = 0.0) -> bool:
        """Limsup column nonincreasing as delta shrinks (up to ``slack``)."""
        order = np.argsort(self.deltas)[::-1]
        col = self.limsup[order]
        return bool(np.all(np.diff(col) <= slack))


def _paths_of(ens):
    return ens.paths if hasattr(ens, "paths") else list(ens)


def _eps_exit(path: StepPath, start: float, cap: float, eps: float, space: StateSpace) -> float:
    """First knot time in ``(start, cap]`` where the path is eps-far from ``x_start``."""
    if cap <= start:
        return cap
    ref = path.evaluate_many([start])
    i0 = int(np.searchsorted(path.times, start, side="right"))
    i1 = int(np.searchsorted(path.times, cap, side="right"))
    far = space.metric_array(path.values[i0:i1], np.full(i1 - i0, ref[0])) >= eps
    if far.any():
        return float(path.times[i0 + int(np.argmax(far))])
    if path.xi <= cap and space.metric_array(np.nan, ref)[0] >= eps:
        return path.xi
    return cap


def _dictionary(t: float, eps: float):
    det = [("det", t * k / 16) for k in range(16)]
    exits = [("exit", eps * (k + 1) / 2) for k in range(8)]
    return det, exits


def aldous_tightness(ens_seq, eps: float, t: float, U: OpenInterval, delta_grid,
                     space: StateSpace = DEFAULT_SPACE, labels=None,
                     three_time: bool = True) -> TightnessReport:
    """Empirical version of the Aldous criterion over a finite stopping dictionary.

    First stopping times ``tau1``: 16 deterministic times ``t k/16`` and their
    shifts back by ``delta/2``, plus exit times of 8 nested intervals around
    ``X_0`` (radii ``eps/2 .. 4 eps``), all capped by ``t ∧ tau^U``.  Second
    times: ``(tau1 + delta) ∧ t ∧ tau^U`` and the first eps-move after
    ``tau1`` capped at that bound.  Each cell reports the largest empirical
    ``P(d(X_tau1, X_tau2) >= eps)`` over the dictionary.
    """
    deltas = np.asarray(sorted(delta_grid, reverse=True), dtype=float)
    if deltas.size == 0:
        raise ValueError("delta grid is empty")
    labels = list(range(1, len(ens_seq) + 1)) if labels is None else list(labels)
    det, exits = _dictionary(t, eps)
    names = ([f"det t={s:g}" for _, s in det] + [f"det t={s:g}-delta/2" for _, s in det]
             + [f"exit r={r:g}" for _, r in exits])
    second = ["(tau1+delta)^t^tauU", "eps-move after tau1"]
    entries = [f"{a} / {b}" for a in names for b in second]
    probs = np.zeros((deltas.size, len(ens_seq)))
    three = np.zeros_like(probs) if three_time else None
    argmax = [[""] * len(ens_seq) for _ in deltas]
    warn = []
    for col, ens in enumerate(ens_seq):
        paths = _paths_of(ens)
        hits = np.zeros((deltas.size, len(entries)))
        hits3 = np.zeros((deltas.size, len(names) + 1))
        for p in paths:
            tauU = p.exit_time(U)
            top = min(t, tauU)
            x0 = p.start
            if len(p) == 0:
                exit_times = [0.0] * len(exits)
            else:
                exit_times = [min(p.exit_time(OpenInterval(x0 - r, x0 + r)), top)
                              for _, r in exits]
            jump_time = _first_big_jump(p, eps, space, top)
            for k, dlt in enumerate(deltas):
                tau1s = ([min(s, top) for _, s in det]
                         + [min(max(s - dlt / 2, 0.0), top) for _, s in det]
                         + exit_times)
                tau1 = np.array(tau1s)
                bound = np.minimum(tau1 + dlt, top)
                tau2a = bound
                tau2b = np.array([_eps_exit(p, a, b, eps, space) for a, b in zip(tau1, bound)])
                v1 = p.evaluate_many(tau1)
                da = space.metric_array(v1, p.evaluate_many(tau2a)) >= eps
                db = space.metric_array(v1, p.evaluate_many(tau2b)) >= eps
                hits[k] += np.ravel(np.column_stack((da, db)))
                if three_time:
                    tau3 = np.array([_eps_exit(p, a, b, eps, space) for a, b in zip(tau2b, bound)])
                    r = _three_time_r(p, tau1, tau2b, tau3, space)
                    # tau1 = tau2 = first eps-jump, tau3 the next eps-move
                    if jump_time < top:
                        b3 = min(jump_time + dlt, top)
                        t3 = _eps_exit(p, jump_time, b3, eps, space)
                        rj = _three_time_r(p, np.array([jump_time]), np.array([jump_time]),
                                           np.array([t3]), space)
                    else:
                        rj = np.zeros(1)
                    hits3[k] += np.concatenate((r, rj)) >= eps
        N = max(len(paths), 1)
        for k in range(deltas.size):
            frac = hits[k] / N
            best = int(np.argmax(frac))
            probs[k, col] = frac[best]
            argmax[k][col] = entries[best]
            if frac[best] > 0 and _on_boundary(entries[best], t, eps):
                warn.append(f"delta={deltas[k]:g}, n={labels[col]}: maximum attained on the "
                            f"dictionary boundary ({entries[best]})")
            if three_time:
                three[k, col] = np.max(hits3[k]) / N
    for w in warn:
        warnings.warn(w, TightnessWarning, stacklevel=2)
    half = max(1, len(ens_seq) // 2)
    limsup = probs[:, -half:].max(axis=1)
    notes = ["supremum over stopping times replaced by the finite dictionary listed",
             "three-time statistic R: the tau1 = tau2 left-limit case is only probed at the "
             "first eps-jump, so its coverage is partial"]
    return TightnessReport(deltas, labels, probs, three, limsup, entries, argmax, warn, notes)


def _first_big_jump(p: StepPath, eps: float, space: StateSpace, top: float) -> float:
    if len(p) < 2:
        return math.inf
    jumps = space.metric_array(p.values[1:], p.values[:-1]) >= eps
    jumps &= p.times[1:] <= top
    if jumps.any():
        return float(p.times[1:][int(np.argmax(jumps))])
    return math.inf


def _three_time_r(p: StepPath, tau1, tau2, tau3, space: StateSpace) -> np.ndarray:
    v1, v2, v3 = p.evaluate_many(tau1), p.evaluate_many(tau2), p.evaluate_many(tau3)
    left2 = np.array([np.nan if s == 0 else to_coord(p.left_limit(s)) for s in tau2])
    left2 = np.where(tau2 == 0, v2, left2)
    d12 = space.metric_array(v1, v2)
    d23 = space.metric_array(v2, v3)
    dl2 = space.metric_array(left2, v2)
    r = np.where(tau1 == 0, d12,
                 np.where(tau1 < tau2, np.minimum(d12, d23), np.minimum(dl2, d23)))
    return r


def _on_boundary(entry: str, t: float, eps: float) -> bool:
    last_det = f"det t={t * 15 / 16:g}"
    return entry.startswith(last_det) or entry.startswith(f"exit r={eps * 4:g}")
