"""Finite step representation of exploding cadlag paths.

A :class:`StepPath` holds knots ``t_0 = 0 < t_1 < ... < t_m`` with values
``v_0, ..., v_m`` in S, an explosion time ``xi`` and optionally the left limit
at ``xi``.  The path is ``v_i`` on ``[t_i, t_{i+1})``, ``v_m`` on ``[t_m, xi)``
and the cemetery from ``xi`` on.

Segment lengths (``durations``, the last one being ``xi - t_m``) are stored
alongside the knots.  Time changes divide segment lengths, so keeping them as
first-class data makes ``g1·(g2·x)`` and ``(g1 g2)·x`` agree bit for bit.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .state_space import DELTA, OpenInterval, is_delta

__all__ = [
    "StepPath",
    "StoppingSpec",
    "DeterministicTime",
    "ExitTime",
    "FirstOf",
    "constant_path",
    "jump_path",
    "grid_path",
    "check_path",
    "read_path_csv",
    "write_path_csv",
]


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class StepPath:
    """An element of the exploding path space with finitely many knots.

    ``continuous=True`` marks a fine-grid discretisation of a continuous
    process: its knots are interpolation points, not recorded jumps.
    ``horizon`` is the time up to which the path is a faithful sample (a
    simulation stopped at its horizon keeps its last value afterwards).
    """

    __slots__ = ("times", "values", "durations", "xi", "left_limit_at_explosion",
                 "continuous", "horizon")

    def __init__(self, times, values, xi=math.inf, left_limit_at_explosion=None, *,
                 continuous=False, horizon=math.inf):
        times = _readonly(times)
        values = _readonly(values)
        xi = float(xi)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if times.size == 0:
            if xi != 0.0:
                raise ValueError("an empty path must have xi = 0 (starts at the cemetery)")
        else:
            if times[0] != 0.0:
                raise ValueError("first knot must be at t = 0")
            if times.size > 1 and not np.all(np.diff(times) > 0):
                raise ValueError("knot times must be strictly increasing")
            if not np.all(np.isfinite(values)):
                raise ValueError("path values must be interior (finite) points")
            if not times[-1] < xi:
                raise ValueError("all knots must precede the explosion time")
        if left_limit_at_explosion is not None:
            if is_delta(left_limit_at_explosion) or not math.isfinite(xi):
                left_limit_at_explosion = None
            else:
                left_limit_at_explosion = float(left_limit_at_explosion)
        durations = np.diff(np.append(times, xi)) if times.size else np.empty(0)
        self._set(times, values, _readonly(durations), xi, left_limit_at_explosion,
                  continuous, horizon)

    def _set(self, times, values, durations, xi, ll, continuous, horizon):
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "left_limit_at_explosion", ll)
        object.__setattr__(self, "continuous", bool(continuous))
        object.__setattr__(self, "horizon", float(horizon))

    def __setattr__(self, name, value):
        raise AttributeError("StepPath is immutable")

    @classmethod
    def _raw(cls, times, values, durations, xi, ll=None, continuous=False,
             horizon=math.inf) -> "StepPath":
        obj = object.__new__(cls)
        for a in (times, values, durations):
            a.setflags(write=False)
        obj._set(times, values, durations, float(xi), ll, continuous, horizon)
        return obj

    @classmethod
    def from_durations(cls, values, durations, left_limit_at_explosion=None, *,
                       continuous=False, horizon=math.inf) -> "StepPath":
        """Build a path from segment lengths; the last one runs up to ``xi``."""
        values = np.array(values, dtype=float)
        durations = np.array(durations, dtype=float)
        if values.shape != durations.shape or values.size == 0:
            raise ValueError("need one duration per value")
        if np.any(durations[:-1] <= 0) or not durations[-1] > 0:
            raise ValueError("durations must be positive")
        times = np.zeros(values.size)
        np.cumsum(durations[:-1], out=times[1:])
        xi = times[-1] + durations[-1]
        if not math.isfinite(xi):
            left_limit_at_explosion = None
        return cls._raw(times, values, durations, xi, left_limit_at_explosion,
                        continuous, horizon)

    # -- basic accessors --------------------------------------------------

    def __len__(self):
        return self.times.size

    def __repr__(self):
        return (f"StepPath(knots={len(self)}, xi={self.xi:g}, "
                f"start={self.start!r}, continuous={self.continuous})")

    def __eq__(self, other):
        if not isinstance(other, StepPath):
            return NotImplemented
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.values, other.values)
                and self.xi == other.xi
                and self.left_limit_at_explosion == other.left_limit_at_explosion)

    __hash__ = None

    @property
    def start(self):
        return DELTA if len(self) == 0 else float(self.values[0])

    def explosion_time(self) -> float:
        return self.xi

    def explodes(self) -> bool:
        return math.isfinite(self.xi)

    def jump_times(self) -> np.ndarray:
        """Knots ``t > 0`` where the value actually changes."""
        if len(self) < 2:
            return np.empty(0)
        moved = self.values[1:] != self.values[:-1]
        return self.times[1:][moved]

    # -- evaluation -------------------------------------------------------

    def evaluate(self, t: float):
        """Right-continuous value at ``t``; the cemetery for ``t >= xi``."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        if t >= self.xi:
            return DELTA
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.values[i])

    __call__ = evaluate

    def evaluate_many(self, ts) -> np.ndarray:
        """Vectorised :meth:`evaluate`; the cemetery is returned as ``nan``."""
        ts = np.asarray(ts, dtype=float)
        if len(self) == 0:
            return np.full(ts.shape, np.nan)
        idx = np.searchsorted(self.times, ts, side="right") - 1
        out = self.values[np.clip(idx, 0, None)]
        return np.where(ts >= self.xi, np.nan, out)

    def left_limit(self, t: float):
        """``lim_{s↑t} x_s``; at ``t = xi`` the recorded limit or the cemetery."""
        if t <= 0:
            raise ValueError("left limits are only defined for t > 0")
        if t > self.xi:
            return DELTA
        if t == self.xi:
            ll = self.left_limit_at_explosion
            return DELTA if ll is None else ll
        i = int(np.searchsorted(self.times, t, side="left")) - 1
        return float(self.values[i])

    def left_limit_or_start(self, t: float):
        """Left limit with the convention ``x_{0-} = x_0``."""
        return self.start if t == 0 else self.left_limit(t)

    # -- stopping ---------------------------------------------------------

    def exit_time(self, U: OpenInterval) -> float:
        """First time ``x_{t-}`` or ``x_t`` leaves ``U``, capped at ``xi``.

        On a step path the left limit at a knot is the previous value, which
        was inside ``U`` before the first exit, so checking values suffices.
        """
        if len(self) == 0:
            return 0.0
        outside = ~U.contains_array(self.values)
        if outside.any():
            return float(self.times[int(np.argmax(outside))])
        return self.xi

    def first_knot_where(self, mask: np.ndarray) -> float:
        """Time of the first knot selected by ``mask``, else ``xi``."""
        if mask.any():
            return float(self.times[int(np.argmax(mask))])
        return self.xi

    def stopped_at(self, tau: float) -> "StepPath":
        """The path ``t ↦ x_{t∧tau}``."""
        if tau >= self.xi:
            return self
        if tau < 0:
            raise ValueError("stopping time must be nonnegative")
        k = int(np.searchsorted(self.times, tau, side="right")) - 1
        if k == len(self) - 1 and math.isinf(self.durations[-1]):
            return self
        durations = self.durations[:k + 1].copy()
        durations[-1] = math.inf
        horizon = math.inf if tau <= self.horizon else self.horizon
        return StepPath._raw(self.times[:k + 1].copy(), self.values[:k + 1].copy(),
                             durations, math.inf, None, self.continuous, horizon)

    def stop(self, spec: "StoppingSpec | float") -> "StepPath":
        tau = spec if isinstance(spec, (int, float)) else spec(self)
        return self.stopped_at(float(tau))

    # -- integrals --------------------------------------------------------

    def integral(self, g, a: float, b: float) -> float:
        """``∫_a^b g(x_u) du`` exactly on the step structure (``b`` capped at xi)."""
        b = min(b, self.xi)
        if b <= a or len(self) == 0:
            return 0.0
        ia = int(np.searchsorted(self.times, a, side="right")) - 1
        ib = int(np.searchsorted(self.times, b, side="right")) - 1
        vals = np.asarray(g(self.values[ia:ib + 1]), dtype=float)
        if ia == ib:
            return float(vals[0] * (b - a))
        lengths = np.diff(self.times[ia:ib + 1])
        lengths[0] = self.times[ia + 1] - a
        total = float(np.dot(lengths, vals[:-1]))
        return total + float(vals[-1] * (b - self.times[ib]))


# -- stopping specifications ----------------------------------------------


class StoppingSpec:
    """A stopping rule evaluating to a time in ``[0, inf]`` on any path."""

    def __call__(self, path: StepPath) -> float:
        raise NotImplementedError

    def __and__(self, other: "StoppingSpec") -> "FirstOf":
        return FirstOf(self, other)


@dataclass(frozen=True)
class DeterministicTime(StoppingSpec):
    t: float

    def __call__(self, path):
        return float(self.t)


@dataclass(frozen=True)
class ExitTime(StoppingSpec):
    U: OpenInterval

    def __call__(self, path):
        return path.exit_time(self.U)


@dataclass(frozen=True)
class FirstOf(StoppingSpec):
    first: StoppingSpec
    second: StoppingSpec

    def __call__(self, path):
        return min(self.first(path), self.second(path))


# -- constructors -----------------------------------------------------------


def constant_path(a: float, **kw) -> StepPath:
    return StepPath([0.0], [a], **kw)


def jump_path(times, values, xi=math.inf, left_limit=None) -> StepPath:
    return StepPath(times, values, xi, left_limit)


def grid_path(fn, dt: float, xi: float = math.inf, T: float | None = None,
              left_limit=None) -> StepPath:
    """Sample ``fn`` on ``0, dt, 2dt, ...`` below ``xi`` (and up to ``T``).

    The result is a continuous-kind step path; when ``T`` is given and finite
    the last value is held after ``T`` and ``horizon`` records ``T``.
    """
    if T is not None and T < xi:
        n = int(math.floor(T / dt + 1e-9))
        times = np.arange(n + 1) * dt
        return StepPath(times, np.asarray(fn(times), dtype=float), continuous=True, horizon=T)
    if not math.isfinite(xi):
        raise ValueError("need a finite explosion time or horizon")
    n = int(math.ceil(xi / dt))
    times = np.arange(n + 1) * dt
    times = times[times < xi]
    return StepPath(times, np.asarray(fn(times), dtype=float), xi, left_limit,
                    continuous=True)

def check_path(path: StepPath) -> list[str]:
    """Return the list of broken invariants (empty for a valid path)."""
    problems = []
    t, v = path.times, path.values
    if len(path) == 0:
        if path.xi != 0:
            problems.append("empty path with xi != 0")
        return problems
    if t[0] != 0:
        problems.append("first knot not at 0")
    if np.any(np.diff(t) <= 0):
        problems.append("knots not strictly increasing")
    if not np.all(np.isfinite(v)):
        problems.append("non-interior value")
    if not t[-1] < path.xi:
        problems.append("knot at or after xi")
    if path.durations.shape != t.shape or np.any(path.durations <= 0):
        problems.append("bad segment lengths")
    if path.evaluate(path.xi + 1.0) is not DELTA:
        problems.append("not absorbed at the cemetery after xi")
    return problems


# -- CSV serialisation --------------------------------------------------------


def write_path_csv(path: StepPath, target) -> None:
    """Write ``# xi=..`` header, a ``t,value`` header and one row per knot.

    An explosion at finite ``xi`` is written as a final row with an empty
    value field (the cemetery).
    """
    buf = io.StringIO()
    buf.write(f"# xi={path.xi!r}\n")
    if path.left_limit_at_explosion is not None:
        buf.write(f"# left_limit={path.left_limit_at_explosion!r}\n")
    if path.continuous:
        buf.write("# continuous=1\n")
    if math.isfinite(path.horizon):
        buf.write(f"# horizon={path.horizon!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "value"])
    for t, v in zip(path.times.tolist(), path.values.tolist()):
        w.writerow([repr(t), repr(v)])
    if math.isfinite(path.xi):
        w.writerow([repr(path.xi), ""])
    text = buf.getvalue()
    if hasattr(target, "write"):
        target.write(text)
    else:
        Path(target).write_text(text)


def read_path_csv(source) -> StepPath:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    meta = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        elif line.strip():
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if [h.strip() for h in header] != ["t", "value"]:
        raise ValueError(f"expected header 't,value', got {header}")
    times, values = [], []
    xi = float(meta.get("xi", "inf"))
    for t, v in reader:
        if v.strip() == "":
            xi = float(t)
            continue
        times.append(float(t))
        values.append(float(v))
    ll = meta.get("left_limit")
    return StepPath(times, values, xi, None if ll is None else float(ll),
                    continuous=meta.get("continuous") == "1",
                    horizon=float(meta.get("horizon", "inf")))

