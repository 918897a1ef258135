"""Random time change ``g·x`` of exploding step paths.

The clock ``A(s) = ∫_0^s du / g(x_u)`` is exact on step paths: each segment
contributes its length divided by the speed at its value.  The time-changed
path therefore has the same values as ``x`` and segment lengths
``duration_i / g(v_i)``, up to the first time the path touches ``{g = 0}``,
where it freezes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .paths import StepPath
from .state_space import is_delta

__all__ = [
    "SpeedFunction",
    "speed",
    "speed_from_config",
    "SPEED_NAMES",
    "zero_set_exit",
    "clock",
    "clock_inverse",
    "apply",
    "pushforward_ensemble",
]

# a recorded left limit counts as a zero of g below this value
LEFT_LIMIT_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class SpeedFunction:
    """Nonnegative continuous speed ``g`` on S, with its zero set declared.

    ``zero_set`` lists closed intervals ``(lo, hi)`` (infinite ends allowed)
    on which ``g`` vanishes.  Products keep their factors so that dividing by
    ``g1 g2`` is carried out as two successive divisions, innermost first.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    zero_set: tuple[tuple[float, float], ...] = ()
    params: tuple = ()
    factors: tuple["SpeedFunction", ...] = field(default=(), repr=False)
    config_name: str | None = field(default=None, repr=False, compare=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.factors:
            out = np.ones_like(x)
            for g in self.factors:
                out = out * g(x)
            return out
        return np.asarray(self.fn(x), dtype=float) * np.ones_like(x)

    def __mul__(self, other: "SpeedFunction") -> "SpeedFunction":
        return product(self, other)

    def divide(self, durations: np.ndarray, values: np.ndarray) -> np.ndarray:
        """``durations / g(values)`` with products divided factor by factor."""
        if self.factors:
            out = durations
            for g in reversed(self.factors):
                out = g.divide(out, values)
            return out
        return durations / self(values)

    def is_zero(self, values: np.ndarray) -> np.ndarray:
        if self.factors:
            mask = np.zeros(np.shape(values), dtype=bool)
            for g in self.factors:
                mask |= g.is_zero(values)
            return mask
        return self(values) == 0.0

    def declared_zero(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        mask = np.zeros(x.shape, dtype=bool)
        for lo, hi in self.zero_set:
            mask |= (x >= lo) & (x <= hi)
        return mask

    def positive_everywhere(self) -> bool:
        return not self.zero_set

    def to_config(self) -> dict:
        if self.factors:
            return {"name": "product", "factors": [g.to_config() for g in self.factors]}
        return {"name": self.config_name or self.name, **dict(self.params)}


def _merge_zero_sets(*sets):
    out = []
    for s in sets:
        out.extend(s)
    return tuple(sorted(set(out)))


def product(*gs: SpeedFunction) -> SpeedFunction:
    factors = []
    for g in gs:
        factors.extend(g.factors or (g,))
    name = "*".join(g.name for g in factors)
    return SpeedFunction(name, fn=None, zero_set=_merge_zero_sets(*(g.zero_set for g in factors)),
                         factors=tuple(factors))


def const(c: float = 1.0) -> SpeedFunction:
    c = float(c)
    if c < 0:
        raise ValueError("speed must be nonnegative")
    zeros = ((-math.inf, math.inf),) if c == 0 else ()
    return SpeedFunction("const" if c != 1 else "one", lambda x: np.full_like(x, c), zeros,
                         (("c", c),))


def one_plus_x2() -> SpeedFunction:
    return SpeedFunction("one_plus_x2", lambda x: 1.0 + x * x)


def inv_one_plus_x2() -> SpeedFunction:
    return SpeedFunction("inv_one_plus_x2", lambda x: 1.0 / (1.0 + x * x))


def ramp(level: float = 2.0) -> SpeedFunction:
    """``(level - x)^+``: zero on ``[level, inf)``."""
    level = float(level)
    return SpeedFunction("ramp", lambda x: np.maximum(level - x, 0.0),
                         ((level, math.inf),), (("level", level),))


def bump(center: float = 0.0, radius: float = 1.0) -> SpeedFunction:
    """``(1 - ((x - center)/radius)^2)^+``, supported on the open ball."""
    center, radius = float(center), float(radius)

    def fn(x):
        u = (x - center) / radius
        return np.maximum(1.0 - u * u, 0.0)

    return SpeedFunction("bump", fn,
                         ((-math.inf, center - radius), (center + radius, math.inf)),
                         (("center", center), ("radius", radius)))


def clamped(base: SpeedFunction, cap: float) -> SpeedFunction:
    """``min(base, cap)``; same zero set as ``base``."""
    cap = float(cap)
    return SpeedFunction(f"min({base.name},{cap:g})", lambda x: np.minimum(base(x), cap),
                         base.zero_set, (("base", base.to_config()), ("cap", cap)),
                         config_name="clamped")


_BUILDERS = {
    "const": const,
    "one": lambda: const(1.0),
    "one_plus_x2": one_plus_x2,
    "inv_one_plus_x2": inv_one_plus_x2,
    "ramp": ramp,
    "bump": bump,
}

SPEED_NAMES = tuple(_BUILDERS) + ("clamped", "product")


def speed(name: str, **params) -> SpeedFunction:
    return speed_from_config({"name": name, **params})


def speed_from_config(block: dict) -> SpeedFunction:
    block = dict(block)
    name = block.pop("name")
    if name == "product":
        return product(*(speed_from_config(b) for b in block["factors"]))
    if name == "clamped":
        return clamped(speed_from_config(block["base"]), block["cap"])
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown speed function {name!r}; known: {', '.join(SPEED_NAMES)}")
    return builder(**block)


# -- path operations -----------------------------------------------------------


def _first_zero(path: StepPath, g: SpeedFunction) -> int | None:
    mask = g.is_zero(path.values)
    return int(np.argmax(mask)) if mask.any() else None


def _left_limit_in_zero_set(path: StepPath, g: SpeedFunction) -> bool:
    ll = path.left_limit_at_explosion
    return ll is not None and float(g(ll)) <= LEFT_LIMIT_ZERO_TOL


def zero_set_exit(path: StepPath, g: SpeedFunction) -> float:
    """``inf{t | g(x_{t-}) ∧ g(x_t) = 0} ∧ xi``."""
    if len(path) == 0:
        return 0.0
    k = _first_zero(path, g)
    return path.xi if k is None else float(path.times[k])


def _clock_knots(path: StepPath, g: SpeedFunction, k: int) -> np.ndarray:
    """Clock values at knots ``0..k`` (the first ``k`` segments)."""
    acc = np.zeros(k + 1)
    if k:
        np.cumsum(g.divide(path.durations[:k], path.values[:k]), out=acc[1:])
    return acc


def clock(path: StepPath, g: SpeedFunction, s: float) -> float:
    """``A(s) = ∫_0^s du / g(x_u)`` for ``s`` up to the zero-set exit."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s > zero_set_exit(path, g):
        raise ValueError("clock integrand is singular beyond the zero-set exit")
    if s == 0:
        return 0.0
    if s == path.xi:
        k = len(path) - 1
        knots = _clock_knots(path, g, k)
        return float(knots[-1] + g.divide(path.durations[k:], path.values[k:])[0])
    i = int(np.searchsorted(path.times, s, side="right")) - 1
    knots = _clock_knots(path, g, i)
    partial = g.divide(np.array([s - path.times[i]]), path.values[i:i + 1])[0]
    return float(knots[-1] + partial)


def clock_inverse(path: StepPath, g: SpeedFunction, t: float) -> float:
    """``tau_t = inf{s | s >= tau0 or A(s) >= t}`` with ``tau0`` the zero-set exit."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0 or len(path) == 0:
        return 0.0
    k = _first_zero(path, g)
    tau0 = path.xi if k is None else float(path.times[k])
    m = len(path) - 1 if k is None else k
    knots = _clock_knots(path, g, m)
    if k is None:
        end = knots[-1] + g.divide(path.durations[m:], path.values[m:])[0]
        knots = np.append(knots, end)
    if t >= knots[-1]:
        return tau0
    i = int(np.searchsorted(knots, t, side="right")) - 1
    return float(path.times[i] + (t - knots[i]) * float(g(path.values[i])))


def apply(path: StepPath, g: SpeedFunction) -> StepPath:
    """The time-changed path ``g·x``.

    Before the zero-set exit the values are unchanged and each segment is
    stretched by ``1/g``.  At a zero of ``g`` hit by ``x_t`` the path freezes
    there forever; if instead ``g`` vanishes only at the recorded left limit at
    explosion, the path freezes at that left limit.  Otherwise the new
    explosion time is ``A(xi)`` and the recorded left limit carries over.
    """
    if len(path) == 0:
        return path
    values = path.values
    if np.all(g(values) == 1.0) and not _left_limit_in_zero_set(path, g):
        return path
    k = _first_zero(path, g)
    if k is None:
        durations = g.divide(path.durations, values)
        ll = path.left_limit_at_explosion
        if _left_limit_in_zero_set(path, g):
            new = StepPath.from_durations(np.append(values, ll), np.append(durations, math.inf),
                                          continuous=path.continuous)
        else:
            new = StepPath.from_durations(values, durations, ll, continuous=path.continuous)
        tau0 = path.xi
    else:
        durations = np.append(g.divide(path.durations[:k], values[:k]), math.inf)
        new = StepPath.from_durations(values[:k + 1], durations, continuous=path.continuous)
        tau0 = float(path.times[k])
    if path.horizon < tau0:
        object.__setattr__(new, "horizon", clock(path, g, path.horizon))
    return new


def explosion_time_formula(path: StepPath, g: SpeedFunction) -> float:
    """ξ(g·x) from the two-case display, evaluated without building g·x."""
    if len(path) == 0:
        return 0.0
    tau0 = zero_set_exit(path, g)
    if tau0 < path.xi or _left_limit_in_zero_set(path, g):
        return math.inf
    return clock(path, g, path.xi)


def pushforward_ensemble(ens, g: SpeedFunction):
    """Apply ``g·`` to every member path, keeping seeds and metadata."""
    return ens.with_paths([apply(p, g) for p in ens.paths], transform=g.name)
