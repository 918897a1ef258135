"""Test functions, operators as lists of (f, g) pairs, and the positive maximum principle."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial, hermite
from scipy.optimize import brentq

from .coefficients import Coefficient

__all__ = [
    "TestFunction",
    "gaussian_bump",
    "poly_bump",
    "trig_bump",
    "plateau",
    "zero_function",
    "test_function_from_config",
    "GFunction",
    "Pair",
    "Operator",
    "diffusion_operator",
    "cpoisson_operator",
    "chain_operator",
    "scale_operator",
    "identity_pair",
    "custom_operator",
    "default_probe_grid",
    "pmp_check",
    "Violation",
    "GridBoundaryWarning",
    "is_bounded",
]


class GridBoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TestFunction:
    """Closed-form function in C_0(S) with derivatives up to order 4.

    ``derivs(x, k)`` returns the k-th derivative; the cemetery (``nan``) maps
    to 0 for every order.  ``support`` bounds the region where the function
    is not negligible (exact support for compactly supported ones).
    """

    __test__ = False  # not a pytest class

    name: str
    fn: Callable[[np.ndarray, int], np.ndarray] = field(repr=False, compare=False)
    support: tuple[float, float]
    params: tuple = ()

    def derivs(self, x, k: int = 0) -> np.ndarray:
        if not 0 <= k <= 4:
            raise ValueError("derivatives are declared up to order 4")
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(np.nan_to_num(x, nan=0.0), k), dtype=float) * np.ones_like(x)
        return np.where(np.isnan(x), 0.0, out)

    def __call__(self, x):
        return self.derivs(x, 0)

    def d1(self, x):
        return self.derivs(x, 1)

    def d2(self, x):
        return self.derivs(x, 2)

    def d4(self, x):
        return self.derivs(x, 4)

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        return f"{self.name}({','.join(_fmt(v) for _, v in self.params)})"

    def to_config(self) -> dict:
        return {"name": self.name, **{k: list(v) if isinstance(v, tuple) else v
                                      for k, v in self.params}}


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return "[" + ";".join(f"{c:g}" for c in v) + "]"
    return f"{v:g}"


def gaussian_bump(center: float = 0.0, width: float = 1.0) -> TestFunction:
    """``exp(-((x - center)/width)^2)``."""
    center, width = float(center), float(width)

    def fn(x, k):
        u = (x - center) / width
        coef = np.zeros(k + 1)
        coef[k] = 1.0
        return (-1) ** k * hermite.hermval(u, coef) * np.exp(-u * u) / width ** k

    return TestFunction("gaussian_bump", fn, (center - 8 * width, center + 8 * width),
                        (("center", center), ("width", width)))


def _cutoff_poly(radius: float) -> Polynomial:
    return Polynomial([1.0, 0.0, -1.0 / radius ** 2]) ** 5


def poly_bump(coefficients=(1.0,), cutoff: float = 1.0, center: float = 0.0) -> TestFunction:
    """``p(x - center) (1 - ((x - center)/cutoff)^2)^5`` inside the cutoff, 0 outside."""
    cutoff, center = float(cutoff), float(center)
    poly = Polynomial(list(coefficients)) * _cutoff_poly(cutoff)
    ders = [poly.deriv(k) if k else poly for k in range(5)]

    def fn(x, k):
        u = x - center
        return np.where(np.abs(u) < cutoff, ders[k](u), 0.0)

    return TestFunction("poly_bump", fn, (center - cutoff, center + cutoff),
                        (("coefficients", tuple(float(c) for c in coefficients)),
                         ("cutoff", cutoff), ("center", center)))


def trig_bump(frequency: float = 1.0, cutoff: float = 1.0, center: float = 0.0,
              phase: float = 0.0) -> TestFunction:
    """``cos(frequency (x - center) + phase)`` times the quintic cutoff."""
    w, cutoff, center, phase = float(frequency), float(cutoff), float(center), float(phase)
    cut = _cutoff_poly(cutoff)
    cut_d = [cut.deriv(j) if j else cut for j in range(5)]

    def fn(x, k):
        u = x - center
        total = np.zeros_like(u)
        for j in range(k + 1):
            trig = w ** j * np.cos(w * u + phase + j * math.pi / 2)
            total = total + math.comb(k, j) * trig * cut_d[k - j](u)
        return np.where(np.abs(u) < cutoff, total, 0.0)

    return TestFunction("trig_bump", fn, (center - cutoff, center + cutoff),
                        (("frequency", w), ("cutoff", cutoff), ("center", center),
                         ("phase", phase)))


# order-4 smoothstep: C^4 transition from 0 to 1 on [0, 1]
_SMOOTHSTEP = Polynomial([0, 0, 0, 0, 0, 126, -420, 540, -315, 70])


def plateau(lo: float = -1.0, hi: float = 1.0, ramp: float = 0.01) -> TestFunction:
    """Smooth approximation of the indicator of ``[lo, hi]``: equal to 1 there,
    0 outside ``(lo - ramp, hi + ramp)``, C^4 in between."""
    lo, hi, ramp = float(lo), float(hi), float(ramp)
    steps = [_SMOOTHSTEP.deriv(k) if k else _SMOOTHSTEP for k in range(5)]

    def fn(x, k):
        up = (x - (lo - ramp)) / ramp
        down = ((hi + ramp) - x) / ramp
        out = np.where((x >= lo) & (x <= hi), 1.0 if k == 0 else 0.0, 0.0)
        rising = (x > lo - ramp) & (x < lo)
        falling = (x > hi) & (x < hi + ramp)
        out = np.where(rising, steps[k](up) / ramp ** k, out)
        return np.where(falling, steps[k](down) * (-1.0 / ramp) ** k, out)

    return TestFunction("plateau", fn, (lo - ramp, hi + ramp),
                        (("lo", lo), ("hi", hi), ("ramp", ramp)))


def zero_function() -> TestFunction:
    return TestFunction("zero", lambda x, k: np.zeros_like(x), (-1.0, 1.0))


_TEST_FUNCTIONS = {
    "gaussian_bump": gaussian_bump,
    "poly_bump": poly_bump,
    "trig_bump": trig_bump,
    "plateau": plateau,
    "zero": zero_function,
}


def test_function_from_config(spec) -> TestFunction:
    if isinstance(spec, TestFunction):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    kw = dict(spec)
    name = kw.pop("name")
    try:
        return _TEST_FUNCTIONS[name](**kw)
    except KeyError:
        raise ValueError(f"unknown test function {name!r}; known: {', '.join(_TEST_FUNCTIONS)}")


test_function_from_config.__test__ = False


# -- operators ------------------------------------------------------------------


@dataclass(frozen=True)
class GFunction:
    """Named continuous function, the second component of a pair (f, g)."""

    label: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.fn(x), dtype=float) * np.ones_like(x)

    def scaled(self, h, label: str) -> "GFunction":
        return GFunction(f"{label}*{self.label}", lambda x: h(x) * self.fn(x))


@dataclass(frozen=True)
class Pair:
    f: TestFunction
    g: GFunction

    @property
    def label(self) -> str:
        return f"({self.f.label}, {self.g.label})"


@dataclass(frozen=True)
class Operator:
    """A finite subset L of C_0(S) x C(S), stored as (f, g) pairs."""

    pairs: tuple[Pair, ...]
    name: str = "L"

    def __post_init__(self):
        seen = {}
        for p in self.pairs:
            key = (p.f.name, p.f.params)
            if key in seen and seen[key] != p.g.label:
                raise ValueError(f"operator is multivalued at {p.f.label}")
            seen[key] = p.g.label

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    @property
    def domain(self) -> list[TestFunction]:
        return [p.f for p in self.pairs]

    def pair_for(self, f: TestFunction) -> Pair:
        for p in self.pairs:
            if p.f == f:
                return p
        raise KeyError(f.label)


def diffusion_operator(fs, drift: Coefficient | None = None, sigma: Coefficient | None = None,
                       scale: float = 1.0, name: str = "diffusion") -> Operator:
    """Pairs ``(f, scale (b f' + sigma^2 f''/2))``."""

    def make(f):
        def g(x):
            if sigma is not None and not sigma.is_zero:
                s = sigma(x)
                out = 0.5 * f.d2(x) * (s * s)
            else:
                out = np.zeros_like(x)
            if drift is not None and not drift.is_zero:
                out = out + drift(x) * f.d1(x)
            return scale * out

        parts = []
        if drift is not None and not drift.is_zero:
            parts.append(f"{drift.name}*f'")
        if sigma is not None and not sigma.is_zero:
            parts.append(f"{sigma.name}^2*f''/2")
        lab = "+".join(parts) or "0"
        if scale != 1.0:
            lab = f"{scale:g}*({lab})"
        return Pair(f, GFunction(lab, g))

    return Operator(tuple(make(f) for f in fs), name)


def cpoisson_operator(fs, rate: float = 1.0, jump: float = 1.0,
                      name: str = "cpoisson") -> Operator:
    """Pairs ``(f, rate (f(x+j) + f(x-j) - 2 f(x)) / 2)`` for fair ±j jumps."""
    return Operator(tuple(
        Pair(f, GFunction(f"{rate:g}*second_difference({jump:g})/2",
                          lambda x, f=f: rate * (f(x + jump) + f(x - jump) - 2 * f(x)) / 2))
        for f in fs), name)


def chain_operator(fs, n: float, name: str | None = None) -> Operator:
    """Generator of the rate-n random walk with steps ``±n^{-1/2}``."""
    h = 1.0 / math.sqrt(n)
    return Operator(tuple(
        Pair(f, GFunction(f"n*second_difference(n^-1/2)/2[n={n:g}]",
                          lambda x, f=f: n * (f(x + h) + f(x - h) - 2 * f(x)) / 2))
        for f in fs), name or f"chain(n={n:g})")


def custom_operator(pairs, name: str = "custom") -> Operator:
    return Operator(tuple(pairs), name)


def identity_pair(f: TestFunction) -> Pair:
    """The adversarial pair (f, f): violates the maximum principle wherever max f > 0."""
    return Pair(f, GFunction("f", lambda x: f(x)))


def scale_operator(L: Operator, h) -> Operator:
    """``hL = {(f, h g) | (f, g) in L}``."""
    label = getattr(h, "name", "h")
    return Operator(tuple(Pair(p.f, p.g.scaled(h, label)) for p in L.pairs), f"{label}*{L.name}")


@dataclass(frozen=True)
class Violation:
    pair: str
    argmax: float
    f_value: float
    g_value: float


def default_probe_grid(L: Operator, points: int = 4001) -> np.ndarray:
    lo = min(p.f.support[0] for p in L.pairs)
    hi = max(p.f.support[1] for p in L.pairs)
    return np.linspace(lo, hi, points)


def refine_argmax(f: TestFunction, lo: float, hi: float, a0: float) -> float:
    """Root of ``f'`` in ``[lo, hi]`` around the grid argmax ``a0``.

    On a grid, ``f'`` at the argmax is only ``O(step)``, which first-order
    generators turn into spurious positive values; the root removes that.
    """
    d_lo, d_hi = float(f.d1(np.array([lo]))[0]), float(f.d1(np.array([hi]))[0])
    if not (d_lo > 0 > d_hi):
        return a0
    root = brentq(lambda x: float(f.d1(np.array([x]))[0]), lo, hi, xtol=1e-15)
    return root if f(np.array([root]))[0] >= f(np.array([a0]))[0] else a0


def pmp_check(L: Operator, probe_grid=None, tol: float = 1e-9) -> list[Violation]:
    """Positive maximum principle on a probe grid.

    For each pair, at the (first) grid argmax of ``f``, refined to the root of
    ``f'`` between its grid neighbours, ``a0``: if ``f(a0) >= 0`` then
    ``g(a0) <= tol`` is required.  Returns the violations.
    """
    grid = default_probe_grid(L) if probe_grid is None else np.asarray(probe_grid, dtype=float)
    out = []
    for p in L.pairs:
        fv = p.f(grid)
        k = int(np.argmax(fv))
        if k in (0, grid.size - 1):
            if np.ptp(fv) > 0:
                warnings.warn(f"argmax of {p.f.label} on the probe grid boundary",
                              GridBoundaryWarning, stacklevel=2)
            a0 = float(grid[k])
        else:
            a0 = refine_argmax(p.f, float(grid[k - 1]), float(grid[k + 1]), float(grid[k]))
        f0 = float(p.f(np.array([a0]))[0])
        gv = float(p.g(np.array([a0]))[0])
        if f0 >= 0 and gv > tol:
            out.append(Violation(p.label, a0, f0, gv))
    return out


def is_bounded(g: GFunction, core: float = 100.0, reach: float = 1e6) -> bool:
    """Heuristic boundedness check: no growth of |g| from ``[-core, core]`` out to ``reach``."""
    inner = np.linspace(-core, core, 4001)
    outer = np.geomspace(core, reach, 400)
    outer = np.concatenate((-outer, outer))
    gi, go = np.abs(g(inner)), np.abs(g(outer))
    if not (np.all(np.isfinite(gi)) and np.all(np.isfinite(go))):
        return False
    return bool(go.max() <= 10 * gi.max() + 1e-12)
