"""State spaces, the cemetery point and metrics on the one-point compactification.

Interior points are plain floats.  The cemetery is the module-level singleton
:data:`DELTA`; inside numpy arrays it is encoded as ``nan``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DELTA",
    "Delta",
    "OpenInterval",
    "StateSpace",
    "is_delta",
    "to_coord",
    "from_coord",
]


class Delta:
    """The cemetery point added to S; absorbing after explosion."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DELTA"

    def __reduce__(self):
        return (Delta, ())


DELTA = Delta()


def is_delta(a) -> bool:
    if a is DELTA:
        return True
    try:
        return math.isnan(a)
    except TypeError:
        return False


def to_coord(a) -> float:
    """Float encoding of a state point (``nan`` for the cemetery)."""
    return math.nan if is_delta(a) else float(a)


def from_coord(x: float):
    return DELTA if math.isnan(x) else float(x)


@dataclass(frozen=True)
class OpenInterval:
    """Open interval ``(lo, hi)``; infinite bounds allowed."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")

    def contains(self, a) -> bool:
        if is_delta(a):
            return False
        return self.lo < a < self.hi

    __contains__ = contains

    def contains_array(self, x: np.ndarray) -> np.ndarray:
        # nan compares False, so the cemetery is never inside
        return (x > self.lo) & (x < self.hi)

    def is_subset(self, other: "OpenInterval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    @property
    def label(self) -> str:
        return f"({self.lo:g},{self.hi:g})"

    @classmethod
    def parse(cls, spec) -> "OpenInterval":
        """Accept ``[lo, hi]`` lists, ``{"lo":..,"hi":..}`` dicts or instances."""
        if isinstance(spec, OpenInterval):
            return spec
        if isinstance(spec, dict):
            return cls(float(spec["lo"]), float(spec["hi"]))
        lo, hi = spec
        return cls(float(lo), float(hi))


# metric modes understood by the compiled distance kernel
PHI_CHART = 0
TRUNCATED = 1


@dataclass(frozen=True)
class StateSpace:
    """One-dimensional state space S with its compactification S ∪ {Δ}.

    ``kind`` is ``"real_line"``, ``"interval"`` (open interval ``(lo, hi)``,
    the cemetery sits at both ends) or ``"grid"`` (finite lattice
    ``lo, lo+step, ..., hi``; compact, so the cemetery is isolated).

    The metric is always the quotient ``d(a,b) = min(base(a,b), rho(a)+rho(b))``
    with ``d(a, Δ) = rho(a)``, where ``rho`` is 1-Lipschitz for ``base``; this
    keeps the triangle inequality across the glued point.
    """

    kind: str = "real_line"
    delta_chart: str = "rational"
    exhaustion_step: float = 1.0
    lo: float = -math.inf
    hi: float = math.inf
    grid_step: float = 1.0

    def __post_init__(self):
        if self.kind not in ("real_line", "interval", "grid"):
            raise ValueError(f"unknown state space kind {self.kind!r}")
        if self.delta_chart not in ("rational", "truncated"):
            raise ValueError(f"unknown delta chart {self.delta_chart!r}")
        if self.exhaustion_step <= 0:
            raise ValueError("exhaustion_step must be positive")
        if self.kind == "real_line":
            object.__setattr__(self, "lo", -math.inf)
            object.__setattr__(self, "hi", math.inf)
        elif not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"{self.kind} space needs finite lo < hi")
        if self.kind == "grid" and self.grid_step <= 0:
            raise ValueError("grid_step must be positive")

    # -- configuration --------------------------------------------------

    @classmethod
    def from_config(cls, block: dict | None) -> "StateSpace":
        block = dict(block or {})
        kind = block.pop("kind", "real_line")
        if kind == "real_line":
            block.pop("lo", None)
            block.pop("hi", None)
        return cls(kind=kind, **block)

    def to_config(self) -> dict:
        out = {"kind": self.kind, "delta_chart": self.delta_chart,
               "exhaustion_step": self.exhaustion_step}
        if self.kind != "real_line":
            out.update(lo=self.lo, hi=self.hi)
        if self.kind == "grid":
            out["grid_step"] = self.grid_step
        return out

    # -- membership -----------------------------------------------------

    @property
    def metric_mode(self) -> int:
        if self.kind == "real_line" and self.delta_chart == "rational":
            return PHI_CHART
        return TRUNCATED

    def in_space(self, a) -> bool:
        if is_delta(a):
            return False
        if self.kind == "real_line":
            return math.isfinite(a)
        if self.kind == "interval":
            return self.lo < a < self.hi
        k = (a - self.lo) / self.grid_step
        return self.lo <= a <= self.hi and abs(k - round(k)) < 1e-9

    def grid_points(self) -> np.ndarray:
        if self.kind != "grid":
            raise ValueError("grid_points only exists for grid spaces")
        m = int(round((self.hi - self.lo) / self.grid_step))
        return self.lo + self.grid_step * np.arange(m + 1)

    def exhaustion(self, n: int) -> OpenInterval:
        """U_n: increasing relatively compact open sets covering S."""
        if n < 1:
            raise ValueError("exhaustion index starts at 1")
        if self.kind == "real_line":
            r = n * self.exhaustion_step
            return OpenInterval(-r, r)
        if self.kind == "interval":
            w = (self.hi - self.lo) / (2 * (n + 1))
            return OpenInterval(self.lo + w, self.hi - w)
        m = int(round((self.hi - self.lo) / self.grid_step))
        layers = max(0, m // 2 - n)
        h = self.grid_step
        return OpenInterval(self.lo + (layers - 0.5) * h, self.hi - (layers - 0.5) * h)

    def contains(self, U, a) -> bool:
        """``a ∈ U``; ``U`` is an :class:`OpenInterval` or an exhaustion index."""
        if isinstance(U, int):
            U = self.exhaustion(U)
        return U.contains(a)

    # -- metric ---------------------------------------------------------

    def _chart(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(coordinate used by the base distance, distance to the cemetery)."""
        x = np.asarray(x, dtype=float)
        if self.metric_mode == PHI_CHART:
            phi = x / (1.0 + np.abs(x))
            rho = 1.0 - np.abs(phi)
            return phi, np.where(np.isnan(x), 0.0, rho)
        if self.kind == "real_line":
            rho = 1.0 / (1.0 + np.abs(x))
        elif self.kind == "interval":
            rho = np.minimum(1.0, np.minimum(x - self.lo, self.hi - x))
        else:
            rho = np.ones_like(x)
        return x, np.where(np.isnan(x), 0.0, rho)

    def chart_arrays(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self._chart(x)

    def metric_array(self, xa, xb) -> np.ndarray:
        ca, ra = self._chart(xa)
        cb, rb = self._chart(xb)
        diff = np.abs(ca - cb)
        if self.metric_mode == TRUNCATED:
            diff = np.minimum(diff, 1.0)
        d = np.minimum(diff, ra + rb)
        da, db = np.isnan(ca), np.isnan(cb)
        d = np.where(da & ~db, rb, d)
        d = np.where(db & ~da, ra, d)
        return np.where(da & db, 0.0, d)

    def metric(self, a, b) -> float:
        """Distance on S ∪ {Δ}, bounded by 1."""
        return float(self.metric_array(to_coord(a), to_coord(b)))

    def delta_distance(self, a) -> float:
        return self.metric(a, DELTA)
