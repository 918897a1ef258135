"""Built-in path families with known generators, and seeded ensembles.

Every path is a deterministic function of ``(family, start, seed)``.  Path
``i`` of an ensemble uses the seed ``derive_seed(master_seed, i)``, so results
do not depend on how the work is split across workers.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .coefficients import Coefficient, drift_from_config, sigma_from_config
from .operators import (Operator, chain_operator, cpoisson_operator, diffusion_operator)
from .paths import StepPath, write_path_csv
from .time_change import SpeedFunction, apply, speed_from_config

__all__ = [
    "FamilySimulator",
    "TimeChangedFamily",
    "InitialLaw",
    "Ensemble",
    "simulate_ode",
    "simulate_diffusion",
    "simulate_cpoisson",
    "simulate_chain",
    "ensemble",
    "iter_paths",
    "derive_seed",
    "family_from_config",
    "worker_count",
]

_MASK64 = (1 << 64) - 1
START_STREAM = 0x5EED5EED5EED5EED


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of path ``index``: splitmix64 applied to the mixed pair."""
    return _splitmix64(_splitmix64(int(master_seed) & _MASK64) ^ (int(index) & _MASK64))


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("LOCFELL_THREADS", "1")))


# -- Euler kernel -------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _coef(code, p, x):
    if code == 0:
        return 0.0
    if code == 1:
        return p[0]
    if code == 2:
        return p[0] * x
    if code == 3:
        return p[0] * (x * x)
    if code == 4:
        return p[0] * (x * x * x)
    if p[0] < x < p[1]:
        return p[2]
    return p[3]


@numba.njit(cache=True, nogil=True)
def _euler(x0, dt, nsteps, bcode, bp, scode, sp, z, R, runmax_level, runmax_boost):
    """Explicit Euler(-Maruyama) path; returns (values, explosion time or inf).

    The step at which ``|x| >= R`` (or overflow) sets the explosion time and
    its value is not recorded.  ``scode == 0`` skips the noise term entirely.
    """
    vals = np.empty(nsteps + 1)
    vals[0] = x0
    x = x0
    top = x0
    sq = math.sqrt(dt)
    use_max = runmax_boost != 0.0
    for k in range(nsteps):
        b = _coef(bcode, bp, x)
        if use_max and top >= runmax_level:
            b += runmax_boost
        xn = x + b * dt
        if scode != 0:
            xn = xn + _coef(scode, sp, x) * sq * z[k]
        if not abs(xn) < R:
            return vals[:k + 1], (k + 1) * dt
        vals[k + 1] = xn
        x = xn
        if x > top:
            top = x
    return vals, np.inf


# -- families ---------------------------------------------------------------------------


_ZERO = Coefficient("zero", 0)
_ONE = Coefficient("one", 1, (1.0,))
_BLOCK = 256


@dataclass(frozen=True)
class FamilySimulator:
    """A family ``a ↦ P_a`` of path laws, sampled path by path.

    ``kind`` is one of ``ode``, ``diffusion``, ``cpoisson``, ``chain`` or
    ``runmax`` (a diffusion whose drift switches on once the running maximum
    reaches ``level``; not Markov, used as a negative control).
    """

    kind: str
    drift: Coefficient = _ZERO
    sigma: Coefficient | None = None
    rate: float = 1.0
    jump: float = 1.0
    n: float = 1.0
    dt: float = 1e-3
    T: float = 1.0
    R_escape: float = 1e8
    level: float = 0.5
    boost: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ode", "diffusion", "cpoisson", "chain", "runmax"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.sigma is None:
            # diffusions default to unit noise, everything else carries none
            object.__setattr__(self, "sigma", _ONE if self.kind == "diffusion" else _ZERO)
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.rate < 0:
            raise ValueError("jump rate must be nonnegative")
        if self.n < 1:
            raise ValueError("chain scale n must be >= 1")

    @property
    def family_id(self) -> str:
        if self.kind == "ode":
            return f"ode[b={self.drift.name}]"
        if self.kind == "diffusion":
            return f"diffusion[b={self.drift.name},sigma={self.sigma.name}]"
        if self.kind == "cpoisson":
            return f"cpoisson[rate={self.rate:g},jump={self.jump:g}]"
        if self.kind == "chain":
            return f"chain[n={self.n:g}]"
        return f"runmax[level={self.level:g},boost={self.boost:g}]"

    @property
    def deterministic(self) -> bool:
        return self.kind == "ode" or (self.kind == "diffusion" and self.sigma.is_zero)

    def with_horizon(self, T: float) -> "FamilySimulator":
        return replace(self, T=float(T))

    def steps(self) -> int:
        n = int(round(self.T / self.dt))
        return n if abs(n * self.dt - self.T) <= 1e-9 * self.T else int(math.ceil(self.T / self.dt))

    def simulate(self, a, seed: int = 0) -> StepPath:
        a = float("nan") if a is None else float(a)
        if math.isnan(a):
            return StepPath([], [], 0.0)
        if self.kind in ("ode", "diffusion", "runmax"):
            return self._euler_path(a, seed)
        return self._jump_path(a, seed)

    def simulate_batch(self, starts, seeds) -> list[StepPath]:
        cache = {}
        out = []
        for a, s in zip(starts, seeds):
            if self.deterministic:
                key = float(a) if a == a else "delta"
                if key not in cache:
                    cache[key] = self.simulate(a, s)
                out.append(cache[key])
            else:
                out.append(self.simulate(a, s))
        return out

    def _euler_path(self, a: float, seed: int) -> StepPath:
        nsteps = self.steps()
        if self.kind == "runmax":
            drift, sigma = self.drift, _ONE
        else:
            drift = self.drift
            sigma = _ZERO if self.kind == "ode" else self.sigma
        if sigma.is_zero:
            z = np.empty(0)
            scode = 0
        else:
            z = np.random.default_rng(seed).standard_normal(nsteps)
            scode = sigma.code
        boost = self.boost if self.kind == "runmax" else 0.0
        vals, xi = _euler(a, self.dt, nsteps, drift.code, drift.padded_params(), scode,
                          sigma.padded_params(), z, self.R_escape, self.level, boost)
        times = np.arange(vals.size) * self.dt
        if math.isfinite(xi):
            return StepPath._raw(times, vals.copy(), np.diff(np.append(times, xi)), xi,
                                 continuous=True)
        durations = np.append(np.diff(times), math.inf)
        return StepPath._raw(times, vals.copy(), durations, math.inf, continuous=True,
                             horizon=float(times[-1]))

    def _jump_path(self, a: float, seed: int) -> StepPath:
        """Event-driven path from exponential interarrivals.

        Interarrival times and jump signs come from two child streams drawn in
        fixed blocks, so a longer horizon extends the same path.
        """
        if self.kind == "cpoisson":
            intensity, size = self.rate, self.jump
        else:
            intensity, size = self.n, 1.0 / math.sqrt(self.n)
        times = np.empty(0)
        if intensity > 0:
            clock_rng, _ = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
            blocks, total = [], 0.0
            while total <= self.T:
                block = np.cumsum(clock_rng.exponential(1.0 / intensity, _BLOCK)) + total
                blocks.append(block)
                total = block[-1]
            times = np.concatenate(blocks)
            times = times[times < self.T]
        count = times.size
        signs = np.empty(0, dtype=np.int64)
        if count:
            _, sign_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
            nblocks = -(-count // _BLOCK)
            signs = (sign_rng.integers(0, 2, nblocks * _BLOCK)[:count] * 2 - 1)
        values = a + size * np.cumsum(signs)
        times = np.concatenate(([0.0], times))
        values = np.concatenate(([a], values))
        return StepPath(times, values, horizon=self.T)

    def generator(self, fs) -> Operator | None:
        """The operator this family is declared to solve the martingale problem for."""
        if self.kind == "ode":
            return diffusion_operator(fs, self.drift, None, name=self.family_id)
        if self.kind == "diffusion":
            return diffusion_operator(fs, self.drift, self.sigma, name=self.family_id)
        if self.kind == "cpoisson":
            return cpoisson_operator(fs, self.rate, self.jump, name=self.family_id)
        if self.kind == "chain":
            return chain_operator(fs, self.n, name=self.family_id)
        return None

    def to_config(self) -> dict:
        out = {"kind": self.kind, "dt": self.dt, "T": self.T}
        if self.kind in ("ode", "diffusion", "runmax"):
            out["drift"] = self.drift.to_config()
            out["R_escape"] = self.R_escape
        if self.kind == "diffusion":
            out["sigma"] = self.sigma.to_config()
        if self.kind == "cpoisson":
            out.update(rate=self.rate, jump=self.jump)
        if self.kind == "chain":
            out["n"] = self.n
        if self.kind == "runmax":
            out.update(level=self.level, boost=self.boost)
        return out


@dataclass(frozen=True)
class TimeChangedFamily:
    """The family ``a ↦ g·P_a`` observed on ``[0, T]`` of the new clock.

    The base path is simulated on ``[0, base_horizon]`` and the horizon is
    doubled (same seed, so the path is only extended) until the time-changed
    path is faithful up to ``T``, it freezes or explodes, or ``max_doublings``
    is reached.
    """

    base: FamilySimulator
    g: SpeedFunction
    target: float | None = None
    base_horizon: float | None = None
    max_doublings: int = 8

    @property
    def family_id(self) -> str:
        return f"{self.g.name}·{self.base.family_id}"

    @property
    def kind(self) -> str:
        return self.base.kind

    @property
    def deterministic(self) -> bool:
        return self.base.deterministic

    @property
    def T(self) -> float:
        return self.base.T if self.target is None else self.target

    def with_horizon(self, T: float) -> "TimeChangedFamily":
        return replace(self, target=float(T))

    def simulate(self, a, seed: int = 0) -> StepPath:
        H = self.base_horizon or self.base.T
        for _ in range(self.max_doublings + 1):
            path = apply(self.base.with_horizon(H).simulate(a, seed), self.g)
            if path.horizon >= self.T:
                break
            H *= 2
        return path

    def simulate_batch(self, starts, seeds) -> list[StepPath]:
        return [self.simulate(a, s) for a, s in zip(starts, seeds)]

    def generator(self, fs) -> Operator | None:
        from .operators import scale_operator
        L = self.base.generator(fs)
        return None if L is None else scale_operator(L, self.g)

    def to_config(self) -> dict:
        out = {"time_changed": self.base.to_config(), "speed": self.g.to_config()}
        if self.target is not None:
            out["T"] = self.target
        if self.base_horizon is not None:
            out["base_horizon"] = self.base_horizon
        return out


def family_from_config(block: dict) -> FamilySimulator | TimeChangedFamily:
    block = dict(block)
    if "time_changed" in block:
        return TimeChangedFamily(family_from_config(block["time_changed"]),
                                 speed_from_config(block["speed"]), block.get("T"),
                                 block.get("base_horizon"))
    kind = block.pop("kind")
    kw = {}
    if "drift" in block:
        kw["drift"] = drift_from_config(block.pop("drift"))
    if "sigma" in block:
        kw["sigma"] = sigma_from_config(block.pop("sigma"))
    for key in ("rate", "jump", "n", "dt", "T", "R_escape", "level", "boost"):
        if key in block:
            kw[key] = float(block.pop(key))
    if block:
        raise ValueError(f"unknown family keys: {sorted(block)}")
    return FamilySimulator(kind, **kw)


# -- function-style entry points -------------------------------------------------------


def simulate_ode(b, a, dt: float = 1e-3, T: float = 1.0, R_escape: float = 1e8) -> StepPath:
    return FamilySimulator("ode", drift=drift_from_config(b), dt=dt, T=T,
                           R_escape=R_escape).simulate(a)


def simulate_diffusion(b, sigma, a, dt: float = 1e-3, T: float = 1.0, seed: int = 0,
                       R_escape: float = 1e8) -> StepPath:
    return FamilySimulator("diffusion", drift=drift_from_config(b), sigma=sigma_from_config(sigma),
                           dt=dt, T=T, R_escape=R_escape).simulate(a, seed)


def simulate_cpoisson(rate: float, a, T: float = 1.0, seed: int = 0, jump: float = 1.0) -> StepPath:
    return FamilySimulator("cpoisson", rate=rate, jump=jump, T=T).simulate(a, seed)


def simulate_chain(n: float, a, T: float = 1.0, seed: int = 0) -> StepPath:
    return FamilySimulator("chain", n=n, T=T).simulate(a, seed)


# -- initial laws and ensembles ---------------------------------------------------------


@dataclass(frozen=True)
class InitialLaw:
    """Finite mixture of point masses; ``None``/``nan`` stands for the cemetery."""

    points: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.points) != w.size or w.size == 0:
            raise ValueError("need one weight per point")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")

    @classmethod
    def dirac(cls, a) -> "InitialLaw":
        return cls((a,), (1.0,))

    @classmethod
    def from_config(cls, spec) -> "InitialLaw":
        if isinstance(spec, InitialLaw):
            return spec
        if spec is None or isinstance(spec, (int, float)):
            return cls.dirac(spec)
        if "dirac" in spec:
            return cls.dirac(spec["dirac"])
        return cls(tuple(spec["points"]), tuple(float(w) for w in spec["weights"]))

    def to_config(self):
        return {"points": list(self.points), "weights": list(self.weights)}

    def sample(self, N: int, seed: int) -> np.ndarray:
        pts = np.array([np.nan if p is None else float(p) for p in self.points])
        if pts.size == 1:
            return np.full(N, pts[0])
        rng = np.random.default_rng(seed)
        return pts[rng.choice(pts.size, size=N, p=np.asarray(self.weights, dtype=float))]


@dataclass
class Ensemble:
    """N seeded sample paths of a family from an initial law."""

    paths: list[StepPath]
    family_id: str
    init: InitialLaw
    master_seed: int
    seeds: list[int]
    horizon: float
    transforms: tuple[str, ...] = ()
    starts: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def with_paths(self, paths, transform: str) -> "Ensemble":
        """Same seeds and law, new paths; the horizon becomes the smallest path horizon."""
        paths = list(paths)
        horizon = min((p.horizon for p in paths), default=math.inf)
        return replace(self, paths=paths, transforms=self.transforms + (transform,),
                       horizon=float(horizon))

    def dump(self, directory) -> Path:
        """Write one CSV per path and a ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for i, p in enumerate(self.paths):
            name = f"path_{i:06d}.csv"
            write_path_csv(p, directory / name)
            files.append(name)
        manifest = {
            "family": self.family_id, "init": self.init.to_config(),
            "master_seed": self.master_seed, "N": len(self.paths),
            "seeds": [str(s) for s in self.seeds], "horizon": self.horizon,
            "transforms": list(self.transforms), "files": files,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
        return directory


def _plan(init: InitialLaw, N: int, master_seed: int):
    starts = init.sample(N, derive_seed(master_seed, START_STREAM))
    seeds = [derive_seed(master_seed, i) for i in range(N)]
    return starts, seeds


def ensemble(fam, init, N: int, master_seed: int = 0, workers: int | None = None) -> Ensemble:
    """Simulate ``N`` paths from ``init``; identical for every worker count."""
    if N < 1:
        raise ValueError("N must be >= 1")
    init = InitialLaw.from_config(init)
    starts, seeds = _plan(init, N, master_seed)
    nw = worker_count(workers)
    if nw == 1 or N < 64:
        paths = fam.simulate_batch(starts, seeds)
    else:
        chunk = max(16, -(-N // (4 * nw)))
        bounds = [(i, min(i + chunk, N)) for i in range(0, N, chunk)]
        with ThreadPoolExecutor(max_workers=nw) as pool:
            parts = pool.map(lambda b: fam.simulate_batch(starts[b[0]:b[1]], seeds[b[0]:b[1]]),
                             bounds)
            paths = [p for part in parts for p in part]
    return Ensemble(paths, fam.family_id, init, int(master_seed), seeds, float(fam.T),
                    starts=starts)


def iter_paths(fam, init, N: int, master_seed: int = 0):
    """Stream the same paths ``ensemble`` would build, without keeping them."""
    init = InitialLaw.from_config(init)
    starts, seeds = _plan(init, N, master_seed)
    for a, s in zip(starts, seeds):
        yield fam.simulate(a, s)
