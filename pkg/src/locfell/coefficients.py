"""Closed-form drift and diffusion coefficients used by the simulators.

Each coefficient carries an integer code so the compiled Euler kernel can
evaluate it; the numpy evaluation below uses the same arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Coefficient", "drift_from_config", "sigma_from_config", "DRIFTS", "SIGMAS"]

ZERO, CONST, LINEAR, SQUARE, CUBE, STEP = range(6)


@dataclass(frozen=True)
class Coefficient:
    name: str
    code: int
    params: tuple[float, ...] = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.code == ZERO:
            return np.zeros_like(x)
        if self.code == CONST:
            return np.full_like(x, p[0])
        if self.code == LINEAR:
            return p[0] * x
        if self.code == SQUARE:
            return p[0] * (x * x)
        if self.code == CUBE:
            return p[0] * (x * x * x)
        inside = (x > p[0]) & (x < p[1])
        return np.where(inside, p[2], p[3])

    @property
    def is_zero(self) -> bool:
        return self.code == ZERO or (self.code == CONST and self.params[0] == 0.0)

    def padded_params(self) -> np.ndarray:
        out = np.zeros(4)
        out[:len(self.params)] = self.params
        return out

    def to_config(self):
        keys = _PARAM_NAMES[self.name]
        if not keys:
            return self.name
        return {"name": self.name, **dict(zip(keys, self.params))}


_PARAM_NAMES = {
    "zero": (), "one": (), "const": ("c",), "linear": ("k",), "square": ("c",),
    "neg_cube": (), "cube": ("c",), "step": ("lo", "hi", "inside", "outside"),
}


def _build(name: str, **kw) -> Coefficient:
    if name == "zero":
        return Coefficient("zero", ZERO)
    if name == "one":
        return Coefficient("one", CONST, (1.0,))
    if name == "const":
        return Coefficient("const", CONST, (float(kw.get("c", 1.0)),))
    if name == "linear":
        return Coefficient("linear", LINEAR, (float(kw.get("k", -1.0)),))
    if name == "square":
        return Coefficient("square", SQUARE, (float(kw.get("c", 1.0)),))
    if name == "neg_cube":
        return Coefficient("neg_cube", CUBE, (-1.0,))
    if name == "cube":
        return Coefficient("cube", CUBE, (float(kw.get("c", 1.0)),))
    if name == "step":
        return Coefficient("step", STEP, (float(kw.get("lo", -1.0)), float(kw.get("hi", 1.0)),
                                          float(kw.get("inside", 0.0)),
                                          float(kw.get("outside", 0.0))))
    raise ValueError(f"unknown coefficient {name!r}; known: {', '.join(_PARAM_NAMES)}")


DRIFTS = tuple(_PARAM_NAMES)
SIGMAS = ("zero", "one", "const")


def _from_config(spec, allowed) -> Coefficient:
    if isinstance(spec, Coefficient):
        return spec
    if isinstance(spec, str):
        name, kw = spec, {}
    else:
        kw = dict(spec)
        name = kw.pop("name")
    if name not in allowed:
        raise ValueError(f"unknown coefficient {name!r}; known: {', '.join(allowed)}")
    return _build(name, **kw)


def drift_from_config(spec) -> Coefficient:
    return _from_config(spec, DRIFTS)


def sigma_from_config(spec) -> Coefficient:
    return _from_config(spec, SIGMAS)
