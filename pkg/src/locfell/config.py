"""Experiment configuration: JSON schema, line-anchored errors, object builders."""

from __future__ import annotations

import json
from dataclasses import dataclass
from json.decoder import scanstring
from pathlib import Path

import jsonschema

from .coefficients import DRIFTS, SIGMAS
from .operators import TestFunction, test_function_from_config
from .simulators import FamilySimulator, TimeChangedFamily, family_from_config
from .state_space import OpenInterval, StateSpace
from .time_change import SPEED_NAMES, SpeedFunction, speed_from_config

__all__ = ["ConfigError", "EXPERIMENT_TYPES", "SCHEMA", "load_config", "parse_config",
           "Config", "build_config"]


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` starts with ``file:line:``."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_intervals = {"type": "array", "items": _interval, "minItems": 1}
_name = {"type": "string"}
_names = {"type": "array", "items": _name, "minItems": 1}


def _coef(names):
    return {"anyOf": [
        {"type": "string", "enum": list(names)},
        {"type": "object", "required": ["name"],
         "properties": {"name": {"enum": list(names)}}},
    ]}


_tf = {"anyOf": [
    {"type": "string", "enum": ["gaussian_bump", "poly_bump", "trig_bump", "plateau", "zero"]},
    {"type": "object", "required": ["name"],
     "properties": {"name": {"enum": ["gaussian_bump", "poly_bump", "trig_bump", "plateau",
                                      "zero"]}}},
]}
_tfs = {"type": "array", "items": _tf, "minItems": 1}
_speed = {"type": "object", "required": ["name"], "properties": {"name": {"enum": list(SPEED_NAMES)}}}
_init = {"anyOf": [
    {"type": ["number", "null"]},
    {"type": "object", "additionalProperties": False, "required": ["dirac"],
     "properties": {"dirac": {"type": ["number", "null"]}}},
    {"type": "object", "additionalProperties": False, "required": ["points", "weights"],
     "properties": {"points": {"type": "array", "items": {"type": ["number", "null"]}},
                    "weights": {"type": "array", "items": _num}}},
]}

_base_family = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["ode", "diffusion", "cpoisson", "chain", "runmax"]},
        "drift": _coef(DRIFTS), "sigma": _coef(SIGMAS),
        "rate": {"type": "number", "minimum": 0}, "jump": _num, "n": {"type": "number", "minimum": 1},
        "dt": _pos, "T": _pos, "R_escape": _pos, "level": _num, "boost": _num,
    },
}
_family = {"anyOf": [
    _base_family,
    {"type": "object", "additionalProperties": False, "required": ["time_changed", "speed"],
     "properties": {"time_changed": _base_family, "speed": _speed, "T": _pos,
                    "base_horizon": _pos}},
]}

_common = {"type": {"type": "string"}, "name": _name, "expect": {"enum": ["accept", "reject"]},
           "seed": {"type": "integer", "minimum": 0}}


def _exp(required, **props):
    return {"type": "object", "additionalProperties": False,
            "required": ["type"] + list(required), "properties": {**_common, **props}}


EXPERIMENT_SCHEMAS = {
    "pmp": _exp(["family", "functions"], family=_name, functions=_tfs,
                adversarial={"type": "boolean"}, grid_points={"type": "integer", "minimum": 3}),
    "martingale": _exp(["family", "functions", "opens", "times", "N"],
                       family=_name, functions=_tfs, opens=_intervals, times=_intervals,
                       N=_count, init=_init, scale=_num, time_change=_speed,
                       weights={"type": "array", "items": {
                           "type": "object", "additionalProperties": False,
                           "required": ["s", "phi"], "properties": {"s": _num, "phi": _tf}}}),
    "generator": _exp(["family", "a", "function", "opens", "t", "N"],
                      family=_name, a=_num, function=_tf, opens=_intervals,
                      t={"type": "array", "items": _pos, "minItems": 1}, N=_count,
                      expected=_num, max_half_width=_pos),
    "semigroup": _exp(["family", "function", "t", "probe", "N"], family=_name, function=_tf,
                      t={"type": "number", "minimum": 0}, probe={"type": "array", "items": _num},
                      N=_count, expected={"type": "array", "items": _num}),
    "feller_tail": _exp(["family", "K", "t", "a_sequence", "N"], family=_name, K=_interval,
                        t=_pos, a_sequence={"type": "array", "items": _num, "minItems": 1},
                        N=_count, threshold=_pos),
    "quasi_continuity": _exp(["family", "t", "N"], family=_name, t=_pos, N=_count, init=_init),
    "markov": _exp(["family", "stopping", "bin", "function", "u", "N"], family=_name,
                   stopping={"type": "object", "additionalProperties": False,
                             "properties": {"exit": _interval, "time": _pos}},
                   bin=_interval, function=_tf, u=_pos, N=_count, init=_init,
                   min_hits=_count),
    "operator_convergence": _exp(["families", "limit", "functions", "compacts"],
                                 families=_names, limit=_name, functions=_tfs,
                                 compacts=_intervals, ratio=_interval),
    "law_convergence": _exp(["families", "limit", "functions", "times", "N"],
                            families=_names, limit=_name, functions=_tfs,
                            times={"type": "array", "items": _pos, "minItems": 1},
                            exit=_interval, N=_count, init=_init,
                            distance_sample={"type": "integer", "minimum": 0}),
    "localisation": _exp(["family_a", "family_b", "U", "functions", "times", "N"],
                         family_a=_name, family_b=_name, U=_interval, functions=_tfs,
                         times={"type": "array", "items": _pos, "minItems": 1}, N=_count,
                         init=_init),
    "timechange_demo": _exp(["family", "speed", "K", "t", "a_sequence", "N"], family=_name,
                            speed=_speed, K=_interval, t=_pos,
                            a_sequence={"type": "array", "items": _num, "minItems": 1},
                            N=_count, functions=_tfs, opens=_intervals, times=_intervals,
                            init=_init),
    "tightness": _exp(["families", "eps", "t", "U", "deltas", "N"], families=_names,
                      eps=_pos, t=_pos, U=_interval,
                      deltas={"type": "array", "items": _pos, "minItems": 1}, N=_count,
                      init=_init, tol=_pos),
}
EXPERIMENT_TYPES = tuple(EXPERIMENT_SCHEMAS)

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "space": {"type": "object", "additionalProperties": False,
                  "properties": {"kind": {"enum": ["real_line", "interval", "grid"]},
                                 "delta_chart": {"enum": ["rational", "truncated"]},
                                 "exhaustion_step": _pos, "lo": _num, "hi": _num,
                                 "grid_step": _pos}},
        "family": _family,
        "families": {"type": "object", "additionalProperties": _family},
        "experiments": {"type": "array",
                        "items": {"type": "object", "required": ["type"],
                                  "properties": {"type": {"enum": list(EXPERIMENT_TYPES)}}}},
    },
}


# -- line anchoring ----------------------------------------------------------------------


def _positions(text: str) -> dict[tuple, int]:
    """Offset of every key (or list item) in a JSON document, keyed by path."""
    out: dict[tuple, int] = {}
    decoder = json.JSONDecoder()

    def ws(i):
        while i < len(text) and text[i] in " \t\r\n":
            i += 1
        return i

    def value(i, path):
        i = ws(i)
        if text[i] == "{":
            i = ws(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                start = ws(i)
                key, i = scanstring(text, start + 1)
                out[path + (key,)] = start
                i = ws(i)
                i = value(i + 1, path + (key,))
                i = ws(i)
                if text[i] == "}":
                    return i + 1
                i += 1
        if text[i] == "[":
            i = ws(i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = ws(i)
                out[path + (k,)] = i
                i = ws(value(i, path + (k,)))
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = decoder.raw_decode(text, i)
        return end

    value(0, ())
    return out


def _line(text: str, positions, path) -> int:
    path = tuple(path)
    while path and path not in positions:
        path = path[:-1]
    if not path:
        return 1
    return text.count("\n", 0, positions[path]) + 1


def _anchor(source: str, text: str, positions, path, message: str) -> ConfigError:
    return ConfigError(f"{source}:{_line(text, positions, path)}: {message}")


def _schema_error(source, text, positions, err, prefix=()) -> ConfigError:
    path = prefix + tuple(err.absolute_path)
    msg = err.message
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        known = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in known)
        if extra:
            path = path + (extra[0],)
            msg = f"unknown key {extra[0]!r}"
    elif err.validator == "anyOf" and err.context:
        best = max(err.context, key=lambda e: len(e.absolute_path))
        return _schema_error(source, text, positions, best, prefix)
    at = "/".join(str(p) for p in path) or "<root>"
    return _anchor(source, text, positions, path, f"{at}: {msg}")


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse and validate; raises :class:`ConfigError` with a ``file:line:`` prefix."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    positions = _positions(text)
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise _schema_error(source, text, positions, errors[0])
    for k, exp in enumerate(cfg.get("experiments", [])):
        v = jsonschema.Draft7Validator(EXPERIMENT_SCHEMAS[exp["type"]])
        errors = sorted(v.iter_errors(exp), key=lambda e: list(map(str, e.absolute_path)))
        if errors:
            raise _schema_error(source, text, positions, errors[0], ("experiments", k))
    try:
        build_config(cfg)
    except ConfigError as exc:
        path, msg = exc.args
        at = "/".join(str(p) for p in path)
        raise _anchor(source, text, positions, path, f"{at}: {msg}") from None
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:1: cannot read: {exc.strerror}") from None
    return parse_config(text, str(path))


# -- building -------------------------------------------------------------------------------


@dataclass
class Config:
    raw: dict
    seed: int
    space: StateSpace
    families: dict[str, FamilySimulator | TimeChangedFamily]
    experiments: list[dict]


def _build(path, fn, *args):
    try:
        return fn(*args)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(path, str(exc)) from None


def build_config(cfg: dict) -> Config:
    """Resolve every dictionary name; errors carry the offending config path."""
    space = _build(("space",), StateSpace.from_config, cfg.get("space"))
    families = {}
    if "family" in cfg:
        families["family"] = _build(("family",), family_from_config, cfg["family"])
    for name, block in cfg.get("families", {}).items():
        families[name] = _build(("families", name), family_from_config, block)
    exps = []
    for k, exp in enumerate(cfg.get("experiments", [])):
        where = ("experiments", k)
        for key in ("family", "family_a", "family_b", "limit"):
            if key in exp and exp[key] not in families:
                raise ConfigError(where + (key,), f"unknown family {exp[key]!r}")
        for name in exp.get("families", []):
            if name not in families:
                raise ConfigError(where + ("families",), f"unknown family {name!r}")
        for key in ("functions",):
            for j, spec in enumerate(exp.get(key, [])):
                _build(where + (key, j), test_function_from_config, spec)
        for key in ("function",):
            if key in exp:
                _build(where + (key,), test_function_from_config, exp[key])
        for key in ("speed", "time_change"):
            if key in exp:
                _build(where + (key,), speed_from_config, exp[key])
        for key in ("opens", "compacts"):
            for j, (lo, hi) in enumerate(exp.get(key, [])):
                if not lo < hi:
                    raise ConfigError(where + (key, j), "interval needs lo < hi")
        exps.append(exp)
    return Config(cfg, int(cfg.get("seed", 0)), space, families, exps)


def functions(specs) -> list[TestFunction]:
    return [test_function_from_config(s) for s in specs]


def intervals(specs) -> list[OpenInterval]:
    return [OpenInterval(float(lo), float(hi)) for lo, hi in specs]


def speed(spec) -> SpeedFunction:
    return speed_from_config(spec)
