"""JSON experiment configs: schema, presets and a restricted expression language for targets."""

from __future__ import annotations

import ast
import copy
import json
import math
from pathlib import Path

import jsonschema
import numpy as np

__all__ = [
    "ConfigError",
    "compile_expression",
    "CONFIG_SCHEMA",
    "REPORT_SCHEMA",
    "PRESETS",
    "load_config",
    "merge",
    "validate_config",
]


class ConfigError(ValueError):
    pass


_FUNCS = {"sin": np.sin, "cos": np.cos, "abs": np.abs, "pow": np.power}
_CONSTS = {"pi": math.pi}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_UNARY = {ast.USub: np.negative, ast.UAdd: np.positive}


def _eval(node, x):
    if isinstance(node, ast.Expression):
        return _eval(node.body, x)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id == "x":
            return x
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ConfigError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, x), _eval(node.right, x))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval(node.operand, x))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
        return _FUNCS[node.func.id](*(_eval(a, x) for a in node.args))
    raise ConfigError(f"unsupported syntax in expression: {ast.dump(node)[:60]}")


def compile_expression(text: str):
    """Turn e.g. ``"1.5*sin(3*pi*x)"`` into a vectorised function of ``x``.

    Only numbers, ``x``, ``pi``, ``+ - * / **`` and ``sin, cos, abs, pow`` are accepted.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    probe = np.linspace(0.0, 1.0, 3)
    with np.errstate(all="ignore"):
        _eval(tree, probe)

    def func(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(_eval(tree, x), dtype=float), x.shape).copy()
        if not np.all(np.isfinite(out)):
            raise ConfigError(f"expression {text!r} is not finite on the mesh")
        return out

    func.__name__ = text
    return func


_interval = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_node_set = {"type": "array", "items": _interval}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a": {"type": "number"},
                "b": {"type": "number"},
                "n": {"type": "integer", "minimum": 2},
            },
        },
        "space": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"type": "string"},
                "s": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "p": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "w_d_expression": {"type": "string"},
            },
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps0": {"type": "number", "exclusiveMinimum": 0},
                "factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eps_min": {"type": "number", "minimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "init": {"enum": ["target", "zero"]},
                "inner_loop": {"type": "boolean"},
            },
        },
        "capacity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sets": {"type": "array", "items": _node_set},
                "refinement": {"type": "array", "items": {"type": "integer", "minimum": 2}},
            },
        },
        "gamma": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "block": _node_set,
                "base": {"type": "number", "exclusiveMinimum": 0},
                "exponents": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "include_infinite_limit": {"type": "boolean"},
                "rhs_expressions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
    },
}

_number_list = {"type": "array", "items": {"type": ["number", "null"]}}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command", "config"],
    "properties": {
        "command": {"type": "string"},
        "config": {"type": "object"},
        "runs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "scalars", "histories", "optimality"],
                "properties": {
                    "name": {"type": "string"},
                    "scalars": {"type": "object", "required": ["converged", "iterations", "eps_K"]},
                    "histories": {
                        "type": "object",
                        "required": ["eps", "objective", "step"],
                        "additionalProperties": _number_list,
                    },
                    "optimality": {"type": "object"},
                },
            },
        },
        "criteria": {"type": "object", "additionalProperties": {"type": "boolean"}},
    },
}

DEFAULTS = {
    "mesh": {"a": 0.0, "b": 1.0, "n": 512},
    "space": {"kind": "integral_tilde", "s": 0.1},
    "problem": {"alpha": 1.0, "beta": 1.0, "p": 0.5, "w_d_expression": "20*(x-0.5)**2"},
    "schedule": {
        "eps0": 1.0,
        "factor": 0.4,
        "eps_min": 1e-8,
        "tol": 1e-10,
        "max_iter": 1000,
        "init": "target",
        "inner_loop": False,
    },
    "capacity": {"sets": [[[0.2, 0.4]], [[0.1, 0.5]], [[0.6, 0.8]], [[0.2, 0.4], [0.6, 0.8]]],
                 "refinement": [32, 64, 128, 256]},
    "gamma": {
        "block": [[0.3, 0.6]],
        "base": 10.0,
        "exponents": [0, 1, 2, 3, 4],
        "include_infinite_limit": True,
        "rhs_expressions": ["sin(pi*x)", "x", "1+cos(2*pi*x)"],
    },
    "output": {"dir": "out", "formats": ["csv", "json"]},
}

PRESETS = {
    "reproduce-1d": {
        "space": {"kind": "integral_tilde", "s": 0.1},
        "problem": {"alpha": 1.0, "beta": 1.0, "p": 0.5, "w_d_expression": "20*(x-0.5)**2"},
    },
    "reproduce-spaces": {
        "space": {"kind": "integral_tilde", "s": 0.1},
        "problem": {"alpha": 1.0, "beta": 1.0, "p": 0.05, "w_d_expression": "1.5*sin(3*pi*x)"},
    },
    "reproduce-p0": {
        "space": {"kind": "integral_tilde", "s": 0.1},
        "problem": {"alpha": 1.0, "beta": 0.5, "p": 0.0, "w_d_expression": "10*x*(x-1)"},
    },
}


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``override`` wins, lists are replaced."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    mesh = cfg.get("mesh", {})
    if "a" in mesh and "b" in mesh and not mesh["a"] < mesh["b"]:
        raise ConfigError("mesh needs a < b")


def load_config(path=None, preset: str | None = None) -> dict:
    """Defaults, then the preset, then the user file."""
    cfg = copy.deepcopy(DEFAULTS)
    if preset is not None:
        cfg = merge(cfg, PRESETS[preset])
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        validate_config(user)
        cfg = merge(cfg, user)
    validate_config(cfg)
    return cfg
