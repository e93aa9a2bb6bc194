import json
import math

import numpy as np
import pytest

from fracap.config import DEFAULTS, PRESETS, ConfigError, compile_expression, load_config, merge, validate_config


@pytest.mark.parametrize("text,ref", [
    ("20*(x-0.5)**2", lambda x: 20 * (x - 0.5) ** 2),
    ("1.5*sin(3*pi*x)", lambda x: 1.5 * np.sin(3 * np.pi * x)),
    ("10*x*(x-1)", lambda x: 10 * x * (x - 1)),
    ("abs(cos(x)) + pow(x, 3) - -x", lambda x: np.abs(np.cos(x)) + x**3 + x),
    ("2", lambda x: np.full_like(x, 2.0)),
])
def test_expressions(text, ref):
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(compile_expression(text)(x), ref(x), rtol=1e-15)


@pytest.mark.parametrize("text", ["__import__('os')", "exp(x)", "x.real", "y + 1", "x if x else 1",
                                  "lambda: 1", "[x]", "sin(x, k=1)", "1 +", "'a'", "True"])
def test_rejected_expressions(text):
    with pytest.raises(ConfigError):
        compile_expression(text)


def test_non_finite_expression():
    f = compile_expression("1/x")
    with pytest.raises(ConfigError):
        f(np.array([0.0, 0.5]))


def test_merge_and_presets():
    out = merge({"a": {"b": 1, "c": 2}, "l": [1]}, {"a": {"b": 5}, "l": [2, 3]})
    assert out == {"a": {"b": 5, "c": 2}, "l": [2, 3]}
    for name in PRESETS:
        validate_config(merge(DEFAULTS, PRESETS[name]))
    cfg = load_config(preset="reproduce-p0")
    assert cfg["problem"]["beta"] == 0.5 and cfg["problem"]["p"] == 0.0


@pytest.mark.parametrize("bad", [
    {"mesh": {"n": 1}},
    {"mesh": {"a": 1, "b": 0}},
    {"problem": {"p": 1.0}},
    {"problem": {"alpha": 0}},
    {"schedule": {"factor": 1.5}},
    {"unknown": 1},
    {"space": {"s": "0.1"}},
    {"output": {"formats": ["xml"]}},
])
def test_invalid_configs(bad, tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(ConfigError):
        load_config(path)


def test_unreadable_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(path)


def test_user_overrides_preset(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"mesh": {"n": 64}, "problem": {"w_d_expression": "x"}}))
    cfg = load_config(path, "reproduce-1d")
    assert cfg["mesh"]["n"] == 64 and cfg["problem"]["w_d_expression"] == "x"
    assert math.isclose(cfg["problem"]["p"], 0.5)
