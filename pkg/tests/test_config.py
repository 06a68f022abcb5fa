import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullflow import expr
from nullflow.config import RunConfig, build_config, load_config, parse_override
from nullflow.errors import ConfigError
from nullflow.sphere import SphereGrid


def test_expression_values():
    grid = SphereGrid(8, 4)
    th, ph = grid.mesh
    out = expr.evaluate("3 + 0.3*cos(theta) - sin(phi)*2", grid)
    assert np.allclose(out, 3 + 0.3 * np.cos(th) - 2 * np.sin(ph))
    assert np.all(expr.evaluate("-pi", grid) == -np.pi)
    assert expr.evaluate("2", grid).shape == grid.shape


@pytest.mark.parametrize(
    "text",
    ["__import__('os')", "theta**2", "theta/2", "x + 1", "cos(theta, 1)", "theta.real", "[1]", "cos(", "True", "exp(theta)"],
)
def test_expression_rejects(text):
    with pytest.raises(ConfigError):
        expr.parse(text)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-10, 10), b=st.floats(-10, 10))
def test_expression_linear(a, b):
    grid = SphereGrid(6)
    out = expr.evaluate(f"{a!r} + {b!r}*cos(theta)", grid)
    assert np.allclose(out, a + b * np.cos(grid.mesh[0]))


def test_defaults_are_valid():
    cfg = build_config()
    assert cfg.grid.n_theta == 64 and cfg.background.n_lam == 3001
    assert isinstance(cfg, RunConfig)


def test_overrides_and_types():
    cfg = build_config({"grid": {"n_theta": 32}}, ["flow.eps_mots=1e-7", "gauge.reparametrize=true", "flow.omega0=2.5 + 0.1*cos(theta)"])
    assert cfg.grid.n_theta == 32 and cfg.flow.eps_mots == 1e-7 and cfg.gauge.reparametrize is True
    assert cfg.flow.omega0 == "2.5 + 0.1*cos(theta)"
    assert parse_override("a.b=") == ("a.b", None)
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_errors_are_aggregated():
    with pytest.raises(ConfigError) as exc:
        build_config({"grid": {"n_theta": "x"}, "flow": {"bogus": 1, "eps_mots": -1}, "nope": {}})
    probs = exc.value.problems
    assert len(probs) == 4
    text = "\n".join(probs)
    for piece in ("grid.n_theta", "flow.bogus", "eps_mots must be positive", "nope"):
        assert piece in text


@pytest.mark.parametrize(
    "override",
    [
        "foliation.eps=0.2",
        "gauge.v0=1.0",
        "grid.mode=full",
        "background.variant=kerr",
        "background.variant=file",
        "flow.interp=quintic",
        "flow.omega0=theta**2",
        "grid.n_theta=true",
        "background.lam_max=0.5",
    ],
)
def test_single_invalid_values(override):
    with pytest.raises(ConfigError):
        build_config(overrides=[override])


def test_hash_excludes_out():
    a = build_config(out="x")
    b = build_config(out="y")
    c = build_config(overrides=["flow.c_cfl=0.1"], out="x")
    assert a.hash() == b.hash() != c.hash()
    assert len(a.hash()) == 64


def test_load_yaml(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("grid:\n  n_theta: 16\nflow:\n  t_max: 5\n")
    cfg = load_config(p, ["grid.n_theta=24"], out=str(tmp_path / "o"))
    assert cfg.grid.n_theta == 24 and cfg.flow.t_max == 5.0 and cfg.out.endswith("o")
    (tmp_path / "bad.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
