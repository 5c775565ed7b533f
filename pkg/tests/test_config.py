from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfxfem.config import (
    ConfigError,
    compile_expression,
    load_config,
    parse_config,
    parse_length,
    render_config,
    resolve_config,
    shipped_scenarios,
)
from pfxfem.mesh import refinement_factor

BASE = """
[scenario]
name = t
[geometry]
x_range = 0, 1
y_range = 0, 1
nx = 4
ny = 4
[material]
E = 20
nu = 0.3
Gc = 1e-3
l = 0.05
[numerics]
delta_star = 2h
{numerics}
[loading]
du = 1e-3
n_steps = 3
[bc.bottom]
box = 0, 1, 0, 0
ux = 0
uy = 0
[bc.top]
box = 0, 1, 1, 1
uy = u
"""


def _cfg(numerics=""):
    return parse_config(BASE.format(numerics=numerics))


def test_shipped_scenarios_parse_and_round_trip():
    names = set(shipped_scenarios())
    assert {"continuity", "lshaped", "lshaped_desk", "branching", "branching_desk", "coalescence_desk"} <= names
    for name, path in shipped_scenarios().items():
        cfg = load_config(path)
        assert cfg.name == name
        assert parse_config(render_config(cfg)) == cfg


def test_lshaped_parameters():
    cfg = load_config(resolve_config("lshaped"))
    assert cfg.h == pytest.approx(10.0)
    assert cfg.m == 20
    assert cfg.loading.du == pytest.approx(1e-3)
    assert cfg.delta_star == pytest.approx(20.0)
    # the formula gives the same factor as the explicit override
    assert refinement_factor(cfg.h, cfg.material.l, 1, 5) == 20


def test_refinement_factor_default_and_override():
    assert _cfg().m == refinement_factor(0.25, 0.05, 1, 5) == 25
    assert _cfg("m = 15").m == 15
    assert _cfg("a = 3").m == 15


def test_branching_uses_m_override():
    cfg = load_config(resolve_config("branching"))
    assert cfg.m == 15
    assert refinement_factor(cfg.h, cfg.material.l, 1, cfg.numerics.a) != 15
    assert cfg.delta_star == pytest.approx(3 * cfg.h)


def test_unsupported_degree():
    with pytest.raises(ConfigError, match="unsupported degree"):
        _cfg("p = 2")


def test_threshold_ordering():
    with pytest.raises(ConfigError, match="thresholds"):
        _cfg("d_star = 0.95")


@pytest.mark.parametrize(
    "numerics,match",
    [("bogus = 1", "unknown key"), ("m = 0", "m"), ("max_iter = 0", "max_iter"), ("crop = maybe", "boolean")],
)
def test_numerics_errors(numerics, match):
    with pytest.raises(ConfigError, match=match):
        _cfg(numerics)


def test_missing_delta_star():
    with pytest.raises(ConfigError, match="delta_star"):
        parse_config(BASE.format(numerics="").replace("delta_star = 2h", ""))


def test_bad_sections_and_values():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(BASE.format(numerics="") + "[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="nu"):
        parse_config(BASE.format(numerics="").replace("nu = 0.3", "nu = 0.7"))
    with pytest.raises(ConfigError, match="reaction"):
        parse_config(BASE.format(numerics="").replace("n_steps = 3", "n_steps = 3\nreaction = side"))
    with pytest.raises(ConfigError):
        parse_config(BASE.format(numerics="").replace("uy = u", "uy = __import__('os')"))


def test_parse_length():
    assert parse_length("2h", 0.5) == 1.0
    assert parse_length("3*h", 0.5) == 1.5
    assert parse_length("h", 0.5) == 0.5
    assert parse_length("0.25", 0.5) == 0.25
    with pytest.raises(ConfigError):
        parse_length("two", 1.0)


def test_expression():
    f = compile_expression("u * (x - 1)**2 / 8")
    assert np.allclose(f(np.array([1.0, -1.0]), np.zeros(2), 2.0), [0.0, 1.0])
    for bad in ("open('x')", "x.real", "lambda: 1", "y if x else u"):
        with pytest.raises(ConfigError):
            compile_expression(bad)


@given(
    st.integers(1, 60),
    st.integers(1, 60),
    st.floats(1e-4, 1e-1),
    st.floats(0.0, 0.49),
    st.integers(1, 30) | st.none(),
    st.sampled_from(["2h", "3h", "0.5"]),
)
def test_render_parse_round_trip(nx, ny, gc, nu, m, ds):
    numerics = f"m = {m}" if m is not None else ""
    text = BASE.format(numerics=numerics).replace("nx = 4", f"nx = {nx}").replace("ny = 4", f"ny = {ny}")
    text = text.replace("Gc = 1e-3", f"Gc = {gc!r}").replace("nu = 0.3", f"nu = {nu!r}").replace("2h", ds)
    cfg = parse_config(text)
    assert parse_config(render_config(cfg)) == cfg


def test_resolve_config(tmp_path):
    assert resolve_config("continuity").name == "continuity.cfg"
    assert resolve_config("continuity.cfg") == resolve_config("continuity")
    p = tmp_path / "mine.cfg"
    p.write_text(BASE.format(numerics=""))
    assert resolve_config(p) == p
    with pytest.raises(FileNotFoundError):
        resolve_config("nope")


def test_with_mode():
    cfg = _cfg()
    assert cfg.with_mode("pf_reference").mode == "pf_reference"
    with pytest.raises(ConfigError):
        cfg.with_mode("pf")
