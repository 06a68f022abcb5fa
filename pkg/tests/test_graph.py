import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullflow.background import SchwarzschildCone, build_analytic, sample_at
from nullflow.errors import CapabilityError
from nullflow.flow import FlowOperator
from nullflow.graph import (
    chi_graph,
    expansion_of,
    graph_expansion,
    graph_torsion,
    null_partner_coefficients,
    trace_chi_graph,
)
from nullflow.scenarios import two_path_errors
from nullflow.sphere import SphereGrid

from conftest import minkowski, schwarzschild


def test_trchi_closed_form_at_lam_half():
    bg = build_analytic(SchwarzschildCone(1.0, 1.0), SphereGrid(8), np.linspace(0.0, 3.0, 31))
    assert np.allclose(bg.slice_at(10).trchi, 0.0, atol=1e-15)
    assert np.allclose(bg.slice_at(20).trchi, 2.0 / 9.0)
    d = sample_at(bg, np.full((8, 1), 1.5))
    assert np.abs(d.trchi - 0.16).max() < 1e-6


def test_constant_graph_is_background_slice(schw16):
    k = 150
    w = np.full(schw16.grid.shape, schw16.lam[k])
    d = sample_at(schw16, w)
    assert np.array_equal(2.0 * expansion_of(d, w), schw16.trchi[k])
    assert np.array_equal(chi_graph(d, w), schw16.chi[k])
    c_l, c_lb, v = null_partner_coefficients(d, w)
    assert np.all(c_l == 1.0) and np.all(c_lb == 0.0) and np.all(v == 0.0)
    assert np.all(graph_torsion(d, w) == 0.0)


def test_horizon_slice_is_mots(schw16):
    w = np.full(schw16.grid.shape, 2.0)
    assert np.abs(graph_expansion(schw16, w)).max() < 1e-14


def test_minkowski_example_at_equator():
    # odd n_theta puts a node on the equator
    bg = minkowski(129)
    theta = bg.grid.mesh[0]
    w = 2.0 + 0.1 * np.cos(theta)
    e = expansion_of(sample_at(bg, w), w)
    assert abs(e[64, 0] - 0.50125) < 1e-4


def test_two_path_agreement_second_order():
    errs = two_path_errors((16, 32, 64))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_null_partner_is_null(schw16):
    # <L_w, L_w> = 2 c_L c_Lb <L, Lb> + |V|^2 with <L, Lb> = -2
    theta = schw16.grid.mesh[0]
    w = 2.5 + 0.2 * np.cos(theta)
    d = sample_at(schw16, w)
    c_l, c_lb, v = null_partner_coefficients(d, w)
    g = d.metric.components
    v_sq = g[0] * v[0] ** 2 + 2 * g[1] * v[0] * v[1] + g[2] * v[1] ** 2
    assert np.abs(-4.0 * c_l * c_lb + v_sq).max() < 1e-12


def test_capability_error():
    bg = schwarzschild(8, lam=(1.0, 4.0, 31)).with_fields(chi=None)
    w = np.full((8, 1), 3.0)
    with pytest.raises(CapabilityError):
        chi_graph(sample_at(bg, w), w)
    with pytest.raises(CapabilityError):
        trace_chi_graph(sample_at(bg, w), w)


@pytest.mark.parametrize("shape", [(16, 1), (12, 8)])
def test_kernel_matches_array_path(shape):
    bg = schwarzschild(*shape)
    rng = np.random.default_rng(1)
    th, ph = bg.grid.mesh
    w = 2.6 + 0.3 * np.cos(th) + 0.05 * rng.normal(size=shape) + (0.1 * np.sin(th) * np.cos(ph) if shape[1] > 1 else 0)
    fast = FlowOperator(bg, compiled=True)(w)
    slow = FlowOperator(bg, compiled=False)(w)
    assert np.allclose(fast[0], slow[0], rtol=1e-11, atol=1e-12)
    assert np.allclose(fast[1], slow[1], rtol=1e-11, atol=1e-13)
    assert fast[2] == pytest.approx(slow[2], rel=1e-12)


def test_kernel_reports_out_of_range():
    bg = schwarzschild(8, lam=(1.0, 4.0, 31))
    w = np.full((8, 1), 3.0)
    w[2] = 0.5
    op = FlowOperator(bg)
    assert op(w) is None
    assert op.out_of_range(w).sum() == 1


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(-0.4, 0.4),
    b=st.floats(-0.4, 0.4),
    base=st.floats(1.6, 3.4),
)
def test_kernel_property(a, b, base):
    bg = _bg2d()
    th, ph = bg.grid.mesh
    w = base + a * np.cos(th) + b * np.sin(th) * np.sin(ph)
    fast = FlowOperator(bg, compiled=True)(w)
    slow = FlowOperator(bg, compiled=False)(w)
    assert np.allclose(fast[0], slow[0], rtol=1e-10, atol=1e-12)
    assert np.all(fast[1] >= 0)


_cache = {}


def _bg2d():
    if "bg" not in _cache:
        _cache["bg"] = schwarzschild(10, 6)
    return _cache["bg"]
