import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullflow.background import BackgroundFoliation, SchwarzschildCone, build_analytic, raychaudhuri_propagate
from nullflow.errors import DomainError, NotANullCone, ReparametrizationError
from nullflow.gauge import (
    GaugeBuilder,
    GaugeProfile,
    affine_gauge,
    check_energy_condition,
    check_gauge_condition,
    construct_gauge,
    energy_slack,
    reparametrize,
)
from nullflow.graph import graph_expansion
from nullflow.sphere import SphereGrid, round_metric

from conftest import schwarzschild


@pytest.fixture(scope="module")
def schw_gauge():
    lam = np.linspace(0.0, np.e - 1.0, 173)
    bg = build_analytic(SchwarzschildCone(1.0, 1.0), SphereGrid(8), lam)
    return bg, construct_gauge(bg, 0.5)


def _manual(trchib, lam, grid, gll=0.0, shear=0.0):
    """Affine background with prescribed constant fields (not a Raychaudhuri solution)."""
    n = lam.size
    s = (n,) + grid.shape
    gamma = np.broadcast_to(round_metric(grid, 2.0).components, (n, 3) + grid.shape).copy()
    hat = np.zeros((n, 3) + grid.shape)
    # traceless tensor of norm `shear` on the radius-2 round metric
    c = shear * 4.0 / np.sqrt(2.0)
    hat[:, 0] = c
    hat[:, 2] = -c * np.sin(grid.mesh[0]) ** 2
    return BackgroundFoliation(
        grid=grid,
        lam=lam,
        gamma=gamma,
        trchib=np.broadcast_to(np.asarray(trchib, dtype=float), s).copy(),
        chib_hat=hat,
        kappa=np.zeros(s),
        gll=np.full(s, float(gll)),
        alpha_hat=np.zeros((n, 3) + grid.shape),
    )


def test_closed_form_a(schw_gauge):
    bg, g = schw_gauge
    r = 1.0 + bg.lam
    assert np.abs(g.a / (r * (1.0 + np.log(r)))[:, None, None] - 1.0).max() < 1e-6
    # a' = 2 + ln r
    assert np.abs(g.kappa - (2.0 + np.log(r))[:, None, None]).max() < 1e-6


def test_spot_values_at_r_equal_e(schw_gauge):
    _, g = schw_gauge
    assert abs(g.v[-1, 0, 0] - 2.0 / 3.0) < 1e-9
    assert abs(g.a[-1, 0, 0] - 2.0 * np.e) < 1e-6 * 2.0 * np.e


def test_initial_conditions(schw_gauge):
    bg, g = schw_gauge
    assert np.all(g.a[0] == 1.0) and np.all(g.s[0] == 0.0)
    assert np.allclose(g.kappa[0], 0.5 * bg.trchib[0] / 0.5)
    assert np.allclose(g.v[0], 0.5)


def test_constant_beta_v():
    b = 0.5
    lam = np.linspace(0.0, 2.0 / b, 401)
    g = construct_gauge(_manual(2.0 * b, lam, SphereGrid(4)), 0.5)
    # the closed form gives 2/3 at lam = 1/b and 3/4 at lam = 2/b
    assert abs(g.v[200, 0, 0] - 2.0 / 3.0) < 1e-12
    assert abs(g.v[-1, 0, 0] - 0.75) < 1e-12
    big = b * lam
    assert np.allclose(g.v[:, 0, 0], (0.5 + 0.5 * big) / (1.0 + 0.5 * big), atol=1e-13)


def test_gauge_condition_schwarzschild(schw_gauge):
    bg, g = schw_gauge
    rep = check_gauge_condition(bg, g, 1e-8)
    assert rep.passed and rep.min_slack >= -1e-8
    assert np.all(rep.rhs == 0.0)
    assert rep.per_lambda_min().shape == (bg.n_lam,)
    assert rep.to_text(bg.lam).startswith("# gauge condition: PASS")


def test_affine_gauge_fails(schw_gauge):
    bg, _ = schw_gauge
    rep = check_gauge_condition(bg, affine_gauge(bg))
    assert not rep.passed
    r = 1.0 + bg.lam
    assert np.abs(rep.slack - (-2.0 / r**2)[:, None, None]).max() < 1e-12


def test_energy_examples():
    assert energy_slack(1.0, 0.1, 2.0, 0.0) == pytest.approx(0.575)
    assert energy_slack(0.0, 1.0, 1.0, 0.0) == pytest.approx(-4.5)
    lam = np.linspace(0.0, 1.0, 11)
    grid = SphereGrid(8)
    ok = check_energy_condition(_manual(2.0, lam, grid, gll=1.0, shear=0.1))
    assert ok.passed and np.allclose(ok.slack, 0.575)
    bad = check_energy_condition(_manual(1.0, lam, grid, gll=0.0, shear=1.0))
    assert not bad.passed and np.allclose(bad.slack, -4.5)


def test_energy_schwarzschild_zero(schw_gauge):
    bg, _ = schw_gauge
    rep = check_energy_condition(bg)
    assert rep.passed and np.all(rep.slack == 0.0)


def test_errors(schw_gauge):
    bg, g = schw_gauge
    lam = np.linspace(0.0, 1.0, 11)
    with pytest.raises(NotANullCone):
        construct_gauge(_manual(-1.0, lam, SphereGrid(4)))
    with pytest.raises(DomainError):
        construct_gauge(bg, 1.0)
    with pytest.raises(DomainError):
        construct_gauge(bg, 0.0)
    bad = GaugeProfile(lam=g.lam, a=-g.a, kappa=g.kappa, dkappa=g.dkappa, v=g.v, s=g.s)
    with pytest.raises(ReparametrizationError):
        reparametrize(bg, bad)
    flat = GaugeProfile(lam=g.lam, a=g.a, kappa=g.kappa, dkappa=g.dkappa, v=g.v, s=np.zeros_like(g.s))
    with pytest.raises(ReparametrizationError):
        reparametrize(bg, flat)


def test_s_spot_value(schw_gauge):
    _, g = schw_gauge
    assert abs(g.s[-1, 0, 0] - np.log(2.0)) < 1e-8
    assert g.s_range == (0.0, pytest.approx(np.log(2.0), abs=1e-8))


def test_affine_reparametrization_is_identity():
    bg = schwarzschild(8, lam=(1.0, 4.0, 61))
    out = reparametrize(bg, affine_gauge(bg))
    assert not out.affine and out.parameter == "s"
    assert np.allclose(out.lam, bg.lam - bg.lam[0])
    for name in ("gamma", "trchib", "trchi", "chi", "tau"):
        assert np.allclose(getattr(out, name), getattr(bg, name), rtol=1e-13, atol=1e-14)


def test_reparametrization_keeps_horizon():
    bg = schwarzschild(8, lam=(1.0, 4.0, 301))
    g = construct_gauge(bg, 0.5)
    out = reparametrize(bg, g)
    # leaf nearest s(lam = 2)
    s_h = float(g.s[100, 0, 0])
    k = int(np.argmin(np.abs(out.lam - s_h)))
    w = np.full(bg.grid.shape, 2.0)
    assert abs(out.lam[k] - s_h) <= 0.5 * out.dlam
    # trchi transforms by 1/a, so the sign pattern survives
    assert np.all(np.sign(out.trchi[:k - 1]) == -1) and np.all(out.trchi[k + 2 :] > 0)
    assert np.abs(graph_expansion(bg, w)).max() < 1e-14


@settings(max_examples=25, deadline=None)
@given(tr0=st.floats(0.3, 3.0), g=st.floats(0.0, 1.0), v0=st.floats(0.05, 0.95))
def test_constructed_gauge_passes_shear_free(tr0, g, v0):
    grid = SphereGrid(4)
    lam = np.linspace(0.0, 1.0, 41)
    bg = raychaudhuri_propagate(round_metric(grid), np.full(grid.shape, tr0), np.zeros((3,) + grid.shape), lam, gll=g)
    if bg.trchib.min() <= 0:
        return
    gauge = construct_gauge(bg, v0)
    assert np.all(gauge.a > 0) and np.all((gauge.v > 0) & (gauge.v < 1))
    assert np.all(np.diff(gauge.v, axis=0) > 0) and np.all(np.diff(gauge.s, axis=0) > 0)
    assert check_gauge_condition(bg, gauge).passed


@settings(max_examples=20, deadline=None)
@given(shear=st.floats(0.0, 0.05), g=st.floats(0.3, 1.5), v0=st.floats(0.1, 0.9))
def test_energy_condition_implies_gauge(shear, g, v0):
    grid = SphereGrid(8)
    th = grid.mesh[0]
    hat0 = np.zeros((3,) + grid.shape)
    hat0[0] = shear / np.sqrt(2.0)
    hat0[2] = -shear / np.sqrt(2.0) * np.sin(th) ** 2
    bg = raychaudhuri_propagate(round_metric(grid), np.full(grid.shape, 2.0), hat0, np.linspace(0.0, 0.5, 41), gll=g)
    if not check_energy_condition(bg).passed:
        return
    assert check_gauge_condition(bg, construct_gauge(bg, v0)).passed


def test_builder_estimator():
    bg = schwarzschild(8, lam=(1.0, 4.0, 61))
    est = GaugeBuilder(v0=0.5)
    out = est.fit(bg).transform(bg)
    assert est.report_.passed and out.parameter == "s"
    assert est.get_params() == {"v0": 0.5, "tol_gauge": 1e-8, "n_s": None}
    with pytest.raises(DomainError):
        GaugeBuilder().fit(out)
