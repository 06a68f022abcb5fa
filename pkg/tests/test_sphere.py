import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_legendre, sph_harm_y

from nullflow.errors import DefinitenessError, ShapeError
from nullflow.sphere import (
    MetricField,
    SphereGrid,
    christoffel,
    contract,
    grad_norm_sq,
    gradient,
    hessian,
    integrate,
    laplace_beltrami,
    round_metric,
    tensor_norm,
    trace,
    traceless_part,
)


def test_grid_layout():
    g = SphereGrid(8)
    assert g.axisymmetric and g.mode == "axisymmetric-1D"
    assert np.allclose(g.theta, (np.arange(8) + 0.5) * np.pi / 8)
    assert g.theta[0] > 0 and g.theta[-1] < np.pi
    f = SphereGrid(8, 6)
    assert f.mode == "full-2D" and np.allclose(f.phi, np.arange(6) * np.pi / 3)


@pytest.mark.parametrize("n_theta,n_phi", [(1, 1), (8, 3), (8, 2), (4.5, 1)])
def test_grid_rejects_bad_sizes(n_theta, n_phi):
    with pytest.raises(ValueError):
        SphereGrid(n_theta, n_phi)


def test_constant_is_harmonic():
    g = round_metric(SphereGrid(32, 8), 2.0)
    assert np.abs(laplace_beltrami(g, np.full(g.grid.shape, 7.0))).max() < 1e-12


def test_cos_theta_eigenfunction_second_order():
    errs = []
    for n in (32, 64, 128):
        g = round_metric(SphereGrid(n))
        f = np.cos(g.grid.mesh[0])
        errs.append(np.abs(laplace_beltrami(g, f) + 2.0 * f).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_radius_scaling():
    grid = SphereGrid(64)
    f = eval_legendre(2, np.cos(grid.mesh[0]))
    lap1 = laplace_beltrami(round_metric(grid, 1.0), f)
    lap3 = laplace_beltrami(round_metric(grid, 3.0), f)
    assert np.allclose(lap3, lap1 / 9.0, rtol=1e-12, atol=1e-14)


def test_gradient_norm_of_omega_squared():
    # |grad cos theta|^2 = sin^2 theta on the unit sphere
    grid = SphereGrid(128)
    theta = grid.mesh[0]
    gsq = grad_norm_sq(round_metric(grid), np.cos(theta))
    assert np.abs(gsq - np.sin(theta) ** 2).max() < 1e-3


@pytest.mark.parametrize("m", [1, 2])
def test_full_2d_spherical_harmonic(m):
    errs = []
    for n in (16, 32, 64):
        grid = SphereGrid(n, 2 * n)
        th, ph = grid.mesh
        f = np.real(sph_harm_y(3, m, th, ph))
        lap = laplace_beltrami(round_metric(grid), f)
        errs.append(np.sqrt(integrate(round_metric(grid), (lap + 12.0 * f) ** 2)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_full_2d_matches_axisymmetric_on_zonal_field():
    f1 = round_metric(SphereGrid(24))
    f2 = round_metric(SphereGrid(24, 8))
    z1 = np.cos(f1.grid.mesh[0]) ** 3
    z2 = np.cos(f2.grid.mesh[0]) ** 3
    assert np.allclose(laplace_beltrami(f2, z2), laplace_beltrami(f1, z1), atol=1e-12)


def test_area_of_round_sphere():
    for n, tol in ((64, 2e-3), (256, 1.3e-4)):
        g = round_metric(SphereGrid(n), 2.0)
        assert abs(integrate(g, np.ones(g.grid.shape)) - 16 * np.pi) < tol * 16 * np.pi


def test_contract_and_trace_of_metric():
    g = round_metric(SphereGrid(16, 4), 1.5)
    assert np.allclose(trace(g, g.components), 2.0)
    dth = np.zeros((2,) + g.grid.shape)
    dth[0] = 1.0
    assert np.allclose(contract(g, dth, dth), 1.0 / 1.5**2)
    assert np.allclose(tensor_norm(g, g.components), np.sqrt(2.0))


def test_christoffel_round_sphere():
    grid = SphereGrid(128)
    gam = christoffel(round_metric(grid))
    th = grid.mesh[0]
    # Gamma^theta_{phi phi} = -sin cos, Gamma^phi_{theta phi} = cot
    assert np.abs(gam[0, 1, 1] + np.sin(th) * np.cos(th)).max() < 1e-3
    assert np.abs(gam[1, 0, 1] * np.sin(th) - np.cos(th)).max() < 1e-3


def test_hessian_trace_is_laplacian():
    grid = SphereGrid(128)
    g = round_metric(grid)
    f = eval_legendre(3, np.cos(grid.mesh[0]))
    inner = slice(8, -8)
    diff = trace(g, hessian(g, f)) - laplace_beltrami(g, f)
    assert np.abs(diff[inner]).max() < 5e-3


def test_definiteness_error():
    grid = SphereGrid(8)
    comps = round_metric(grid).components.copy()
    comps[0, 3, 0] = -1.0
    with pytest.raises(DefinitenessError):
        MetricField(grid, comps)


def test_shape_errors():
    g = round_metric(SphereGrid(8))
    with pytest.raises(ShapeError):
        laplace_beltrami(g, np.zeros((7, 1)))
    with pytest.raises(ShapeError):
        MetricField(SphereGrid(8), np.zeros((2, 8, 1)))


fields = st.lists(st.floats(-2, 2), min_size=3, max_size=3)


@settings(max_examples=40, deadline=None)
@given(coef=fields, radius=st.floats(0.5, 3.0))
def test_divergence_theorem(coef, radius):
    grid = SphereGrid(24, 8)
    th, ph = grid.mesh
    g = round_metric(grid, radius * (1.0 + 0.2 * np.cos(th) ** 2))
    f = coef[0] * np.cos(th) + coef[1] * np.sin(th) * np.cos(ph) + coef[2] * np.cos(2 * th) * np.sin(ph)
    total = integrate(g, laplace_beltrami(g, f))
    assert abs(total) < 1e-10 * (1.0 + np.abs(f).max())


@settings(max_examples=40, deadline=None)
@given(coef=fields, seed=st.integers(0, 2**31 - 1))
def test_gradient_norm_nonnegative(coef, seed):
    grid = SphereGrid(12, 4)
    rng = np.random.default_rng(seed)
    f = rng.normal(size=grid.shape) * coef[0]
    comps = round_metric(grid).components.copy()
    comps[1] = coef[1] * 0.3 * np.sin(grid.mesh[0])
    g = MetricField(grid, comps)
    assert np.all(grad_norm_sq(g, f) >= 0.0)


@settings(max_examples=40, deadline=None)
@given(t=st.lists(st.floats(-5, 5), min_size=3, max_size=3), r=st.floats(0.3, 4.0))
def test_traceless_norm_bounded(t, r):
    grid = SphereGrid(6)
    g = round_metric(grid, r)
    tensor = np.stack([np.full(grid.shape, t[0]), np.full(grid.shape, t[1]), np.full(grid.shape, t[2]) * np.sin(grid.mesh[0]) ** 2])
    hat = traceless_part(g, tensor)
    assert np.all(tensor_norm(g, hat) <= tensor_norm(g, tensor) * (1 + 1e-12) + 1e-12)
    assert np.abs(trace(g, hat)).max() <= 1e-10 * (1.0 + np.abs(tensor).max() / r**2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_laplacian_self_adjoint(seed):
    grid = SphereGrid(10, 6)
    rng = np.random.default_rng(seed)
    g = round_metric(grid, 1.0 + 0.1 * rng.random(grid.shape))
    f, h = rng.normal(size=(2,) + grid.shape)
    assert abs(integrate(g, f * laplace_beltrami(g, h)) - integrate(g, h * laplace_beltrami(g, f))) < 1e-9


def test_gradient_parity_at_pole():
    grid = SphereGrid(16)
    d = gradient(grid, np.cos(grid.mesh[0]))
    assert abs(d[0, 0, 0] + np.sin(grid.theta[0])) < 1e-2
    assert np.all(d[1] == 0.0)


def test_warped_metric_examples_at_equator():
    # odd n_theta puts node 64 on the equator
    grid = SphereGrid(129)
    th = grid.mesh[0]
    w = 2.0 + 0.1 * np.cos(th)
    g = round_metric(grid, w)
    assert abs(laplace_beltrami(g, w)[64, 0]) < 1e-4
    assert abs(grad_norm_sq(g, w)[64, 0] - 0.0025) < 1e-6
    assert abs(grad_norm_sq(round_metric(grid), np.cos(th))[64, 0] - 1.0) < 1e-3
    assert np.all(grad_norm_sq(g, np.full(grid.shape, 3.0)) == 0.0)


def test_trivial_tensor_examples():
    g = round_metric(SphereGrid(8, 4), 1.3)
    zero = np.zeros((2,) + g.grid.shape)
    assert np.all(contract(g, g.components[:2], zero) == 0.0)
    assert np.all(tensor_norm(g, np.zeros_like(g.components)) == 0.0)
    c = np.cos(g.grid.mesh[0])
    assert np.abs(traceless_part(g, c * g.components)).max() < 1e-15


def test_inverse_identity():
    grid = SphereGrid(16, 4)
    comps = round_metric(grid, 1.7).components.copy()
    comps[1] = 0.2 * np.sin(grid.mesh[0])
    g = MetricField(grid, comps)
    a, b, c = comps
    ia, ib, ic = g.inverse
    assert np.allclose(a * ia + b * ib, 1.0, rtol=1e-12)
    assert np.allclose(a * ib + b * ic, 0.0, atol=1e-12)
    assert np.allclose(b * ib + c * ic, 1.0, rtol=1e-12)
