"""Finite-difference calculus on an equiangular (theta, phi) grid of the 2-sphere.

Field conventions
-----------------
scalar fields       ``(n_theta, n_phi)``
covector fields     ``(2, n_theta, n_phi)``, components ``(v_theta, v_phi)``
symmetric 2-tensors ``(3, n_theta, n_phi)``, components ``(T_tt, T_tp, T_pp)``

Extra leading axes are allowed on every field (for example a stack of slices
along the null generator); the grid axes are always the trailing two.

Colatitude nodes sit half a cell away from the poles, so no node is singular.
Centered stencils that reach past a pole use ghost values taken from the node
on the opposite meridian (``phi + pi``); under that reflection ``d_theta``
changes sign, which fixes the parity of each tensor component.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DefinitenessError, ShapeError

__all__ = [
    "SphereGrid",
    "MetricField",
    "round_metric",
    "laplace_beltrami",
    "gradient",
    "grad_norm_sq",
    "contract",
    "integrate",
    "tensor_norm",
    "traceless_part",
    "trace",
    "hessian",
    "raise_index",
]

DET_FLOOR = 1e-14

# parity of each component under the pole reflection theta -> -theta
_COVECTOR_PARITY = (-1.0, 1.0)
_TENSOR_PARITY = (1.0, -1.0, 1.0)


@dataclass(frozen=True)
class SphereGrid:
    """Equiangular grid with ``n_theta`` colatitude cells and ``n_phi`` longitudes.

    ``n_phi == 1`` selects the axisymmetric mode in which every phi-derivative
    vanishes identically.
    """

    n_theta: int
    n_phi: int = 1

    def __post_init__(self):
        if int(self.n_theta) != self.n_theta or self.n_theta < 2:
            raise ValueError(f"n_theta must be an integer >= 2, got {self.n_theta!r}")
        if int(self.n_phi) != self.n_phi or self.n_phi < 1:
            raise ValueError(f"n_phi must be a positive integer, got {self.n_phi!r}")
        if self.n_phi > 1 and (self.n_phi % 2 or self.n_phi < 4):
            # pole ghosts pair each meridian with the one at phi + pi
            raise ValueError("full-2D mode needs an even n_phi >= 4")

    @property
    def mode(self) -> str:
        return "axisymmetric-1D" if self.n_phi == 1 else "full-2D"

    @property
    def axisymmetric(self) -> bool:
        return self.n_phi == 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def dtheta(self) -> float:
        return np.pi / self.n_theta

    @property
    def dphi(self) -> float:
        return 2.0 * np.pi / self.n_phi

    @cached_property
    def theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * self.dtheta

    @cached_property
    def phi(self) -> np.ndarray:
        return np.arange(self.n_phi) * self.dphi

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates broadcast to ``shape``: ``(THETA, PHI)``."""
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    @cached_property
    def sin_theta(self) -> np.ndarray:
        return np.sin(self.theta)[:, None]

    @cached_property
    def sin_theta_faces(self) -> np.ndarray:
        # interior theta faces only; the two polar faces have zero length
        return np.sin(self.theta[:-1] + 0.5 * self.dtheta)[:, None]

    def check_scalar(self, f, name="field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.shape:
            raise ShapeError(f"{name} has trailing shape {f.shape[-2:]}, grid is {self.shape}")
        return f

    def check_components(self, t, ncomp, name="field") -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if t.ndim < 3 or t.shape[-3] != ncomp or t.shape[-2:] != self.shape:
            raise ShapeError(
                f"{name} must have shape (..., {ncomp}, {self.n_theta}, {self.n_phi}), got {t.shape}"
            )
        return t

    def constant(self, value) -> np.ndarray:
        return np.full(self.shape, float(value))

    def to_dict(self) -> dict:
        return {"n_theta": self.n_theta, "n_phi": self.n_phi, "mode": self.mode}


# ---------------------------------------------------------------------------
# stencils


def _pad_theta(f: np.ndarray, grid: SphereGrid, parity: float = 1.0) -> np.ndarray:
    """Append one ghost row beyond each pole along the theta axis."""
    shift = grid.n_phi // 2
    north = parity * np.roll(f[..., :1, :], -shift, axis=-1)
    south = parity * np.roll(f[..., -1:, :], -shift, axis=-1)
    return np.concatenate([north, f, south], axis=-2)


def _d_theta(f, grid, parity=1.0):
    p = _pad_theta(f, grid, parity)
    return (p[..., 2:, :] - p[..., :-2, :]) / (2.0 * grid.dtheta)


def _d_phi(f, grid):
    if grid.axisymmetric:
        return np.zeros_like(f)
    return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2.0 * grid.dphi)


def _d2_theta(f, grid):
    p = _pad_theta(f, grid)
    return (p[..., 2:, :] - 2.0 * f + p[..., :-2, :]) / grid.dtheta**2


def _d2_phi(f, grid):
    if grid.axisymmetric:
        return np.zeros_like(f)
    return (np.roll(f, -1, axis=-1) - 2.0 * f + np.roll(f, 1, axis=-1)) / grid.dphi**2


def _d_theta_components(t, grid, parities):
    return np.stack([_d_theta(t[..., k, :, :], grid, p) for k, p in enumerate(parities)], axis=-3)


def _d_phi_components(t, grid):
    return np.stack([_d_phi(t[..., k, :, :], grid) for k in range(t.shape[-3])], axis=-3)


# ---------------------------------------------------------------------------
# metric


class MetricField:
    """Positive-definite metric on the grid with cached inverse and area density.

    Parameters
    ----------
    grid : SphereGrid
    components : array_like, shape (..., 3, n_theta, n_phi)
        Coordinate components ``(g_tt, g_tp, g_pp)``.
    """

    def __init__(self, grid: SphereGrid, components):
        comps = grid.check_components(components, 3, "metric")
        self.grid = grid
        self.components = comps
        gtt, gtp, gpp = comps[..., 0, :, :], comps[..., 1, :, :], comps[..., 2, :, :]
        det = gtt * gpp - gtp**2
        # coordinate det ~ sin^2(theta) near the poles, so test the reduced one
        reduced = det / grid.sin_theta**2
        bad = ~(np.isfinite(reduced) & (reduced > DET_FLOOR) & (gtt > 0))
        if bad.any():
            idx = np.argwhere(bad)
            raise DefinitenessError(f"metric is not positive definite at {len(idx)} node(s), first {tuple(idx[0])}")
        self.det = det
        self.sqrt_det = np.sqrt(det)
        self.inverse = np.stack([gpp / det, -gtp / det, gtt / det], axis=-3)

    def __repr__(self):
        return f"MetricField(grid={self.grid!r}, batch={self.components.shape[:-3]})"

    def __eq__(self, other):
        return (
            isinstance(other, MetricField)
            and self.grid == other.grid
            and np.array_equal(self.components, other.components)
        )

    __hash__ = None

    def scaled(self, factor) -> "MetricField":
        return MetricField(self.grid, self.components * np.asarray(factor)[..., None, :, :])

    @property
    def reduced_area(self) -> np.ndarray:
        """``sqrt(det g) / sin(theta)``; smooth and nonvanishing through the poles."""
        return self.sqrt_det / self.grid.sin_theta


def round_metric(grid: SphereGrid, radius=1.0) -> MetricField:
    """``radius**2`` times the unit round metric; ``radius`` may be a field."""
    r2 = np.broadcast_to(np.asarray(radius, dtype=float) ** 2, grid.shape)
    s2 = np.broadcast_to(grid.sin_theta**2, grid.shape)
    return MetricField(grid, np.stack([r2, np.zeros(grid.shape), r2 * s2]))


def _same_grid(g: MetricField, f: np.ndarray, name="field"):
    f = g.grid.check_scalar(f, name)
    if f.shape[:-2] and g.components.shape[:-3] and f.shape[:-2] != g.components.shape[:-3]:
        raise ShapeError(f"{name} batch shape {f.shape[:-2]} does not match metric {g.components.shape[:-3]}")
    return f


# ---------------------------------------------------------------------------
# operators


def gradient(grid: SphereGrid, f) -> np.ndarray:
    """Coordinate differential ``(d_theta f, d_phi f)`` by centered differences."""
    f = grid.check_scalar(f)
    return np.stack([_d_theta(f, grid), _d_phi(f, grid)], axis=-3)


def raise_index(g: MetricField, v) -> np.ndarray:
    v = g.grid.check_components(v, 2, "covector")
    inv = g.inverse
    return np.stack(
        [
            inv[..., 0, :, :] * v[..., 0, :, :] + inv[..., 1, :, :] * v[..., 1, :, :],
            inv[..., 1, :, :] * v[..., 0, :, :] + inv[..., 2, :, :] * v[..., 1, :, :],
        ],
        axis=-3,
    )


def contract(g: MetricField, v, w) -> np.ndarray:
    """``g^{ij} v_i w_j`` nodewise."""
    v = g.grid.check_components(v, 2, "covector")
    w = g.grid.check_components(w, 2, "covector")
    inv = g.inverse
    return (
        inv[..., 0, :, :] * v[..., 0, :, :] * w[..., 0, :, :]
        + inv[..., 1, :, :] * (v[..., 0, :, :] * w[..., 1, :, :] + v[..., 1, :, :] * w[..., 0, :, :])
        + inv[..., 2, :, :] * v[..., 1, :, :] * w[..., 1, :, :]
    )


def grad_norm_sq(g: MetricField, f) -> np.ndarray:
    """``g^{ij} d_i f d_j f`` with centered differences; nonnegative by construction."""
    f = _same_grid(g, f)
    df = gradient(g.grid, f)
    return np.maximum(contract(g, df, df), 0.0)


def laplace_beltrami(g: MetricField, f) -> np.ndarray:
    """Divergence-form Laplace-Beltrami operator, second order, conservative.

    Fluxes ``sqrt(g) g^{ij} d_j f`` live on cell faces. Through the two polar
    faces the flux is zero (their length vanishes), which closes the polar
    ring of cells without any one-sided stencil. The discrete operator sums to
    zero against the area weights, so the divergence theorem holds to roundoff.
    """
    grid = g.grid
    f = _same_grid(g, f)
    inv = g.inverse
    dth, dph = grid.dtheta, grid.dphi

    a_tt = g.reduced_area * inv[..., 0, :, :]
    coef_t = grid.sin_theta_faces * 0.5 * (a_tt[..., :-1, :] + a_tt[..., 1:, :])
    flux_t = coef_t * (f[..., 1:, :] - f[..., :-1, :]) / dth

    div = np.zeros(np.broadcast_shapes(f.shape, g.sqrt_det.shape))
    if not grid.axisymmetric:
        q = g.sqrt_det * inv[..., 1, :, :]
        r = g.sqrt_det * inv[..., 2, :, :]
        f_t = _d_theta(f, grid)
        f_p = _d_phi(f, grid)
        flux_t = flux_t + 0.5 * (q[..., :-1, :] + q[..., 1:, :]) * 0.5 * (f_p[..., :-1, :] + f_p[..., 1:, :])
        nxt = lambda a: np.roll(a, -1, axis=-1)  # noqa: E731
        flux_p = 0.5 * (r + nxt(r)) * (nxt(f) - f) / dph + 0.5 * (q + nxt(q)) * 0.5 * (f_t + nxt(f_t))
        div = div + (flux_p - np.roll(flux_p, 1, axis=-1)) / dph

    zero = np.zeros(flux_t.shape[:-2] + (1, grid.n_phi))
    flux_t = np.concatenate([zero, flux_t, zero], axis=-2)
    div = div + (flux_t[..., 1:, :] - flux_t[..., :-1, :]) / dth
    return div / g.sqrt_det


def christoffel(g: MetricField) -> np.ndarray:
    """Christoffel symbols ``Gamma[k, i, j]`` from centered metric derivatives.

    Returned shape is ``(..., 2, 2, 2, n_theta, n_phi)``.
    """
    grid = g.grid
    c = g.components
    d_t = _d_theta_components(c, grid, _TENSOR_PARITY)
    d_p = _d_phi_components(c, grid)
    # dg[l][i][j] = d_l g_ij
    def comp(t, i, j):
        return t[..., (0 if i == j == 0 else 2 if i == j == 1 else 1), :, :]

    dg = [[[comp(d, i, j) for j in range(2)] for i in range(2)] for d in (d_t, d_p)]
    inv = g.inverse
    ginv = [[comp(inv, i, j) for j in range(2)] for i in range(2)]
    out = np.empty(c.shape[:-3] + (2, 2, 2) + grid.shape)
    for k in range(2):
        for i in range(2):
            for j in range(i, 2):
                val = 0.0
                for m in range(2):
                    val = val + 0.5 * ginv[k][m] * (dg[i][j][m] + dg[j][i][m] - dg[m][i][j])
                out[..., k, i, j, :, :] = val
                out[..., k, j, i, :, :] = val
    return out


def hessian(g: MetricField, f) -> np.ndarray:
    """Covariant Hessian ``d_i d_j f - Gamma^k_ij d_k f`` as a symmetric 2-tensor."""
    grid = g.grid
    f = _same_grid(g, f)
    df = gradient(grid, f)
    f_tt = _d2_theta(f, grid)
    f_pp = _d2_phi(f, grid)
    f_tp = _d_phi(_d_theta(f, grid), grid)
    gam = christoffel(g)
    h_tt = f_tt - gam[..., 0, 0, 0, :, :] * df[..., 0, :, :] - gam[..., 1, 0, 0, :, :] * df[..., 1, :, :]
    h_tp = f_tp - gam[..., 0, 0, 1, :, :] * df[..., 0, :, :] - gam[..., 1, 0, 1, :, :] * df[..., 1, :, :]
    h_pp = f_pp - gam[..., 0, 1, 1, :, :] * df[..., 0, :, :] - gam[..., 1, 1, 1, :, :] * df[..., 1, :, :]
    return np.stack([h_tt, h_tp, h_pp], axis=-3)


def trace(g: MetricField, t) -> np.ndarray:
    t = g.grid.check_components(t, 3, "tensor")
    inv = g.inverse
    return (
        inv[..., 0, :, :] * t[..., 0, :, :]
        + 2.0 * inv[..., 1, :, :] * t[..., 1, :, :]
        + inv[..., 2, :, :] * t[..., 2, :, :]
    )


def traceless_part(g: MetricField, t) -> np.ndarray:
    """``T - (tr_g T / 2) g``."""
    t = g.grid.check_components(t, 3, "tensor")
    return t - 0.5 * trace(g, t)[..., None, :, :] * g.components


def tensor_norm(g: MetricField, t) -> np.ndarray:
    """``sqrt(g^{ij} g^{kl} T_ik T_jl)`` nodewise."""
    t = g.grid.check_components(t, 3, "tensor")
    inv = g.inverse
    # mixed tensor M = g^{-1} T, |T|^2 = tr(M M)
    a, b, c = inv[..., 0, :, :], inv[..., 1, :, :], inv[..., 2, :, :]
    x, y, z = t[..., 0, :, :], t[..., 1, :, :], t[..., 2, :, :]
    m00 = a * x + b * y
    m01 = a * y + b * z
    m10 = b * x + c * y
    m11 = b * y + c * z
    sq = m00**2 + 2.0 * m01 * m10 + m11**2
    return np.sqrt(np.maximum(sq, 0.0))


def integrate(g: MetricField, f) -> np.ndarray | float:
    """Midpoint-rule integral ``sum f sqrt(g) dtheta dphi`` over the sphere."""
    grid = g.grid
    f = _same_grid(g, f)
    dphi = grid.dphi
    out = (f * g.sqrt_det).sum(axis=(-2, -1)) * grid.dtheta * dphi
    return float(out) if np.ndim(out) == 0 else out


def symmetric_product(v, w) -> np.ndarray:
    """Components of ``v (x) w + w (x) v``."""
    return np.stack(
        [
            2.0 * v[..., 0, :, :] * w[..., 0, :, :],
            v[..., 0, :, :] * w[..., 1, :, :] + v[..., 1, :, :] * w[..., 0, :, :],
            2.0 * v[..., 1, :, :] * w[..., 1, :, :],
        ],
        axis=-3,
    )


def tensor_apply(t, v, w) -> np.ndarray:
    """``T(v, w)`` for vector arguments given by their components."""
    return (
        t[..., 0, :, :] * v[..., 0, :, :] * w[..., 0, :, :]
        + t[..., 1, :, :] * (v[..., 0, :, :] * w[..., 1, :, :] + v[..., 1, :, :] * w[..., 0, :, :])
        + t[..., 2, :, :] * v[..., 1, :, :] * w[..., 1, :, :]
    )
