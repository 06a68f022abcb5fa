"""Background foliations of a null hypersurface and their sampling on graphs.

A :class:`BackgroundFoliation` tabulates, on a uniform grid of the generator
parameter times a :class:`~nullflow.sphere.SphereGrid`, the geometry of the
leaves: induced metric, the expansion and torsion of the null partner L, and
the data of the null second fundamental form along the generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator

from . import interp
from .errors import (
    CapabilityError,
    DefinitenessError,
    DomainError,
    ExitedDomain,
    FocalPointReached,
    ShapeError,
)
from .sphere import MetricField, SphereGrid, round_metric, tensor_norm, trace, traceless_part

__all__ = [
    "BackgroundFoliation",
    "SliceData",
    "MinkowskiCone",
    "SchwarzschildCone",
    "ShearFreeCustom",
    "build_analytic",
    "raychaudhuri_propagate",
    "RaychaudhuriPropagator",
    "sample_at",
    "FOCAL_LIMIT",
    "inverse_expansion_slope",
    "area_profile",
]

FOCAL_LIMIT = 1e6
TRACE_TOL = 1e-10

# name -> number of components (1 = scalar)
_LAYOUT = {
    "gamma": 3,
    "trchib": 1,
    "chib_hat": 3,
    "kappa": 1,
    "gll": 1,
    "alpha_hat": 3,
    "trchi": 1,
    "tau": 2,
    "chi": 3,
}
OPTIONAL = ("trchi", "tau", "chi")


@dataclass(eq=False)
class BackgroundFoliation:
    """Sampled geometry of the leaves ``{s = lam[k]}``.

    Scalars have shape ``(n_lam, n_theta, n_phi)``; covectors and symmetric
    tensors carry a component axis after the first: ``(n_lam, 2|3, ...)``.
    ``trchi``, ``tau`` and the full L-side tensor ``chi`` are optional because
    they cannot be propagated from the generator-side equations alone.
    """

    grid: SphereGrid
    lam: np.ndarray
    gamma: np.ndarray
    trchib: np.ndarray
    chib_hat: np.ndarray
    kappa: np.ndarray
    gll: np.ndarray
    alpha_hat: np.ndarray
    trchi: np.ndarray | None = None
    tau: np.ndarray | None = None
    chi: np.ndarray | None = None
    affine: bool = True
    parameter: str = "lambda"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.lam0, self.dlam = interp.check_uniform(self.lam, "lambda grid")
        n = self.lam.size
        for name, ncomp in _LAYOUT.items():
            arr = getattr(self, name)
            if arr is None:
                if name not in OPTIONAL:
                    raise ShapeError(f"background field {name!r} is required")
                continue
            arr = np.asarray(arr, dtype=float)
            want = (n,) + ((ncomp,) if ncomp > 1 else ()) + self.grid.shape
            if arr.shape != want:
                raise ShapeError(f"background field {name!r} has shape {arr.shape}, expected {want}")
            setattr(self, name, arr)
        metric = MetricField(self.grid, self.gamma)  # raises on definiteness loss
        for name in ("chib_hat", "alpha_hat"):
            tr = trace(metric, getattr(self, name))
            scale = np.maximum(1.0, tensor_norm(metric, getattr(self, name)))
            if np.abs(tr / scale).max() > TRACE_TOL:
                raise ValueError(f"{name} is not traceless (max |tr| = {np.abs(tr).max():.3g})")
        if self.affine and np.abs(self.kappa).max() > 0.0:
            raise ValueError("an affine foliation must have kappa == 0")

    @property
    def n_lam(self) -> int:
        return self.lam.size

    @property
    def lam_min(self) -> float:
        return float(self.lam[0])

    @property
    def lam_max(self) -> float:
        return float(self.lam[-1])

    @cached_property
    def metric(self) -> MetricField:
        return MetricField(self.grid, self.gamma)

    @property
    def chib(self) -> np.ndarray:
        """Full null second fundamental form ``chib_hat + trchib/2 gamma``."""
        return self.chib_hat + 0.5 * self.trchib[:, None] * self.gamma

    def has(self, name) -> bool:
        return getattr(self, name) is not None

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise CapabilityError(f"background lacks {', '.join(missing)}")

    def field_names(self) -> list[str]:
        return [n for n in _LAYOUT if getattr(self, n) is not None]

    @cached_property
    def _table(self):
        """All fields stacked as ``(n_lam, n_nodes, n_components)`` for sampling."""
        n = self.n_lam
        cols, slots, at = [], {}, 0
        for name in self.field_names():
            arr = getattr(self, name)
            nc = _LAYOUT[name]
            arr = arr.reshape(n, nc, -1) if nc > 1 else arr.reshape(n, 1, -1)
            cols.append(arr)
            slots[name] = slice(at, at + nc)
            at += nc
        table = np.ascontiguousarray(np.concatenate(cols, axis=1).transpose(0, 2, 1))
        return table, slots

    def slice_at(self, k: int) -> "SliceData":
        """Exact data of the k-th leaf."""
        return sample_at(self, np.full(self.grid.shape, self.lam[k]))

    def with_fields(self, **changes) -> "BackgroundFoliation":
        return replace(self, **changes)

    def copy_arrays(self) -> dict:
        return {n: getattr(self, n) for n in self.field_names()}

    def trapped_level(self, tol=0.0) -> float:
        """Highest leaf level whose expansion is weakly negative everywhere.

        Falls back to ``lam_min`` when no leaf of the grid is weakly trapped.
        """
        self.require("trchi")
        trapped = np.flatnonzero(self.trchi.reshape(self.n_lam, -1).max(axis=1) <= tol)
        if trapped.size == 0:
            return self.lam_min
        return float(self.lam[trapped.max()])


@dataclass(eq=False)
class SliceData:
    """Background fields evaluated on a graph ``s = omega(z)``."""

    metric: MetricField
    trchib: np.ndarray
    chib_hat: np.ndarray
    kappa: np.ndarray
    gll: np.ndarray
    alpha_hat: np.ndarray
    trchi: np.ndarray | None = None
    tau: np.ndarray | None = None
    chi: np.ndarray | None = None

    @property
    def grid(self) -> SphereGrid:
        return self.metric.grid

    @property
    def chib(self) -> np.ndarray:
        return self.chib_hat + 0.5 * self.trchib[..., None, :, :] * self.metric.components

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise CapabilityError(f"slice data lacks {', '.join(missing)}")


def sample_at(bg: BackgroundFoliation, omega, kind="cubic", tol=1e-12) -> SliceData:
    """Interpolate every background field at ``(omega(z), z)``.

    Interpolation is along the generator only (cubic by default); the graph's
    induced metric is the interpolated background metric.
    """
    omega = bg.grid.check_scalar(omega, "omega")
    if omega.shape != bg.grid.shape:
        raise ShapeError("omega must be a single scalar field on the grid")
    out = (omega < bg.lam_min - tol) | (omega > bg.lam_max + tol) | ~np.isfinite(omega)
    if out.any():
        raise ExitedDomain(np.argwhere(out))
    table, slots = bg._table
    vals = interp.interp_columns(table, bg.lam0, bg.dlam, omega.ravel(), kind)
    shape = bg.grid.shape

    def get(name):
        if name not in slots:
            return None
        v = vals[:, slots[name]]
        if _LAYOUT[name] == 1:
            return v[:, 0].reshape(shape)
        return v.T.reshape((_LAYOUT[name],) + shape)

    return SliceData(
        metric=MetricField(bg.grid, get("gamma")),
        **{n: get(n) for n in ("trchib", "chib_hat", "kappa", "gll", "alpha_hat", "trchi", "tau", "chi")},
    )


# ---------------------------------------------------------------------------
# analytic backgrounds


@dataclass(frozen=True)
class SchwarzschildCone:
    """Ingoing Eddington-Finkelstein cone ``v = const`` with ``r = r0 + lam``.

    The generator is the affine ``d/dr`` (past directed), so ``trchib = 2/r``
    and ``trchi = (2/r)(1 - 2m/r)``; the MOTS sits at ``r = 2m``.
    """

    m: float = 1.0
    r0: float = 1.0

    def radius(self, lam):
        return self.r0 + np.asarray(lam, dtype=float)


@dataclass(frozen=True)
class MinkowskiCone(SchwarzschildCone):
    m: float = 0.0

    def __post_init__(self):
        if self.m != 0.0:
            raise ValueError("a Minkowski cone has m = 0")


@dataclass(frozen=True)
class ShearFreeCustom:
    """Shear-free affine cone propagated from ``trchib0`` with source ``gkk``.

    ``trchib0(theta, phi)`` and ``gkk(lam, theta, phi)`` are callables (or
    constants). L-side data, if known, is given by ``trchi(lam, theta, phi)``;
    otherwise the background carries no ``trchi`` and cannot drive a flow.
    """

    trchib0: Callable | float = 2.0
    gkk: Callable | float = 0.0
    r0: float = 1.0
    trchi: Callable | None = None


def _evaluate(fn, *args):
    if callable(fn):
        return np.asarray(fn(*args), dtype=float)
    return np.asarray(fn, dtype=float)


def build_analytic(spec, grid: SphereGrid, lam) -> BackgroundFoliation:
    """Sample an analytic background on ``lam x grid``."""
    lam = np.asarray(lam, dtype=float)
    if isinstance(spec, SchwarzschildCone):
        r = spec.radius(lam)
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise DomainError("r0 + lambda must be positive on the whole grid")
        n = lam.size
        r3 = np.broadcast_to(r[:, None, None], (n,) + grid.shape)
        gamma = round_metric(grid).components[None] * (r3**2)[:, None]
        trchi = (2.0 / r3) * (1.0 - 2.0 * spec.m / r3)
        zeros = np.zeros((n,) + grid.shape)
        zeros3 = np.zeros((n, 3) + grid.shape)
        return BackgroundFoliation(
            grid=grid,
            lam=lam,
            gamma=gamma,
            trchib=2.0 / r3,
            chib_hat=zeros3,
            kappa=zeros,
            gll=zeros.copy(),
            alpha_hat=zeros3.copy(),
            trchi=trchi,
            tau=np.zeros((n, 2) + grid.shape),
            chi=0.5 * trchi[:, None] * gamma,
            affine=True,
            meta={"variant": type(spec).__name__, "m": spec.m, "r0": spec.r0},
        )
    if isinstance(spec, ShearFreeCustom):
        if spec.r0 <= 0:
            raise DomainError("r0 must be positive")
        theta, phi = grid.mesh
        n = lam.size
        trchib0 = np.broadcast_to(_evaluate(spec.trchib0, theta, phi), grid.shape)
        lam3 = np.broadcast_to(lam[:, None, None], (n,) + grid.shape)
        th3 = np.broadcast_to(theta, (n,) + grid.shape)
        ph3 = np.broadcast_to(phi, (n,) + grid.shape)
        gkk = np.broadcast_to(_evaluate(spec.gkk, lam3, th3, ph3), (n,) + grid.shape)
        bg = raychaudhuri_propagate(
            round_metric(grid, spec.r0),
            trchib0,
            np.zeros((3,) + grid.shape),
            lam,
            gll=gkk,
        )
        if spec.trchi is not None:
            bg = bg.with_fields(trchi=np.broadcast_to(_evaluate(spec.trchi, lam3, th3, ph3), (n,) + grid.shape).copy())
        bg.meta.update({"variant": "ShearFreeCustom", "r0": spec.r0})
        return bg
    raise TypeError(f"unknown analytic background {spec!r}")


# ---------------------------------------------------------------------------
# Raychaudhuri propagation


def _sources_at(table, lam0, h, x):
    if table is None:
        return None
    return interp.interp_along(table, lam0, h, x)


def _optical_rhs(grid, y, kappa, gll, alpha_hat):
    """Right-hand side of the optical equations plus metric transport.

    ``y = (trchib, chib_hat[3], gamma[3])`` stacked on the first axis.
    """
    trchib = y[0]
    shear = y[1:4]
    gamma = y[4:7]
    metric = MetricField(grid, gamma)
    shear_sq = tensor_norm(metric, shear) ** 2
    alpha = traceless_part(metric, alpha_hat)
    d_tr = -0.5 * trchib**2 - shear_sq - gll + kappa * trchib
    d_shear = -alpha + shear_sq[None] * gamma + kappa[None] * shear
    d_gamma = 2.0 * shear + trchib[None] * gamma
    return np.concatenate([d_tr[None], d_shear, d_gamma])


def raychaudhuri_propagate(
    gamma0: MetricField,
    trchib0,
    chib_hat0,
    lam,
    kappa=None,
    gll=None,
    alpha_hat=None,
    substeps: int = 1,
    focal_limit: float = FOCAL_LIMIT,
) -> BackgroundFoliation:
    """Integrate the optical equations ray by ray with classical RK4.

    Parameters
    ----------
    gamma0 : MetricField
        Metric of the initial leaf.
    trchib0, chib_hat0 : array_like
        Expansion and traceless shear of the initial leaf.
    lam : array_like
        Uniform grid of the generator parameter, starting at the initial leaf.
    kappa, gll, alpha_hat : array_like, optional
        Sources sampled on ``lam`` (default zero). ``alpha_hat`` is projected
        onto its traceless part with respect to the evolving metric.
    substeps : int
        RK4 steps per grid cell; sources between nodes are interpolated with
        cubics.

    Raises
    ------
    FocalPointReached
        if ``|trchib|`` exceeds ``focal_limit`` before the end of the grid.
    """
    grid = gamma0.grid
    lam = np.asarray(lam, dtype=float)
    lam0, h = interp.check_uniform(lam, "lambda grid")
    n = lam.size
    shape = (n,) + grid.shape

    def prep(src, ncomp):
        want = shape if ncomp == 1 else (n, ncomp) + grid.shape
        if src is None:
            return np.zeros(want)
        return np.broadcast_to(np.asarray(src, dtype=float), want).copy()

    kappa = prep(kappa, 1)
    gll = prep(gll, 1)
    alpha_hat = prep(alpha_hat, 3)
    trchib0 = np.broadcast_to(np.asarray(trchib0, dtype=float), grid.shape)
    chib_hat0 = grid.check_components(chib_hat0, 3, "chib_hat0")

    y = np.concatenate([trchib0[None], chib_hat0, gamma0.components])
    states = np.empty((n,) + y.shape)
    states[0] = y
    dt = h / substeps
    last = 0
    for k in range(n - 1):
        for j in range(substeps):
            x = lam[k] + j * dt

            def src(at):
                return (
                    _sources_at(kappa, lam0, h, at),
                    _sources_at(gll, lam0, h, at),
                    _sources_at(alpha_hat, lam0, h, at),
                )

            s0, s1, s2 = src(x), src(x + 0.5 * dt), src(x + dt)
            try:
                k1 = _optical_rhs(grid, y, *s0)
                k2 = _optical_rhs(grid, y + 0.5 * dt * k1, *s1)
                k3 = _optical_rhs(grid, y + 0.5 * dt * k2, *s1)
                k4 = _optical_rhs(grid, y + dt * k3, *s2)
            except DefinitenessError:
                y_new = None
            else:
                y_new = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if y_new is None or not np.all(np.isfinite(y_new)) or np.abs(y_new[0]).max() > focal_limit:
                partial = _assemble(grid, lam[: last + 1], states[: last + 1], kappa, gll, alpha_hat)
                raise FocalPointReached(x + dt, last, partial)
            y = y_new
        states[k + 1] = y
        last = k + 1
    return _assemble(grid, lam, states, kappa, gll, alpha_hat)


def _assemble(grid, lam, states, kappa, gll, alpha_hat):
    n = lam.size
    gamma = states[:, 4:7]
    metric = MetricField(grid, gamma)
    shear = traceless_part(metric, states[:, 1:4])
    alpha = traceless_part(metric, alpha_hat[:n]) if n else alpha_hat[:n]
    kappa = kappa[:n]
    return BackgroundFoliation(
        grid=grid,
        lam=lam,
        gamma=gamma,
        trchib=states[:, 0],
        chib_hat=shear,
        kappa=kappa,
        gll=gll[:n],
        alpha_hat=alpha,
        affine=bool(np.all(kappa == 0.0)),
    )


class RaychaudhuriPropagator(BaseEstimator):
    """Estimator wrapper: ``fit`` integrates the optical equations.

    ``fit(initial)`` takes a dict with keys ``gamma0`` (MetricField),
    ``trchib0`` and optionally ``chib_hat0``; the sources are fixed at
    construction. The resulting foliation is stored in ``foliation_``.
    """

    def __init__(self, lam=None, kappa=None, gll=None, alpha_hat=None, substeps=1, focal_limit=FOCAL_LIMIT):
        self.lam = lam
        self.kappa = kappa
        self.gll = gll
        self.alpha_hat = alpha_hat
        self.substeps = substeps
        self.focal_limit = focal_limit

    def fit(self, initial, y=None):
        gamma0 = initial["gamma0"]
        shear0 = initial.get("chib_hat0")
        if shear0 is None:
            shear0 = np.zeros((3,) + gamma0.grid.shape)
        self.foliation_ = raychaudhuri_propagate(
            gamma0,
            initial["trchib0"],
            shear0,
            self.lam,
            kappa=self.kappa,
            gll=self.gll,
            alpha_hat=self.alpha_hat,
            substeps=self.substeps,
            focal_limit=self.focal_limit,
        )
        return self

    def transform(self, omega):
        """Sample the fitted foliation on the graph ``omega``."""
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "foliation_")
        return sample_at(self.foliation_, omega)


def inverse_expansion_slope(lam, trchib) -> np.ndarray:
    """Discrete ``d/dlam (1/trchib)`` between consecutive leaves."""
    lam = np.asarray(lam, dtype=float)
    inv = 1.0 / np.asarray(trchib, dtype=float)
    return np.diff(inv, axis=0) / np.diff(lam).reshape((-1,) + (1,) * (inv.ndim - 1))


def area_profile(bg: BackgroundFoliation) -> np.ndarray:
    from .sphere import integrate

    return np.array([integrate(MetricField(bg.grid, bg.gamma[k]), np.ones(bg.grid.shape)) for k in range(bg.n_lam)])
