"""Gluing the flow's leaves to the outer background foliation.

Below the junction level ``Lam`` the leaves come from the flow history,
``v(lam) = omega(t = Lam - lam)``; above it they are the outer family
``omega0 + (lam - Lam)``. The continuous but kinked ``v`` is mollified in
``lam`` and blended in with a smooth partition of unity, giving the family

    omega_eps = z1 * flow + z2 * v_eps + z3 * outer.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from sklearn.base import BaseEstimator

from .background import BackgroundFoliation
from .errors import DomainError, ExitedDomain, ResolutionError
from .flow import FlowOperator
from .io import save_fields
from .validation import check_background

__all__ = [
    "MollifierSpec",
    "PartitionOfUnity",
    "FlowHistory",
    "FoliationAtlas",
    "Verification",
    "bump",
    "mollifier_constant",
    "mollify",
    "mollify_glue",
    "background_atlas",
    "verify_foliation",
    "FoliationGluer",
]


def bump(s):
    """``exp(1/(s^2 - 1))`` on ``|s| < 1``, zero outside."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 / (s[inside] ** 2 - 1.0))
    return out


def _trapezoid_bump(m):
    s = np.linspace(-1.0, 1.0, m + 1)
    return bump(s).sum() * 2.0 / m


@lru_cache(maxsize=None)
def mollifier_constant(tol=1e-10) -> float:
    """``C`` with ``int C exp(1/(s^2-1)) ds = 1``, by trapezoid refinement."""
    m, prev = 16, _trapezoid_bump(16)
    while True:
        m *= 2
        cur = _trapezoid_bump(m)
        if abs(cur - prev) < 0.01 * tol:
            return 1.0 / cur
        prev = cur


@dataclass(frozen=True)
class MollifierSpec:
    """Normalised mollifier ``eta_eps(s) = eta(s/eps)/eps`` and its quadrature."""

    eps: float
    tol: float = 1e-10
    min_cells: int = 32

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise DomainError("mollification width must be positive")

    @property
    def C(self) -> float:
        return mollifier_constant(self.tol)

    @property
    def cells(self) -> int:
        """Trapezoid cells across ``[-eps, eps]``: spacing at most ``eps/16``
        and fine enough to normalise to ``tol``."""
        m = self.min_cells
        while abs(self.C * _trapezoid_bump(m) - 1.0) > 0.1 * self.tol:
            m *= 2
        return m

    def nodes(self):
        """Offsets ``u - lam`` and weights of the convolution quadrature."""
        m = self.cells
        s = np.linspace(-1.0, 1.0, m + 1)
        w = self.C * bump(s) * (2.0 / m)
        return self.eps * s, w

    def integral(self) -> float:
        return float(self.nodes()[1].sum())

    def __call__(self, x):
        return self.C * bump(np.asarray(x) / self.eps) / self.eps


def mollify(fn, lam, spec: MollifierSpec):
    """``int eta_eps(lam - u) fn(u) du`` for each entry of ``lam``.

    ``fn`` maps an array of abscissae ``(k,)`` to values ``(k, ...)``.
    """
    lam = np.asarray(lam, dtype=float)
    off, w = spec.nodes()
    u = (lam[:, None] - off[None, :]).ravel()
    vals = fn(u)
    vals = vals.reshape((lam.size, off.size) + vals.shape[1:])
    return np.tensordot(w, vals, axes=([0], [1]))


def _step(x):
    """Smooth step: 0 for x <= 0, 1 for x >= 1, from ``exp(-1/x)``."""
    x = np.asarray(x, dtype=float)
    f = lambda y: np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)  # noqa: E731
    a, b = f(x), f(1.0 - x)
    return a / (a + b)


def _dstep(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    a, b = np.exp(-1.0 / xs), np.exp(-1.0 / (1.0 - xs))
    da, db = a / xs**2, -b / (1.0 - xs) ** 2
    d = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return np.where(inside, d, 0.0)


@dataclass(frozen=True)
class PartitionOfUnity:
    """``z1 + z2 + z3 = 1`` around the junction ``Lam`` with overlap ``delta``."""

    Lam: float
    delta: float

    def __post_init__(self):
        if not (self.delta > 0):
            raise DomainError("delta must be positive")

    def _x1(self, lam):
        return (np.asarray(lam, dtype=float) - (self.Lam - self.delta)) / (0.5 * self.delta)

    def z1(self, lam):
        return 1.0 - _step(self._x1(lam))

    def z3(self, lam):
        return self.z1(2.0 * self.Lam - np.asarray(lam, dtype=float))

    def z2(self, lam):
        return 1.0 - self.z1(lam) - self.z3(lam)

    def __call__(self, lam):
        z1, z3 = self.z1(lam), self.z3(lam)
        return z1, 1.0 - z1 - z3, z3

    def derivatives(self, lam):
        lam = np.asarray(lam, dtype=float)
        k = 2.0 / self.delta
        d1 = -k * _dstep(self._x1(lam))
        d3 = k * _dstep(self._x1(2.0 * self.Lam - lam))
        return d1, -d1 - d3, d3


@dataclass
class FlowHistory:
    """Leaves ``omega(t, z)`` and ``trchi / 2`` at the output frames of a run."""

    times: np.ndarray
    leaves: np.ndarray
    expansions: np.ndarray

    @classmethod
    def from_result(cls, result) -> "FlowHistory":
        return cls(np.asarray(result.times), np.asarray(result.leaves), np.asarray(result.expansions))

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size < 2 or np.any(np.diff(self.times) <= 0):
            raise ResolutionError("flow history needs at least two frames at increasing times")
        # omega_t = -E, so Hermite data keep the resampling fourth order
        self._leaf = CubicHermiteSpline(self.times, self.leaves, -np.asarray(self.expansions), axis=0)
        self._rate = CubicSpline(self.times, self.expansions, axis=0)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def leaf(self, t):
        return self._leaf(np.clip(t, self.times[0], self.times[-1]))

    def speed(self, t):
        """``-d omega / dt = trchi / 2`` at time ``t``."""
        return self._rate(np.clip(t, self.times[0], self.times[-1]))


@dataclass(eq=False)
class FoliationAtlas:
    sigma: np.ndarray
    lam: np.ndarray
    leaves: np.ndarray
    dleaves: np.ndarray
    expansion: np.ndarray | None = None
    Lam: float = float("nan")
    delta: float = float("nan")
    eps: float = float("nan")
    window: np.ndarray | None = None
    v: np.ndarray | None = None
    v_eps: np.ndarray | None = None

    def rows(self) -> np.ndarray:
        n = self.sigma.size
        flat = self.leaves.reshape(n, -1)
        tr = self.expansion.reshape(n, -1).min(axis=1) if self.expansion is not None else np.full(n, np.nan)
        return np.column_stack([self.sigma, flat.min(axis=1), flat.max(axis=1), tr, self.dleaves.reshape(n, -1).min(axis=1)])

    def export(self, table_path, leaves_path=None, grid=None, delimiter=","):
        cols = ("sigma", "min_omega", "max_omega", "min_trchi", "min_dsigma_omega")
        np.savetxt(table_path, self.rows(), delimiter=delimiter, header=delimiter.join(cols), fmt="%.17g", comments="")
        if leaves_path is not None:
            fields = {"sigma": self.sigma, "leaves": self.leaves, "dleaves": self.dleaves}
            if self.expansion is not None:
                fields["trchi"] = self.expansion
            save_fields(leaves_path, grid, fields, {"Lam": self.Lam, "delta": self.delta, "eps": self.eps})


def _leaf_expansions(op: FlowOperator, leaves) -> np.ndarray:
    out = np.empty_like(leaves)
    for k, w in enumerate(leaves):
        res = op(w)
        if res is None:
            raise ExitedDomain(np.argwhere(op.out_of_range(w)), f"leaf {k} leaves the background range")
        out[k] = 2.0 * res[0]
    return out


def mollify_glue(
    history,
    bg: BackgroundFoliation,
    Lam: float,
    delta: float,
    eps: float,
    d_sigma: float | None = None,
    top: float | None = None,
    omega0=None,
) -> FoliationAtlas:
    """Glue a flow history to the outer leaves ``omega0 + (lam - Lam)``.

    The atlas parameter is ``sigma = lam - (Lam - T)`` with ``T`` the flow
    duration, so ``sigma = 0`` is the last flow leaf. ``omega0`` defaults to
    the first leaf of the history.
    """
    if not isinstance(history, FlowHistory):
        history = FlowHistory.from_result(history)
    if not (eps > 0 and delta > 0):
        raise DomainError("delta and eps must be positive")
    if eps >= 0.5 * delta:
        raise DomainError(f"mollification width eps = {eps} must be below delta/2 = {0.5 * delta}")
    gaps = np.diff(history.times)
    if gaps.max() > 0.25 * delta * (1.0 + 1e-9):
        raise ResolutionError(f"flow frames {gaps.max():.3g} apart cannot resolve the gluing band delta = {delta}")
    T = history.duration
    if T < delta + eps:
        raise ResolutionError("flow history is shorter than the gluing band")
    omega0 = history.leaves[0] if omega0 is None else np.asarray(omega0, dtype=float)
    d_sigma = d_sigma or delta / 40.0
    top = 2.0 * delta if top is None else top
    k_below = max(int(round(T / d_sigma)), 1)
    h = T / k_below
    k_above = max(int(np.ceil(top / h)), 1)
    lam = (Lam - T) + h * np.arange(k_below + k_above + 1)
    lam[k_below] = Lam
    if float(np.max(omega0)) + (lam[-1] - Lam) > bg.lam_max + 1e-12:
        raise DomainError("outer leaves leave the background range; lower 'top' or extend the background")
    t0 = history.times[0]
    spec = MollifierSpec(eps)
    pou = PartitionOfUnity(Lam, delta)

    def v_of(u):
        u = np.asarray(u, dtype=float)
        below = u <= Lam
        flow = history.leaf(t0 + (Lam - u))
        outer = omega0[None] + (u - Lam)[:, None, None]
        return np.where(below[:, None, None], flow, outer)

    def dv_of(u):
        u = np.asarray(u, dtype=float)
        below = u <= Lam
        return np.where(below[:, None, None], history.speed(t0 + (Lam - u)), 1.0)

    z1, z2, z3 = pou(lam)
    d1, d2, d3 = pou.derivatives(lam)
    flow = history.leaf(t0 + np.clip(Lam - lam, 0.0, T))
    dflow = history.speed(t0 + np.clip(Lam - lam, 0.0, T))
    outer = omega0[None] + (lam - Lam)[:, None, None]
    window = np.flatnonzero(np.abs(lam - Lam) < delta)
    v_eps = np.zeros_like(flow)
    dv_eps = np.zeros_like(flow)
    if window.size:
        v_eps[window] = mollify(v_of, lam[window], spec)
        dv_eps[window] = mollify(dv_of, lam[window], spec)
    e = lambda z: z[:, None, None]  # noqa: E731
    leaves = e(z1) * flow + e(z2) * v_eps + e(z3) * outer
    dleaves = e(d1) * flow + e(z1) * dflow + e(d2) * v_eps + e(z2) * dv_eps + e(d3) * outer + e(z3)
    atlas = FoliationAtlas(
        sigma=lam - lam[0],
        lam=lam,
        leaves=leaves,
        dleaves=dleaves,
        Lam=Lam,
        delta=delta,
        eps=eps,
        window=window,
        v=v_of(lam[window]),
        v_eps=v_eps[window],
    )
    atlas.expansion = _leaf_expansions(FlowOperator(bg), leaves)
    return atlas


def background_atlas(bg: BackgroundFoliation, lam) -> FoliationAtlas:
    """Atlas made of background leaves ``omega = lam``."""
    lam = np.asarray(lam, dtype=float)
    shape = (lam.size,) + bg.grid.shape
    leaves = np.broadcast_to(lam[:, None, None], shape).copy()
    atlas = FoliationAtlas(sigma=lam - lam[0], lam=lam, leaves=leaves, dleaves=np.ones(shape))
    atlas.expansion = _leaf_expansions(FlowOperator(bg), leaves)
    return atlas


@dataclass(frozen=True, eq=False)
class Verification:
    verified: bool
    expansion_witnesses: np.ndarray
    monotone_witnesses: np.ndarray
    min_trchi: float
    min_dsigma: float
    near_mots_leaves: np.ndarray

    @property
    def status(self) -> str:
        return "VERIFIED" if self.verified else "FAILED"

    def outermost(self) -> bool:
        """No leaf other than the first is a numerical MOTS."""
        return bool(np.all(self.near_mots_leaves == 0))


def verify_foliation(atlas: FoliationAtlas, bg: BackgroundFoliation, eps_mots=1e-6) -> Verification:
    """Check ``d omega / d sigma > 0`` and ``trchi > 0`` on every leaf and node.

    Expansions are recomputed on ``bg``. Witnesses are ``(leaf, i, j)`` index
    triples; the inequalities are strict.
    """
    trchi = _leaf_expansions(FlowOperator(bg), atlas.leaves)
    bad_e = np.argwhere(~(trchi > 0))
    bad_d = np.argwhere(~(atlas.dleaves > 0))
    near = np.flatnonzero(trchi.reshape(trchi.shape[0], -1).max(axis=1) <= eps_mots)
    return Verification(
        verified=bad_e.size == 0 and bad_d.size == 0,
        expansion_witnesses=bad_e,
        monotone_witnesses=bad_d,
        min_trchi=float(trchi.min()),
        min_dsigma=float(atlas.dleaves.min()),
        near_mots_leaves=near,
    )


class FoliationGluer(BaseEstimator):
    """``fit(history)`` glues and verifies; the atlas is ``atlas_``."""

    def __init__(self, background=None, Lam=None, delta=0.2, eps=0.05, d_sigma=None, top=None):
        self.background = background
        self.Lam = Lam
        self.delta = delta
        self.eps = eps
        self.d_sigma = d_sigma
        self.top = top

    def fit(self, X, y=None):
        check_background(self.background, "trchi", "tau")
        hist = X if isinstance(X, FlowHistory) else FlowHistory.from_result(X)
        lam_j = float(np.max(hist.leaves[0])) if self.Lam is None else self.Lam
        self.atlas_ = mollify_glue(hist, self.background, lam_j, self.delta, self.eps, self.d_sigma, self.top)
        self.verification_ = verify_foliation(self.atlas_, self.background)
        return self

    def predict(self, X=None):
        return self.verification_.status
