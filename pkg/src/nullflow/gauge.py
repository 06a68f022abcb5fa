"""Rescaled generators ``Lb = a k`` on a null cone.

A gauge is built per null ray from the auxiliary function ``v`` solving
``v' = beta (1 - v)^2`` with ``beta = trK / 2``, in closed form
``v = (v0 + (1 - v0) I) / (1 + (1 - v0) I)`` with ``I = int beta``, and
``(log a)' = beta / v``. The module also evaluates the gauge inequality
and the energy condition and reparametrizes a background by the flow
parameter ``s`` of ``Lb``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from sklearn.base import BaseEstimator, TransformerMixin

from . import interp
from .background import BackgroundFoliation, sample_at
from .errors import DomainError, NotANullCone, ReparametrizationError, ShapeError
from .graph import chi_graph, expansion_of, graph_torsion
from .sphere import gradient, tensor_norm
from .validation import check_background

__all__ = [
    "GaugeProfile",
    "GaugeReport",
    "EnergyReport",
    "construct_gauge",
    "affine_gauge",
    "check_gauge_condition",
    "check_energy_condition",
    "energy_slack",
    "reparametrize",
    "GaugeBuilder",
]


@dataclass(frozen=True, eq=False)
class GaugeProfile:
    """Scaling ``a`` of the generator sampled on a background lattice.

    Arrays are ``(n_lam, n_theta, n_phi)``. ``kappa = da/dlam``,
    ``dkappa = d kappa / dlam`` and ``s`` is ``int_0^lam du / a``.
    """

    lam: np.ndarray
    a: np.ndarray
    kappa: np.ndarray
    dkappa: np.ndarray
    v: np.ndarray
    s: np.ndarray
    v0: np.ndarray | None = None

    @property
    def s_range(self) -> tuple[float, float]:
        """Common s-interval reached by every ray."""
        return 0.0, float(self.s[-1].min())


def _khat_norm(bg):
    return tensor_norm(bg.metric, bg.chib_hat)


def _alpha_norm(bg):
    return tensor_norm(bg.metric, bg.alpha_hat)


def _dtrk(bg, khat_sq):
    # Raychaudhuri along the affine generator
    return -0.5 * bg.trchib**2 - khat_sq - bg.gll


def construct_gauge(bg: BackgroundFoliation, v0=0.5) -> GaugeProfile:
    if not bg.affine:
        raise DomainError("construct_gauge needs an affine background")
    trk = bg.trchib
    if np.any(~(trk > 0)):
        bad = np.argwhere(~(trk > 0))
        raise NotANullCone(f"trK <= 0 at {len(bad)} lattice point(s), first at index {tuple(bad[0])}")
    v0 = np.broadcast_to(np.asarray(v0, dtype=float), bg.grid.shape)
    if np.any(~((v0 > 0) & (v0 < 1))):
        raise DomainError("v0 must lie strictly between 0 and 1")
    h = bg.dlam
    beta = 0.5 * trk
    big = interp.cumulative_quad(beta, h)
    c = (1.0 - v0)[None]
    v = (v0[None] + c * big) / (1.0 + c * big)
    log_a = interp.cumulative_quad(beta / v, h)
    a = np.exp(log_a)
    kappa = a * beta / v
    # closed-form kappa' from a' = a beta / v, v' = beta (1-v)^2 and the
    # Raychaudhuri identity for trK'
    dbeta = 0.5 * _dtrk(bg, _khat_norm(bg) ** 2)
    dkappa = a * (beta / v) ** 2 + a * dbeta / v - a * beta**2 * (1.0 - v) ** 2 / v**2
    s = interp.cumulative_quad(1.0 / a, h)
    return GaugeProfile(lam=bg.lam.copy(), a=a, kappa=kappa, dkappa=dkappa, v=v, s=s, v0=np.array(v0))


def affine_gauge(bg: BackgroundFoliation) -> GaugeProfile:
    """The trivial gauge ``a = 1``."""
    shape = (bg.n_lam,) + bg.grid.shape
    ones = np.ones(shape)
    s = np.broadcast_to((bg.lam - bg.lam[0])[:, None, None], shape).copy()
    return GaugeProfile(lam=bg.lam.copy(), a=ones, kappa=np.zeros(shape), dkappa=np.zeros(shape), v=np.full(shape, np.nan), s=s)


@dataclass(frozen=True, eq=False)
class GaugeReport:
    slack: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    energy_slack: np.ndarray
    tol: float

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tol

    def per_lambda_min(self) -> np.ndarray:
        return self.slack.reshape(self.slack.shape[0], -1).min(axis=1)

    def to_text(self, lam) -> str:
        lines = [f"# gauge condition: {'PASS' if self.passed else 'FAIL'} min_slack={self.min_slack:.17g} tol={self.tol:g}", "lambda,min_slack"]
        lines += [f"{x:.17g},{m:.17g}" for x, m in zip(lam, self.per_lambda_min())]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class EnergyReport:
    slack: np.ndarray
    tol: float

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tol

    def per_lambda_min(self) -> np.ndarray:
        return self.slack.reshape(self.slack.shape[0], -1).min(axis=1)

    def to_text(self, lam) -> str:
        lines = [f"# energy condition: {'PASS' if self.passed else 'FAIL'} min_slack={self.min_slack:.17g} tol={self.tol:g}", "lambda,min_slack"]
        lines += [f"{x:.17g},{m:.17g}" for x, m in zip(lam, self.per_lambda_min())]
        return "\n".join(lines) + "\n"


def energy_slack(gkk, khat_norm, trk, alpha_norm):
    """``G(k,k) - 5/2 |K^|^2 - 2 trK |K^| - 2 |alpha^|``."""
    return gkk - 2.5 * khat_norm**2 - 2.0 * trk * khat_norm - 2.0 * alpha_norm


def _check_lattice(bg: BackgroundFoliation, gauge: GaugeProfile):
    want = (bg.n_lam,) + bg.grid.shape
    if gauge.a.shape != want or not np.array_equal(gauge.lam, bg.lam):
        raise ShapeError(f"gauge lattice {gauge.a.shape} does not match background lattice {want}")


def check_gauge_condition(bg: BackgroundFoliation, gauge: GaugeProfile, tol_gauge=1e-8) -> GaugeReport:
    """Slack of the gauge inequality for ``Lb = a k`` on an affine background.

    Left side ``G(Lb,Lb) - d(2 kappa - trchib)(Lb)``, right side
    ``|(trchib - 4 kappa) chib^| + 2 |alpha^| + 5/2 |chib^|^2`` with the
    rescalings ``trchib = a trK``, ``chib^ = a K^``, ``alpha^ = a^2 alpha_k^``
    and ``G(Lb,Lb) = a^2 G(k,k)``.
    """
    _check_lattice(bg, gauge)
    if not bg.affine:
        raise DomainError("check_gauge_condition expects the affine background")
    a, kap, dkap = gauge.a, gauge.kappa, gauge.dkappa
    trk = bg.trchib
    kn = _khat_norm(bg)
    an = _alpha_norm(bg)
    dtrk = _dtrk(bg, kn**2)
    # d(2 kappa - a trK)(a d/dlam)
    lhs = a**2 * bg.gll - a * (2.0 * dkap - kap * trk - a * dtrk)
    rhs = np.abs(a * trk - 4.0 * kap) * a * kn + 2.0 * a**2 * an + 2.5 * a**2 * kn**2
    return GaugeReport(
        slack=lhs - rhs,
        lhs=lhs,
        rhs=rhs,
        energy_slack=energy_slack(bg.gll, kn, trk, an),
        tol=float(tol_gauge),
    )


def check_energy_condition(bg: BackgroundFoliation, tol=1e-8) -> EnergyReport:
    if not bg.affine:
        raise DomainError("the energy condition is stated for the affine generator")
    return EnergyReport(slack=energy_slack(bg.gll, _khat_norm(bg), bg.trchib, _alpha_norm(bg)), tol=float(tol))


def reparametrize(bg: BackgroundFoliation, gauge: GaugeProfile, n_s: int | None = None) -> BackgroundFoliation:
    """Resample ``bg`` on a uniform grid of the flow parameter ``s`` of ``a k``.

    Each leaf ``{s = const}`` is the graph ``lam = lam(s, z)`` over the affine
    foliation; generator-side fields are rescaled by powers of ``a``, and the
    L-side data are those of the graph with the partner normalised against
    ``a k``.
    """
    _check_lattice(bg, gauge)
    a = gauge.a
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ReparametrizationError("gauge scaling must be finite and positive")
    s = gauge.s
    if np.any(np.diff(s, axis=0) <= 0):
        raise ReparametrizationError("s(lambda) is not strictly increasing")
    s_top = float(s[-1].min())
    if not (np.isfinite(s_top) and s_top > 0):
        raise ReparametrizationError("the s-range collapsed")
    n_s = n_s or bg.n_lam
    s_grid = np.linspace(0.0, s_top, n_s)
    grid = bg.grid
    nodes = s.reshape(bg.n_lam, -1)
    a_flat = a.reshape(bg.n_lam, -1)
    lam_of_s = np.empty((n_s, nodes.shape[1]))
    for j in range(nodes.shape[1]):
        # d lam / d s = a, so Hermite data give a fourth-order inverse
        lam_of_s[:, j] = CubicHermiteSpline(nodes[:, j], bg.lam, a_flat[:, j])(s_grid)
    lam_of_s = np.clip(lam_of_s, bg.lam_min, bg.lam_max)
    lam_of_s[0] = bg.lam_min
    shape = grid.shape
    n = n_s
    g_tab = np.stack([a, gauge.kappa], axis=-1).reshape(bg.n_lam, -1, 2)
    out = {k: [] for k in ("gamma", "trchib", "chib_hat", "kappa", "gll", "alpha_hat", "trchi", "tau", "chi")}
    for k in range(n):
        w = lam_of_s[k].reshape(shape)
        d = sample_at(bg, w)
        ak, kk = interp.interp_columns(g_tab, bg.lam0, bg.dlam, w.ravel()).T
        ak, kk = ak.reshape(shape), kk.reshape(shape)
        out["gamma"].append(d.metric.components)
        out["trchib"].append(ak * d.trchib)
        out["chib_hat"].append(ak[None] * d.chib_hat)
        out["kappa"].append(kk)
        out["gll"].append(ak**2 * d.gll)
        out["alpha_hat"].append(ak[None] ** 2 * d.alpha_hat)
        if bg.has("trchi") and bg.has("tau"):
            out["trchi"].append(2.0 * expansion_of(d, w) / ak)
            out["tau"].append(graph_torsion(d, w) + gradient(grid, np.log(ak)))
        if bg.has("chi") and bg.has("tau"):
            out["chi"].append(chi_graph(d, w) / ak[None])
    arrays = {k: (np.stack(v) if v else None) for k, v in out.items()}
    meta = dict(bg.meta)
    meta.update({"reparametrized": True, "s_max": s_top})
    return BackgroundFoliation(grid=grid, lam=s_grid, affine=False, parameter="s", meta=meta, **arrays)


class GaugeBuilder(TransformerMixin, BaseEstimator):
    """``fit(bg)`` builds the gauge; ``transform(bg)`` returns the s-background."""

    def __init__(self, v0=0.5, tol_gauge=1e-8, n_s=None):
        self.v0 = v0
        self.tol_gauge = tol_gauge
        self.n_s = n_s

    def fit(self, X, y=None):
        check_background(X)
        self.profile_ = construct_gauge(X, self.v0)
        self.report_ = check_gauge_condition(X, self.profile_, self.tol_gauge)
        return self

    def transform(self, X):
        return reparametrize(X, self.profile_, self.n_s)
