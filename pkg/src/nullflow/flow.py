"""Mean curvature flow of graphs in the null hypersurface.

The graph function evolves by ``d omega / dt = -trchi_omega / 2`` with an
explicit fourth-order Runge-Kutta scheme under a parabolic step limit. The
flow stops once ``max |trchi_omega|`` drops below ``eps_mots``: the graph is
then a numerical MOTS.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import _kernels
from .background import BackgroundFoliation, sample_at
from .errors import ExitedDomain, PreconditionError, StiffnessError
from .graph import expansion_of
from .sphere import grad_norm_sq
from .validation import check_background, check_graph_function

__all__ = [
    "CONVERGED",
    "EXITED_DOMAIN",
    "MAX_TIME",
    "STIFFNESS",
    "FlowConfig",
    "MonitorReport",
    "FlowState",
    "FlowResult",
    "FlowOperator",
    "step",
    "monitor",
    "run_to_mots",
    "richardson_limit",
    "MeanCurvatureFlow",
]

log = logging.getLogger(__name__)

CONVERGED = "Converged"
EXITED_DOMAIN = "ExitedDomain"
MAX_TIME = "MaxTimeReached"
STIFFNESS = "StiffnessError"

TIME_SERIES_COLUMNS = (
    "t",
    "min_omega",
    "max_omega",
    "min_trchi",
    "max_trchi",
    "u_max",
    "c0_low",
    "c0_high",
    "metric_residual",
    "dt",
)


@dataclass
class FlowConfig:
    eps_mots: float = 1e-6
    c_cfl: float = 0.2
    dt_min: float = 1e-12
    t_max: float = 100.0
    output_interval: float = 0.1
    stall_steps: int = 1000
    stall_tol: float = 1e-12
    max_halvings: int = 12
    positivity_tol: float = 1e-10
    interp: str = "cubic"

    def problems(self) -> list[str]:
        out = []
        for name in ("eps_mots", "c_cfl", "dt_min", "t_max", "output_interval"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                out.append(f"flow.{name} must be positive and finite (got {v!r})")
        if self.stall_steps < 1:
            out.append("flow.stall_steps must be >= 1")
        if self.max_halvings < 0:
            out.append("flow.max_halvings must be >= 0")
        if self.interp not in ("cubic", "linear"):
            out.append(f"flow.interp must be 'cubic' or 'linear' (got {self.interp!r})")
        return out

    def validate(self) -> "FlowConfig":
        probs = self.problems()
        if probs:
            raise ValueError("; ".join(probs))
        return self


@dataclass(frozen=True)
class MonitorReport:
    min_trchi: float
    max_trchi: float
    u_max: float
    c0_low: float
    c0_high: float
    metric_residual: float = float("nan")
    warnings: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.warnings


@dataclass
class FlowState:
    """The stepper's state. ``expansion`` is ``trchi_omega / 2`` for ``omega``."""

    t: float
    omega: np.ndarray
    expansion: np.ndarray
    dt: float
    monitors: MonitorReport | None = None
    steps: int = 0
    grad_sq: np.ndarray | None = None
    spacing_sq: float = float("nan")


class FlowOperator:
    """Right-hand side ``omega -> trchi_omega / 2`` bound to one background.

    Uses the compiled kernel for cubic sampling and falls back to the array
    path otherwise. Evaluations outside the background range return ``None``
    together with the offending mask instead of raising, so the stepper can
    retry with a smaller step.
    """

    def __init__(self, bg: BackgroundFoliation, interp="cubic", compiled=True):
        bg.require("trchi", "tau")
        self.bg = bg
        self.grid = bg.grid
        self.interp = interp
        self.compiled = compiled and interp == "cubic"
        table, slots = bg._table
        g0 = slots["gamma"].start
        t0 = slots["tau"].start
        self._table = table
        self._cols = np.array(
            [g0, g0 + 1, g0 + 2, slots["trchib"].start, slots["kappa"].start, slots["trchi"].start, t0, t0 + 1],
            dtype=np.int64,
        )
        self._sin_t = np.ascontiguousarray(np.sin(self.grid.theta))
        self._sin_f = np.ascontiguousarray(self.grid.sin_theta_faces[:, 0])
        self.n_evals = 0

    def out_of_range(self, omega) -> np.ndarray:
        bg = self.bg
        return ~((omega >= bg.lam_min - 1e-12) & (omega <= bg.lam_max + 1e-12))

    def __call__(self, omega):
        """Return ``(half_expansion, grad_sq, min_spacing_sq)`` or ``None``."""
        self.n_evals += 1
        if self.compiled:
            out = np.empty(self.grid.shape)
            gsq = np.empty(self.grid.shape)
            spacing = np.empty(1)
            bad = _kernels.half_expansion(
                self._table,
                self._cols,
                self.bg.lam0,
                self.bg.dlam,
                np.ascontiguousarray(omega),
                self._sin_t,
                self._sin_f,
                self.grid.dtheta,
                self.grid.dphi,
                out,
                gsq,
                spacing,
            )
            if bad:
                return None
            return out, gsq, float(spacing[0])
        if self.out_of_range(omega).any():
            return None
        data = sample_at(self.bg, omega, kind=self.interp)
        g = data.metric.components
        h2 = float((g[0] * self.grid.dtheta**2).min())
        if not self.grid.axisymmetric:
            h2 = min(h2, float((g[2] * self.grid.dphi**2).min()))
        return expansion_of(data, omega), grad_norm_sq(data.metric, omega), h2


def _initial_state(op: FlowOperator, omega0, t=0.0) -> FlowState:
    omega0 = np.array(op.grid.check_scalar(omega0, "omega0"), dtype=float)
    res = op(omega0)
    if res is None:
        raise ExitedDomain(np.argwhere(op.out_of_range(omega0)), "initial graph lies outside the background range")
    e, gsq, h2 = res
    return FlowState(t=t, omega=omega0, expansion=e, dt=float("nan"), grad_sq=gsq, spacing_sq=h2)


def step(state: FlowState, bg: BackgroundFoliation | None = None, config: FlowConfig | None = None, *, op=None, t_stop=None) -> FlowState:
    """One accepted RK4 step.

    The step is ``c_cfl`` times the smallest squared cell edge of the current
    graph metric, clipped to land on ``t_stop``. A stage or result that leaves
    the background range halves the step; after ``max_halvings`` halvings the
    flow is deemed to have left the domain.
    """
    config = config or FlowConfig()
    if op is None:
        op = FlowOperator(bg, config.interp)
    dt = config.c_cfl * state.spacing_sq
    if t_stop is not None:
        dt = min(dt, t_stop - state.t)
    if not np.isfinite(dt) or dt <= 0:
        raise StiffnessError(f"invalid step size {dt!r}")
    w, k1 = state.omega, state.expansion
    halvings = 0
    while True:
        if dt < config.dt_min:
            raise StiffnessError(f"step size {dt:.3e} fell below dt_min = {config.dt_min:.3e}")
        failed = None
        r2 = op(w - 0.5 * dt * k1)
        r3 = r2 and op(w - 0.5 * dt * r2[0])
        r4 = r3 and op(w - dt * r3[0])
        if r4 is None:
            failed = w - dt * k1
        else:
            new = w - (dt / 6.0) * (k1 + 2.0 * r2[0] + 2.0 * r3[0] + r4[0])
            rn = op(new)
            if rn is None:
                failed = new
            elif not (np.all(np.isfinite(new)) and np.all(np.isfinite(rn[0]))):
                failed = new
        if failed is None:
            break
        halvings += 1
        if halvings > config.max_halvings:
            mask = op.out_of_range(failed) | ~np.isfinite(failed)
            if not mask.any():
                mask = failed <= op.bg.lam_min + dt * np.abs(k1)
            raise ExitedDomain(np.argwhere(mask), f"graph leaves the background range near t = {state.t:.6g}")
        dt *= 0.5
    e, gsq, h2 = rn
    return FlowState(t=state.t + dt, omega=new, expansion=e, dt=dt, steps=state.steps + 1, grad_sq=gsq, spacing_sq=h2)


def metric_residual(bg: BackgroundFoliation, omega_old, omega_new, dt, trchi_new, interp="cubic") -> float:
    """Sup norm of ``(gamma_new - gamma_old)/dt + trchi_omega * chib``.

    The graph metric obeys ``d gamma_omega / dt = -trchi_omega chib``; the
    one-sided difference makes the residual first order in ``dt``.
    """
    old = sample_at(bg, omega_old, kind=interp)
    new = sample_at(bg, omega_new, kind=interp)
    res = (new.metric.components - old.metric.components) / dt + trchi_new[None] * new.chib
    return float(np.abs(res).max())


def monitor(
    state: FlowState,
    bg: BackgroundFoliation,
    omega0=None,
    trapped_level=None,
    previous: FlowState | None = None,
    config: FlowConfig | None = None,
) -> MonitorReport:
    """Monitor quantities of a state (reporting only, never raises)."""
    config = config or FlowConfig()
    trchi = 2.0 * state.expansion
    gsq = state.grad_sq
    if gsq is None:
        gsq = grad_norm_sq(sample_at(bg, state.omega, kind=config.interp).metric, state.omega)
    omega0 = state.omega if omega0 is None else omega0
    if trapped_level is None:
        trapped_level = bg.trapped_level() if bg.trchi is not None else bg.lam_min
    warnings = []
    min_trchi = float(trchi.min())
    if min_trchi < -config.positivity_tol:
        warnings.append(f"expansion turned negative ({min_trchi:.3e})")
    resid = float("nan")
    if previous is not None:
        if np.any(state.omega >= previous.omega) and np.all(previous.expansion > 0):
            warnings.append("graph did not decrease at every node")
        if bg.chib_hat is not None and state.dt > 0:
            resid = metric_residual(bg, previous.omega, state.omega, state.dt, trchi, config.interp)
    return MonitorReport(
        min_trchi=min_trchi,
        max_trchi=float(trchi.max()),
        u_max=0.5 * float(gsq.max()),
        c0_low=float(state.omega.min() - trapped_level),
        c0_high=float(np.min(np.max(omega0) - state.omega)),
        metric_residual=resid,
        warnings=tuple(warnings),
    )


def richardson_limit(omega1, e1, omega2, e2) -> np.ndarray:
    """Extrapolate two frames of an exponentially settling graph to ``e = 0``.

    Linear in the expansion: ``omega_inf = omega2 - e2 (omega1 - omega2)/(e1 - e2)``;
    nodes whose expansion did not change keep ``omega2``.
    """
    de = e1 - e2
    safe = np.abs(de) > 1e-300
    ratio = np.divide(omega1 - omega2, de, out=np.zeros_like(de), where=safe)
    return np.where(safe, omega2 - e2 * ratio, omega2)


@dataclass
class FlowResult:
    status: str
    state: FlowState
    omega: np.ndarray
    omega_extrapolated: np.ndarray
    times: np.ndarray
    leaves: np.ndarray
    expansions: np.ndarray
    rows: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    message: str = ""
    nodes: np.ndarray | None = None
    run_min_trchi: float = float("inf")
    run_min_c0: float = float("inf")
    all_decreasing: bool = True
    u_trace: np.ndarray | None = None
    t_trace: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def time_series(self) -> np.ndarray:
        return np.array([[r[c] for c in TIME_SERIES_COLUMNS] for r in self.rows], dtype=float)

    def write_time_series(self, path, delimiter=","):
        np.savetxt(path, self.time_series(), delimiter=delimiter, header=delimiter.join(TIME_SERIES_COLUMNS), fmt="%.17g", comments="")


@dataclass
class _Progress:
    """Loop bookkeeping that a snapshot must carry to resume bit-identically."""

    frame: int = 0
    stall_ref: float = float("inf")
    stall_step: int = 0
    run_min_trchi: float = float("inf")
    run_min_c0: float = float("inf")
    all_decreasing: bool = True


def _row(state: FlowState, rep: MonitorReport) -> dict:
    return {
        "t": state.t,
        "min_omega": float(state.omega.min()),
        "max_omega": float(state.omega.max()),
        "min_trchi": rep.min_trchi,
        "max_trchi": rep.max_trchi,
        "u_max": rep.u_max,
        "c0_low": rep.c0_low,
        "c0_high": rep.c0_high,
        "metric_residual": rep.metric_residual,
        "dt": state.dt,
    }


def run_to_mots(
    omega0,
    bg: BackgroundFoliation,
    config: FlowConfig | None = None,
    *,
    resume: dict | None = None,
    snapshot_every: int = 0,
    snapshot_sink=None,
    stop_after_frames: int | None = None,
) -> FlowResult:
    """Flow ``omega0`` until it is a numerical MOTS or another terminal status.

    Terminal statuses: ``Converged`` (``max |trchi| < eps_mots``),
    ``ExitedDomain``, ``MaxTimeReached`` (including stalls) and
    ``StiffnessError``. The initial graph must be strictly outer un-trapped,
    otherwise :class:`PreconditionError` lists the offending nodes.

    ``resume`` is the dictionary produced by a snapshot sink; with
    ``snapshot_every = k`` the sink receives such a dictionary every ``k``
    output frames.
    """
    config = (config or FlowConfig()).validate()
    op = FlowOperator(bg, config.interp)
    omega0 = np.array(bg.grid.check_scalar(omega0, "omega0"), dtype=float)
    trapped = bg.trapped_level()
    if resume is None:
        state = _initial_state(op, omega0)
        bad = state.expansion <= 0
        if bad.any():
            raise PreconditionError(
                f"initial graph is not outer un-trapped at {int(bad.sum())} node(s)", np.argwhere(bad)
            )
        prog = _Progress()
        times, leaves, exps, rows, t_trace, u_trace = [], [], [], [], [], []
        rep = monitor(state, bg, omega0, trapped, config=config)
        state.monitors = rep
        prog.run_min_trchi = rep.min_trchi
        prog.run_min_c0 = min(rep.c0_low, rep.c0_high)
        times.append(state.t)
        leaves.append(state.omega.copy())
        exps.append(state.expansion.copy())
        rows.append(_row(state, rep))
        t_trace.append(state.t)
        u_trace.append(rep.u_max)
        prog.frame = 1
    else:
        state = _initial_state(op, resume["omega"], t=resume["t"])
        state.steps = resume["steps"]
        prog = _Progress(**resume["progress"])
        times, leaves, exps = list(resume["times"]), list(resume["leaves"]), list(resume["expansions"])
        rows = [dict(r) for r in resume["rows"]]
        t_trace, u_trace = list(resume["t_trace"]), list(resume["u_trace"])
        omega0 = resume["omega0"]
    warnings: list[str] = []
    status, message, nodes = None, "", None
    frames_written = 0
    while status is None:
        max_abs = 2.0 * float(np.abs(state.expansion).max())
        if max_abs < config.eps_mots:
            status = CONVERGED
            break
        if state.t >= config.t_max * (1.0 - 1e-14):
            status, message = MAX_TIME, f"t_max = {config.t_max} reached with max|trchi| = {max_abs:.3e}"
            break
        if state.steps - prog.stall_step >= config.stall_steps:
            if abs(prog.stall_ref - max_abs) < config.stall_tol:
                status = MAX_TIME
                message = f"stalled: max|trchi| = {max_abs:.3e} changed by less than {config.stall_tol:g} over {config.stall_steps} steps"
                break
            prog.stall_ref, prog.stall_step = max_abs, state.steps
        elif prog.stall_ref == float("inf"):
            prog.stall_ref, prog.stall_step = max_abs, state.steps
        t_next = min(prog.frame * config.output_interval, config.t_max)
        previous = state
        try:
            state = step(state, bg, config, op=op, t_stop=t_next)
        except ExitedDomain as exc:
            status, message, nodes = EXITED_DOMAIN, str(exc), exc.nodes
            state = previous
            break
        except StiffnessError as exc:
            status, message = STIFFNESS, str(exc)
            state = previous
            break
        # cheap monitors every accepted step
        trchi = 2.0 * state.expansion
        mn = float(trchi.min())
        prog.run_min_trchi = min(prog.run_min_trchi, mn)
        if mn < -config.positivity_tol:
            warnings.append(f"t={state.t:.6g}: expansion turned negative ({mn:.3e})")
        if np.any(state.omega >= previous.omega) and np.all(previous.expansion > 0):
            prog.all_decreasing = False
            warnings.append(f"t={state.t:.6g}: graph did not decrease at every node")
        c0 = min(float(state.omega.min() - trapped), float(np.min(np.max(omega0) - state.omega)))
        prog.run_min_c0 = min(prog.run_min_c0, c0)
        t_trace.append(state.t)
        u_trace.append(0.5 * float(state.grad_sq.max()))
        if state.t >= t_next * (1.0 - 1e-14) or state.t >= t_next - 1e-13:
            rep = monitor(state, bg, omega0, trapped, previous, config)
            state.monitors = rep
            times.append(state.t)
            leaves.append(state.omega.copy())
            exps.append(state.expansion.copy())
            rows.append(_row(state, rep))
            prog.frame += 1
            log.debug("t=%.4f max|trchi|=%.3e dt=%.2e", state.t, 2 * np.abs(state.expansion).max(), state.dt)
            if snapshot_every and snapshot_sink is not None and (prog.frame - 1) % snapshot_every == 0:
                snapshot_sink(
                    {
                        "omega": state.omega.copy(),
                        "omega0": omega0,
                        "t": state.t,
                        "steps": state.steps,
                        "progress": asdict(prog),
                        "times": list(times),
                        "leaves": list(leaves),
                        "expansions": list(exps),
                        "rows": [dict(r) for r in rows],
                        "t_trace": list(t_trace),
                        "u_trace": list(u_trace),
                    }
                )
            frames_written += 1
            if stop_after_frames is not None and frames_written >= stop_after_frames:
                status, message = "Interrupted", "stopped on request"
                break
    if state.monitors is None or times[-1] != state.t:
        rep = monitor(state, bg, omega0, trapped, config=config)
        state.monitors = rep
        times.append(state.t)
        leaves.append(state.omega.copy())
        exps.append(state.expansion.copy())
        rows.append(_row(state, rep))
    if len(leaves) >= 2:
        extrap = richardson_limit(leaves[-2], exps[-2], leaves[-1], exps[-1])
    else:
        extrap = state.omega.copy()
    return FlowResult(
        status=status,
        state=state,
        omega=state.omega.copy(),
        omega_extrapolated=extrap,
        times=np.asarray(times),
        leaves=np.asarray(leaves),
        expansions=np.asarray(exps),
        rows=rows,
        warnings=warnings,
        message=message,
        nodes=nodes,
        run_min_trchi=prog.run_min_trchi,
        run_min_c0=prog.run_min_c0,
        all_decreasing=prog.all_decreasing,
        t_trace=np.asarray(t_trace),
        u_trace=np.asarray(u_trace),
    )


def gradient_bound_ratio(result: FlowResult, head=0.1) -> float:
    """``sup u`` over the run divided by ``max u`` over its first ``head`` fraction."""
    t, u = result.t_trace, result.u_trace
    first = u[t <= t[0] + head * (t[-1] - t[0])]
    ref = float(first.max())
    top = float(u.max())
    if ref == 0.0:
        return 1.0 if top == 0.0 else float("inf")
    return top / ref


class MeanCurvatureFlow(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit(omega0)`` runs the flow to a MOTS.

    Fitted attributes: ``result_``, ``status_``, ``omega_`` (final graph),
    ``omega_extrapolated_`` and ``history_`` (time series rows).
    ``transform(omega0)`` returns the final graph for a new start.
    """

    def __init__(
        self,
        background=None,
        eps_mots=1e-6,
        c_cfl=0.2,
        dt_min=1e-12,
        t_max=100.0,
        output_interval=0.1,
        stall_steps=1000,
        interp="cubic",
    ):
        self.background = background
        self.eps_mots = eps_mots
        self.c_cfl = c_cfl
        self.dt_min = dt_min
        self.t_max = t_max
        self.output_interval = output_interval
        self.stall_steps = stall_steps
        self.interp = interp

    def _config(self) -> FlowConfig:
        names = {f.name for f in fields(FlowConfig)}
        return FlowConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, X, y=None):
        bg = check_background(self.background, "trchi", "tau")
        res = run_to_mots(check_graph_function(X, bg, "omega0"), bg, self._config())
        self.result_ = res
        self.status_ = res.status
        self.omega_ = res.omega
        self.omega_extrapolated_ = res.omega_extrapolated
        self.history_ = res.rows
        return self

    def transform(self, X):
        return self.fit(X).omega_

