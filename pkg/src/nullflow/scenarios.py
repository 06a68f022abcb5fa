"""Reference scenarios with analytic or end-to-end oracles.

Each check returns a :class:`Check` with a pass flag and a one-line detail.
The heavy flow runs are cached per process so several checks can share them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .background import (
    MinkowskiCone,
    SchwarzschildCone,
    build_analytic,
    inverse_expansion_slope,
    raychaudhuri_propagate,
    sample_at,
)
from .flow import CONVERGED, EXITED_DOMAIN, FlowConfig, gradient_bound_ratio, run_to_mots
from .foliation import MollifierSpec, mollify_glue, verify_foliation
from .gauge import affine_gauge, check_gauge_condition, construct_gauge
from .graph import expansion_of, trace_chi_graph
from .sphere import SphereGrid, laplace_beltrami, round_metric

# lambda grid shared by the Schwarzschild flow scenarios: r = lambda on [1, 4]
FLOW_LAM = (1.0, 4.0, 3001)


@dataclass(frozen=True)
class Check:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"criterion {self.number} [{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _flow_background(m, n_theta, n_phi=1):
    grid = SphereGrid(n_theta, n_phi)
    cone = SchwarzschildCone(m, 0.0) if m > 0 else MinkowskiCone(r0=0.0)
    return build_analytic(cone, grid, np.linspace(*FLOW_LAM))


@lru_cache(maxsize=None)
def mots_run(n_theta: int, output_interval: float = 0.05):
    """The perturbed Schwarzschild run ``omega0 = 3 + 0.3 cos(theta)``."""
    bg = _flow_background(1.0, n_theta)
    theta = bg.grid.mesh[0]
    start = time.perf_counter()
    res = run_to_mots(3.0 + 0.3 * np.cos(theta), bg, FlowConfig(output_interval=output_interval))
    return bg, res, time.perf_counter() - start


def check_mots_location(n_theta=128) -> Check:
    _, res, secs = mots_run(n_theta)
    _, fine, _ = mots_run(2 * n_theta)
    err = float(np.abs(res.omega - 2.0).max())
    err_fine = float(np.abs(fine.omega - 2.0).max())
    ratio = err / err_fine if err_fine > 0 else float("inf")
    x_err = float(np.abs(res.omega_extrapolated - 2.0).max())
    x_fine = float(np.abs(fine.omega_extrapolated - 2.0).max())
    x_ratio = x_err / x_fine if x_fine > 0 else float("inf")
    ok = res.status == CONVERGED and fine.status == CONVERGED and err < 5e-3 and ratio >= 3.5 and secs < 60.0
    return Check(
        1,
        "Schwarzschild MOTS location",
        ok,
        f"status={res.status} sup|w-2|={err:.3e} (n={n_theta}) {err_fine:.3e} (n={2 * n_theta}) "
        f"ratio={ratio:.3f} (need >= 3.5); extrapolated {x_err:.3e}/{x_fine:.3e} ratio={x_ratio:.3f}; runtime {secs:.1f}s",
    )


def uniform_run(n_theta=16, t_end=30.0):
    bg = _flow_background(1.0, n_theta)
    cfg = FlowConfig(t_max=t_end, output_interval=0.1)
    return run_to_mots(np.full(bg.grid.shape, 3.0), bg, cfg)


def check_uniform_ode() -> Check:
    from scipy.integrate import solve_ivp

    res = uniform_run()
    sol = solve_ivp(
        lambda t, w: -(1.0 / w) * (1.0 - 2.0 / w),
        (0.0, 30.0),
        [3.0],
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
        dense_output=True,
    )
    ref = sol.sol(res.times)[0]
    err = float(np.abs(res.leaves - ref[:, None, None]).max())
    final = float(np.abs(res.leaves[-1] - 2.0).max())
    ok = err < 1e-8 and final < 2e-3 and abs(res.times[-1] - 30.0) < 1e-9
    return Check(2, "uniform-flow ODE oracle", ok, f"sup traj err={err:.3e} (< 1e-8), |w(30)-2|={final:.3e} (< 2e-3)")


def check_raychaudhuri() -> Check:
    grid = SphereGrid(4)
    lam = np.linspace(0.0, 3.0, 301)
    bg = raychaudhuri_propagate(round_metric(grid, 1.0), np.full(grid.shape, 2.0), np.zeros((3,) + grid.shape), lam)
    err = float(np.abs(bg.trchib - (2.0 / (1.0 + lam))[:, None, None]).max())
    slope = float(inverse_expansion_slope(lam, bg.trchib).min())
    ok = err < 1e-8 and slope >= 0.5 - 1e-6
    return Check(3, "Raychaudhuri closed form", ok, f"max|trchib-2/(1+lam)|={err:.3e} (< 1e-8), min d(1/trchib)={slope:.12f} (>= 0.5-1e-6)")


def check_gauge() -> Check:
    grid = SphereGrid(8)
    lam = np.linspace(0.0, np.e - 1.0, 173)
    bg = build_analytic(SchwarzschildCone(1.0, 1.0), grid, lam)
    gauge = construct_gauge(bg, 0.5)
    r = 1.0 + lam
    rel = float(np.abs(gauge.a / (r * (1.0 + np.log(r)))[:, None, None] - 1.0).max())
    rep = check_gauge_condition(bg, gauge, 1e-8)
    aff = check_gauge_condition(bg, affine_gauge(bg), 1e-8)
    ok = rel < 1e-6 and rep.passed and rep.min_slack >= -1e-8 and not aff.passed
    return Check(
        4,
        "gauge construction closed form",
        ok,
        f"max rel err a={rel:.3e} (< 1e-6), constructed min slack={rep.min_slack:.3e} ({'PASS' if rep.passed else 'FAIL'}), "
        f"affine gauge {'PASS' if aff.passed else 'FAIL'} (min slack {aff.min_slack:.3e})",
    )


def check_monitors(n_theta=128) -> Check:
    _, res, _ = mots_run(n_theta)
    ratio = gradient_bound_ratio(res)
    ok = res.run_min_trchi > -1e-10 and res.all_decreasing and ratio <= 2.0 and res.run_min_c0 >= 0.0
    return Check(
        5,
        "monitor suite",
        ok,
        f"min trchi={res.run_min_trchi:.3e} (> -1e-10), strictly decreasing={res.all_decreasing}, "
        f"u bound ratio={ratio:.3f} (<= 2), min confinement margin={res.run_min_c0:.3e} (>= 0)",
    )


def legendre_orders(ls=(1, 2, 3, 4), ns=(32, 64, 128, 256)):
    from scipy.special import eval_legendre

    orders = {}
    for l in ls:
        errs = []
        for n in ns:
            grid = SphereGrid(n)
            f = eval_legendre(l, np.cos(grid.mesh[0]))
            lap = laplace_beltrami(round_metric(grid), f)
            errs.append(float(np.abs(lap + l * (l + 1) * f).max()))
        orders[l] = (errs, np.log2(np.array(errs[:-1]) / np.array(errs[1:])))
    return orders


def check_laplace_beltrami() -> Check:
    orders = legendre_orders()
    worst = min(float(o.min()) for _, o in orders.values())
    ok = worst >= 1.9
    parts = " ".join(f"l={l}:{','.join(f'{x:.2f}' for x in o)}" for l, (_, o) in orders.items())
    return Check(6, "Laplace-Beltrami convergence", ok, f"observed orders {parts}; min={worst:.3f} (>= 1.9)")


def check_foliation(n_theta=128, Lam=3.0, delta=0.2, eps=0.05) -> Check:
    bg, res, _ = mots_run(n_theta)
    atlas = mollify_glue(res, bg, Lam, delta, eps)
    ver = verify_foliation(atlas, bg)
    norm = abs(MollifierSpec(eps).integral() - 1.0)
    errs = []
    for k in range(5):
        a = mollify_glue(res, bg, Lam, delta, eps / 2**k)
        errs.append(float(np.abs(a.v_eps - a.v).max()))
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    ok = ver.verified and norm < 1e-10 and bool(np.all(ratios <= 0.75))
    return Check(
        7,
        "foliation gluing",
        ok,
        f"{ver.status} (min trchi={ver.min_trchi:.3e}, min d_sigma w={ver.min_dsigma:.3e}), "
        f"|int eta_eps - 1|={norm:.2e}, halving ratios={','.join(f'{r:.3f}' for r in ratios)} (<= 0.75)",
    )


def minkowski_run(n_theta=64):
    bg = _flow_background(0.0, n_theta)
    return run_to_mots(np.full(bg.grid.shape, 2.0), bg, FlowConfig())


def check_minkowski() -> Check:
    res = minkowski_run()
    ok = res.status == EXITED_DOMAIN and res.run_min_trchi > 0
    return Check(8, "Minkowski negative control", ok, f"status={res.status} at t={res.state.t:.4f}, min trchi over run={res.run_min_trchi:.3e} (> 0)")


def two_path_errors(ns=(32, 64, 128)):
    errs = []
    for n in ns:
        bg = _flow_background(1.0, n)
        w = 2.0 + 0.1 * np.cos(bg.grid.mesh[0])
        d = sample_at(bg, w)
        errs.append(float(np.abs(trace_chi_graph(d, w) - 2.0 * expansion_of(d, w)).max()))
    return errs


def check_two_path() -> Check:
    errs = two_path_errors()
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = bool(np.all(orders >= 1.9))
    return Check(
        9,
        "two-path expansion consistency",
        ok,
        f"sup differences {', '.join(f'{e:.3e}' for e in errs)}; orders {', '.join(f'{o:.3f}' for o in orders)} (>= 1.9)",
    )


CHECKS = {
    1: check_mots_location,
    2: check_uniform_ode,
    3: check_raychaudhuri,
    4: check_gauge,
    5: check_monitors,
    6: check_laplace_beltrami,
    7: check_foliation,
    8: check_minkowski,
    9: check_two_path,
}

SCENARIOS = {
    "schwarzschild-mots": (1, 5, 7),
    "uniform-flow": (2,),
    "raychaudhuri": (3,),
    "gauge": (4,),
    "laplace-beltrami": (6,),
    "minkowski": (8,),
    "two-path": (9,),
    "all": tuple(range(1, 10)),
}


def run_scenario(name: str) -> list[Check]:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return [CHECKS[k]() for k in SCENARIOS[name]]
