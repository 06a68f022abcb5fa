"""Command line entry point ``nullflow``.

Every subcommand reads one YAML configuration (``--config``) with dotted
``--set key=value`` overrides, writes its outputs under ``--out`` together
with ``report.json`` and ``manifest.json``, and exits 0 on success or PASS.

Exit codes: 0 success, 1 internal/other error, 2 configuration error,
3 precondition failure, 4 non-converged terminal flow status,
5 a check reported FAIL, 6 capability error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, expr
from .background import MinkowskiCone, SchwarzschildCone, ShearFreeCustom, build_analytic
from .config import RunConfig, load_config
from .errors import CapabilityError, ConfigError, NullFlowError, PreconditionError
from .flow import CONVERGED, FlowConfig, run_to_mots
from .foliation import FlowHistory, FoliationAtlas, mollify_glue, verify_foliation
from .gauge import check_energy_condition, check_gauge_condition, construct_gauge, reparametrize
from .io import load_background, load_fields, load_scalar, save_background, save_fields, save_scalar
from .sphere import SphereGrid

log = logging.getLogger("nullflow")

REPORT_SCHEMA = "nullflow-report/1"
MANIFEST_SCHEMA = "nullflow-manifest/1"

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_FLOW, EXIT_FAIL, EXIT_CAPABILITY = range(7)


class _Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return p

    def finish(self, status: str, exit_code: int, report: dict) -> int:
        body = {"schema": REPORT_SCHEMA, "command": self.command, "status": status, "exit_code": exit_code}
        body.update(report)
        self.write_text("report.json", json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n")
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "command": self.command,
            "config_hash": self.cfg.hash(),
            "config": self.cfg.to_dict(),
            "versions": _versions(),
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "outputs": {str(p.relative_to(self.out)): _sha256(p) for p in sorted(set(self.files)) if p.exists()},
            "status": status,
            "exit_code": exit_code,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return exit_code


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


def _sha256(p: Path) -> str:
    return hashlib.sha256(p.read_bytes()).hexdigest()


def _versions() -> dict:
    import numba
    import scipy
    import sklearn

    return {
        "nullflow": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "scikit-learn": sklearn.__version__,
    }


# ---------------------------------------------------------------------------
# building blocks


def make_grid(cfg: RunConfig) -> SphereGrid:
    return SphereGrid(cfg.grid.n_theta, cfg.grid.n_phi if cfg.grid.mode == "full" else 1)


def make_background(cfg: RunConfig):
    b = cfg.background
    if b.variant == "file":
        bg = load_background(b.file)
        grid = make_grid(cfg)
        if bg.grid != grid:
            raise ConfigError([f"background file grid {bg.grid.shape} does not match grid section {grid.shape}"])
        return bg
    grid = make_grid(cfg)
    lam = np.linspace(b.lam_min, b.lam_max, b.n_lam)
    if b.variant == "schwarzschild":
        return build_analytic(SchwarzschildCone(b.m, b.r0), grid, lam)
    if b.variant == "minkowski":
        return build_analytic(MinkowskiCone(r0=b.r0), grid, lam)
    trchib0 = expr.evaluate(b.trchib0, grid)
    return build_analytic(ShearFreeCustom(trchib0=trchib0, gkk=b.gkk, r0=b.r0), grid, lam)


def make_omega0(cfg: RunConfig, grid: SphereGrid) -> np.ndarray:
    f = cfg.flow
    if f.omega0_file:
        g, w = load_scalar(f.omega0_file)
        if g != grid:
            raise ConfigError([f"omega0 file grid {g.shape} does not match grid section {grid.shape}"])
        return w
    return expr.evaluate(f.omega0, grid)


def flow_config(cfg: RunConfig) -> FlowConfig:
    f = cfg.flow
    return FlowConfig(
        eps_mots=f.eps_mots,
        c_cfl=f.c_cfl,
        dt_min=f.dt_min,
        t_max=f.t_max,
        output_interval=f.output_interval,
        stall_steps=f.stall_steps,
        interp=f.interp,
    )


def _save_snapshot(path, grid, snap: dict):
    """Flow snapshot: arrays in the field format, loop scalars in the header."""
    fields = {
        "omega": snap["omega"],
        "omega0": snap["omega0"],
        "times": np.asarray(snap["times"]),
        "leaves": np.asarray(snap["leaves"]),
        "expansions": np.asarray(snap["expansions"]),
        "t_trace": np.asarray(snap["t_trace"]),
        "u_trace": np.asarray(snap["u_trace"]),
    }
    meta = {"t": snap["t"], "steps": snap["steps"], "progress": snap["progress"], "rows": snap["rows"]}
    save_fields(path, grid, fields, meta)


def load_snapshot(path) -> dict:
    _, fields, meta = load_fields(path)
    return {
        "omega": fields["omega"],
        "omega0": fields["omega0"],
        "t": meta["t"],
        "steps": meta["steps"],
        "progress": meta["progress"],
        "rows": meta["rows"],
        "times": list(fields["times"]),
        "leaves": list(fields["leaves"]),
        "expansions": list(fields["expansions"]),
        "t_trace": list(fields["t_trace"]),
        "u_trace": list(fields["u_trace"]),
    }


def _flow(run: _Run, bg, grid):
    cfg = run.cfg
    omega0 = make_omega0(cfg, grid)
    resume = load_snapshot(cfg.flow.resume) if cfg.flow.resume else None
    counter = {"k": 0}

    def sink(snap):
        counter["k"] += 1
        _save_snapshot(run.path(f"snapshots/flow_{counter['k']:05d}.nfs"), grid, snap)

    res = run_to_mots(omega0, bg, flow_config(cfg), resume=resume, snapshot_every=cfg.flow.snapshot_every, snapshot_sink=sink)
    res.write_time_series(run.path("time_series.csv"))
    save_scalar(run.path("omega_final.nfs"), grid, res.omega, {"status": res.status, "t": res.state.t})
    save_scalar(run.path("omega_extrapolated.nfs"), grid, res.omega_extrapolated)
    return res


def _flow_summary(res) -> dict:
    out = {
        "flow_status": res.status,
        "t": res.state.t,
        "steps": res.state.steps,
        "message": res.message,
        "max_abs_trchi": float(2 * np.abs(res.state.expansion).max()),
        "omega_min": float(res.omega.min()),
        "omega_max": float(res.omega.max()),
        "run_min_trchi": res.run_min_trchi,
        "run_min_confinement": res.run_min_c0,
        "strictly_decreasing": res.all_decreasing,
        "warnings": res.warnings[:20],
    }
    if res.nodes is not None:
        out["nodes"] = [list(n) for n in res.nodes]
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_propagate_background(run: _Run, args) -> int:
    bg = make_background(run.cfg)
    save_background(run.path("background.nfb"), bg)
    rows = np.column_stack([bg.lam, bg.trchib.reshape(bg.n_lam, -1).min(axis=1), bg.trchib.reshape(bg.n_lam, -1).max(axis=1)])
    np.savetxt(run.path("background_summary.csv"), rows, delimiter=",", header="lambda,min_trchib,max_trchib", fmt="%.17g", comments="")
    return run.finish("OK", EXIT_OK, {"n_lam": bg.n_lam, "lam_range": [bg.lam_min, bg.lam_max], "fields": bg.field_names()})


def _gauge(run: _Run):
    bg = make_background(run.cfg)
    gauge = construct_gauge(bg, run.cfg.gauge.v0)
    rep = check_gauge_condition(bg, gauge, run.cfg.gauge.tol)
    return bg, gauge, rep


def cmd_build_gauge(run: _Run, args) -> int:
    bg, gauge, rep = _gauge(run)
    save_fields(run.path("gauge.nfs"), bg.grid, {"lam": gauge.lam, "a": gauge.a, "kappa": gauge.kappa, "v": gauge.v, "s": gauge.s}, {"v0": run.cfg.gauge.v0})
    run.write_text("gauge_report.txt", rep.to_text(bg.lam))
    extra = {"s_range": list(gauge.s_range), "min_slack": rep.min_slack, "gauge_condition": "PASS" if rep.passed else "FAIL"}
    if run.cfg.gauge.reparametrize:
        save_background(run.path("background_s.nfb"), reparametrize(bg, gauge, run.cfg.gauge.n_s))
    return run.finish("OK", EXIT_OK, extra)


def cmd_check_gauge(run: _Run, args) -> int:
    bg, gauge, rep = _gauge(run)
    run.write_text("gauge_report.txt", rep.to_text(bg.lam))
    status = "PASS" if rep.passed else "FAIL"
    return run.finish(status, EXIT_OK if rep.passed else EXIT_FAIL, {"min_slack": rep.min_slack, "tol": rep.tol})


def cmd_check_energy(run: _Run, args) -> int:
    bg = make_background(run.cfg)
    rep = check_energy_condition(bg, run.cfg.tolerances.energy)
    run.write_text("energy_report.txt", rep.to_text(bg.lam))
    status = "PASS" if rep.passed else "FAIL"
    return run.finish(status, EXIT_OK if rep.passed else EXIT_FAIL, {"min_slack": rep.min_slack, "max_abs_slack": float(np.abs(rep.slack).max())})


def cmd_run_flow(run: _Run, args) -> int:
    bg = make_background(run.cfg)
    res = _flow(run, bg, bg.grid)
    code = EXIT_OK if res.status == CONVERGED else EXIT_FLOW
    return run.finish(res.status, code, _flow_summary(res))


def _glue(run: _Run, bg, res) -> FoliationAtlas:
    fo = run.cfg.foliation
    lam_j = fo.Lam if fo.Lam is not None else float(np.max(res.leaves[0]))
    atlas = mollify_glue(FlowHistory.from_result(res), bg, lam_j, fo.delta, fo.eps, fo.d_sigma, fo.top)
    atlas.export(run.path("atlas.csv"), run.path("atlas_leaves.nfs"), bg.grid)
    return atlas


def cmd_glue_foliation(run: _Run, args) -> int:
    bg = make_background(run.cfg)
    res = _flow(run, bg, bg.grid)
    if res.status != CONVERGED:
        return run.finish(res.status, EXIT_FLOW, _flow_summary(res))
    atlas = _glue(run, bg, res)
    ver = verify_foliation(atlas, bg, run.cfg.flow.eps_mots)
    summary = _flow_summary(res)
    summary.update(_verification_summary(ver))
    return run.finish(ver.status, EXIT_OK if ver.verified else EXIT_FAIL, summary)


def _verification_summary(ver) -> dict:
    return {
        "foliation": ver.status,
        "min_trchi": ver.min_trchi,
        "min_dsigma_omega": ver.min_dsigma,
        "expansion_witnesses": ver.expansion_witnesses[:50],
        "monotone_witnesses": ver.monotone_witnesses[:50],
        "outermost": ver.outermost(),
    }


def cmd_verify(run: _Run, args) -> int:
    bg = make_background(run.cfg)
    path = Path(args.atlas) if args.atlas else Path(run.cfg.out) / "atlas_leaves.nfs"
    if not path.exists():
        raise ConfigError([f"no atlas at {path}; run glue-foliation first or pass --atlas"])
    _, fields, meta = load_fields(path)
    atlas = FoliationAtlas(sigma=fields["sigma"], lam=fields["sigma"], leaves=fields["leaves"], dleaves=fields["dleaves"])
    ver = verify_foliation(atlas, bg, run.cfg.flow.eps_mots)
    return run.finish(ver.status, EXIT_OK if ver.verified else EXIT_FAIL, _verification_summary(ver))


def cmd_reproduce(run: _Run, args) -> int:
    from .scenarios import SCENARIOS, run_scenario

    if args.scenario not in SCENARIOS:
        raise ConfigError([f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}"])
    checks = run_scenario(args.scenario)
    lines = [c.line() for c in checks]
    run.write_text("acceptance.txt", "\n".join(lines) + "\n")
    for line in lines:
        log.info(line)
    ok = all(c.passed for c in checks)
    return run.finish("PASS" if ok else "FAIL", EXIT_OK if ok else EXIT_FAIL, {"scenario": args.scenario, "criteria": lines})


COMMANDS = {
    "propagate-background": cmd_propagate_background,
    "build-gauge": cmd_build_gauge,
    "check-gauge": cmd_check_gauge,
    "check-energy": cmd_check_energy,
    "run-flow": cmd_run_flow,
    "glue-foliation": cmd_glue_foliation,
    "verify": cmd_verify,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides", help="dotted override, repeatable")
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("--quiet", action="store_true")
    noise.add_argument("--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="nullflow", description="Mean curvature flow to MOTS in null hypersurfaces.")
    parser.add_argument("--version", action="version", version=f"nullflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "reproduce":
            p.add_argument("scenario")
        if name == "verify":
            p.add_argument("--atlas", metavar="PATH", help="atlas leaves file (default: OUT/atlas_leaves.nfs)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.overrides, args.out)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = _Run(args.command, cfg)
    try:
        code = COMMANDS[args.command](run, args)
    except NullFlowError as exc:
        code = {
            ConfigError: EXIT_CONFIG,
            PreconditionError: EXIT_PRECONDITION,
            CapabilityError: EXIT_CAPABILITY,
        }.get(type(exc), EXIT_ERROR)
        info = {"category": exc.category, "message": str(exc)}
        if getattr(exc, "nodes", None):
            info["nodes"] = [list(n) for n in exc.nodes][:100]
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return run.finish("ERROR", code, info)
    if not args.quiet:
        print(json.dumps(json.loads((run.out / "report.json").read_text()), indent=2))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
