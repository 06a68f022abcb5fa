"""Run configuration: nested YAML mapping, dotted overrides, aggregated validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import expr
from .errors import ConfigError

VARIANTS = ("schwarzschild", "minkowski", "shear-free", "file")


@dataclass
class BackgroundSection:
    variant: str = "schwarzschild"
    m: float = 1.0
    r0: float = 0.0
    lam_min: float = 1.0
    lam_max: float = 4.0
    n_lam: int = 3001
    file: str | None = None
    trchib0: str = "2"
    gkk: float = 0.0


@dataclass
class GridSection:
    mode: str = "axisymmetric"
    n_theta: int = 64
    n_phi: int = 1


@dataclass
class GaugeSection:
    v0: float = 0.5
    tol: float = 1e-8
    n_s: int | None = None
    reparametrize: bool = False


@dataclass
class FlowSection:
    omega0: str | None = "3 + 0.3*cos(theta)"
    omega0_file: str | None = None
    eps_mots: float = 1e-6
    c_cfl: float = 0.2
    dt_min: float = 1e-12
    t_max: float = 100.0
    output_interval: float = 0.05
    stall_steps: int = 1000
    interp: str = "cubic"
    snapshot_every: int = 0
    resume: str | None = None


@dataclass
class FoliationSection:
    Lam: float | None = None
    delta: float = 0.2
    eps: float = 0.05
    d_sigma: float | None = None
    top: float | None = None


@dataclass
class ToleranceSection:
    energy: float = 1e-8


@dataclass
class RunConfig:
    background: BackgroundSection = field(default_factory=BackgroundSection)
    grid: GridSection = field(default_factory=GridSection)
    gauge: GaugeSection = field(default_factory=GaugeSection)
    flow: FlowSection = field(default_factory=FlowSection)
    foliation: FoliationSection = field(default_factory=FoliationSection)
    tolerances: ToleranceSection = field(default_factory=ToleranceSection)
    out: str = "nullflow-out"

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """SHA-256 of the canonical JSON of everything except the output directory."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_SECTIONS = {f.name: f.default_factory for f in fields(RunConfig) if f.name != "out"}


def _coerce(value, current_type, key, problems):
    t = str(current_type)
    if value is None:
        if "None" in t:
            return None
        problems.append(f"{key}: must not be null")
        return value
    try:
        if t.startswith("float"):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if t.startswith("int"):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if t.startswith("bool"):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if t.startswith("str"):
            return str(value)
    except (TypeError, ValueError):
        problems.append(f"{key}: cannot interpret {value!r} as {t}")
    return value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError([f"--set expects key=value, got {text!r}"])
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw) if raw.strip() else None


def _set_dotted(tree: dict, key: str, value):
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError([f"{key}: {p} is not a section"])
    node[parts[-1]] = value


def build_config(mapping: dict | None = None, overrides=(), out: str | None = None) -> RunConfig:
    """Build and validate a :class:`RunConfig`; all problems are raised together."""
    tree = json.loads(json.dumps(mapping or {}))
    problems: list[str] = []
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        _set_dotted(tree, key, value)
    if out is not None:
        tree["out"] = out
    cfg = RunConfig()
    for key, value in tree.items():
        if key == "out":
            cfg.out = str(value)
            continue
        if key not in _SECTIONS:
            problems.append(f"unknown section {key!r}")
            continue
        if not isinstance(value, dict):
            problems.append(f"section {key!r} must be a mapping")
            continue
        section = getattr(cfg, key)
        types = {f.name: f.type for f in fields(section)}
        for k, v in value.items():
            if k not in types:
                problems.append(f"unknown key {key}.{k}")
                continue
            n_before = len(problems)
            value_ok = _coerce(v, types[k], f"{key}.{k}", problems)
            if len(problems) == n_before:
                setattr(section, k, value_ok)
    # values that failed coercion keep their defaults so the remaining checks still run
    problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(cfg: RunConfig) -> list[str]:
    p = []
    b, g, ga, fl, fo = cfg.background, cfg.grid, cfg.gauge, cfg.flow, cfg.foliation
    if b.variant not in VARIANTS:
        p.append(f"background.variant must be one of {VARIANTS}")
    if b.variant == "file" and not b.file:
        p.append("background.file is required for variant 'file'")
    if b.variant != "file":
        if not (b.lam_max > b.lam_min):
            p.append("background.lam_max must exceed background.lam_min")
        if b.n_lam < 5:
            p.append("background.n_lam must be at least 5")
        if b.variant in ("schwarzschild", "minkowski") and b.r0 + b.lam_min <= 0:
            p.append("background.r0 + background.lam_min must be positive")
        if b.variant == "schwarzschild" and b.m < 0:
            p.append("background.m must be non-negative")
        if b.variant == "shear-free":
            if b.r0 <= 0:
                p.append("background.r0 must be positive for shear-free backgrounds")
            try:
                expr.parse(b.trchib0)
            except ConfigError as exc:
                p.extend(f"background.trchib0: {m}" for m in exc.problems)
    if g.mode not in ("axisymmetric", "full"):
        p.append("grid.mode must be 'axisymmetric' or 'full'")
    if g.n_theta < 4:
        p.append("grid.n_theta must be at least 4")
    if g.mode == "axisymmetric" and g.n_phi != 1:
        p.append("grid.n_phi must be 1 in axisymmetric mode")
    if g.mode == "full" and (g.n_phi < 4 or g.n_phi % 2):
        p.append("grid.n_phi must be an even number >= 4 in full mode")
    if not (0.0 < ga.v0 < 1.0):
        p.append("gauge.v0 must lie strictly between 0 and 1")
    if ga.tol < 0:
        p.append("gauge.tol must be non-negative")
    if fl.omega0 is None and fl.omega0_file is None:
        p.append("flow.omega0 or flow.omega0_file is required")
    if fl.omega0 is not None:
        try:
            expr.parse(fl.omega0)
        except ConfigError as exc:
            p.extend(f"flow.omega0: {m}" for m in exc.problems)
    for name in ("eps_mots", "c_cfl", "dt_min", "t_max", "output_interval"):
        v = getattr(fl, name)
        if not (np.isfinite(v) and v > 0):
            p.append(f"flow.{name} must be positive")
    if fl.stall_steps < 1:
        p.append("flow.stall_steps must be >= 1")
    if fl.snapshot_every < 0:
        p.append("flow.snapshot_every must be >= 0")
    if fl.interp not in ("cubic", "linear"):
        p.append("flow.interp must be 'cubic' or 'linear'")
    if not (fo.delta > 0 and fo.eps > 0):
        p.append("foliation.delta and foliation.eps must be positive")
    elif fo.eps >= 0.5 * fo.delta:
        p.append("foliation.eps must be below foliation.delta / 2")
    if cfg.tolerances.energy < 0:
        p.append("tolerances.energy must be non-negative")
    return p


def load_config(path=None, overrides=(), out=None) -> RunConfig:
    mapping = {}
    if path is not None:
        try:
            mapping = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError([f"cannot read config {path}: {exc}"]) from None
        if not isinstance(mapping, dict):
            raise ConfigError([f"{path}: top level must be a mapping"])
    return build_config(mapping, overrides, out)
