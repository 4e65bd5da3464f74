"""Scenario configuration files.

Grammar::

    # comment
    scenario = tossed_ruler        # shorthand for [scenario] name = ...
    [section]
    key = value                    # SI units; lists are comma separated

Unknown sections or keys are rejected; errors carry the line number.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from ..errors import ConfigError

log = logging.getLogger(__name__)


@dataclass
class ScenarioBlock:
    name: str = ""
    gravity: float = 0.0
    load_scale: float = 1.0
    velocity: float = 0.0  # initial speed (tube)
    release_time: float = 0.25
    twist_rate: float = 8.0 * math.pi  # rad/s
    U0: float = 0.1
    omega: float = math.pi


@dataclass
class MeshBlock:
    extents: tuple[float, ...] = (1.0, 1.0, 1.0)
    divisions: tuple[int, ...] = (4, 4, 4)
    order: int = 1
    # tube only
    diameter: float = 0.2
    thickness: float = 2.5e-3
    circumferential: int = 24


@dataclass
class MaterialBlock:
    E: float = 1.0
    nu: float = 0.3
    rho0: float = 1.0


@dataclass
class IntegratorBlock:
    family: str = "n2"
    rho_b: float = 1.0
    rho_s: float = 1.0
    alpha_f: float = 0.0
    update_form: str = "displacement"
    truncation_mode: str = "fixed"
    n_terms: int = 2
    trunc_tol: float = 1e-12
    k_max: int = 50


@dataclass
class AdaptivityBlock:
    adaptive: bool = True
    tol: float = 0.1
    tol_min: float = math.nan  # nan -> tol / 10
    rho_tol: float = 0.9
    dt0: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = math.inf
    max_rejections: int = 20


@dataclass
class TimeBlock:
    t_f: float = 1.0


@dataclass
class MassBlock:
    kind: str = "consistent"


@dataclass
class OutputBlock:
    csv: str = "timeseries.csv"
    vtk_dir: str = ""
    stride: int = 0  # 0 disables snapshots
    directory: str = "."


SECTIONS = {
    "scenario": ScenarioBlock,
    "mesh": MeshBlock,
    "material": MaterialBlock,
    "integrator": IntegratorBlock,
    "adaptivity": AdaptivityBlock,
    "time": TimeBlock,
    "mass": MassBlock,
    "output": OutputBlock,
}


@dataclass
class ScenarioConfig:
    scenario: ScenarioBlock = field(default_factory=ScenarioBlock)
    mesh: MeshBlock = field(default_factory=MeshBlock)
    material: MaterialBlock = field(default_factory=MaterialBlock)
    integrator: IntegratorBlock = field(default_factory=IntegratorBlock)
    adaptivity: AdaptivityBlock = field(default_factory=AdaptivityBlock)
    time: TimeBlock = field(default_factory=TimeBlock)
    mass: MassBlock = field(default_factory=MassBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    @property
    def name(self) -> str:
        return self.scenario.name

    @property
    def tol_min(self) -> float:
        a = self.adaptivity
        return a.tol / 10.0 if math.isnan(a.tol_min) else a.tol_min

    def to_text(self) -> str:
        """Resolved configuration in the same grammar (round-trips through the parser)."""
        out = []
        for sec in SECTIONS:
            out.append(f"[{sec}]")
            for k, v in asdict(getattr(self, sec)).items():
                if sec == "adaptivity" and k == "tol_min":
                    v = self.tol_min
                out.append(f"{k} = {_format(v)}")
            out.append("")
        return "\n".join(out)


def _format(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _convert(raw: str, proto: Any, key: str, line: int):
    try:
        if isinstance(proto, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError("expected true/false")
        if isinstance(proto, int):
            return int(raw)
        if isinstance(proto, float):
            return float(raw)
        if isinstance(proto, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            kind = type(proto[0]) if proto else float
            return tuple(kind(s) for s in items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {line}: invalid value for '{key}': {raw!r} ({exc})") from None


def parse_text(text: str, source: str = "<config>") -> dict[str, dict[str, tuple[str, int]]]:
    """Split into ``{section: {key: (raw value, line)}}``."""
    out: dict[str, dict[str, tuple[str, int]]] = {}
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"{source}: line {lineno}: malformed section header {raw_line.strip()!r}")
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigError(f"{source}: line {lineno}: unknown section [{section}]; expected one of {sorted(SECTIONS)}")
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value', got {raw_line.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}: line {lineno}: empty key")
        if section is None:
            if key != "scenario":
                raise ConfigError(f"{source}: line {lineno}: key '{key}' appears before any [section]")
            out.setdefault("scenario", {})["name"] = (value, lineno)
            continue
        sec = out[section]
        if key in sec:
            raise ConfigError(f"{source}: line {lineno}: duplicate key '{key}' in [{section}]")
        sec[key] = (value, lineno)
    return out


def build_config(parsed: dict[str, dict[str, tuple[str, int]]], source: str = "<config>") -> ScenarioConfig:
    from .scenarios import CATALOG  # local import: scenarios depend on this module

    name_entry = parsed.get("scenario", {}).get("name")
    if name_entry is None:
        raise ConfigError(f"{source}: missing scenario name (add 'scenario = <name>')")
    name = name_entry[0]
    if name not in CATALOG:
        raise ConfigError(f"{source}: line {name_entry[1]}: unknown scenario '{name}'; available: {', '.join(sorted(CATALOG))}")
    cfg = CATALOG[name].default_config()
    for sec, entries in parsed.items():
        block = getattr(cfg, sec)
        known = {f.name: f for f in fields(block)}
        for key, (raw, line) in entries.items():
            if key not in known:
                raise ConfigError(f"{source}: line {line}: unknown key '{key}' in [{sec}]; allowed: {', '.join(known)}")
            setattr(block, key, _convert(raw, getattr(block, key), key, line))
    validate_config(cfg)
    return cfg


def validate_config(cfg: ScenarioConfig) -> None:
    """Module-level preconditions, reported by key."""
    from ..alphacore import make_params

    def bad(key: str, msg: str):
        raise ConfigError(f"invalid {key}: {msg}")

    m, mat, it, ad = cfg.mesh, cfg.material, cfg.integrator, cfg.adaptivity
    if m.order not in (1, 2, 3):
        bad("mesh.order", f"{m.order} not in 1..3")
    if any(e <= 0 for e in m.extents):
        bad("mesh.extents", "must be positive")
    if any(d < 1 for d in m.divisions):
        bad("mesh.divisions", "must be positive integers")
    if not mat.E > 0:
        bad("material.E", "must be positive")
    if not 0 < mat.nu < 0.5:
        bad("material.nu", "must lie in (0, 0.5)")
    if not mat.rho0 > 0:
        bad("material.rho0", "must be positive")
    if it.family not in ("n1", "n2", "general"):
        bad("integrator.family", "expected n1, n2 or general")
    for key in ("rho_b", "rho_s"):
        if not 0 <= getattr(it, key) <= 1:
            bad(f"integrator.{key}", "must lie in [0, 1]")
    if it.update_form not in ("displacement", "acceleration"):
        bad("integrator.update_form", "expected displacement or acceleration")
    if it.truncation_mode not in ("fixed", "tolerance"):
        bad("integrator.truncation_mode", "expected fixed or tolerance")
    if it.k_max < 2:
        bad("integrator.k_max", "must be at least 2")
    if not 1 <= it.n_terms <= it.k_max:
        bad("integrator.n_terms", "must lie in [1, k_max]")
    if not it.trunc_tol > 0:
        bad("integrator.trunc_tol", "must be positive")
    try:
        params = make_params(it.family, it.rho_b, it.rho_s, it.alpha_f)
    except ValueError as exc:
        bad("integrator", str(exc))
    issues = params.violations()
    if issues:
        bad("integrator", "; ".join(issues))
    if not ad.tol > 0:
        bad("adaptivity.tol", "must be positive")
    if not 0 < cfg.tol_min < ad.tol:
        bad("adaptivity.tol_min", f"need 0 < tol_min < tol (got {cfg.tol_min} vs {ad.tol})")
    if not 0 < ad.rho_tol <= 1:
        bad("adaptivity.rho_tol", "must lie in (0, 1]")
    if not ad.dt0 > 0:
        bad("adaptivity.dt0", "must be positive")
    if not 0 < ad.dt_min <= ad.dt0:
        bad("adaptivity.dt_min", "must lie in (0, dt0]")
    if ad.max_rejections < 1:
        bad("adaptivity.max_rejections", "must be at least 1")
    if not cfg.time.t_f > 0:
        bad("time.t_f", "must be positive")
    if cfg.mass.kind not in ("consistent", "lumped"):
        bad("mass.kind", "expected consistent or lumped")
    if cfg.output.stride < 0:
        bad("output.stride", "must be non-negative")
    if cfg.scenario.load_scale < 0:
        bad("scenario.load_scale", "must be non-negative")


def load_config(path, echo_dir=None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    cfg = build_config(parse_text(text, str(path)), str(path))
    if echo_dir is not None:
        write_echo(cfg, echo_dir)
    return cfg


def write_echo(cfg: ScenarioConfig, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = d / "resolved_config.ini"
    out.write_text(cfg.to_text())
    log.info("resolved configuration written to %s", out)
    return out


def config_from_text(text: str) -> ScenarioConfig:
    return build_config(parse_text(text))
