"""Built-in benchmark scenarios."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..alphacore import AlphaParams, make_params
from ..assembler import BoundaryConditions, DirichletBC, Discretization, Traction, zero_field
from ..diagnostics import ExactSolution, hyper_mms, interpolate, min_jacobian, mms_forcing, wave_mms
from ..errors import ConfigError
from ..fem import Mesh, build_box_mesh, drop_facets, merge_nodes
from ..hypermat import LaplaceMaterial, NeoHookean, lame_from_engineering
from ..marcher import AdaptivityConfig, FEModel
from .config import ScenarioConfig

log = logging.getLogger(__name__)


@dataclass
class Setup:
    """Everything needed to march one scenario."""

    cfg: ScenarioConfig
    model: FEModel
    params: AlphaParams
    adaptivity: AdaptivityConfig
    u0: np.ndarray
    v0: np.ndarray
    t_f: float
    exact: ExactSolution | None = None

    @property
    def disc(self) -> Discretization:
        return self.model.disc

    @property
    def mesh(self) -> Mesh:
        return self.model.disc.mesh


def adaptivity_from(cfg: ScenarioConfig, dim: int, dt0: float | None = None) -> AdaptivityConfig:
    it, ad = cfg.integrator, cfg.adaptivity
    return AdaptivityConfig(
        dt0=ad.dt0 if dt0 is None else dt0,
        tol=ad.tol,
        tol_min=cfg.tol_min,
        rho_tol=ad.rho_tol,
        d=dim,
        k_max=it.k_max,
        update_form=it.update_form,
        truncation_mode=it.truncation_mode,
        n_terms=it.n_terms,
        trunc_tol=it.trunc_tol,
        adaptive=ad.adaptive,
        dt_min=ad.dt_min,
        dt_max=ad.dt_max,
        max_rejections=ad.max_rejections,
    )


def params_from(cfg: ScenarioConfig) -> AlphaParams:
    it = cfg.integrator
    return make_params(it.family, it.rho_b, it.rho_s, it.alpha_f)


def neo_hookean(cfg: ScenarioConfig, dim: int = 3) -> NeoHookean:
    m = cfg.material
    return NeoHookean(lame_from_engineering(m.E, m.nu, m.rho0), dim)


def _box(cfg: ScenarioConfig) -> Mesh:
    return build_box_mesh(cfg.mesh.extents, cfg.mesh.divisions, order=cfg.mesh.order)


# --------------------------------------------------------------------------
# Individual scenarios
# --------------------------------------------------------------------------


def _exact_dirichlet(mesh: Mesh, exact: ExactSolution) -> list[DirichletBC]:
    return [DirichletBC(tag, exact.u, velocity=exact.v, acceleration=exact.a) for tag in mesh.tags]


def build_wave2d(cfg: ScenarioConfig) -> Setup:
    exact = wave_mms()
    if len(cfg.mesh.extents) != 2:
        raise ConfigError("wave2d_mms needs a two-dimensional mesh (two extents)")
    mesh = _box(cfg)
    disc = Discretization(mesh, 1)
    mat = LaplaceMaterial(cfg.material.rho0)
    bc = BoundaryConditions(dirichlet=_exact_dirichlet(mesh, exact))
    model = FEModel(disc, mat, bc, cfg.mass.kind)
    return Setup(cfg, model, params_from(cfg), adaptivity_from(cfg, mesh.dim), interpolate(disc, exact.u, 0.0),
                 interpolate(disc, exact.v, 0.0), cfg.time.t_f, exact)


def build_hyper3d(cfg: ScenarioConfig) -> Setup:
    exact = hyper_mms(cfg.scenario.U0, cfg.scenario.omega)
    worst = min_jacobian(exact, np.linspace(0.0, cfg.time.t_f, 11))
    if not worst > 0:
        raise ConfigError(f"manufactured solution inverts the cube (min J = {worst:.3g}); reduce scenario.U0")
    mesh = _box(cfg)
    disc = Discretization(mesh, 3)
    mat = neo_hookean(cfg)
    bc = BoundaryConditions(dirichlet=_exact_dirichlet(mesh, exact), body_force=mms_forcing(exact, mat))
    model = FEModel(disc, mat, bc, cfg.mass.kind)
    return Setup(cfg, model, params_from(cfg), adaptivity_from(cfg, mesh.dim), interpolate(disc, exact.u, 0.0),
                 interpolate(disc, exact.v, 0.0), cfg.time.t_f, exact)


def twist_angle(t: float, rate: float, until: float) -> float:
    return rate * min(t, until)


def twist_fields(center, rate: float, until: float):
    """In-plane rotation of the top face about the bar axis: (u, v, a) callables."""
    c = np.asarray(center, dtype=float)

    def _rot(x, th):
        r = x[:, :2] - c
        cs, sn = math.cos(th), math.sin(th)
        rx = cs * r[:, 0] - sn * r[:, 1]
        ry = sn * r[:, 0] + cs * r[:, 1]
        return r, rx, ry

    def value(x, t):
        th = twist_angle(t, rate, until)
        r, rx, ry = _rot(x, th)
        out = np.zeros((x.shape[0], 3))
        out[:, 0], out[:, 1] = rx - r[:, 0], ry - r[:, 1]
        return out

    def velocity(x, t):
        w = rate if t <= until else 0.0
        _, rx, ry = _rot(x, twist_angle(t, rate, until))
        out = np.zeros((x.shape[0], 3))
        out[:, 0], out[:, 1] = -w * ry, w * rx
        return out

    def acceleration(x, t):
        w = rate if t <= until else 0.0
        _, rx, ry = _rot(x, twist_angle(t, rate, until))
        out = np.zeros((x.shape[0], 3))
        out[:, 0], out[:, 1] = -w * w * rx, -w * w * ry
        return out

    return value, velocity, acceleration


def build_twisted_bar(cfg: ScenarioConfig) -> Setup:
    mesh = _box(cfg)
    ext = cfg.mesh.extents
    disc = Discretization(mesh, 3)
    mat = neo_hookean(cfg)
    sc = cfg.scenario
    val, vel, acc = twist_fields((ext[0] / 2, ext[1] / 2), sc.twist_rate, sc.release_time)
    bc = BoundaryConditions(
        dirichlet=[
            DirichletBC("z-min", zero_field),
            DirichletBC("z-max", val, components=(0, 1), velocity=vel, acceleration=acc, until=sc.release_time),
        ],
        gravity=np.array([0.0, 0.0, -sc.gravity]),
    )
    model = FEModel(disc, mat, bc, cfg.mass.kind)
    n = disc.ndof
    return Setup(cfg, model, params_from(cfg), adaptivity_from(cfg, mesh.dim), np.zeros(n), np.zeros(n), cfg.time.t_f)


def tube_mesh(length: float, diameter: float, thickness: float, n_circ: int, n_axial: int, n_radial: int = 1) -> Mesh:
    """Cylindrical shell along z, built by mapping a periodic box mesh.

    Tags: ``inner``, ``outer``, ``impact`` (z = 0) and ``top`` (z = length).
    """
    if n_circ < 6:
        raise ConfigError("the tube needs at least 6 circumferential divisions")
    r_in = diameter / 2.0 - thickness
    if not r_in > 0:
        raise ConfigError("tube thickness must be smaller than the radius")
    box = build_box_mesh((thickness, 2.0 * math.pi, length), (n_radial, n_circ, n_axial))
    s, th, z = box.nodes.T
    th = np.where(np.isclose(th, 2.0 * math.pi), 0.0, th)  # close the seam exactly
    r = r_in + s
    nodes = np.stack([r * np.cos(th), r * np.sin(th), z], axis=-1)
    mesh = Mesh(3, box.order, nodes, box.elements, box.facet_elements, box.facet_local, box.facet_tags)
    mesh = drop_facets(merge_nodes(mesh, 1e-9), ("y-min", "y-max"))
    rename = {"x-min": "inner", "x-max": "outer", "z-min": "impact", "z-max": "top"}
    mesh.facet_tags = np.array([rename[t] for t in mesh.facet_tags], dtype=object)
    mesh.check()
    return mesh


def build_tube(cfg: ScenarioConfig) -> Setup:
    m = cfg.mesh
    length = m.extents[-1]
    mesh = tube_mesh(length, m.diameter, m.thickness, m.circumferential, m.divisions[-1], m.divisions[0])
    disc = Discretization(mesh, 3)
    mat = neo_hookean(cfg)
    # the impact face is arrested at first contact, which is t = 0
    bc = BoundaryConditions(dirichlet=[DirichletBC("impact", zero_field)],
                            gravity=np.array([0.0, 0.0, -cfg.scenario.gravity]))
    model = FEModel(disc, mat, bc, cfg.mass.kind)
    v0 = np.zeros((mesh.n_nodes, 3))
    v0[:, 2] = -cfg.scenario.velocity
    return Setup(cfg, model, params_from(cfg), adaptivity_from(cfg, mesh.dim), np.zeros(disc.ndof), v0.ravel(), cfg.time.t_f)


RULER_PEAK = 2.0e8  # peak traction, force per unit reference area
RULER_RAMP = 0.005


def ruler_schedule(t: float, peak: float = RULER_PEAK) -> float:
    """Triangular pulse: linear up to ``peak`` at 5 ms, back to zero at 10 ms."""
    if t <= RULER_RAMP:
        return peak * max(t, 0.0) / RULER_RAMP
    if t <= 2 * RULER_RAMP:
        return peak * (2 * RULER_RAMP - t) / RULER_RAMP
    return 0.0


def tag_half_face(mesh: Mesh, tag: str, new_tag: str, axis: int, below: float) -> None:
    """Add ``new_tag`` for the facets of ``tag`` whose centroid coordinate < ``below``."""
    els, loc = mesh.boundary_facets(tag)
    cent = []
    for e, f in zip(els, loc):
        v = [i for i in range(mesh.dim + 1) if i != f]
        cent.append(mesh.nodes[mesh.vertices[e, v]].mean(axis=0)[axis])
    sel = np.asarray(cent) < below
    mesh.facet_elements = np.concatenate([mesh.facet_elements, els[sel]])
    mesh.facet_local = np.concatenate([mesh.facet_local, loc[sel]])
    mesh.facet_tags = np.concatenate([mesh.facet_tags, np.full(int(sel.sum()), new_tag, dtype=object)])


def build_ruler(cfg: ScenarioConfig) -> Setup:
    mesh = _box(cfg)
    length = cfg.mesh.extents[0]
    tag_half_face(mesh, "z-max", "top-half", 0, length / 2.0)
    disc = Discretization(mesh, 3)
    mat = neo_hookean(cfg)
    peak = RULER_PEAK * cfg.scenario.load_scale

    def edge(x, t):
        out = np.zeros((x.shape[0], 3))
        out[:, 0] = ruler_schedule(t, peak)
        return out

    def face(x, t):
        out = np.zeros((x.shape[0], 3))
        out[:, 2] = -ruler_schedule(t, peak)
        return out

    bc = BoundaryConditions(tractions=[Traction("x-min", edge), Traction("top-half", face)])
    model = FEModel(disc, mat, bc, cfg.mass.kind)
    n = disc.ndof
    return Setup(cfg, model, params_from(cfg), adaptivity_from(cfg, mesh.dim), np.zeros(n), np.zeros(n), cfg.time.t_f)


# --------------------------------------------------------------------------
# Catalog
# --------------------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    description: str
    defaults: dict
    builder: Callable[[ScenarioConfig], Setup]
    exact: bool = False  # has an analytic solution (convergence studies)

    def default_config(self) -> ScenarioConfig:
        cfg = ScenarioConfig()
        cfg.scenario.name = self.name
        for sec, values in self.defaults.items():
            block = getattr(cfg, sec)
            for k, v in values.items():
                setattr(block, k, v)
        return cfg

    def build(self, cfg: ScenarioConfig | None = None) -> Setup:
        return self.builder(cfg if cfg is not None else self.default_config())


CATALOG: dict[str, Scenario] = {}


def _register(s: Scenario) -> None:
    CATALOG[s.name] = s


_register(Scenario(
    "wave2d_mms",
    "scalar wave on the unit square with a manufactured cosine solution",
    {
        "mesh": {"extents": (1.0, 1.0), "divisions": (32, 32)},
        "material": {"rho0": 1.0},
        "integrator": {"family": "n1", "rho_b": 1.0},
        "adaptivity": {"adaptive": False, "dt0": 1e-3},
        "time": {"t_f": 0.1},
    },
    build_wave2d,
    exact=True,
))
_register(Scenario(
    "hyper3d_mms",
    "neo-Hookean unit cube with a manufactured trigonometric displacement",
    {
        "mesh": {"extents": (1.0, 1.0, 1.0), "divisions": (6, 6, 6)},
        "material": {"E": 1.0, "nu": 0.2, "rho0": 1.0},
        "integrator": {"family": "n1", "rho_b": 1.0},
        "adaptivity": {"adaptive": False, "dt0": 0.01},
        "time": {"t_f": 1.0},
    },
    build_hyper3d,
    exact=True,
))
_register(Scenario(
    "twisted_bar",
    "5 m bar under gravity, top face twisted by 2 pi over 0.25 s then released",
    {
        "scenario": {"gravity": 9.81},
        "mesh": {"extents": (1.0, 1.0, 5.0), "divisions": (2, 2, 8)},
        "material": {"E": 17e6, "nu": 0.3, "rho0": 1100.0},
        "integrator": {"family": "n2", "rho_b": 1.0},
        "adaptivity": {"adaptive": True, "dt0": 8e-4},
        "time": {"t_f": 1.5},
    },
    build_twisted_bar,
))
_register(Scenario(
    "tube_impact",
    "thin cylindrical shell hitting a rigid plane at 20 m/s",
    {
        "scenario": {"velocity": 20.0},
        "mesh": {"extents": (0.5,), "divisions": (1, 10), "diameter": 0.2, "thickness": 2.5e-3, "circumferential": 24},
        "material": {"E": 68e6, "nu": 0.3, "rho0": 1100.0},
        "integrator": {"family": "n2", "rho_b": 1.0},
        "adaptivity": {"adaptive": True, "dt0": 1e-6},
        "time": {"t_f": 2e-3},
    },
    build_tube,
))
_register(Scenario(
    "tossed_ruler",
    "thin ruler kicked by a 10 ms triangular traction pulse, then free flight",
    {
        "mesh": {"extents": (0.3, 0.06, 0.002), "divisions": (10, 2, 1)},
        "material": {"E": 206e6, "nu": 0.3, "rho0": 7800.0},
        "integrator": {"family": "n2", "rho_b": 1.0},
        "adaptivity": {"adaptive": True, "dt0": 1e-6},
        "time": {"t_f": 0.25},
    },
    build_ruler,
))


def scenario_catalog() -> dict[str, Scenario]:
    return dict(CATALOG)


def get_scenario(name: str) -> Scenario:
    try:
        return CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown scenario '{name}'; available: {', '.join(sorted(CATALOG))}") from None
