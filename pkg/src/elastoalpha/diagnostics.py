"""Energies, momenta, L2 errors and manufactured solutions."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assembler import Discretization, total_stored_energy
from .errors import ConstitutiveError, DivergenceError, InvalidArgumentError

log = logging.getLogger(__name__)

TIME_SERIES_COLUMNS = ("t", "dt", "e", "iters", "K", "P", "T", "Lx", "Ly", "Lz", "Jx", "Jy", "Jz")


@dataclass(frozen=True)
class EnergyReport:
    t: float
    K: float
    P: float

    @property
    def T(self) -> float:
        return self.K + self.P


@dataclass(frozen=True)
class MomentumReport:
    t: float
    L: np.ndarray
    J: np.ndarray


def _qp_values(disc: Discretization, vec: np.ndarray) -> np.ndarray:
    return disc.values_at_quadrature(vec, disc.geometry)  # (E, nq, ncomp)


def kinetic_energy(disc: Discretization, rho0: float, v: np.ndarray) -> float:
    vq = _qp_values(disc, v)
    return float(0.5 * rho0 * np.einsum("eq,eqi,eqi->", disc.geometry.wdet, vq, vq))


def potential_energy(disc: Discretization, material, u: np.ndarray) -> float:
    return total_stored_energy(disc, u, material)


def _pad3(a: np.ndarray) -> np.ndarray:
    if a.shape[-1] == 3:
        return a
    out = np.zeros(a.shape[:-1] + (3,))
    out[..., : a.shape[-1]] = a
    return out


def linear_momentum(disc: Discretization, rho0: float, v: np.ndarray) -> np.ndarray:
    vq = _qp_values(disc, v)
    return _pad3(rho0 * np.einsum("eq,eqi->i", disc.geometry.wdet, vq))


def angular_momentum(disc: Discretization, rho0: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``int rho0 (X + u) x v``; 2D fields are embedded in the x-y plane."""
    geom = disc.geometry
    x = _pad3(geom.xq + _qp_values(disc, u))
    vq = _pad3(_qp_values(disc, v))
    return rho0 * np.einsum("eq,eqi->i", geom.wdet, np.cross(x, vq))


def energy_report(disc, material, u, v, t: float = 0.0) -> EnergyReport:
    return EnergyReport(t, kinetic_energy(disc, material.rho0, v), potential_energy(disc, material, u))


def momentum_report(disc, rho0, u, v, t: float = 0.0) -> MomentumReport:
    return MomentumReport(t, linear_momentum(disc, rho0, v), angular_momentum(disc, rho0, u, v))


# --------------------------------------------------------------------------
# Exact solutions
# --------------------------------------------------------------------------

FieldFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass
class ExactSolution:
    """Analytic field with its time derivatives and spatial gradient.

    All callables take points ``x`` of shape ``(n, dim)`` and a time and
    return ``(n, ncomp)`` (``grad``: ``(n, ncomp, dim)``).
    """

    name: str
    dim: int
    ncomp: int
    u: FieldFn
    v: FieldFn
    a: FieldFn
    grad: FieldFn
    meta: dict = field(default_factory=dict)


def wave_mms() -> ExactSolution:
    """``cos(pi x) cos(pi y) cos(sqrt(2) pi t)`` on the unit square."""
    w = math.sqrt(2.0) * math.pi

    def space(x):
        return np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])

    def u(x, t):
        return (space(x) * math.cos(w * t))[:, None]

    def v(x, t):
        return (-w * space(x) * math.sin(w * t))[:, None]

    def a(x, t):
        return (-(w**2) * space(x) * math.cos(w * t))[:, None]

    def grad(x, t):
        c = math.cos(w * t)
        gx = -np.pi * np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]) * c
        gy = -np.pi * np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]) * c
        return np.stack([gx, gy], axis=-1)[:, None, :]

    return ExactSolution("wave2d_mms", 2, 1, u, v, a, grad, {"omega": w})


def hyper_mms(U0: float = 0.1, omega: float = math.pi) -> ExactSolution:
    """Trigonometric displacement field on the unit cube, amplitude ``U0 sin(omega t)``."""

    def shape(x):
        s = np.sin(np.pi * x)
        c = np.cos(np.pi * x)
        return np.stack([-2.0 * s[:, 0] * c[:, 1] * c[:, 2], c[:, 0] * s[:, 1] * c[:, 2], c[:, 0] * c[:, 1] * s[:, 2]], axis=-1)

    def shape_grad(x):
        s = np.sin(np.pi * x)
        c = np.cos(np.pi * x)
        pi = np.pi
        g = np.empty((x.shape[0], 3, 3))
        g[:, 0, 0] = -2 * pi * c[:, 0] * c[:, 1] * c[:, 2]
        g[:, 0, 1] = 2 * pi * s[:, 0] * s[:, 1] * c[:, 2]
        g[:, 0, 2] = 2 * pi * s[:, 0] * c[:, 1] * s[:, 2]
        g[:, 1, 0] = -pi * s[:, 0] * s[:, 1] * c[:, 2]
        g[:, 1, 1] = pi * c[:, 0] * c[:, 1] * c[:, 2]
        g[:, 1, 2] = -pi * c[:, 0] * s[:, 1] * s[:, 2]
        g[:, 2, 0] = -pi * s[:, 0] * c[:, 1] * s[:, 2]
        g[:, 2, 1] = -pi * c[:, 0] * s[:, 1] * s[:, 2]
        g[:, 2, 2] = pi * c[:, 0] * c[:, 1] * c[:, 2]
        return g

    def u(x, t):
        return U0 * math.sin(omega * t) * shape(x)

    def v(x, t):
        return U0 * omega * math.cos(omega * t) * shape(x)

    def a(x, t):
        return -U0 * omega**2 * math.sin(omega * t) * shape(x)

    def grad(x, t):
        return U0 * math.sin(omega * t) * shape_grad(x)

    return ExactSolution("hyper3d_mms", 3, 3, u, v, a, grad, {"U0": U0, "omega": omega})


def zero_solution(dim: int, ncomp: int) -> ExactSolution:
    def z(x, t):
        return np.zeros((x.shape[0], ncomp))

    def zg(x, t):
        return np.zeros((x.shape[0], ncomp, dim))

    return ExactSolution("zero", dim, ncomp, z, z, z, zg)


def min_jacobian(exact: ExactSolution, t_values, n: int = 9) -> float:
    """Smallest ``det(I + grad u)`` over a grid of the unit box and given times."""
    g = np.linspace(0.0, 1.0, n)
    pts = np.stack(np.meshgrid(*([g] * exact.dim), indexing="ij"), axis=-1).reshape(-1, exact.dim)
    worst = math.inf
    for t in t_values:
        F = np.eye(exact.dim) + exact.grad(pts, t)
        worst = min(worst, float(np.min(np.linalg.det(F))))
    return worst


def mms_forcing(exact: ExactSolution, material, rho0: float | None = None, h_fd: float = 1e-6,
                size: float = 1.0) -> FieldFn:
    """Body force ``f = rho0 a - Div P(grad u)`` with a central-difference divergence.

    ``h_fd`` is relative to the domain ``size``.
    """
    rho0 = material.rho0 if rho0 is None else rho0
    h = h_fd * size

    def f(x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        div = np.zeros((x.shape[0], exact.ncomp))
        for J in range(exact.dim):
            dx = np.zeros(exact.dim)
            dx[J] = h
            Pp = material.stress(exact.grad(x + dx, t))
            Pm = material.stress(exact.grad(x - dx, t))
            div += (Pp[:, :, J] - Pm[:, :, J]) / (2.0 * h)
        return rho0 * exact.a(x, t) - div

    return f


def l2_error(disc: Discretization, u_h: np.ndarray, v_h: np.ndarray | None, exact: ExactSolution, t: float) -> tuple[float, float]:
    """``(|u - u_h|, |v - v_h|)`` in L2 by interior quadrature of degree 2p."""
    geom = disc.geometry
    xq = geom.xq.reshape(-1, disc.dim)
    shape = geom.xq.shape[:2] + (disc.ncomp,)
    eu = _qp_values(disc, u_h) - exact.u(xq, t).reshape(shape)
    err_u = math.sqrt(float(np.einsum("eq,eqi,eqi->", geom.wdet, eu, eu)))
    err_v = math.nan
    if v_h is not None:
        ev = _qp_values(disc, v_h) - exact.v(xq, t).reshape(shape)
        err_v = math.sqrt(float(np.einsum("eq,eqi,eqi->", geom.wdet, ev, ev)))
    return err_u, err_v


def l2_norm(disc: Discretization, w: np.ndarray) -> float:
    wq = _qp_values(disc, w)
    return math.sqrt(float(np.einsum("eq,eqi,eqi->", disc.geometry.wdet, wq, wq)))


def interpolate(disc: Discretization, fn: FieldFn, t: float) -> np.ndarray:
    return np.asarray(fn(disc.mesh.nodes, t), dtype=float).reshape(-1)


# --------------------------------------------------------------------------
# Convergence tables
# --------------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    dt: float
    error_u: float
    error_v: float
    order_u: float = math.nan
    order_v: float = math.nan
    status: str = "ok"


def observed_orders(rows: list[ConvergenceRow]) -> list[ConvergenceRow]:
    """Fill pairwise orders ``log(e_i/e_{i+1}) / log(dt_i/dt_{i+1})``."""
    for prev, cur in zip(rows, rows[1:]):
        if prev.status != "ok" or cur.status != "ok":
            continue
        r = math.log(prev.dt / cur.dt)
        if prev.error_u > 0 and cur.error_u > 0:
            cur.order_u = math.log(prev.error_u / cur.error_u) / r
        if prev.error_v > 0 and cur.error_v > 0:
            cur.order_v = math.log(prev.error_v / cur.error_v) / r
    return rows


def convergence_study(solve: Callable[[float], tuple[float, float]], dts: Sequence[float]) -> list[ConvergenceRow]:
    """Run ``solve(dt) -> (err_u, err_v)`` for each step; failures become rows."""
    dts = [float(d) for d in dts]
    if len(dts) < 3:
        raise InvalidArgumentError("a convergence study needs at least three time steps")
    rows = []
    for dt in sorted(dts, reverse=True):
        try:
            eu, ev = solve(dt)
            rows.append(ConvergenceRow(dt, eu, ev))
        except (DivergenceError, ConstitutiveError) as exc:
            log.warning("dt=%g failed: %s", dt, exc)
            rows.append(ConvergenceRow(dt, math.nan, math.nan, status=f"failed: {exc}"))
    return observed_orders(rows)


def write_convergence_csv(rows: list[ConvergenceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dt", "error_u", "error_v", "order_u", "order_v", "status"])
        for r in rows:
            w.writerow([repr(r.dt), repr(r.error_u), repr(r.error_v), repr(r.order_u), repr(r.order_v), r.status])


# --------------------------------------------------------------------------
# Time-series observer
# --------------------------------------------------------------------------


class TimeSeriesRecorder:
    """Observer collecting one row per accepted step (and the initial state)."""

    def __init__(self, disc: Discretization, material, every: int = 1):
        self.disc = disc
        self.material = material
        self.every = max(1, int(every))
        self.rows: list[tuple] = []

    def __call__(self, step, t, state, report):
        if step % self.every:
            return
        d, m = self.disc, self.material
        K = kinetic_energy(d, m.rho0, state.v)
        try:
            P = potential_energy(d, m, state.u)
        except ConstitutiveError:
            P = math.nan
        L = linear_momentum(d, m.rho0, state.v)
        J = angular_momentum(d, m.rho0, state.u, state.v)
        self.rows.append((t, report.dt_used, report.e, report.iterations, K, P, K + P, *L, *J))

    def column(self, name: str) -> np.ndarray:
        i = TIME_SERIES_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TIME_SERIES_COLUMNS)
            for r in self.rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
