"""Explicit predictor/multicorrector generalized-alpha time loop.

One step from ``(u_n, v_n, a_n)``:

1. freeze ``K = R'(u_n)`` and evaluate ``F(t_n + alpha_f dt)``;
2. form the predictor ``H = M^-1 L`` (displacement or acceleration form);
3. sum the corrections ``du^{k+1} = U du^k`` with ``U = -c M^-1 K``,
   ``c = alpha_f beta dt^2 / alpha_m``, and estimate the truncation error
   ``e = |du^k| / |du^{k-1}|``;
4. accept or reject by comparing ``e`` with ``tol`` and pick the next step.

Prescribed DOFs are eliminated: their increments come from the boundary data
and enter the free equations through the coupling blocks of ``M`` and ``K``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .alphacore import AlphaParams
from .assembler import (
    BoundaryConditions,
    Constraints,
    Discretization,
    MassMatrix,
    assemble_external,
    assemble_mass,
    assemble_residual,
    assemble_tangent,
    resolve_dirichlet,
    solve_mass,
)
from .errors import (
    ConstitutiveError,
    DivergenceError,
    InvalidArgumentError,
    ParameterizationError,
    SolverError,
)

log = logging.getLogger(__name__)

FORMS = ("displacement", "acceleration")
TRUNCATION_MODES = ("fixed", "tolerance")


@dataclass(frozen=True)
class State:
    t: float
    dt: float
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        n = self.u.shape
        if self.v.shape != n or self.a.shape != n:
            raise InvalidArgumentError("u, v and a must have the same length")
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")

    @property
    def ndof(self) -> int:
        return self.u.size


@dataclass
class AdaptivityConfig:
    dt0: float
    tol: float = 0.1
    tol_min: float | None = None  # defaults to tol / 10
    rho_tol: float = 0.9
    d: int = 3
    k_max: int = 50
    update_form: str = "displacement"
    truncation_mode: str = "fixed"
    n_terms: int = 2
    trunc_tol: float = 1e-12
    adaptive: bool = True
    dt_min: float = 1e-12
    dt_max: float = math.inf
    max_rejections: int = 20
    lin_tol: float = 1e-12
    bc_derivatives: str = "auto"  # auto | newmark | exact

    def __post_init__(self):
        if self.tol_min is None:
            self.tol_min = self.tol / 10.0
        self.validate()

    def validate(self) -> None:
        if not 0 < self.tol_min < self.tol:
            raise InvalidArgumentError(f"need 0 < tol_min < tol (tol_min={self.tol_min}, tol={self.tol})")
        if not 0 < self.rho_tol <= 1:
            raise InvalidArgumentError(f"rho_tol must lie in (0, 1], got {self.rho_tol}")
        if self.k_max < 2:
            raise InvalidArgumentError("k_max must be at least 2")
        if self.d < 1:
            raise InvalidArgumentError("d must be positive")
        if not self.dt0 > 0:
            raise InvalidArgumentError(f"dt0 must be positive, got {self.dt0}")
        if self.update_form not in FORMS:
            raise InvalidArgumentError(f"update_form must be one of {FORMS}")
        if self.truncation_mode not in TRUNCATION_MODES:
            raise InvalidArgumentError(f"truncation_mode must be one of {TRUNCATION_MODES}")
        if self.truncation_mode == "fixed" and not 1 <= self.n_terms <= self.k_max:
            raise InvalidArgumentError("fixed truncation needs 1 <= n_terms <= k_max")
        if self.bc_derivatives not in ("auto", "newmark", "exact"):
            raise InvalidArgumentError("bc_derivatives must be auto, newmark or exact")
        if not self.trunc_tol > 0:
            raise InvalidArgumentError("trunc_tol must be positive")


@dataclass
class StepReport:
    step: int
    t: float  # time at the start of the attempt
    accepted: bool
    e: float
    iterations: int
    dt_used: float
    dt_next: float
    solver_iterations: int = 0
    reason: str = ""


# --------------------------------------------------------------------------
# Semi-discrete models
# --------------------------------------------------------------------------


class LinearModel:
    """``M a + K u = f(t)`` with constant ``M``, ``K`` and no constraints."""

    def __init__(self, M: MassMatrix, K, force: Callable[[float], np.ndarray] | None = None):
        self.M = M
        self.K = sp.csr_matrix(K)
        self.force = force
        self.ndof = M.n

    def residual(self, u):
        return self.K @ u

    def tangent(self, u):
        return self.K

    def external(self, t):
        return np.zeros(self.ndof) if self.force is None else np.asarray(self.force(t), dtype=float)

    def constraints(self, t, derivatives=True):
        return Constraints(np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), np.zeros(0), np.arange(self.ndof))

    def check_admissible(self, u):
        return None


class FEModel:
    """Finite-element model: mesh, material, loads and mass variant."""

    def __init__(self, disc: Discretization, material, bc: BoundaryConditions | None = None,
                 mass_kind: str = "consistent"):
        if mass_kind not in ("consistent", "lumped"):
            raise InvalidArgumentError(f"mass_kind must be 'consistent' or 'lumped', got {mass_kind!r}")
        self.disc = disc
        self.material = material
        self.bc = bc if bc is not None else BoundaryConditions()
        self.mass_kind = mass_kind
        rule = "interior-gauss" if mass_kind == "consistent" else "nodal-lobatto"
        self.M = assemble_mass(disc, material.rho0, rule)
        self.ndof = disc.ndof

    @property
    def mesh(self):
        return self.disc.mesh

    def residual(self, u):
        return assemble_residual(self.disc, u, self.material)

    def tangent(self, u):
        return assemble_tangent(self.disc, u, self.material)

    def external(self, t):
        return assemble_external(self.disc, self.bc, t, self.material.rho0)

    def constraints(self, t, derivatives=True):
        return resolve_dirichlet(self.disc, self.bc, t, derivatives)

    def check_admissible(self, u):
        J = self.material.jacobian(self.disc.gradients(u, self.disc.stiffness_geometry))
        bad = np.flatnonzero(np.any(~(J > 0), axis=1))
        if bad.size:
            raise ConstitutiveError(f"element inversion in {bad.size} element(s)", bad)


class _Blocks:
    """Cache of mass sub-blocks keyed by the free set."""

    def __init__(self, M: MassMatrix):
        self.M = M
        self._key = None
        self._val = None

    def get(self, cons: Constraints):
        if cons.dofs.size == 0:
            return self.M, None
        key = cons.dofs.tobytes()
        if key != self._key:
            self._key = key
            self._val = (self.M.restrict(cons.free), self.M.coupling(cons.free, cons.dofs))
        return self._val


# --------------------------------------------------------------------------
# Step kernels
# --------------------------------------------------------------------------


def _taylor(state: State) -> np.ndarray:
    dt = state.dt
    return dt * state.v + 0.5 * dt * dt * state.a


def corrector_factor(params: AlphaParams, dt: float) -> float:
    if params.alpha_m == 0:
        raise ParameterizationError("alpha_m must be non-zero")
    return params.alpha_f * params.beta * dt * dt / params.alpha_m


def build_rhs_u_form(state: State, params: AlphaParams, M: MassMatrix, K, R_n, F_ext, lin_tol: float = 1e-12):
    """Predictor ``H`` for the displacement increment; returns ``(L, H)``."""
    dt = state.dt
    if params.alpha_m == 0:
        raise ParameterizationError("alpha_m must be non-zero")
    L = (params.beta * dt * dt / params.alpha_m) * (F_ext - M.matvec(state.a) - R_n) + M.matvec(_taylor(state))
    return L, solve_mass(M, L, lin_tol).x


def build_rhs_a_form(state: State, params: AlphaParams, M: MassMatrix, K, R_n, F_ext, lin_tol: float = 1e-12):
    """Predictor for the acceleration increment; returns ``(L_hat, H_hat)``."""
    if params.alpha_m == 0:
        raise ParameterizationError("alpha_m must be non-zero")
    L = F_ext - M.matvec(state.a) - R_n
    if params.alpha_f != 0:
        L = L - params.alpha_f * (K @ _taylor(state))
    L = L / params.alpha_m
    return L, solve_mass(M, L, lin_tol).x


@dataclass
class CorrectorResult:
    increment: np.ndarray
    e: float
    iterations: int
    solver_iterations: int = 0
    terms: list[np.ndarray] = field(default_factory=list)
    trivial: bool = False  # nothing to correct: the predictor is the exact series sum


def corrector_sum(M: MassMatrix, K, params: AlphaParams, dt: float, H: np.ndarray, mode: str = "fixed",
                  n_terms: int = 2, trunc_tol: float = 1e-12, k_max: int = 50, lin_tol: float = 1e-12,
                  keep_terms: bool = False) -> CorrectorResult:
    """Sum ``du^1 = H, du^{k+1} = -c M^-1 K du^k``.

    ``fixed`` stops after ``n_terms`` terms; ``tolerance`` stops once
    ``|du^k| <= trunc_tol * |H|`` or after ``k_max`` terms.  ``e`` is the last
    ratio of successive norms (0 when the previous term vanished).
    """
    if mode not in TRUNCATION_MODES:
        raise InvalidArgumentError(f"truncation mode must be one of {TRUNCATION_MODES}")
    c = corrector_factor(params, dt)
    total = H.copy()
    terms = [H] if keep_terms else []
    e = 0.0
    prev = H
    prev_norm = float(np.linalg.norm(H))
    h_norm = prev_norm
    limit = n_terms if mode == "fixed" else k_max
    k = 1
    lin_its = 0
    while k < limit:
        if c == 0.0 or prev_norm == 0.0:
            e = 0.0
            break
        res = solve_mass(M, -c * (K @ prev), lin_tol)
        lin_its += res.iterations
        nxt = res.x
        k += 1
        norm = float(np.linalg.norm(nxt))
        e = norm / prev_norm
        total += nxt
        if keep_terms:
            terms.append(nxt)
        prev, prev_norm = nxt, norm
        if mode == "tolerance":
            if norm <= trunc_tol * h_norm:
                break
            if e > 1.0 and k >= 3:
                break  # divergent series: report e and let the step be rejected
    return CorrectorResult(total, e, k, lin_its, terms, trivial=(c == 0.0 or h_norm == 0.0))


def finalize_step(state: State, params: AlphaParams, du: np.ndarray, da: np.ndarray | None = None) -> State:
    """Advance with the displacement increment (``da`` is derived if omitted)."""
    if params.beta == 0:
        raise ParameterizationError("beta = 0 leaves the acceleration increment undefined")
    dt = state.dt
    if da is None:
        da = (du - _taylor(state)) / (params.beta * dt * dt)
    dv = dt * (state.a + params.gamma * da)
    return State(state.t + dt, dt, state.u + du, state.v + dv, state.a + da)


def adapt_dt(e: float, dt: float, cfg: AdaptivityConfig) -> tuple[bool, float]:
    """Return ``(accepted, dt_next)`` from the truncation-error ratio."""
    if e < 0 or math.isnan(e):
        raise InvalidArgumentError(f"invalid truncation error {e}")

    def F(err, target):
        return cfg.rho_tol * (target / err) ** (1.0 / cfg.d) * dt

    if e > cfg.tol:
        return False, F(e, cfg.tol)
    if e < cfg.tol_min:
        return True, F(max(e, cfg.tol_min) if e == 0 else e, cfg.tol_min)
    return True, dt


def initial_acceleration(model, u0: np.ndarray, v0: np.ndarray, t0: float = 0.0, lin_tol: float = 1e-12) -> np.ndarray:
    """Consistent start: ``M a0 = F(t0) - R(u0)`` on free DOFs."""
    cons = model.constraints(t0)
    rhs = model.external(t0) - model.residual(u0)
    a0 = np.zeros(model.ndof)
    if cons.dofs.size == 0:
        return solve_mass(model.M, rhs, lin_tol).x
    Mff, Mfc = _Blocks(model.M).get(cons)
    r = rhs[cons.free]
    if Mfc is not None:
        r = r - Mfc @ cons.accelerations
    a0[cons.free] = solve_mass(Mff, r, lin_tol).x
    a0[cons.dofs] = cons.accelerations
    return a0


def initial_state(model, u0: np.ndarray, v0: np.ndarray, dt0: float, t0: float = 0.0) -> State:
    u0 = np.asarray(u0, dtype=float).copy()
    v0 = np.asarray(v0, dtype=float).copy()
    cons = model.constraints(t0)
    if cons.dofs.size:
        u0[cons.dofs] = cons.values
        v0[cons.dofs] = cons.velocities
    return State(t0, dt0, u0, v0, initial_acceleration(model, u0, v0, t0))


@dataclass
class StepAttempt:
    state: State | None  # candidate state, None when the step failed outright
    corrector: CorrectorResult | None
    reason: str = ""


class Stepper:
    """Single-step kernel shared by :func:`run` and the tests."""

    def __init__(self, model, params: AlphaParams, cfg: AdaptivityConfig):
        if params.beta == 0:
            raise ParameterizationError("beta = 0 leaves the acceleration increment undefined")
        self.model = model
        self.params = params
        self.cfg = cfg
        self.blocks = _Blocks(model.M)

    def _exact_bc_derivatives(self) -> bool:
        mode = self.cfg.bc_derivatives
        if mode == "auto":
            # the Newmark recursion for (v, a) at a prescribed DOF amplifies by 1 - 1/(2 beta)
            return self.params.beta < 0.25
        return mode == "exact"

    def attempt(self, state: State) -> StepAttempt:
        p, cfg, model = self.params, self.cfg, self.model
        dt = state.dt
        c = corrector_factor(p, dt)
        K = model.tangent(state.u)
        R = model.residual(state.u)
        F = model.external(state.t + p.alpha_f * dt)
        cons = model.constraints(state.t + dt)
        T = _taylor(state)
        M = model.M
        free, fixed = cons.free, cons.dofs
        Mff, Mfc = self.blocks.get(cons)
        Kff = K if fixed.size == 0 else K[free][:, free]

        du_c = cons.values - state.u[fixed]  # prescribed [[u]]
        exact_bc = self._exact_bc_derivatives()
        if cfg.update_form == "displacement":
            L = (p.beta * dt * dt / p.alpha_m) * (F - M.matvec(state.a) - R) + M.matvec(T)
            known = du_c
        else:
            L = F - M.matvec(state.a) - R
            if p.alpha_f != 0:
                L = L - p.alpha_f * (K @ T)
            L = L / p.alpha_m
            # acceleration increment implied by the prescribed displacement
            known = (du_c - T[fixed]) / (p.beta * dt * dt)
        rhs = L[free]
        if fixed.size:
            coup = c * (K[free][:, fixed] @ known)
            if Mfc is not None:
                coup = coup + Mfc @ known
            rhs = rhs - coup
        H = solve_mass(Mff, rhs, cfg.lin_tol)
        cs = corrector_sum(Mff, Kff, p, dt, H.x, cfg.truncation_mode, cfg.n_terms, cfg.trunc_tol, cfg.k_max, cfg.lin_tol)
        cs.solver_iterations += H.iterations
        inc = np.empty(model.ndof)
        inc[free] = cs.increment
        inc[fixed] = known
        if cfg.update_form == "displacement":
            new = finalize_step(state, p, inc)
        else:
            new = finalize_step(state, p, T + p.beta * dt * dt * inc, inc)
        if fixed.size:
            u, v, a = new.u.copy(), new.v.copy(), new.a.copy()
            u[fixed] = cons.values
            if exact_bc:
                v[fixed], a[fixed] = cons.velocities, cons.accelerations
            new = State(new.t, dt, u, v, a)
        if not (np.all(np.isfinite(new.u)) and np.all(np.isfinite(new.v))):
            return StepAttempt(None, cs, "non-finite state")
        return StepAttempt(new, cs)


@dataclass
class RunResult:
    state: State
    reports: list[StepReport]
    completed: bool

    @property
    def accepted(self) -> list[StepReport]:
        return [r for r in self.reports if r.accepted]

    @property
    def n_rejected(self) -> int:
        return sum(1 for r in self.reports if not r.accepted)


Observer = Callable[[int, float, State, StepReport], None]


def run(model, params: AlphaParams, cfg: AdaptivityConfig, t_f: float, state: State | None = None,
        observers: Sequence[Observer] = (), u0=None, v0=None, max_steps: int | None = None) -> RunResult:
    """March from ``state`` (or the initial data) to ``t_f``.

    Rejections never modify the state.  Raises :class:`DivergenceError` when
    the step drops below ``dt_min`` or ``max_rejections`` consecutive
    attempts fail.
    """
    if not t_f > 0:
        raise InvalidArgumentError("t_f must be positive")
    if state is None:
        n = model.ndof
        state = initial_state(model, np.zeros(n) if u0 is None else u0, np.zeros(n) if v0 is None else v0, cfg.dt0)
    stepper = Stepper(model, params, cfg)
    # alpha_f = 0: corrections vanish, e is identically 0 and adaptivity is inert
    inert = params.alpha_f == 0.0
    reports: list[StepReport] = []
    n_acc = 0
    streak = 0
    dt_nominal = state.dt
    eps_t = 1e-12 * max(1.0, t_f)
    for obs in observers:
        obs(0, state.t, state, StepReport(0, state.t, True, 0.0, 0, 0.0, state.dt))
    while state.t < t_f - eps_t:
        if max_steps is not None and n_acc >= max_steps:
            break
        dt = min(dt_nominal, t_f - state.t)
        trial = state if dt == state.dt else replace(state, dt=dt)
        try:
            att = stepper.attempt(trial)
        except ConstitutiveError as exc:
            att = StepAttempt(None, None, f"inversion: {exc}")
        except SolverError as exc:
            att = StepAttempt(None, None, f"solver: {exc}")
        cs = att.corrector
        e = cs.e if cs is not None else math.inf
        its = cs.iterations if cs is not None else 0
        lin = cs.solver_iterations if cs is not None else 0
        cand = att.state
        reason = att.reason
        if cand is not None:
            try:
                model.check_admissible(cand.u)
            except ConstitutiveError as exc:
                cand, reason = None, f"inversion: {exc}"
        if cand is None:
            accepted, dt_next = False, 0.5 * dt
        elif inert or cs.trivial:
            # e carries no information here; hold the step rather than shrink it
            accepted, dt_next = True, dt_nominal
        else:
            accepted, dt_next = adapt_dt(e, dt, cfg)
            if not accepted:
                reason = f"e={e:.3g} > tol"
            if not cfg.adaptive:
                dt_next = dt_nominal
        if cand is None and not cfg.adaptive:
            dt_next = dt_nominal
        dt_next = min(dt_next, cfg.dt_max)
        rep = StepReport(n_acc + 1, state.t, accepted, e, its, dt, dt_next, lin, reason)
        reports.append(rep)
        if accepted:
            n_acc += 1
            streak = 0
            # keep the nominal step when the last one was clipped to land on t_f
            dt_nominal = dt_next if (cfg.adaptive and not inert) else dt_nominal
            state = State(cand.t, dt_nominal, cand.u, cand.v, cand.a)
            for obs in observers:
                obs(n_acc, state.t, state, rep)
        else:
            streak += 1
            log.debug("step %d rejected at t=%.6g: %s", n_acc + 1, state.t, reason)
            if streak >= cfg.max_rejections:
                raise DivergenceError(
                    f"{streak} consecutive rejections at t={state.t:.6g} (last: {reason})", state.t, reports)
            dt_nominal = dt_next
            if dt_nominal < cfg.dt_min:
                raise DivergenceError(
                    f"time step {dt_nominal:.3e} fell below dt_min={cfg.dt_min:.1e} at t={state.t:.6g}", state.t, reports)
    return RunResult(state, reports, state.t >= t_f - eps_t)
