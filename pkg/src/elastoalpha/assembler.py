"""Global finite element operators and the mass solve.

Degrees of freedom are numbered node-major: ``dof = node * ncomp + comp``.
All scatter operations go through :class:`SparsityPattern`, which sums
element contributions with ``np.bincount`` in a fixed order, so repeated
assemblies of the same state are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ConstitutiveError, InvalidArgumentError, SolverError
from .fem import ElementGeometry, Mesh, facet_rule, gauss_rule, nodal_rule


# --------------------------------------------------------------------------
# DOF layout and sparsity
# --------------------------------------------------------------------------


class SparsityPattern:
    """CSR pattern of an element-DOF table with a cached scatter map."""

    def __init__(self, edofs: np.ndarray, ndof: int):
        self.ndof = ndof
        n = edofs.shape[1]
        rows = np.repeat(edofs, n, axis=1).ravel()
        cols = np.tile(edofs, (1, n)).ravel()
        keys = rows.astype(np.int64) * ndof + cols
        uniq, self.scatter = np.unique(keys, return_inverse=True)
        self.indices = (uniq % ndof).astype(np.int32)
        r = uniq // ndof
        self.indptr = np.searchsorted(r, np.arange(ndof + 1)).astype(np.int32)
        self.nnz = uniq.size

    def assemble(self, element_mats: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.scatter, weights=element_mats.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.ndof, self.ndof))


class Discretization:
    """Mesh plus field layout; caches quadrature data and sparsity."""

    def __init__(self, mesh: Mesh, ncomp: int):
        self.mesh = mesh
        self.ncomp = ncomp
        self.ndof = mesh.n_nodes * ncomp
        nloc = mesh.elements.shape[1]
        self.edofs = (mesh.elements[:, :, None] * ncomp + np.arange(ncomp)).reshape(-1, nloc * ncomp)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @cached_property
    def pattern(self) -> SparsityPattern:
        return SparsityPattern(self.edofs, self.ndof)

    @cached_property
    def geometry(self) -> ElementGeometry:
        """Interior Gauss data of degree 2p (mass, energies, loads)."""
        return ElementGeometry.build(self.mesh, gauss_rule(self.dim, 2 * self.mesh.order))

    @cached_property
    def stiffness_geometry(self) -> ElementGeometry:
        # P1 gradients are element-wise constant: the centroid rule is exact
        if self.mesh.order == 1:
            return ElementGeometry.build(self.mesh, gauss_rule(self.dim, 1))
        return self.geometry

    def element_values(self, u: np.ndarray) -> np.ndarray:
        """Nodal values per element, shape (E, nloc, ncomp)."""
        return u[self.edofs].reshape(self.mesh.n_elements, -1, self.ncomp)

    def gradients(self, u: np.ndarray, geom: ElementGeometry | None = None) -> np.ndarray:
        geom = geom or self.stiffness_geometry
        return np.einsum("eai,eqaJ->eqiJ", self.element_values(u), geom.dNdX)

    def values_at_quadrature(self, u: np.ndarray, geom: ElementGeometry | None = None) -> np.ndarray:
        geom = geom or self.geometry
        return np.einsum("qa,eai->eqi", geom.N, self.element_values(u))

    def scatter_vector(self, element_vecs: np.ndarray) -> np.ndarray:
        return np.bincount(self.edofs.ravel(), weights=element_vecs.ravel(), minlength=self.ndof)

    def dofs_of_nodes(self, nodes: np.ndarray, components: Sequence[int] | None = None) -> np.ndarray:
        comps = range(self.ncomp) if components is None else components
        return (np.asarray(nodes)[:, None] * self.ncomp + np.asarray(list(comps))[None, :]).ravel()


# --------------------------------------------------------------------------
# Mass
# --------------------------------------------------------------------------


@dataclass
class MassMatrix:
    """Consistent (sparse) or lumped (diagonal) mass operator.

    For the consistent variant ``diag`` holds the row-sum lumped mass used
    as CG preconditioner.
    """

    kind: str
    diag: np.ndarray
    matrix: sp.csr_matrix | None = None

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "lumped":
            return self.diag * x
        return self.matrix @ x

    def restrict(self, free: np.ndarray) -> "MassMatrix":
        if self.kind == "lumped":
            return MassMatrix("lumped", self.diag[free])
        sub = self.matrix[free][:, free].tocsr()
        return MassMatrix("consistent", np.asarray(sub.sum(axis=1)).ravel(), sub)

    def coupling(self, free: np.ndarray, fixed: np.ndarray) -> sp.csr_matrix | None:
        """Off-diagonal block M[free, fixed]; ``None`` when lumped."""
        if self.kind == "lumped":
            return None
        return self.matrix[free][:, fixed].tocsr()

    def total(self, ncomp: int) -> np.ndarray:
        """Total mass seen by each component block."""
        if self.kind == "lumped":
            return self.diag.reshape(-1, ncomp).sum(axis=0)
        rows = np.asarray(self.matrix.sum(axis=1)).ravel()
        return rows.reshape(-1, ncomp).sum(axis=0)


def assemble_mass(disc: Discretization, rho0: float, rule_kind: str = "interior-gauss") -> MassMatrix:
    if not rho0 > 0:
        raise InvalidArgumentError(f"density must be positive, got {rho0}")
    mesh, nc = disc.mesh, disc.ncomp
    if rule_kind == "nodal-lobatto":
        geom = ElementGeometry.build(mesh, nodal_rule(mesh.reference))
        # N(x_q) is the identity at the vertices
        node_mass = np.einsum("eq,qa,qa->ea", geom.wdet, geom.N, geom.N) * rho0
        m = np.bincount(mesh.elements.ravel(), weights=node_mass.ravel(), minlength=mesh.n_nodes)
        return MassMatrix("lumped", np.repeat(m, nc))
    if rule_kind != "interior-gauss":
        raise InvalidArgumentError(f"unknown mass rule {rule_kind!r}")
    geom = disc.geometry
    me = rho0 * np.einsum("eq,qa,qb->eab", geom.wdet, geom.N, geom.N)
    full = np.einsum("eab,ik->eaibk", me, np.eye(nc)).reshape(mesh.n_elements, disc.edofs.shape[1], -1)
    M = disc.pattern.assemble(full)
    return MassMatrix("consistent", np.asarray(M.sum(axis=1)).ravel(), M)


@dataclass
class MassSolve:
    x: np.ndarray
    iterations: int
    residual: float


def solve_mass(M: MassMatrix, rhs: np.ndarray, tol_lin: float = 1e-12, maxiter: int = 200) -> MassSolve:
    """Lumped: componentwise division.  Consistent: PCG with lumped preconditioner."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (M.n,):
        raise InvalidArgumentError(f"rhs has shape {rhs.shape}, expected ({M.n},)")
    if M.kind == "lumped":
        return MassSolve(rhs / M.diag, 0, 0.0)
    pre = M.diag if np.all(M.diag > 0) else M.matrix.diagonal()
    bnorm = np.linalg.norm(rhs)
    x = rhs / pre
    if bnorm == 0.0:
        return MassSolve(np.zeros_like(rhs), 0, 0.0)
    r = rhs - M.matrix @ x
    res = np.linalg.norm(r) / bnorm
    if res < tol_lin:
        return MassSolve(x, 0, res)
    z = r / pre
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = M.matrix @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res < tol_lin:
            return MassSolve(x, it, res)
        z = r / pre
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"mass solve did not converge in {maxiter} iterations (residual {res:.2e})")


# --------------------------------------------------------------------------
# Internal force and tangent
# --------------------------------------------------------------------------


def _checked_gradients(disc: Discretization, u: np.ndarray, material):
    if u.shape != (disc.ndof,):
        raise InvalidArgumentError(f"u has shape {u.shape}, expected ({disc.ndof},)")
    gu = disc.gradients(u)
    J = material.jacobian(gu)
    bad = np.flatnonzero(np.any(~(J > 0), axis=1))
    if bad.size:
        raise ConstitutiveError(f"element inversion in {bad.size} element(s), first {bad[0]}", bad)
    return gu


def assemble_residual(disc: Discretization, u: np.ndarray, material) -> np.ndarray:
    """Internal force ``R_i = int grad(N_i) : P(I + grad u) dV``."""
    gu = _checked_gradients(disc, u, material)
    geom = disc.stiffness_geometry
    P = material.stress(gu)
    re = np.einsum("eq,eqiJ,eqaJ->eai", geom.wdet, P, geom.dNdX)
    return disc.scatter_vector(re)


def assemble_tangent(disc: Discretization, u: np.ndarray, material) -> sp.csr_matrix:
    """Gateaux derivative of the internal force at ``u``."""
    gu = _checked_gradients(disc, u, material)
    geom = disc.stiffness_geometry
    A = material.tangent(gu)
    ke = np.einsum("eq,eqaJ,eqiJkL,eqbL->eaibk", geom.wdet, geom.dNdX, A, geom.dNdX)
    n = disc.edofs.shape[1]
    return disc.pattern.assemble(ke.reshape(-1, n, n))


def total_stored_energy(disc: Discretization, u: np.ndarray, material) -> float:
    gu = _checked_gradients(disc, u, material)
    geom = disc.stiffness_geometry
    return float(np.sum(geom.wdet * material.energy(gu)))


# --------------------------------------------------------------------------
# Loads and boundary conditions
# --------------------------------------------------------------------------

Field = Callable[[np.ndarray, float], np.ndarray]


def _time_derivative(fn: Field, x: np.ndarray, t: float, order: int, h: float = 1e-4) -> np.ndarray:
    if order == 1:
        return (fn(x, t + h) - fn(x, t - h)) / (2 * h)
    return (fn(x, t + h) - 2 * fn(x, t) + fn(x, t - h)) / h**2


@dataclass
class DirichletBC:
    """Prescribed values on the nodes of boundary ``tag`` (or explicit nodes).

    ``value(x, t)`` returns an array of shape ``(n, ncomp)``; ``velocity`` and
    ``acceleration`` default to finite differences of ``value`` in time.  The
    constraint is active for ``t <= until``.
    """

    tag: str | None
    value: Field
    components: Sequence[int] | None = None
    velocity: Field | None = None
    acceleration: Field | None = None
    until: float | None = None
    nodes: np.ndarray | None = None

    def active(self, t: float) -> bool:
        return self.until is None or t <= self.until + 1e-14

    def node_ids(self, mesh: Mesh) -> np.ndarray:
        if self.nodes is not None:
            return np.asarray(self.nodes, dtype=int)
        try:
            return mesh.facet_nodes(self.tag)
        except KeyError:
            raise ConfigError(f"unknown boundary tag {self.tag!r}; available: {mesh.tags}") from None

    def evaluate(self, x: np.ndarray, t: float, order: int = 0) -> np.ndarray:
        if order == 0:
            return self.value(x, t)
        fn = self.velocity if order == 1 else self.acceleration
        if fn is not None:
            return fn(x, t)
        return _time_derivative(self.value, x, t, order)


def zero_field(x: np.ndarray, t: float) -> np.ndarray:
    return np.zeros((x.shape[0], x.shape[1]))


@dataclass
class Traction:
    """Surface traction ``value(x, t)`` (force per reference area) on ``tag``."""

    tag: str
    value: Field


@dataclass
class BoundaryConditions:
    dirichlet: list[DirichletBC] = field(default_factory=list)
    tractions: list[Traction] = field(default_factory=list)
    gravity: np.ndarray | None = None
    body_force: Field | None = None  # force per reference volume, (npts, ncomp)


@dataclass
class Constraints:
    """Dirichlet data resolved at one instant."""

    dofs: np.ndarray
    values: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    free: np.ndarray


def resolve_dirichlet(disc: Discretization, bc: BoundaryConditions, t: float, derivatives: bool = True) -> Constraints:
    """Collect the constrained DOFs active at ``t`` and their prescribed data."""
    dofs, vals, vels, accs = [], [], [], []
    for d in bc.dirichlet:
        if not d.active(t):
            continue
        nodes = d.node_ids(disc.mesh)
        comps = list(range(disc.ncomp)) if d.components is None else list(d.components)
        x = disc.mesh.nodes[nodes]
        data = [np.asarray(d.evaluate(x, t, k), dtype=float).reshape(len(nodes), -1) for k in range(3 if derivatives else 1)]
        dofs.append(disc.dofs_of_nodes(nodes, comps))
        for store, arr in zip((vals, vels, accs), data):
            store.append(arr[:, comps].ravel() if arr.shape[1] == disc.ncomp else arr.ravel())
        if not derivatives:
            vels.append(np.zeros(dofs[-1].size))
            accs.append(np.zeros(dofs[-1].size))
    if not dofs:
        empty = np.zeros(0)
        return Constraints(np.zeros(0, dtype=int), empty, empty, empty, np.arange(disc.ndof))
    dofs = np.concatenate(dofs)
    vals, vels, accs = (np.concatenate(a) for a in (vals, vels, accs))
    order = np.argsort(dofs, kind="stable")
    dofs, vals, vels, accs = dofs[order], vals[order], vels[order], accs[order]
    uniq, first = np.unique(dofs, return_index=True)
    if uniq.size != dofs.size:
        # duplicates are fine only when the prescriptions agree
        idx = np.searchsorted(uniq, dofs)
        scale = max(1.0, float(np.max(np.abs(vals))))
        if np.any(np.abs(vals - vals[first][idx]) > 1e-12 * scale):
            clash = dofs[np.flatnonzero(np.abs(vals - vals[first][idx]) > 1e-12 * scale)[0]]
            raise ConfigError(f"conflicting Dirichlet values on dof {int(clash)}")
        dofs, vals, vels, accs = uniq, vals[first], vels[first], accs[first]
    free = np.setdiff1d(np.arange(disc.ndof), dofs)
    if free.size == 0:
        raise ConfigError("every degree of freedom is prescribed; the system is degenerate")
    return Constraints(dofs, vals, vels, accs, free)


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, cons: Constraints, values: np.ndarray | None = None):
    """Symmetric elimination: returns ``(A_ff, b_f - A_fc g)`` on the free set."""
    g = cons.values if values is None else values
    A = sp.csr_matrix(A)
    free, fixed = cons.free, cons.dofs
    A_ff = A[free][:, free]
    rhs = np.asarray(b, dtype=float)[free]
    if fixed.size:
        rhs = rhs - A[free][:, fixed] @ g
    return A_ff.tocsr(), rhs


def assemble_external(disc: Discretization, bc: BoundaryConditions, t: float, rho0: float = 1.0) -> np.ndarray:
    """Gravity, body force and surface tractions at time ``t``."""
    if t < 0:
        raise InvalidArgumentError("time must be non-negative")
    mesh, nc = disc.mesh, disc.ncomp
    f = np.zeros(disc.ndof)
    geom = disc.geometry
    if bc.gravity is not None and np.any(bc.gravity):
        g = np.asarray(bc.gravity, dtype=float).reshape(nc)
        fe = rho0 * np.einsum("eq,qa,i->eai", geom.wdet, geom.N, g)
        f += disc.scatter_vector(fe)
    if bc.body_force is not None:
        xq = geom.xq.reshape(-1, mesh.dim)
        b = np.asarray(bc.body_force(xq, t), dtype=float).reshape(geom.xq.shape[:2] + (nc,))
        fe = np.einsum("eq,qa,eqi->eai", geom.wdet, geom.N, b)
        f += disc.scatter_vector(fe)
    for tr in bc.tractions:
        f += _traction_load(disc, tr, t)
    return f


def _traction_load(disc: Discretization, tr: Traction, t: float) -> np.ndarray:
    mesh, nc, d = disc.mesh, disc.ncomp, disc.dim
    try:
        els, loc = mesh.boundary_facets(tr.tag)
    except KeyError:
        raise ConfigError(f"unknown traction tag {tr.tag!r}; available: {mesh.tags}") from None
    rule = facet_rule(d, 2 * mesh.order)
    f = np.zeros(disc.ndof)
    ref = mesh.reference
    for face in range(d + 1):
        sel = els[loc == face]
        if sel.size == 0:
            continue
        verts = [i for i in range(d + 1) if i != face]
        # facet rule barycentrics -> element barycentrics
        lam = np.zeros((len(rule), d + 1))
        lam[:, verts] = rule.barycentric
        N, _ = ref.tabulate(lam[:, 1:])
        xv = mesh.nodes[mesh.vertices[sel]][:, verts, :]  # (F, d, d)
        edges = xv[:, 1:, :] - xv[:, :1, :]
        if d == 2:
            jac = np.linalg.norm(edges[:, 0, :], axis=1)
        else:
            jac = np.linalg.norm(np.cross(edges[:, 0, :], edges[:, 1, :]), axis=1)
        xq = np.einsum("qa,fad->fqd", N, mesh.nodes[mesh.elements[sel]])
        val = np.asarray(tr.value(xq.reshape(-1, d), t), dtype=float)
        val = np.broadcast_to(val, (xq.shape[0] * xq.shape[1], nc)).reshape(xq.shape[0], xq.shape[1], nc)
        fe = np.einsum("f,q,qa,fqi->fai", jac, rule.weights, N, val)
        np.add.at(f, disc.edofs[sel].ravel(), fe.ravel())
    return f
