"""Structured simplex meshes, Lagrange reference elements and quadrature.

Meshes are built on structured boxes: every hexahedral cell is split into six
tetrahedra (Kuhn split) and every square into two triangles.  Higher-order
nodes live on the ``order``-times refined grid, so the node numbering of a
P2/P3 mesh is simply the lexicographic index of the refined lattice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import GeometryError, InvalidArgumentError

AXES = "xyz"
REFERENCE_MEASURE = {1: 1.0, 2: 0.5, 3: 1.0 / 6.0}


# --------------------------------------------------------------------------
# Reference element
# --------------------------------------------------------------------------


def _lattice(dim: int, order: int) -> np.ndarray:
    """Barycentric multi-indices of the order-p lattice, vertices first."""
    idx = [a for a in itertools.product(range(order + 1), repeat=dim + 1) if sum(a) == order]
    verts = [tuple(order if j == i else 0 for j in range(dim + 1)) for i in range(dim + 1)]
    rest = sorted(a for a in idx if a not in verts)
    return np.array(verts + rest, dtype=int)


@dataclass(frozen=True)
class ReferenceElement:
    """Lagrange element of order ``order`` on the unit simplex.

    Reference vertices are the origin followed by the unit vectors; the
    barycentric coordinate of vertex 0 is ``1 - sum(x)``.
    """

    simplex_dim: int
    order: int

    def __post_init__(self):
        if self.simplex_dim not in (1, 2, 3):
            raise InvalidArgumentError(f"simplex dimension must be 1, 2 or 3, got {self.simplex_dim}")
        if self.order not in (1, 2, 3):
            raise NotImplementedError(f"polynomial order {self.order} is not supported (1-3)")

    @property
    def lattice(self) -> np.ndarray:
        return _lattice(self.simplex_dim, self.order)

    @property
    def n_nodes(self) -> int:
        return math.comb(self.order + self.simplex_dim, self.simplex_dim)

    @property
    def nodes(self) -> np.ndarray:
        """Reference coordinates of the element nodes."""
        return self.lattice[:, 1:] / self.order

    def _factors(self, s: np.ndarray, k: int):
        # l_k(s) = prod_{m<k} (p s - m)/(m+1) and its derivative in s
        p = self.order
        val = np.ones_like(s)
        der = np.zeros_like(s)
        for m in range(k):
            f = (p * s - m) / (m + 1)
            der = der * f + val * p / (m + 1)
            val = val * f
        return val, der

    def tabulate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Basis values ``(nq, n)`` and reference gradients ``(nq, n, d)``."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.simplex_dim
        lam = np.concatenate([1.0 - x.sum(axis=1, keepdims=True), x], axis=1)
        lat = self.lattice
        nq, n = x.shape[0], lat.shape[0]
        vals = np.empty((nq, n))
        dlam = np.empty((nq, n, d + 1))
        for a, alpha in enumerate(lat):
            fv, fd = zip(*(self._factors(lam[:, i], alpha[i]) for i in range(d + 1)))
            vals[:, a] = np.prod(fv, axis=0)
            for i in range(d + 1):
                others = [fv[j] for j in range(d + 1) if j != i]
                dlam[:, a, i] = fd[i] * np.prod(others, axis=0)
        # chain rule: dlam0/dx_k = -1, dlam_i/dx_k = delta_ik
        grads = dlam[:, :, 1:] - dlam[:, :, :1]
        return vals, grads


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    kind: str  # "interior-gauss" | "nodal-lobatto"
    simplex_dim: int
    degree: int
    points: np.ndarray  # reference coordinates (nq, d)
    weights: np.ndarray  # (nq,)

    @property
    def barycentric(self) -> np.ndarray:
        return np.concatenate([1.0 - self.points.sum(axis=1, keepdims=True), self.points], axis=1)

    def __len__(self):
        return len(self.weights)


def _gauss_jacobi01(n: int, alpha: float):
    # nodes/weights on [0, 1] for the weight (1 - u)^alpha
    x, w = roots_jacobi(n, alpha, 0.0)
    return (1.0 + x) / 2.0, w / 2.0 ** (alpha + 1.0)


def _conical_product(dim: int, degree: int):
    n = degree // 2 + 1
    if dim == 1:
        u, wu = _gauss_jacobi01(n, 0.0)
        return u[:, None], wu
    if dim == 2:
        u, wu = _gauss_jacobi01(n, 1.0)
        v, wv = _gauss_jacobi01(n, 0.0)
        U, V = np.meshgrid(u, v, indexing="ij")
        pts = np.stack([U, V * (1.0 - U)], axis=-1).reshape(-1, 2)
        return pts, np.outer(wu, wv).ravel()
    u, wu = _gauss_jacobi01(n, 2.0)
    v, wv = _gauss_jacobi01(n, 1.0)
    w, ww = _gauss_jacobi01(n, 0.0)
    U, V, W = np.meshgrid(u, v, w, indexing="ij")
    pts = np.stack([U, V * (1.0 - U), W * (1.0 - U) * (1.0 - V)], axis=-1).reshape(-1, 3)
    return pts, np.einsum("i,j,k->ijk", wu, wv, ww).ravel()


_MAX_DEGREE = 12


@lru_cache(maxsize=None)
def gauss_rule(simplex_dim: int, degree: int) -> QuadratureRule:
    """Interior Gauss rule exact for polynomials up to ``degree``.

    Degrees 1 and 2 use the classical centroid / symmetric rules; higher
    degrees use a collapsed-coordinate Gauss-Jacobi product.
    """
    if simplex_dim not in REFERENCE_MEASURE:
        raise InvalidArgumentError(f"bad simplex dimension {simplex_dim}")
    if not 1 <= degree <= _MAX_DEGREE:
        raise NotImplementedError(f"no interior rule of degree {degree} (supported 1-{_MAX_DEGREE})")
    d = simplex_dim
    meas = REFERENCE_MEASURE[d]
    if degree == 1:
        pts = np.full((1, d), 1.0 / (d + 1))
        wts = np.array([meas])
    elif degree == 2 and d == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        wts = np.full(3, 1 / 6)
    elif degree == 2 and d == 3:
        a, b = 0.5854101966249685, 0.1381966011250105
        pts = np.array([[b, b, b], [a, b, b], [b, a, b], [b, b, a]])
        wts = np.full(4, 1 / 24)
    else:
        pts, wts = _conical_product(d, degree)
    return QuadratureRule("interior-gauss", d, degree, pts, wts)


def nodal_rule(ref: ReferenceElement) -> QuadratureRule:
    """Vertex (Gauss-Lobatto type) rule; yields a diagonal P1 mass matrix."""
    if ref.order != 1:
        raise NotImplementedError("nodal quadrature is only available for linear elements")
    d = ref.simplex_dim
    pts = ref.nodes.copy()
    wts = np.full(d + 1, REFERENCE_MEASURE[d] / (d + 1))
    return QuadratureRule("nodal-lobatto", d, 1, pts, wts)


def facet_rule(simplex_dim: int, degree: int) -> QuadratureRule:
    """Rule on the (d-1)-simplex used for boundary integrals."""
    if simplex_dim == 2:
        return gauss_rule(1, degree)
    return gauss_rule(2, degree)


# --------------------------------------------------------------------------
# Mesh
# --------------------------------------------------------------------------


@dataclass
class Mesh:
    """Simplex mesh.

    ``elements`` holds the Lagrange node list of every element with the
    ``dim + 1`` vertices first.  Boundary facets are stored as
    ``(element, local facet)`` pairs, local facet ``i`` being the facet
    opposite to local vertex ``i``.
    """

    dim: int
    order: int
    nodes: np.ndarray
    elements: np.ndarray
    facet_elements: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    facet_local: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    facet_tags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=object))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def vertices(self) -> np.ndarray:
        return self.elements[:, : self.dim + 1]

    @property
    def reference(self) -> ReferenceElement:
        return ReferenceElement(self.dim, self.order)

    @property
    def tags(self) -> list[str]:
        return sorted(set(self.facet_tags.tolist()))

    def boundary_facets(self, tag: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.facet_tags == tag
        if not mask.any():
            raise KeyError(tag)
        return self.facet_elements[mask], self.facet_local[mask]

    def facet_nodes(self, tag: str) -> np.ndarray:
        """All Lagrange nodes (not just vertices) lying on facets with ``tag``."""
        els, loc = self.boundary_facets(tag)
        lat = self.reference.lattice
        on = [np.flatnonzero(lat[:, f] == 0) for f in range(self.dim + 1)]
        return np.unique(np.concatenate([self.elements[e, on[f]] for e, f in zip(els, loc)]))

    def signed_volumes(self) -> np.ndarray:
        jac = _vertex_jacobians(self)
        return np.linalg.det(jac) / math.factorial(self.dim)

    def volume(self) -> float:
        return float(np.sum(np.abs(self.signed_volumes())))

    def check(self) -> None:
        """Raise GeometryError when an invariant of the mesh is violated."""
        if self.elements.min() < 0 or self.elements.max() >= self.n_nodes:
            raise GeometryError("element references a node out of range")
        if np.setdiff1d(np.arange(self.n_nodes), self.elements).size:
            raise GeometryError("mesh contains unreferenced nodes")
        vol = self.signed_volumes()
        bad = np.flatnonzero(vol <= 0)
        if bad.size:
            raise GeometryError(f"element {bad[0]} has non-positive volume", int(bad[0]))


def _vertex_jacobians(mesh: Mesh) -> np.ndarray:
    x = mesh.nodes[mesh.vertices]  # (E, d+1, d)
    return np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))  # columns are edges


def _kuhn_simplices(dim: int) -> list[np.ndarray]:
    """Positively oriented Kuhn simplices of the unit cell as integer offsets."""
    out = []
    for perm in itertools.permutations(range(dim)):
        verts = [np.zeros(dim, dtype=int)]
        for ax in perm:
            v = verts[-1].copy()
            v[ax] += 1
            verts.append(v)
        verts = np.array(verts)
        if np.linalg.det((verts[1:] - verts[0]).T) < 0:
            verts[[-2, -1]] = verts[[-1, -2]]
        out.append(verts)
    return out


def build_box_mesh(extents, divisions, dim: int | None = None, order: int = 1, origin=None) -> Mesh:
    """Structured simplex mesh of the box ``[origin, origin + extents]``.

    >>> build_box_mesh((1, 1), (1, 1)).n_elements
    2
    """
    extents = np.asarray(extents, dtype=float)
    divisions = np.asarray(divisions)
    dim = dim or extents.size
    if dim not in (2, 3) or extents.size != dim or divisions.size != dim:
        raise InvalidArgumentError("extents and divisions must have one entry per axis (2D or 3D)")
    if np.any(extents <= 0):
        raise InvalidArgumentError(f"extents must be positive, got {extents.tolist()}")
    if np.any(divisions < 1) or np.any(divisions != np.round(divisions)):
        raise InvalidArgumentError(f"divisions must be positive integers, got {divisions.tolist()}")
    if order not in (1, 2, 3):
        raise NotImplementedError(f"polynomial order {order} is not supported (1-3)")
    divisions = divisions.astype(int)
    origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)

    fine = divisions * order + 1
    grids = [np.linspace(0.0, extents[a], fine[a]) + origin[a] for a in range(dim)]
    nodes = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, dim)

    lat = _lattice(dim, order)
    cells = np.stack(np.meshgrid(*[np.arange(n) for n in divisions], indexing="ij"), axis=-1).reshape(-1, dim)
    conn = []
    for simplex in _kuhn_simplices(dim):
        verts = cells[:, None, :] + simplex[None, :, :]  # (C, d+1, d) coarse ints
        fine_idx = np.einsum("la,cad->cld", lat, verts)  # refined integer coords
        conn.append(np.ravel_multi_index(tuple(np.moveaxis(fine_idx, -1, 0)), fine))
    # cell-major ordering keeps element numbering local
    elements = np.stack(conn, axis=1).reshape(-1, lat.shape[0])

    mesh = Mesh(dim=dim, order=order, nodes=nodes, elements=elements)
    _tag_box_facets(mesh, origin, extents)
    return mesh


def _tag_box_facets(mesh: Mesh, lo, extents) -> None:
    hi = lo + extents
    tol = 1e-10 * float(np.max(extents))
    x = mesh.nodes[mesh.vertices]  # (E, d+1, d)
    f_el, f_loc, f_tag = [], [], []
    d = mesh.dim
    for f in range(d + 1):
        keep = [i for i in range(d + 1) if i != f]
        xf = x[:, keep, :]
        for a in range(d):
            for side, val in (("min", lo[a]), ("max", hi[a])):
                on = np.all(np.abs(xf[:, :, a] - val) < tol, axis=1)
                els = np.flatnonzero(on)
                f_el.append(els)
                f_loc.append(np.full(els.size, f))
                f_tag.append(np.full(els.size, f"{AXES[a]}-{side}", dtype=object))
    mesh.facet_elements = np.concatenate(f_el)
    mesh.facet_local = np.concatenate(f_loc)
    mesh.facet_tags = np.concatenate(f_tag)


def merge_nodes(mesh: Mesh, tol: float = 1e-12) -> Mesh:
    """Collapse coincident nodes (used to close periodic structured meshes)."""
    scale = max(float(np.ptp(mesh.nodes)), 1.0)
    key = np.round(mesh.nodes / (tol * scale)).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)  # keep original ordering of survivors
    remap = np.empty_like(order)
    remap[order] = np.arange(order.size)
    new_nodes = mesh.nodes[first[order]]
    return Mesh(mesh.dim, mesh.order, new_nodes, remap[inverse.ravel()][mesh.elements],
                mesh.facet_elements, mesh.facet_local, mesh.facet_tags)


def drop_facets(mesh: Mesh, tags) -> Mesh:
    mask = ~np.isin(mesh.facet_tags, list(tags))
    return Mesh(mesh.dim, mesh.order, mesh.nodes, mesh.elements,
                mesh.facet_elements[mask], mesh.facet_local[mask], mesh.facet_tags[mask])


# --------------------------------------------------------------------------
# Isoparametric (affine) mapping
# --------------------------------------------------------------------------


def eval_mapped_basis(mesh: Mesh, element_id: int, quad_point):
    """Basis values, physical gradients and Jacobian determinant at one point."""
    ref = mesh.reference
    xi = np.asarray(quad_point, dtype=float).reshape(1, mesh.dim)
    if np.any(xi < -1e-14) or xi.sum() > 1 + 1e-14:
        raise InvalidArgumentError(f"point {xi.ravel().tolist()} lies outside the reference simplex")
    vals, grads = ref.tabulate(xi)
    jac = _vertex_jacobians(mesh)[element_id]
    det = float(np.linalg.det(jac))
    if det <= 0:
        raise GeometryError(f"element {element_id} is degenerate (detJ={det:.3e})", element_id)
    return vals[0], grads[0] @ np.linalg.inv(jac), det


@dataclass
class ElementGeometry:
    """Basis data of every element at the points of one quadrature rule.

    Attributes are dense arrays: ``N`` (nq, n), ``dNdX`` (E, nq, n, d),
    ``wdet`` (E, nq) = weight * detJ and ``xq`` (E, nq, d).
    """

    mesh: Mesh
    rule: QuadratureRule
    N: np.ndarray
    dNdX: np.ndarray
    wdet: np.ndarray
    xq: np.ndarray

    @classmethod
    def build(cls, mesh: Mesh, rule: QuadratureRule) -> "ElementGeometry":
        vals, grads = mesh.reference.tabulate(rule.points)
        jac = _vertex_jacobians(mesh)
        det = np.linalg.det(jac)
        bad = np.flatnonzero(det <= 0)
        if bad.size:
            raise GeometryError(f"element {bad[0]} is degenerate (detJ={det[bad[0]]:.3e})", int(bad[0]))
        inv = np.linalg.inv(jac)
        dNdX = np.einsum("qak,ekj->eqaj", grads, inv)
        wdet = det[:, None] * rule.weights[None, :]
        xq = np.einsum("qa,ead->eqd", vals, mesh.nodes[mesh.elements])
        return cls(mesh, rule, vals, dNdX, wdet, xq)

    @property
    def n_elements(self) -> int:
        return self.dNdX.shape[0]
