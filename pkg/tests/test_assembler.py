from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elastoalpha.assembler import (
    BoundaryConditions,
    DirichletBC,
    Discretization,
    MassMatrix,
    Traction,
    apply_dirichlet,
    assemble_external,
    assemble_mass,
    assemble_residual,
    assemble_tangent,
    resolve_dirichlet,
    solve_mass,
    total_stored_energy,
    zero_field,
)
from elastoalpha.errors import ConfigError
from elastoalpha.fem import build_box_mesh
from elastoalpha.hypermat import LameParams, NeoHookean
from elastoalpha.runner.scenarios import twist_fields

MAT = NeoHookean(LameParams(1.0, 1.5))


def small_strain_stiffness(mesh, lam, mu) -> np.ndarray:
    """Dense P1 small-strain stiffness by the textbook B-matrix route."""
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[np.arange(3), np.arange(3)] += 2 * mu
    D[np.arange(3, 6), np.arange(3, 6)] = mu
    n = 3 * mesh.n_nodes
    K = np.zeros((n, n))
    for el in mesh.elements:
        X = mesh.nodes[el]
        A = np.hstack([np.ones((4, 1)), X])
        coef = np.linalg.inv(A)  # column a holds the linear shape function a
        grads = coef[1:, :].T  # (4, 3)
        V = abs(np.linalg.det(A)) / 6
        B = np.zeros((6, 12))
        for a, (gx, gy, gz) in enumerate(grads):
            c = 3 * a
            B[0, c], B[1, c + 1], B[2, c + 2] = gx, gy, gz
            B[3, c + 1], B[3, c + 2] = gz, gy
            B[4, c], B[4, c + 2] = gz, gx
            B[5, c], B[5, c + 1] = gy, gx
        dofs = (3 * el[:, None] + np.arange(3)).ravel()
        K[np.ix_(dofs, dofs)] += V * B.T @ D @ B
    return K


class TestMass:
    def test_single_tet_consistent(self, unit_tet):
        disc = Discretization(unit_tet, 3)
        M = assemble_mass(disc, 2.0).matrix.toarray()
        V = 1 / 6
        x = M[0::3, 0::3]
        assert np.allclose(np.diag(x), 2 * V / 10)
        assert np.allclose(x[~np.eye(4, dtype=bool)], 2 * V / 20)
        assert np.allclose(M[0::3, 1::3], 0.0)

    def test_single_tet_lumped(self, unit_tet):
        M = assemble_mass(Discretization(unit_tet, 3), 2.0, "nodal-lobatto")
        assert M.kind == "lumped"
        assert np.allclose(M.diag, 2 * (1 / 6) / 4)

    @pytest.mark.parametrize("order", [1, 2])
    def test_total_mass(self, order):
        mesh = build_box_mesh((0.3, 0.06, 0.002), (5, 2, 1), order=order)
        disc = Discretization(mesh, 3)
        rho, V = 7800.0, 0.3 * 0.06 * 0.002
        cons = assemble_mass(disc, rho)
        assert np.allclose(cons.total(3), rho * V, rtol=1e-12)
        if order == 1:
            lump = assemble_mass(disc, rho, "nodal-lobatto")
            assert np.allclose(lump.total(3), rho * V, rtol=1e-12)

    def test_rejects_bad_density(self, cube48):
        with pytest.raises(ValueError):
            assemble_mass(Discretization(cube48, 3), 0.0)


class TestSolveMass:
    def test_lumped_division(self):
        d = np.array([1.0, 2.0, 4.0])
        res = solve_mass(MassMatrix("lumped", d), d)
        assert np.allclose(res.x, 1.0) and res.iterations == 0

    def test_pcg_iterations(self, cube48):
        M = assemble_mass(Discretization(cube48, 3), 1.0)
        res = solve_mass(M, np.ones(M.n), 1e-10)
        assert res.iterations <= 10
        assert res.residual < 1e-10

    def test_roundtrip(self, cube48, rng):
        M = assemble_mass(Discretization(cube48, 3), 3.0)
        v = rng.normal(size=M.n)
        assert np.allclose(solve_mass(M, M.matvec(v), 1e-13).x, v, atol=1e-10)


class TestResidualAndTangent:
    @pytest.fixture
    def disc(self):
        return Discretization(build_box_mesh((1.0, 1.0, 1.0), (1, 1, 2)), 3)

    def test_zero_and_translation(self, disc):
        assert np.allclose(assemble_residual(disc, np.zeros(disc.ndof), MAT), 0.0)
        u = np.tile([0.3, -0.2, 0.7], disc.mesh.n_nodes)
        assert np.allclose(assemble_residual(disc, u, MAT), 0.0, atol=1e-13)

    def test_energy_gradient(self, rng):
        disc = Discretization(build_box_mesh((1.0, 1.0, 1.0), (1, 1, 1), dim=3), 3)
        u = 0.02 * rng.normal(size=disc.ndof)
        R = assemble_residual(disc, u, MAT)
        h = 1e-6
        fd = np.array([(total_stored_energy(disc, u + h * e, MAT) - total_stored_energy(disc, u - h * e, MAT)) / (2 * h)
                       for e in np.eye(disc.ndof)])
        assert np.linalg.norm(R - fd) / np.linalg.norm(fd) < 1e-5

    def test_small_strain_limit(self, disc):
        K = assemble_tangent(disc, np.zeros(disc.ndof), MAT).toarray()
        assert np.allclose(K, small_strain_stiffness(disc.mesh, 1.0, 1.5), atol=1e-12)
        assert np.abs(K - K.T).max() < 1e-12

    def test_fd_tangent(self, disc, rng):
        assert disc.mesh.n_elements == 12
        u = 0.05 * rng.normal(size=disc.ndof)
        K = assemble_tangent(disc, u, MAT)
        h = 1e-6
        for _ in range(5):
            w = rng.normal(size=disc.ndof)
            fd = (assemble_residual(disc, u + h * w, MAT) - assemble_residual(disc, u - h * w, MAT)) / (2 * h)
            assert np.linalg.norm(K @ w - fd) / np.linalg.norm(fd) < 1e-5

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31))
    def test_rotation_invariance_of_energy(self, seed):
        from conftest import random_rotation
        disc = Discretization(build_box_mesh((1.0, 1.0, 1.0), (1, 1, 1)), 3)
        Q = random_rotation(np.random.default_rng(seed))
        X = disc.mesh.nodes
        u = (X @ Q.T - X).ravel()
        assert abs(total_stored_energy(disc, u, MAT)) < 1e-12


class TestExternal:
    def test_zero(self, cube48):
        disc = Discretization(cube48, 3)
        assert np.all(assemble_external(disc, BoundaryConditions(), 0.0) == 0)

    def test_gravity_total_weight(self, cube48):
        disc = Discretization(cube48, 3)
        f = assemble_external(disc, BoundaryConditions(gravity=np.array([0, 0, -9.81])), 0.0, rho0=1100.0)
        assert f[2::3].sum() == pytest.approx(-1100 * 9.81, rel=1e-12)
        assert abs(f[0::3].sum()) < 1e-9

    @pytest.mark.parametrize("order", [1, 2])
    def test_traction_resultant(self, order):
        mesh = build_box_mesh((2.0, 3.0, 1.0), (2, 2, 1), order=order)
        disc = Discretization(mesh, 3)
        tau = np.array([1.0, -2.0, 0.5])
        bc = BoundaryConditions(tractions=[Traction("x-max", lambda x, t: np.tile(tau, (x.shape[0], 1)))])
        f = assemble_external(disc, bc, 0.0).reshape(-1, 3)
        assert np.allclose(f.sum(axis=0), tau * 3.0, rtol=1e-12)


class TestDirichlet:
    def test_zero_dirichlet_keeps_free_block(self, cube48, rng):
        disc = Discretization(cube48, 3)
        cons = resolve_dirichlet(disc, BoundaryConditions([DirichletBC("x-min", zero_field)]), 0.0)
        A = assemble_tangent(disc, np.zeros(disc.ndof), MAT)
        b = rng.normal(size=disc.ndof)
        Aff, bf = apply_dirichlet(A, b, cons)
        assert np.allclose(bf, b[cons.free])
        assert np.allclose(Aff.toarray(), A.toarray()[np.ix_(cons.free, cons.free)])

    def test_all_prescribed_is_degenerate(self, cube48):
        disc = Discretization(cube48, 3)
        bcs = BoundaryConditions([DirichletBC(None, zero_field, nodes=np.arange(cube48.n_nodes))])
        with pytest.raises(ConfigError):
            resolve_dirichlet(disc, bcs, 0.0)

    def test_unknown_tag(self, cube48):
        with pytest.raises(ConfigError):
            resolve_dirichlet(Discretization(cube48, 3), BoundaryConditions([DirichletBC("nope", zero_field)]), 0.0)

    def test_full_twist_returns_identity(self):
        mesh = build_box_mesh((1.0, 1.0, 5.0), (2, 2, 8))
        disc = Discretization(mesh, 3)
        val, vel, acc = twist_fields((0.5, 0.5), 8 * math.pi, 0.25)
        bc = BoundaryConditions([DirichletBC("z-max", val, components=(0, 1), velocity=vel, acceleration=acc)])
        cons = resolve_dirichlet(disc, bc, 0.25)
        assert np.allclose(cons.values, 0.0, atol=1e-12)
        quarter = resolve_dirichlet(disc, bc, 0.0625)  # rotation by pi/2
        top = mesh.facet_nodes("z-max")
        x = mesh.nodes[top, :2] - 0.5
        rotated = np.stack([-x[:, 1], x[:, 0]], axis=1)
        assert np.allclose(quarter.values.reshape(-1, 2), rotated - x, atol=1e-12)
