"""Compressible neo-Hookean material with logarithmic volumetric penalty.

    W(F) = mu/2 (tr(F^T F) - 3) + lam (J^2 - 1)/4 - (lam/2 + mu) ln J

All functions are vectorised over leading axes: ``F`` has shape
``(..., 3, 3)``.  Two-dimensional gradients are embedded as plane strain
(``F33 = 1``) by :class:`NeoHookean`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstitutiveError, InvalidArgumentError


@dataclass(frozen=True)
class LameParams:
    lam: float
    mu: float
    rho0: float = 1.0

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise InvalidArgumentError(f"Lame constants must be positive (lam={self.lam}, mu={self.mu})")
        if not self.rho0 > 0:
            raise InvalidArgumentError(f"density must be positive, got {self.rho0}")


def lame_from_engineering(E: float, nu: float, rho0: float = 1.0) -> LameParams:
    if not E > 0:
        raise InvalidArgumentError(f"Young modulus must be positive, got {E}")
    if not 0.0 < nu < 0.5:
        raise InvalidArgumentError(f"Poisson ratio must lie in (0, 0.5), got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return LameParams(lam, mu, rho0)


def _det_checked(F: np.ndarray) -> np.ndarray:
    J = np.linalg.det(F)
    if np.any(~(J > 0)):
        raise ConstitutiveError("element inversion: det F <= 0")
    return J


def stored_energy(F, params: LameParams):
    F = np.asarray(F, dtype=float)
    J = _det_checked(F)
    lam, mu = params.lam, params.mu
    trC = np.einsum("...ij,...ij->...", F, F)
    return 0.5 * mu * (trC - 3.0) + 0.25 * lam * (J**2 - 1.0) - (0.5 * lam + mu) * np.log(J)


def piola_stress(F, params: LameParams):
    """First Piola-Kirchhoff stress ``P = lam (J^2-1)/2 F^-T + mu (F - F^-T)``."""
    F = np.asarray(F, dtype=float)
    J = _det_checked(F)
    FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
    c = 0.5 * params.lam * (J**2 - 1.0) - params.mu
    return params.mu * F + c[..., None, None] * FinvT


def tangent(F, params: LameParams):
    """``A[i,J,k,L] = dP[i,J]/dF[k,L]``.

    Index-exact form of the closed-form tangent:
    mu d_ik d_JL + lam J^2 Fi_Ji Fi_Lk - (lam (J^2-1)/2 - mu) Fi_Jk Fi_Li
    with ``Fi = F^-1``.  At ``F = I`` this is lam I(x)I + 2 mu (sym. identity).
    """
    F = np.asarray(F, dtype=float)
    J = _det_checked(F)
    n = F.shape[-1]
    Fi = np.linalg.inv(F)
    lam, mu = params.lam, params.mu
    I = np.eye(n)
    c = 0.5 * lam * (J**2 - 1.0) - mu
    A = mu * np.einsum("ik,JL->iJkL", I, I)
    A = A + (lam * J**2)[..., None, None, None, None] * np.einsum("...Ji,...Lk->...iJkL", Fi, Fi)
    A = A - c[..., None, None, None, None] * np.einsum("...Jk,...Li->...iJkL", Fi, Fi)
    return A


class NeoHookean:
    """Vector-valued material acting on displacement gradients.

    ``dim`` is the spatial dimension of the mesh; in 2D the gradient is
    embedded in 3x3 with F33 = 1 and the in-plane blocks are returned.
    """

    def __init__(self, params: LameParams, dim: int = 3):
        self.params = params
        self.dim = dim

    @property
    def rho0(self) -> float:
        return self.params.rho0

    def n_components(self, dim: int) -> int:
        return dim

    def _F(self, grad_u):
        d = grad_u.shape[-1]
        F = np.zeros(grad_u.shape[:-2] + (3, 3))
        F[..., :d, :d] = grad_u
        F += np.eye(3)
        return F

    def energy(self, grad_u):
        return stored_energy(self._F(grad_u), self.params)

    def stress(self, grad_u):
        d = grad_u.shape[-1]
        return piola_stress(self._F(grad_u), self.params)[..., :d, :d]

    def tangent(self, grad_u):
        d = grad_u.shape[-1]
        return tangent(self._F(grad_u), self.params)[..., :d, :d, :d, :d]

    def jacobian(self, grad_u):
        return np.linalg.det(self._F(grad_u))


class LaplaceMaterial:
    """Scalar wave operator: energy |grad u|^2 / 2, flux grad u."""

    def __init__(self, rho0: float = 1.0):
        self.rho0 = rho0

    def n_components(self, dim: int) -> int:
        return 1

    def energy(self, grad_u):
        return 0.5 * np.einsum("...ij,...ij->...", grad_u, grad_u)

    def stress(self, grad_u):
        return np.array(grad_u, dtype=float, copy=True)

    def tangent(self, grad_u):
        d = grad_u.shape[-1]
        A = np.einsum("ik,JL->iJkL", np.eye(1), np.eye(d))
        return np.broadcast_to(A, grad_u.shape[:-2] + A.shape)

    def jacobian(self, grad_u):
        return np.ones(grad_u.shape[:-2])
