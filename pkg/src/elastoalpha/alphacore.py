"""Generalized-alpha parameter families and spectral analysis.

Modal state convention: ``X = (U, dt*V, dt^2*A)`` for the single mode
``A + w^2 U = 0`` and ``theta = dt^2 w^2``.  The amplification matrix is
assembled from the explicit row formulas of the update (no inversion), so
that exactly representable parameters give exactly representable invariants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError, ParameterizationError


@dataclass(frozen=True)
class AlphaParams:
    rho_b: float
    rho_s: float
    alpha_f: float
    alpha_m: float
    beta: float
    gamma: float
    N: int = 1
    family: str = "general"

    def violations(self) -> list[str]:
        out = []
        if self.alpha_m < 0.5 - 1e-14:
            out.append(f"alpha_m = {self.alpha_m:g} < 1/2")
        if abs(self.gamma - (0.5 - self.alpha_f + self.alpha_m)) > 1e-12:
            out.append("gamma != 1/2 - alpha_f + alpha_m (second-order condition)")
        if not self.beta > 0:
            out.append(f"beta = {self.beta:g} is not positive")
        return out

    def with_gamma(self, gamma: float) -> "AlphaParams":
        return replace(self, gamma=gamma)

    @property
    def corrector_factor(self) -> float:
        """``alpha_f * beta / alpha_m``; the update matrix is ``-factor * dt^2 M^-1 K``."""
        return self.alpha_f * self.beta / self.alpha_m


def _check_rho(name: str, rho: float) -> None:
    if not 0.0 <= rho <= 1.0:
        raise InvalidArgumentError(f"{name} must lie in [0, 1], got {rho}")


def _second_order_gamma(alpha_f: float, alpha_m: float) -> float:
    return 0.5 - alpha_f + alpha_m


def params_n1(rho_b: float) -> AlphaParams:
    """Single-term family (alpha_f = 0) with optimal dissipation control."""
    _check_rho("rho_b", rho_b)
    am = (2.0 - rho_b) / (rho_b + 1.0)
    beta = (3.0 * rho_b - 5.0) / ((rho_b - 2.0) * (rho_b + 1.0) ** 2)
    return AlphaParams(rho_b, rho_b, 0.0, am, beta, _second_order_gamma(0.0, am), 1, "n1")


def params_n2(rho_b: float) -> AlphaParams:
    """Two-term family, alpha_f = 4 / (1 + 4 rho_b)."""
    _check_rho("rho_b", rho_b)
    af = 4.0 / (1.0 + 4.0 * rho_b)
    am = (2.0 - rho_b) / (rho_b + 1.0)
    num = af**2 * (rho_b - 2.0) * (rho_b + 1.0) ** 2 + af * (-3.0 * rho_b**2 + 3.0 * rho_b + 6.0) + 3.0 * rho_b - 5.0
    den = (rho_b + 1.0) ** 2 * (af * rho_b + af + rho_b - 2.0)
    if abs(den) < 1e-14:
        raise ParameterizationError(f"beta undefined for rho_b={rho_b}")
    return AlphaParams(rho_b, rho_b, af, am, num / den, _second_order_gamma(af, am), 2, "n2")


def params_general(rho_b: float, rho_s: float, alpha_f: float, N: int = 1) -> AlphaParams:
    _check_rho("rho_b", rho_b)
    _check_rho("rho_s", rho_s)
    rb, rs, af = rho_b, rho_s, alpha_f
    am = (-rb * rs + rs + 2.0) / (rb * rs + rb + rs + 1.0)
    num = (af * (rb + 1.0) * (af * (rb + 1.0) * (rs + 1.0) * ((rb - 1.0) * rs - 2.0)
                              - rb**2 * rs + 2.0 * rb * (rs**2 + rs - 1.0) - 2.0 * rs**2 - 7.0 * rs - 6.0)
           + 2.0 * rb**2 * rs + rb * (rs**2 + 2.0 * rs - 3.0) - rs**2 - 4.0 * rs - 5.0)
    den = (rb + 1.0) ** 2 * (rs + 1.0) * (af * (rb + 1.0) * (rs + 1.0) + (rb - 1.0) * rs - 2.0)
    if abs(den) < 1e-12:
        raise ParameterizationError(f"beta denominator vanishes (rho_b={rb}, rho_s={rs}, alpha_f={af})")
    return AlphaParams(rb, rs, af, am, num / den, _second_order_gamma(af, am), N, "general")


def make_params(family: str, rho_b: float, rho_s: float | None = None, alpha_f: float = 0.0) -> AlphaParams:
    if family == "n1":
        return params_n1(rho_b)
    if family == "n2":
        return params_n2(rho_b)
    if family == "general":
        return params_general(rho_b, rho_b if rho_s is None else rho_s, alpha_f)
    raise InvalidArgumentError(f"unknown parameter family {family!r} (n1, n2, general)")


# --------------------------------------------------------------------------
# Closed-form limits
# --------------------------------------------------------------------------


def _stab_rhs(p: AlphaParams) -> float:
    af, am, b = p.alpha_f, p.alpha_m, p.beta
    den = 4.0 * b * (af - am) + 2.0 * am * (2.0 * af - (af - am - 1.0) + am) + am
    return -b * (4.0 - 8.0 * am) / den


def stability_limit(p: AlphaParams) -> float:
    """Closed-form stability limit Omega_s in theta.

    ``N == 1``: rational expression in rho_b.  ``N == 2``: the root of the
    quadratic relation; returns ``nan`` where the square root is complex.
    """
    if p.N == 1:
        rb = p.rho_b
        return -12.0 * (rb - 2.0) * (rb + 1.0) / (rb**2 - 5.0 * rb + 10.0)
    af, am, b = p.alpha_f, p.alpha_m, p.beta
    den = 4.0 * b * (af - am) + 2.0 * am * (2.0 * af - (af - am - 1.0) + am) + am
    disc = 1.0 - 4.0 * b * (4.0 - 8.0 * am) / den
    if disc < 0:
        return math.nan
    return (am - am * math.sqrt(disc)) / (2.0 * b)


def bifurcation_limit(p: AlphaParams) -> float:
    """Closed-form Omega_b of the single-term family (sign as written: negative)."""
    rb = p.rho_b
    return (-3.0 * rb**2 + 2.0 * rb + 5.0) / (rb - 2.0)


# --------------------------------------------------------------------------
# Amplification matrix
# --------------------------------------------------------------------------


def partial_sum(p: AlphaParams, theta: float, N: int, k: int = 0) -> float:
    """``P^N_k = sum_{j=k}^{N-1} (-alpha_f beta theta / alpha_m)^j``."""
    q = -p.corrector_factor * theta
    return float(sum(q**j for j in range(k, N)))


@dataclass(frozen=True)
class AmplificationMatrix:
    G: np.ndarray
    theta: float = math.nan
    alpha_m: float = math.nan

    @property
    def invariants(self) -> tuple[float, float, float]:
        G = self.G
        g1 = G[0, 0] + G[1, 1] + G[2, 2]
        g2 = (G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
              + G[0, 0] * G[2, 2] - G[0, 2] * G[2, 0]
              + G[1, 1] * G[2, 2] - G[1, 2] * G[2, 1])
        g3 = (G[0, 0] * (G[1, 1] * G[2, 2] - G[1, 2] * G[2, 1])
              - G[0, 1] * (G[1, 0] * G[2, 2] - G[1, 2] * G[2, 0])
              + G[0, 2] * (G[1, 0] * G[2, 1] - G[1, 1] * G[2, 0]))
        return g1, g2, g3

    def eigenvalues(self) -> np.ndarray:
        if self.theta == 0.0:
            # double root at 1 is ill-conditioned for the cubic formula
            return np.array([1.0, 1.0, (self.alpha_m - 1.0) / self.alpha_m], dtype=complex)
        g1, g2, g3 = self.invariants
        return cubic_roots(-g1, g2, -g3)

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues())))


def amplification_matrix(p: AlphaParams, theta: float, form: str = "displacement", N: int | None = None) -> AmplificationMatrix:
    """Per-step map of the modal state for ``N`` corrector terms."""
    if theta < 0:
        raise InvalidArgumentError("theta must be non-negative")
    N = p.N if N is None else N
    if N < 1:
        raise InvalidArgumentError("at least one corrector term is required")
    af, am, b, g = p.alpha_f, p.alpha_m, p.beta, p.gamma
    if b == 0 or am == 0:
        raise ParameterizationError("beta and alpha_m must be non-zero")
    S = partial_sum(p, theta, N)  # N-term geometric sum
    if form == "displacement":
        # U_{n+1} row; the acceleration row follows from the Newmark relation
        r_u = np.array([1.0 - b * theta / am * S, S, (0.5 - b / am) * S])
        r_a = (r_u - np.array([1.0, 1.0, 0.5 - b])) / b
    elif form == "acceleration":
        r_a = np.array([-theta * S / am, -af * theta * S / am, 1.0 - S / am - af * theta * S / (2.0 * am)])
        r_u = np.array([1.0, 1.0, 0.5 - b]) + b * r_a
    else:
        raise InvalidArgumentError(f"form must be 'displacement' or 'acceleration', got {form!r}")
    r_v = np.array([0.0, 1.0, 1.0 - g]) + g * r_a
    return AmplificationMatrix(np.vstack([r_u, r_v, r_a]), float(theta), am)


def cubic_roots(a: float, b: float, c: float) -> np.ndarray:
    """Roots of ``x^3 + a x^2 + b x + c`` by Cardano / trigonometric formulas."""
    shift = a / 3.0
    p = b - a * a / 3.0
    q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if p == 0.0 and q == 0.0:
        return np.full(3, -shift, dtype=complex)
    if disc > 0 or p > 0:  # p > 0 guards against (p/3)^3 underflowing
        s = math.sqrt(max(disc, 0.0))
        # larger-magnitude cube root first, then v from u v = -p/3 (avoids cancellation)
        u = float(np.cbrt(-q / 2.0 - math.copysign(s, q)))
        v = -p / (3.0 * u) if u != 0.0 else 0.0
        y1 = u + v
        re = -y1 / 2.0
        im = math.sqrt(3.0) / 2.0 * (u - v)
        return np.array([y1 - shift, complex(re - shift, im), complex(re - shift, -im)])
    # three real roots
    r = 2.0 * math.sqrt(-p / 3.0)
    denom = p * r
    arg = 0.0 if denom == 0.0 else max(-1.0, min(1.0, 3.0 * q / denom))
    phi = math.acos(arg) / 3.0
    ys = [r * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)]
    return np.array(ys, dtype=complex) - shift


# --------------------------------------------------------------------------
# Sweeps and order checks
# --------------------------------------------------------------------------


@dataclass
class SpectralCurve:
    theta: np.ndarray
    radius: np.ndarray
    omega_s: float | None  # first crossing of 1 + tol
    omega_b: float | None  # first theta > 0 with three real roots

    def to_rows(self):
        return list(zip(self.theta.tolist(), self.radius.tolist()))


def _all_real(ev: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.all(np.abs(ev.imag) <= tol))


def spectral_sweep(p: AlphaParams, theta_max: float, samples: int = 1001, form: str = "displacement",
                   N: int | None = None, tol: float = 1e-9, refine: bool = True) -> SpectralCurve:
    if samples < 2:
        raise InvalidArgumentError("a sweep needs at least two samples")
    thetas = np.linspace(0.0, theta_max, samples)
    mats = [amplification_matrix(p, t, form, N) for t in thetas]
    eig = [m.eigenvalues() for m in mats]
    rad = np.array([np.max(np.abs(e)) for e in eig])

    def unstable(t):
        return amplification_matrix(p, t, form, N).spectral_radius() > 1.0 + tol

    omega_s = None
    above = np.flatnonzero(rad > 1.0 + tol)
    if above.size:
        i = above[0]
        omega_s = float(thetas[i])
        if refine and i > 0:
            lo, hi = float(thetas[i - 1]), float(thetas[i])
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                lo, hi = (lo, mid) if unstable(mid) else (mid, hi)
            omega_s = hi

    omega_b = None
    for t, e in zip(thetas[1:], eig[1:]):
        if _all_real(e):
            omega_b = float(t)
            break
    return SpectralCurve(thetas, rad, omega_s, omega_b)


def oscillator_error(p: AlphaParams, steps_per_period: int, N: int | None = None, form: str = "displacement") -> float:
    """Error after one period of ``u'' + w^2 u = 0`` (u(0)=1, v(0)=0) via G."""
    w = 2.0 * math.pi
    dt = 1.0 / steps_per_period
    theta = (w * dt) ** 2
    G = amplification_matrix(p, theta, form, N).G
    X = np.array([1.0, 0.0, -theta])
    for _ in range(steps_per_period):
        X = G @ X
    return abs(X[0] - 1.0) + abs(X[1] / dt) / w


def fit_order(dts, errors) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(dts)), np.log(np.asarray(errors)), 1)
    return float(slope)


def modal_order_check(p: AlphaParams, N: int | None = None, form: str = "displacement",
                      steps=(100, 200, 400, 800)) -> float:
    """Observed global order on the scalar oscillator over one period."""
    errs = [oscillator_error(p, n, N, form) for n in steps]
    return fit_order([1.0 / n for n in steps], errs)
