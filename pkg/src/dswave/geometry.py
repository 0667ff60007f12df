"""Backward light cones of  u_tt - a(t) Δu  and support checks for solver runs.

For a final time T the cone with apex region centred at x0 is

    Λ = {(t, x) : 0 <= t < T,  |x - x0| < A(T) - A(t)},

and the level-surface function

    ψ(λ, x) = A^{-1}( A_T - sqrt((A_T - λ)^2 + (2 λ A_T - λ^2) |x - x0|^2 / A_T^2) )

foliates it by space-like surfaces: ψ(0, ·) = 0 and ψ(λ, ·) rises toward the
tip as λ -> A_T.  Everything here is closed form; the only numerical step is
A^{-1}, which comes from the scale factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scale_factor import ScaleFactor


@dataclass(frozen=True)
class Cone:
    sf: ScaleFactor
    T: float
    x0: float | tuple = 0.0

    def __post_init__(self):
        if not (0.0 < self.T < math.inf):
            raise ValueError(f"cone needs a finite positive final time, got T={self.T}")
        if not self.A_T > 0.0:
            raise ValueError("A(T) must be positive")

    @property
    def A_T(self) -> float:
        return self.sf.horizon(self.T)

    def distance(self, x) -> float:
        """|x - x0| for a scalar (1D) or vector point."""
        d = np.atleast_1d(np.asarray(x, dtype=float)) - np.atleast_1d(np.asarray(self.x0, dtype=float))
        return float(np.sqrt(np.dot(d, d)))

    def contains(self, t: float, x) -> bool:
        if not 0.0 <= t < self.T:
            return False
        return self.distance(x) < self.A_T - self.sf.horizon(t)


def _root(A: float, lam: float, rho: float) -> float:
    """sqrt((A - λ)^2 + (2 λ A - λ^2) ρ^2 / A^2)."""
    return math.sqrt((A - lam) ** 2 + (2.0 * lam * A - lam * lam) * rho * rho / (A * A))


def _check_lambda(cone: Cone, lam: float) -> float:
    A = cone.A_T
    if not 0.0 <= lam < A:
        raise ValueError(f"lambda must lie in [0, A(T)) = [0, {A:.6g}), got {lam!r}")
    return A


def _check_rho(cone: Cone, x) -> float:
    rho = cone.distance(x)
    if rho > cone.A_T * (1.0 + 1e-12):
        raise ValueError(f"|x - x0| = {rho:.6g} exceeds A(T) = {cone.A_T:.6g}")
    return min(rho, cone.A_T)


def psi(cone: Cone, lam: float, x) -> float:
    """Time coordinate of the level surface λ above the point x."""
    A = _check_lambda(cone, lam)
    rho = _check_rho(cone, x)
    if lam == 0.0:
        return 0.0
    # A - root is in [0, λ]; rounding can push it a hair below zero when ρ ~ A
    return cone.sf.horizon_inverse(max(A - _root(A, lam, rho), 0.0))


def psi_lambda(cone: Cone, lam: float, x) -> float:
    """∂ψ/∂λ from the closed form, 1/sqrt(a(ψ)) · (A - λ)(1 - ρ^2/A^2) / root."""
    A = _check_lambda(cone, lam)
    rho = _check_rho(cone, x)
    D = _root(A, lam, rho)
    t = psi(cone, lam, x)
    return (A - lam) * (1.0 - rho * rho / (A * A)) / (D * cone.sf.sqrt_value(t))


def psi_gradient_norm(cone: Cone, lam: float, x) -> float:
    """|∇_x ψ|, from ∇_x A(ψ) = -(2 λ A - λ^2)(x - x0) / (A^2 root)."""
    A = _check_lambda(cone, lam)
    rho = _check_rho(cone, x)
    return _scaled_slope(A, lam, rho) / cone.sf.sqrt_value(psi(cone, lam, x))


def _scaled_slope(A: float, lam: float, rho: float) -> float:
    # sqrt(a(ψ)) |∇ψ|: the a-factors cancel exactly
    return (2.0 * lam * A - lam * lam) * rho / (A * A * _root(A, lam, rho))


def theta(cone: Cone, lambda0: float) -> float:
    """θ(λ0) = sqrt(2 λ0 A_T - λ0^2) / A_T, which lies in (0, 1)."""
    A = cone.A_T
    if not 0.0 < lambda0 < A:
        raise ValueError(f"lambda0 must lie in (0, A(T)) = (0, {A:.6g}), got {lambda0!r}")
    return math.sqrt(2.0 * lambda0 * A - lambda0 * lambda0) / A


@dataclass(frozen=True)
class SlopeCheck:
    holds: bool
    value: float
    theta: float

    def __bool__(self) -> bool:
        return self.holds


def char_slope_bound(cone: Cone, lam: float, x, lambda0: float) -> SlopeCheck:
    """Is sqrt(a(ψ)) |∇_x ψ| <= θ(λ0) at (λ, x)?  Truthy when it is.

    Over |x - x0| <= A_T the scaled slope is largest on the rim, where it
    equals θ(λ)^2, so the margin to θ(λ0) never closes.
    """
    if not 0.0 <= lam <= lambda0:
        raise ValueError(f"need 0 <= lambda <= lambda0, got {lam!r} > {lambda0!r}")
    th = theta(cone, lambda0)
    A = _check_lambda(cone, lam)
    value = _scaled_slope(A, lam, _check_rho(cone, x))
    return SlopeCheck(value <= th, value, th)


def support_radius(u: np.ndarray, v: np.ndarray, r: np.ndarray, tol: float) -> float:
    """Largest node distance ``r`` where |u| or |u_t| exceeds ``tol``; 0 if none."""
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol!r}")
    mask = (np.abs(u) > tol) | (np.abs(v) > tol)
    return float(np.max(r[mask])) if mask.any() else 0.0


@dataclass
class SupportReport:
    passed: bool
    max_excess: float
    slack: float
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"pass": self.passed, "max_excess": self.max_excess, "slack": self.slack,
                "violations": [{"t": t, "radius": r, "bound": b} for t, r, b in self.violations]}


def check_support_containment(times, radii, R: float, sf: ScaleFactor, slack: float,
                              h: float | None = None) -> SupportReport:
    """Compare measured support radii with R + A(t) + slack.

    ``max_excess`` is the largest radius - (R + A(t)), negative when the
    support stayed strictly inside the cone.  If the grid spacing ``h`` is
    given, a slack below one cell is rejected.
    """
    if h is not None and slack < h * (1.0 - 1e-12):
        raise ValueError(f"slack {slack:.3g} is below the grid spacing {h:.3g}")
    times = np.asarray(times, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if times.shape != radii.shape:
        raise ValueError("times and radii must have the same length")
    if times.size == 0:
        return SupportReport(True, -math.inf, slack)
    cone = R + sf.horizons(times)
    excess = radii - cone
    bad = np.nonzero(excess > slack)[0]
    violations = [(float(times[i]), float(radii[i]), float(cone[i] + slack)) for i in bad]
    return SupportReport(not violations, float(np.max(excess)), slack, violations)
