"""Test-function bookkeeping for the blow-up argument, evaluated on solver runs.

A smooth cutoff η is raised to the power 2p' to give the time weight
ψ_τ(t) = η(t/τ)^{2p'}.  Multiplying the equation by ψ_τ and integrating by
parts twice in time (the Laplacian term integrates to zero on compactly
supported solutions) gives

    I_τ + J = K1 + K2,
    I_τ = ∫∫ ψ_τ N(u),  J = ε ∫ (mu u0 + u1),
    K1 = ∫∫ u ψ_τ'',    K2 = -mu ∫∫ u ψ_τ'.

Here these quantities are computed from stored snapshots, and the constants in
the subsequent Hölder and Young estimates are measured rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .solver import Mesh, Nonlinearity, ProblemSpec, RunResult


def _f(x: np.ndarray) -> np.ndarray:
    """exp(-1/x) for x > 0, else 0, with its first two derivatives."""
    x = np.asarray(x, dtype=float)
    pos = x > 0.0
    xs = np.where(pos, x, 1.0)
    f = np.where(pos, np.exp(-1.0 / xs), 0.0)
    f1 = f / xs ** 2
    f2 = f * (1.0 / xs ** 4 - 2.0 / xs ** 3)
    return f, f1, f2


def eta(t, derivatives: bool = False):
    """Smooth cutoff: 1 on [0, 1/2], 0 on [1, ∞), exp(-1/x) blend between.

    With ``derivatives`` set, returns (η, η', η'') from the closed-form
    quotient rule.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("eta is defined for t >= 0")
    a, b = 2.0 - 2.0 * t, 2.0 * t - 1.0
    fa, fa1, fa2 = _f(a)
    fb, fb1, fb2 = _f(b)
    mid = (t > 0.5) & (t < 1.0)
    S = np.where(mid, fa + fb, 1.0)
    val = np.where(t <= 0.5, 1.0, np.where(mid, fa / S, 0.0))
    if not derivatives:
        return val if val.ndim else float(val)
    # d/dt of the arguments: a' = -2, b' = 2
    da, db = -2.0 * fa1, 2.0 * fb1
    dda, ddb = 4.0 * fa2, 4.0 * fb2
    num = da * fb - fa * db
    dS = da + db
    d1 = np.where(mid, num / S ** 2, 0.0)
    dnum = dda * fb - fa * ddb
    d2 = np.where(mid, (dnum * S - 2.0 * num * dS) / S ** 3, 0.0)
    if val.ndim == 0:
        return float(val), float(d1), float(d2)
    return val, d1, d2


def eta_star(t):
    """η restricted to the transition interval (1/2, 1), zero elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.where((t > 0.5) & (t < 1.0), eta(t), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TestWeight:
    """ψ_τ(t) = η(t/τ)^{2p'} and its derivatives."""

    __test__ = False  # not a pytest class

    tau: float
    p: float
    pprime: float = field(init=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        object.__setattr__(self, "pprime", self.p / (self.p - 1.0))

    @property
    def k(self) -> float:
        return 2.0 * self.pprime

    def psi(self, t):
        return np.asarray(eta(np.asarray(t, dtype=float) / self.tau)) ** self.k

    def psi_star(self, t):
        return np.asarray(eta_star(np.asarray(t, dtype=float) / self.tau)) ** self.k

    def derivatives(self, t):
        """(ψ, ψ', ψ'') at ``t``."""
        e, e1, e2 = eta(np.asarray(t, dtype=float) / self.tau, derivatives=True)
        e, e1, e2 = np.asarray(e), np.asarray(e1), np.asarray(e2)
        k, tau = self.k, self.tau
        psi = e ** k
        d1 = k * e ** (k - 1.0) * e1 / tau
        d2 = k * ((k - 1.0) * e ** (k - 2.0) * e1 * e1 + e ** (k - 1.0) * e2) / (tau * tau)
        return psi, d1, d2


@dataclass(frozen=True)
class WeightBounds:
    C1: float
    C2: float
    samples: int
    finite: bool


def weight_bounds_check(tau: float, p: float, samples: int = 4000) -> WeightBounds:
    """Sampled constants in |ψ'| <= C1 τ^{-1} (ψ*)^{1/p} and |ψ''| <= C2 τ^{-2} (ψ*)^{1/p}.

    Samples are cell midpoints of (τ/2, τ), so every τ sees the same relative
    positions.  Points where ψ* has underflowed carry no information and are
    skipped.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    w = TestWeight(tau, p)
    t = tau * (0.5 + 0.5 * (np.arange(samples) + 0.5) / samples)
    _, d1, d2 = w.derivatives(t)
    star = w.psi_star(t)
    ok = star > 1e-280
    root = star[ok] ** (1.0 / p)
    with np.errstate(over="ignore", invalid="ignore"):
        r1 = np.abs(d1[ok]) * tau / root
        r2 = np.abs(d2[ok]) * tau * tau / root
    finite = bool(np.all(np.isfinite(r1)) and np.all(np.isfinite(r2)))
    return WeightBounds(float(np.max(r1)), float(np.max(r2)), int(ok.sum()), finite)


def E_of_tau(tau: float, p: float, mu: float) -> float:
    """E(τ) = τ^{-2+1/p'} + mu τ^{-1+1/p'}."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    inv = (p - 1.0) / p
    return tau ** (-2.0 + inv) + mu * tau ** (-1.0 + inv)


@dataclass
class FunctionalReport:
    tau: float
    I_tau: float
    J: float
    K1: float
    K2: float
    E_tau: float
    snapshots: int

    @property
    def residual(self) -> float:
        return abs(self.I_tau + self.J - self.K1 - self.K2)

    @property
    def relative_residual(self) -> float:
        scale = max(abs(self.I_tau) + abs(self.J), abs(self.K1) + abs(self.K2))
        return self.residual / scale if scale > 0 else 0.0

    def to_dict(self) -> dict:
        return {"tau": self.tau, "I_tau": self.I_tau, "J": self.J, "K1": self.K1, "K2": self.K2,
                "E_tau": self.E_tau, "residual": self.residual,
                "relative_residual": self.relative_residual, "snapshots": self.snapshots}


def source_density(u: np.ndarray, mesh: Mesh, spec: ProblemSpec) -> np.ndarray:
    """Pointwise N(u) on the mesh, using plain centered slopes for |∇u|^p."""
    if spec.nonlinearity is Nonlinearity.NONE:
        return np.zeros_like(u)
    if spec.nonlinearity is Nonlinearity.POWER_U:
        return np.abs(u) ** spec.p
    return np.abs(np.gradient(u, mesh.h)) ** spec.p


def compute_functionals(run: RunResult, tau: float, spec: ProblemSpec,
                        quadrature: str = "spline", fine: int = 20001) -> FunctionalReport:
    """I_τ, J, K1, K2 from the stored snapshots of ``run``.

    The spatial integrals M(t) = ∫u and S(t) = ∫N(u) are smooth in time, while
    ψ_τ'' has a sharp transition.  With ``quadrature="spline"`` (default) M
    and S are interpolated by cubic splines through the snapshots and
    integrated against the exact weights on ``fine`` nodes; ``"trapezoid"``
    applies the trapezoid rule to the products at the snapshot times.
    Snapshot times need not be uniform, and since every weight vanishes at τ,
    a closing node at τ is added when the snapshots stop just short of it.
    """
    times = np.asarray(run.snapshot_times, dtype=float)
    if times.size < 2 or times[0] != 0.0:
        raise ValueError("functionals need snapshots starting at t = 0")
    if times[-1] < tau * (1.0 - 1e-12):
        raise ValueError(f"snapshots end at {times[-1]:.6g}, before tau = {tau:.6g}")
    if run.lifespan is not None and tau >= run.lifespan:
        raise ValueError(f"tau = {tau:.6g} is not below the lifespan {run.lifespan:.6g}")
    if quadrature not in ("spline", "trapezoid"):
        raise ValueError(f"unknown quadrature {quadrature!r}")
    mesh = Mesh(spec.n, spec.grid, spec.data.center, mode=spec.mode)
    w = TestWeight(tau, spec.p)
    # one snapshot at or beyond τ is kept so splines cover the whole interval
    last = int(np.searchsorted(times, tau * (1.0 - 1e-12)))
    ts = times[: last + 1]
    us = run.snapshots_u[: last + 1]
    mass = np.array([mesh.integrate(u) for u in us])
    src = np.array([mesh.integrate(source_density(u, mesh, spec)) for u in us])
    if quadrature == "spline" and ts.size >= 4:
        grid = np.linspace(0.0, tau, fine)
        mass_f = CubicSpline(ts, mass)(grid)
        src_f = CubicSpline(ts, src)(grid)
    else:
        grid = ts if ts[-1] <= tau else np.append(ts[:-1], tau)
        mass_f, src_f = mass[: grid.size].copy(), src[: grid.size].copy()
        if ts[-1] > tau:
            # weights vanish at τ, so the closing values never matter
            mass_f[-1] = src_f[-1] = 0.0
    psi, d1, d2 = w.derivatives(grid)
    I_tau = float(np.trapezoid(psi * src_f, grid))
    K1 = float(np.trapezoid(d2 * mass_f, grid))
    K2 = float(-spec.mu * np.trapezoid(d1 * mass_f, grid))
    return FunctionalReport(tau, I_tau, spec.J, K1, K2, E_of_tau(tau, spec.p, spec.mu),
                            int(np.sum(ts < tau)))


@dataclass
class CEReport:
    tau: float
    C_hat: float | None
    closure: float
    young_bound: float | None
    degenerate: bool

    @property
    def closure_ok(self) -> bool:
        return self.young_bound is None or self.closure <= self.young_bound * (1.0 + 1e-9)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "C_hat": self.C_hat, "closure": self.closure,
                "young_bound": self.young_bound, "degenerate": self.degenerate,
                "closure_ok": self.closure_ok}


def check_CE_inequality(report: FunctionalReport, tau: float, p: float, mu: float) -> CEReport:
    """Empirical constants of  I + J <= Ĉ E I^{1/p}  and of  J <= C E^{p'}.

    Young's inequality with weight one turns the first into
    J <= (Ĉ E)^{p'} / (p' p^{p'-1}), which is reported as ``young_bound``
    for the closure constant J / E^{p'}.
    """
    E = E_of_tau(tau, p, mu)
    pp = p / (p - 1.0)
    closure = report.J / E ** pp
    if report.I_tau <= 0.0:
        return CEReport(tau, None, closure, None, True)
    C_hat = (report.I_tau + report.J) / (E * report.I_tau ** (1.0 / p))
    young = C_hat ** pp / (pp * p ** (pp - 1.0))
    return CEReport(tau, C_hat, closure, young, False)


@dataclass
class PoincareReport:
    ratio: float | None
    bound: float
    degenerate: bool

    @property
    def passed(self) -> bool:
        return self.degenerate or self.ratio >= self.bound


def poincare_check(u: np.ndarray, mesh: Mesh, p: float, radius: float) -> PoincareReport:
    """ratio = ∫|∇u|^p / (radius^{-p} ∫|u|^p) for u supported in |x - center| <= radius.

    Integrating |u|^p along rays from the edge of the ball gives a constant
    of at most radius^p / p, so the ratio is at least p > 1; the discrete
    check allows 5 cells of slack, bound = 1 - 5h / radius.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    bound = 1.0 - 5.0 * mesh.h / radius
    lower = mesh.integrate(np.abs(u) ** p)
    if lower <= 0.0:
        return PoincareReport(None, bound, True)
    upper = mesh.integrate(np.abs(np.gradient(u, mesh.h)) ** p)
    return PoincareReport(float(upper / (radius ** -p * lower)), bound, False)
