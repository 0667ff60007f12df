"""Spatially flat companion ODE  v'' + mu v' = |v|^p.

Used as an independent oracle for blow-up times and for the lifespan
exponents of the damped and undamped equations.  The ODE is integrated in a
rescaled clock ``s`` with ``dt/ds = (1 + |v|)^(-(p-1)/2)``, the natural time
scale near blow-up, so reaching a threshold ``M`` costs O(log M) steps.
Past the threshold the remaining time is added analytically from the
undamped energy identity.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad, solve_ivp


def undamped_tail(threshold: float, velocity: float, p: float) -> float:
    """Time for v'' = v^p to go from v = M (with v' = velocity) to infinity.

    Evaluates ``∫_M^∞ dv / sqrt(velocity^2 + 2 (v^(p+1) - M^(p+1)) / (p+1))``
    after substituting v = M (1 + z^2), which removes the endpoint singularity
    when the velocity is small.
    """
    M = float(threshold)
    c = 2.0 * M ** (p + 1.0) / (p + 1.0)
    k = velocity * velocity / c

    def integrand(z):
        w = 1.0 + z * z
        return 2.0 * z / math.sqrt(k + math.expm1((p + 1.0) * math.log(w)))

    # split at z = 1: the integrand ~ z^-p for large z
    head, _ = quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    rest, _ = quad(integrand, 1.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return M / math.sqrt(c) * (head + rest)


@dataclass(frozen=True)
class OdeSpec:
    p: float
    mu: float = 0.0
    v0: float = 1.0
    v1: float = 0.0
    threshold: float = 1e8
    t_max: float = 1e7
    rtol: float = 1e-12
    method: str = "DOP853"

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        if self.mu < 0:
            raise ValueError(f"damping must be nonnegative, got {self.mu}")

    @property
    def sign_condition(self) -> bool:
        """mu v0 + v1 > 0, the ODE analogue of the positive-mass data condition."""
        return self.mu * self.v0 + self.v1 > 0


@dataclass(frozen=True)
class OdeOutcome:
    blew_up: bool
    time: float | None
    crossing_time: float | None
    tail: float
    velocity_at_threshold: float | None
    threshold: float
    steps: int
    message: str = ""


def _rescaled_rhs(p: float, mu: float):
    e = 0.5 * (p - 1.0)

    def f(s, y):
        v, w, _ = y
        g = (1.0 + abs(v)) ** (-e)
        return (w * g, (abs(v) ** p - mu * w) * g, g)

    return f


def integrate(spec: OdeSpec, dense: bool = False):
    """Raw solve_ivp result of the rescaled system; state is (v, v', t)."""
    scale = max(abs(spec.v0), abs(spec.v1), 1e-300)
    f = _rescaled_rhs(spec.p, spec.mu)

    def hit_threshold(s, y):
        return abs(y[0]) - spec.threshold

    hit_threshold.terminal = True
    hit_threshold.direction = 1

    def past_tmax(s, y):
        return y[2] - spec.t_max

    past_tmax.terminal = True
    past_tmax.direction = 1

    # in the rescaled clock |v| grows at most exponentially, so s stays modest
    # except in the slow small-amplitude phase, where s ~ t
    s_end = spec.t_max + 10.0 * math.log(spec.threshold + 1.0) + 100.0
    atol = np.array([1e-14 * scale, 1e-14 * scale, 1e-14])
    return solve_ivp(f, (0.0, s_end), (spec.v0, spec.v1, 0.0), method=spec.method,
                     rtol=spec.rtol, atol=atol, events=(hit_threshold, past_tmax),
                     dense_output=dense)


def ode_blowup_time(spec: OdeSpec) -> OdeOutcome:
    """Blow-up time of v'' + mu v' = |v|^p with v(0) = v0, v'(0) = v1."""
    if spec.v0 == 0.0 and spec.v1 == 0.0:
        return OdeOutcome(False, None, None, 0.0, None, spec.threshold, 0,
                          "no blow-up detected: zero equilibrium")
    sol = integrate(spec)
    steps = int(sol.t.size)
    if sol.t_events[0].size == 0:
        return OdeOutcome(False, None, None, 0.0, None, spec.threshold, steps,
                          f"no blow-up detected before t_max={spec.t_max}")
    v, w, t_cross = sol.y_events[0][0]
    tail = undamped_tail(spec.threshold, w, spec.p) if spec.mu == 0.0 else 0.0
    return OdeOutcome(True, float(t_cross + tail), float(t_cross), float(tail), float(w),
                      spec.threshold, steps)


def threshold_agreement(spec: OdeSpec, factor: float = 100.0) -> tuple[float, float, float]:
    """Blow-up times at M and factor*M and their relative difference."""
    a = ode_blowup_time(spec)
    b = ode_blowup_time(replace(spec, threshold=spec.threshold * factor))
    if not (a.blew_up and b.blew_up):
        raise ValueError("threshold agreement needs a blowing-up orbit")
    return a.time, b.time, abs(a.time - b.time) / b.time


def energy_drift(spec: OdeSpec, stop_at: float | None = None) -> float:
    """Max relative change of (v')^2/2 - |v|^p v/(p+1) along an undamped orbit.

    The orbit is followed until |v| reaches ``stop_at`` (default 1e4), so
    the energy terms stay well inside double-precision range.
    """
    if spec.mu != 0.0:
        raise ValueError("energy is only conserved without damping")
    spec = replace(spec, threshold=stop_at or 1e4)
    sol = integrate(spec)
    v, w = sol.y[0], sol.y[1]
    kinetic = 0.5 * w * w
    potential = np.abs(v) ** spec.p * v / (spec.p + 1.0)
    energy = kinetic - potential
    scale = np.maximum(kinetic, np.abs(potential))
    return float(np.max(np.abs(energy - energy[0]) / np.maximum(scale, abs(energy[0]))))


def ode_lifespan_sweep(p: float, mu: float, epsilons, direction=(1.0, 1.0),
                       threshold: float = 1e8, t_max: float = 1e7,
                       workers: int = 1, method: str = "DOP853"
                       ) -> list[tuple[float, float | None]]:
    """Blow-up time for data eps * direction at every eps.

    Points without blow-up come back as ``(eps, None)``.  Damped sweeps at
    very small eps spend ~mu*T explicit steps in the slow phase; pass
    ``method="LSODA"`` there.
    """
    eps = [float(e) for e in epsilons]
    specs = [OdeSpec(p=p, mu=mu, v0=e * direction[0], v1=e * direction[1],
                     threshold=threshold, t_max=t_max, method=method) for e in eps]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(ode_blowup_time, specs))
    else:
        outcomes = [ode_blowup_time(s) for s in specs]
    return [(e, o.time if o.blew_up else None) for e, o in zip(eps, outcomes)]
