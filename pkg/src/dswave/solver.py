"""Solvers for  u_tt - a(t) Δu + mu u_t = N(u).

``N(u)`` is ``|u|^p``, ``|∇u|^p`` or zero.  Two discretizations share the
same meshes, data and blow-up bookkeeping:

* ``mol``: second-order centered differences in space (1D line or radial
  half-line) and classical RK4 in time.  Works for every n, but like every
  semi-discrete centered scheme it sends an exponentially small precursor a
  few dozen cells ahead of the true wave front.
* ``characteristic``: for n = 1 and n = 3, where w = r^((n-1)/2) u solves
  the 1D equation w_tt = a(t) w_rr, the wave part is advanced on the
  light-cone clock: every step moves A(t) by exactly one cell and shifts the
  Riemann invariants by one node, which is exact and exactly causal.
  Damping and the nonlinearity are integrated pointwise in Strang half-steps.
  Once less than one cell of light cone remains, the coupling is dropped
  (its remaining effect is O(h^2)) and only the pointwise dynamics continue.

Blow-up is declared when the sup-norm crosses a threshold ``M`` (or the step
size collapses while the sup-norm is still growing), never on overflow.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .oracle import undamped_tail
from .scale_factor import ScaleFactor, check_admissible


class ConfigError(ValueError):
    """A problem description violates its structural requirements."""


class Nonlinearity(str, enum.Enum):
    POWER_U = "power_u"
    POWER_GRAD_U = "power_grad_u"
    NONE = "none"


class Scheme(str, enum.Enum):
    AUTO = "auto"
    CHARACTERISTIC = "characteristic"
    MOL = "mol"


class Verdict(str, enum.Enum):
    BLEW_UP = "blew_up"
    REACHED_TMAX = "reached_tmax"
    QUIESCENT = "quiescent"


def _ball_integral(n: int, R: float, k: int) -> float:
    # ∫_{|x|<=R} (1 - |x|^2/R^2)^k dx
    return math.pi ** (n / 2) * R ** n * math.gamma(k + 1) / math.gamma(k + 1 + n / 2)


@dataclass(frozen=True)
class InitialData:
    """Bump profiles supported in |x - center| <= R.

    u0 = u0_amplitude (1 - r^2/R^2)^3 is C^2 across the edge and
    u1 = u1_amplitude (1 - r^2/R^2)^2 is C^1.  Signs of the amplitudes set
    the polarity.  ``center`` is only meaningful in 1D Cartesian mode.
    """

    R: float = 1.0
    u0_amplitude: float = 1.0
    u1_amplitude: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if not self.R > 0:
            raise ConfigError(f"support radius R must be positive, got {self.R}")

    def profiles(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.clip(1.0 - (np.asarray(r) / self.R) ** 2, 0.0, None)
        return self.u0_amplitude * s ** 3, self.u1_amplitude * s ** 2

    def u0_slope(self, r: np.ndarray) -> np.ndarray:
        """Radial derivative of the u0 profile."""
        r = np.asarray(r, dtype=float)
        s = np.clip(1.0 - (r / self.R) ** 2, 0.0, None)
        return self.u0_amplitude * 3.0 * s ** 2 * (-2.0 * r / self.R ** 2)

    def integrals(self, n: int) -> tuple[float, float]:
        """Exact ∫u0 dx and ∫u1 dx over R^n."""
        return (self.u0_amplitude * _ball_integral(n, self.R, 3),
                self.u1_amplitude * _ball_integral(n, self.R, 2))

    @property
    def peak(self) -> float:
        return abs(self.u0_amplitude)


@dataclass(frozen=True)
class Grid:
    L: float = 3.0
    N: int = 1001

    @property
    def h(self) -> float:
        return self.L / (self.N - 1)

    def refined(self) -> "Grid":
        return Grid(self.L, 2 * self.N - 1)


@dataclass(frozen=True)
class Stepping:
    cfl: float = 0.4
    dt_min: float = 1e-12
    dt_max: float = 0.05
    kappa: float = 0.1
    threshold: float = 1e8
    t_max: float = 1000.0


@dataclass(frozen=True)
class ProblemSpec:
    n: int
    p: float
    mu: float
    epsilon: float
    sf: ScaleFactor
    nonlinearity: Nonlinearity = Nonlinearity.POWER_U
    data: InitialData = field(default_factory=InitialData)
    grid: Grid = field(default_factory=Grid)
    stepping: Stepping = field(default_factory=Stepping)
    validation: bool = False
    scheme: Scheme = Scheme.AUTO

    def __post_init__(self):
        object.__setattr__(self, "nonlinearity", Nonlinearity(self.nonlinearity))
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def resolved_scheme(self) -> Scheme:
        """The characteristic scheme where it applies (n = 1 or 3), else MOL."""
        if self.scheme is Scheme.AUTO:
            return Scheme.CHARACTERISTIC if self.n in (1, 3) else Scheme.MOL
        return self.scheme

    @property
    def mode(self) -> str:
        return "cartesian1d" if self.n == 1 else "radial"

    @property
    def J(self) -> float:
        """eps ∫(mu u0 + u1) dx, from the closed-form bump integrals."""
        i0, i1 = self.data.integrals(self.n)
        return self.epsilon * (self.mu * i0 + i1)

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError(f"dimension n must be >= 1, got {self.n}")
        if not self.p > 1:
            raise ConfigError(f"exponent p must exceed 1, got {self.p}")
        if self.mu < 0:
            raise ConfigError(f"damping mu must be nonnegative, got {self.mu}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.grid.N < 5:
            raise ConfigError("grid needs at least 5 points")
        if self.mode == "radial" and self.data.center != 0.0:
            raise ConfigError("radial mode only supports data centered at the origin")
        if self.scheme is Scheme.CHARACTERISTIC and self.n not in (1, 3):
            raise ConfigError(f"the characteristic scheme needs n = 1 or 3, got n={self.n}")
        if self.n > 3:
            warnings.warn(f"radial mode with n={self.n} is experimental", stacklevel=2)
        report = check_admissible(self.sf)
        if not report.admissible and not self.validation:
            raise ConfigError(
                f"scale factor {self.sf} is not admissible ({report.to_dict()}); "
                "set validation=true for validation-only runs")
        limit = report.horizon_limit
        reach = limit if math.isfinite(limit) else self.sf.horizon(self.stepping.t_max)
        extent = abs(self.data.center) + self.data.R + reach
        if extent + 2 * self.grid.h >= self.grid.L:
            raise ConfigError(
                f"domain radius L={self.grid.L} too small: support can reach {extent:.6g}")

    def theorem_hypotheses(self) -> bool:
        """Admissible coefficient and positive data mass, as the blow-up theorem needs."""
        return check_admissible(self.sf).admissible and self.J > 0


@dataclass
class FieldState:
    t: float
    u: np.ndarray
    v: np.ndarray
    s: np.ndarray | None = None  # d/dr of r^((n-1)/2) u, carried by the characteristic scheme

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.u.copy(), self.v.copy(),
                          None if self.s is None else self.s.copy())


class Mesh:
    """Node coordinates, distances from the data center and quadrature weights."""

    def __init__(self, n: int, grid: Grid, center: float = 0.0, mode: str | None = None):
        self.n = n
        self.h = grid.h
        self.mode = mode or ("cartesian1d" if n == 1 else "radial")
        if self.mode not in {"cartesian1d", "radial"}:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "cartesian1d":
            self.x = np.linspace(-grid.L, grid.L, 2 * grid.N - 1)
            self.r = np.abs(self.x - center)
            w = np.full(self.x.size, self.h)
            w[0] = w[-1] = 0.5 * self.h
        else:
            self.x = np.linspace(0.0, grid.L, grid.N)
            self.r = self.x
            sphere = 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)
            w = sphere * self.x ** (n - 1) * self.h
            w[0] *= 0.5
            w[-1] *= 0.5
        self.weights = w
        self.size = self.x.size
        if self.mode == "radial":
            with np.errstate(divide="ignore", invalid="ignore"):
                self._drift = np.where(self.x > 0, (n - 1) / (2.0 * self.h * self.x), 0.0)[1:-1]

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        """Centered Laplacian; zero on the pinned outer boundary."""
        inv_h2 = 1.0 / (self.h * self.h)
        lap = np.zeros_like(u)
        lap[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) * inv_h2
        if self.mode == "radial":
            lap[1:-1] += self._drift * (u[2:] - u[:-2])
            # r -> 0 limit of u_rr + (n-1) u_r / r is n u_rr, with u_{-1} = u_1
            lap[0] = self.n * 2.0 * (u[1] - u[0]) * inv_h2
        return lap

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Centered derivative, switched off where one-sided slopes disagree in sign.

        At the edge of the support one of the one-sided slopes vanishes, so
        the source stays inside the support; at smooth extrema the true
        gradient is O(h) anyway.
        """
        d = np.diff(u) / self.h
        back, fwd = d[:-1], d[1:]
        g = np.zeros_like(u)
        g[1:-1] = np.where(back * fwd > 0.0, 0.5 * (back + fwd), 0.0)
        return g

    def support_radius(self, u: np.ndarray, v: np.ndarray, tol: float) -> float:
        mask = (np.abs(u) > tol) | (np.abs(v) > tol)
        if not mask.any():
            return 0.0
        return float(self.r[mask].max())


def discrete_laplacian(u: np.ndarray, h: float, n: int, mode: str) -> np.ndarray:
    """Laplacian of nodal values ``u`` with spacing ``h`` (1D line or radial)."""
    u = np.asarray(u, dtype=float)
    if u.size < 5:
        raise ValueError("discrete Laplacian needs at least 5 nodes")
    if mode == "cartesian1d":
        if u.size % 2 == 0:
            raise ValueError("Cartesian meshes have an odd node count")
        N = (u.size + 1) // 2
    else:
        N = u.size
    return Mesh(n, Grid(h * (N - 1), N), mode=mode).laplacian(u)


class BlowUpSignal(Exception):
    """Raised from inside the right-hand side when the source overflows."""


class Stepper:
    """Right-hand side, step-size control and RK4 update for one problem."""

    def __init__(self, spec: ProblemSpec, mesh: Mesh | None = None):
        self.spec = spec
        self.mesh = mesh or Mesh(spec.n, spec.grid, spec.data.center)
        self.kind = spec.nonlinearity
        self.p = spec.p
        self.mu = spec.mu
        self.a = spec.sf.value

    def initial_state(self) -> FieldState:
        u0, u1 = self.spec.data.profiles(self.mesh.r)
        eps = self.spec.epsilon
        u, v = eps * u0, eps * u1
        self._pin(u)
        self._pin(v)
        return FieldState(0.0, u, v)

    def _pin(self, w: np.ndarray) -> None:
        w[-1] = 0.0
        if self.mesh.mode == "cartesian1d":
            w[0] = 0.0

    def source(self, u: np.ndarray) -> np.ndarray:
        if self.kind is Nonlinearity.NONE:
            return np.zeros_like(u)
        base = np.abs(u) if self.kind is Nonlinearity.POWER_U else np.abs(self.mesh.gradient(u))
        with np.errstate(over="ignore", invalid="ignore"):
            s = base ** self.p
        if not np.all(np.isfinite(s)):
            raise BlowUpSignal("nonlinear source overflowed")
        return s

    def acceleration(self, t: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        acc = self.a(t) * self.mesh.laplacian(u) - self.mu * v + self.source(u)
        self._pin(acc)
        return acc

    def rhs(self, state: FieldState) -> tuple[np.ndarray, np.ndarray]:
        return state.v.copy(), self.acceleration(state.t, state.u, state.v)

    def choose_dt(self, state: FieldState) -> float:
        st = self.spec.stepping
        a = self.a(state.t)
        dt = st.dt_max if a <= 0.0 else min(st.cfl * self.mesh.h / math.sqrt(a), st.dt_max)
        if self.kind is not Nonlinearity.NONE:
            sup = float(np.max(np.abs(state.u)))
            src = float(np.max(self.source(state.u)))
            if src > 0.0 and sup > 0.0:
                # time scale of u_tt ~ N(u): sqrt(|u| / |N(u)|) = |u|^(-(p-1)/2) for |u|^p
                dt = min(dt, st.kappa * math.sqrt(sup / src))
        return dt

    def step(self, state: FieldState, dt: float) -> FieldState:
        t, u, v = state.t, state.u, state.v
        h2 = 0.5 * dt
        a1 = self.acceleration(t, u, v)
        u2, v2 = u + h2 * v, v + h2 * a1
        a2 = self.acceleration(t + h2, u2, v2)
        u3, v3 = u + h2 * v2, v + h2 * a2
        a3 = self.acceleration(t + h2, u3, v3)
        u4, v4 = u + dt * v3, v + dt * a3
        a4 = self.acceleration(t + dt, u4, v4)
        c = dt / 6.0
        un = u + c * (v + 2.0 * v2 + 2.0 * v3 + v4)
        vn = v + c * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        return FieldState(t + dt, un, vn)


def rhs(state: FieldState, spec: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """(u_t, v_t) = (v, a(t) Δu - mu v + N(u))."""
    return Stepper(spec).rhs(state)


def step(state: FieldState, spec: ProblemSpec, dt: float | None = None) -> FieldState:
    """One RK4 step, with the controller's dt unless ``dt`` is given."""
    stepper = Stepper(spec)
    return stepper.step(state, stepper.choose_dt(state) if dt is None else dt)


def discrete_energy(state: FieldState, mesh: Mesh, a: float) -> float:
    """½∫(v² + a|D₊u|²) on a Cartesian mesh; conserved by the semi-discrete linear flow."""
    if mesh.mode != "cartesian1d":
        raise ValueError("discrete energy is defined on the Cartesian mesh")
    du = np.diff(state.u) / mesh.h
    return 0.5 * mesh.h * (float(np.dot(state.v, state.v)) + a * float(np.dot(du, du)))


class CharacteristicStepper(Stepper):
    """Light-cone transport plus pointwise damping and source (n = 1 or 3).

    The wave part acts on w = u (n = 1) or w = r u (n = 3) through
    q = w_t and s = w_r.  Over a step with A(t + dt) - A(t) = h the
    invariants P = Q - s and M = Q + s, with Q = q dt / h, move exactly one
    node right and left.  At the origin w = 0 reflects M into -P.
    """

    def __init__(self, spec: ProblemSpec, mesh: Mesh | None = None):
        super().__init__(spec, mesh)
        if spec.n not in (1, 3):
            raise ConfigError(f"the characteristic scheme needs n = 1 or 3, got n={spec.n}")
        self.radial = self.mesh.mode == "radial"

    def initial_state(self) -> FieldState:
        state = super().initial_state()
        data, eps, r = self.spec.data, self.spec.epsilon, self.mesh.r
        slope = eps * data.u0_slope(r)
        if self.radial:
            s = state.u + r * slope
        else:
            s = np.sign(self.mesh.x - data.center) * slope
        self._pin(s)
        state.s = s
        return state

    def local_acceleration(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        acc = self.source(u) - self.mu * v
        self._pin(acc)
        return acc

    def local_dt(self, state: FieldState) -> float:
        st = self.spec.stepping
        dt = st.dt_max
        if self.mu > 0.0:
            dt = min(dt, 1.0 / self.mu)
        if self.kind is not Nonlinearity.NONE:
            sup = float(np.max(np.abs(state.u)))
            src = float(np.max(self.source(state.u)))
            if src > 0.0 and sup > 0.0:
                dt = min(dt, st.kappa * math.sqrt(sup / src))
        return dt

    def local_step(self, state: FieldState, dt: float) -> FieldState:
        """RK4 for u_t = v, v_t = N(u) - mu v at every node; s is untouched."""
        u, v = state.u, state.v
        h2 = 0.5 * dt
        a1 = self.local_acceleration(u, v)
        u2, v2 = u + h2 * v, v + h2 * a1
        a2 = self.local_acceleration(u2, v2)
        u3, v3 = u + h2 * v2, v + h2 * a2
        a3 = self.local_acceleration(u3, v3)
        u4, v4 = u + dt * v3, v + dt * a3
        a4 = self.local_acceleration(u4, v4)
        c = dt / 6.0
        return FieldState(state.t + dt, u + c * (v + 2.0 * v2 + 2.0 * v3 + v4),
                          v + c * (a1 + 2.0 * a2 + 2.0 * a3 + a4), state.s)

    def transport(self, state: FieldState, dt: float) -> None:
        """Advance the wave part by one cell of light cone, spent over ``dt``."""
        h = self.mesh.h
        r = self.mesh.r
        q = r * state.v if self.radial else state.v
        Q = q * (dt / h)
        P, M = Q - state.s, Q + state.s
        P[1:] = P[:-1].copy()
        M[:-1] = M[1:].copy()
        M[-1] = 0.0
        if self.radial:
            P[0] = -M[0]
        else:
            P[0] = 0.0
        Q = 0.5 * (P + M)
        state.s = 0.5 * (M - P)
        q = Q * (h / dt)
        if self.radial:
            v_new = np.empty_like(q)
            v_new[1:] = q[1:] / r[1:]
            # the increment of v is even in r, so its value at the first node carries over
            v_new[0] = state.v[0] + (v_new[1] - state.v[1])
            state.v = v_new
        else:
            state.v = q
        self._pin(state.v)
        self._pin(state.s)


class _Recorder:
    """History, snapshots and result assembly shared by both drivers."""

    def __init__(self, spec: ProblemSpec, mesh: Mesh, state: FieldState,
                 snapshot_times, record_every: int, scheme: Scheme):
        self.spec, self.mesh, self.scheme = spec, mesh, scheme
        self.record_every = max(1, int(record_every))
        self.snaps = np.asarray(sorted(snapshot_times) if snapshot_times is not None else [],
                                dtype=float)
        self.next_snap = 0
        self.snap_t, self.snap_u, self.snap_v = [], [], []
        sup0 = float(np.max(np.abs(state.u)))
        self.ref = sup0 if sup0 > 0 else float(np.max(np.abs(state.v)))
        self.tol = 1e-12 * self.ref if self.ref > 0 else np.finfo(float).tiny
        self.quiet = 1e-3 * self.ref
        self.hist = {k: [] for k in HISTORY_FIELDS}
        self.steps = 0
        self.last_dt = 0.0
        self.sup_prev = sup0
        self.record(state, 0.0)
        self.snapshot(state)

    def record(self, s: FieldState, dt: float) -> None:
        mesh = self.mesh
        self.hist["t"].append(s.t)
        self.hist["supnorm"].append(float(np.max(np.abs(s.u))))
        self.hist["l1"].append(mesh.integrate(np.abs(s.u)))
        self.hist["mass"].append(mesh.integrate(s.u))
        self.hist["support_radius"].append(mesh.support_radius(s.u, s.v, self.tol))
        self.hist["dt"].append(dt)

    @property
    def next_snapshot(self) -> float:
        return self.snaps[self.next_snap] if self.next_snap < self.snaps.size else math.inf

    def snapshot(self, s: FieldState, late: bool = False) -> None:
        """Store ``s`` for every pending request it reaches.

        Requests are met exactly when the driver can aim its steps at them;
        with ``late`` set the first state at or after a request is stored
        under its own time, once.
        """
        taken = False
        while self.next_snap < self.snaps.size:
            target = self.snaps[self.next_snap]
            exact = abs(target - s.t) <= 1e-12 * max(1.0, s.t)
            if not (exact or (late and s.t > target)):
                break
            if not taken:
                self.snap_t.append(target if exact else s.t)
                self.snap_u.append(s.u.copy())
                self.snap_v.append(s.v.copy())
                taken = True
            self.next_snap += 1

    def accept(self, state: FieldState, dt: float, force: bool = False) -> float:
        """Book-keep one completed step; returns the new sup-norm."""
        self.steps += 1
        self.last_dt = dt
        sup = float(np.max(np.abs(state.u)))
        if force or self.steps % self.record_every == 0 or sup >= self.spec.stepping.threshold:
            self.record(state, dt)
        return sup

    def blowup(self, state: FieldState, sup: float, dt: float) -> "RunResult":
        st = self.spec.stepping
        lo, hi = math.log(max(self.sup_prev, np.finfo(float).tiny)), math.log(sup)
        frac = (math.log(st.threshold) - lo) / (hi - lo) if hi > lo else 1.0
        crossing = state.t - dt + dt * min(max(frac, 0.0), 1.0)
        tail = 0.0
        if self.spec.mu == 0.0 and self.spec.nonlinearity is Nonlinearity.POWER_U:
            i = int(np.argmax(np.abs(state.u)))
            tail = undamped_tail(sup, abs(state.v[i]), self.spec.p)
            lifespan = state.t + tail
        else:
            lifespan = crossing
        return self.finish(state, Verdict.BLEW_UP, lifespan, crossing, tail)

    def finish(self, state: FieldState, verdict: Verdict, lifespan=None, crossing=None,
               tail=0.0, message="") -> "RunResult":
        if self.hist["t"][-1] != state.t:
            self.record(state, self.last_dt)
        size = self.mesh.size
        history = {k: np.asarray(v) for k, v in self.hist.items()}
        return RunResult(verdict, lifespan, crossing, tail, history, self.spec.grid, self.tol,
                         self.steps, state, np.asarray(self.snap_t),
                         np.asarray(self.snap_u) if self.snap_u else np.empty((0, size)),
                         np.asarray(self.snap_v) if self.snap_v else np.empty((0, size)),
                         message, self.scheme)


HISTORY_FIELDS = ("t", "supnorm", "l1", "mass", "support_radius", "dt")


@dataclass
class RunResult:
    """One solver run at a single resolution."""

    verdict: Verdict
    lifespan: float | None
    crossing_time: float | None
    tail: float
    history: dict
    grid: Grid
    support_tol: float
    steps: int
    final: FieldState
    snapshot_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    snapshots_u: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    snapshots_v: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    message: str = ""
    scheme: Scheme = Scheme.MOL

    @property
    def h(self) -> float:
        return self.grid.h


def simulate(spec: ProblemSpec, snapshot_times=None, record_every: int = 1) -> RunResult:
    """Evolve ``spec`` until blow-up, quiescence or ``t_max``.

    Full fields are stored at ``snapshot_times`` (ascending, within
    [0, t_max]).  The MOL driver hits them exactly; while the characteristic
    scheme is still on the light-cone clock the first step at or after each
    request is stored under its actual time (see ``RunResult.snapshot_times``).
    """
    spec.validate()
    if spec.resolved_scheme is Scheme.CHARACTERISTIC:
        return _simulate_characteristic(spec, snapshot_times, record_every)
    return _simulate_mol(spec, snapshot_times, record_every)


def _simulate_mol(spec: ProblemSpec, snapshot_times, record_every: int) -> RunResult:
    st = spec.stepping
    stepper = Stepper(spec)
    state = stepper.initial_state()
    rec = _Recorder(spec, stepper.mesh, state, snapshot_times, record_every, Scheme.MOL)
    if rec.ref == 0.0:
        return rec.finish(state, Verdict.QUIESCENT, message="zero data")

    while True:
        try:
            dt = stepper.choose_dt(state)
        except BlowUpSignal as exc:
            return rec.finish(state, Verdict.BLEW_UP, state.t, state.t, 0.0, str(exc))
        stop = min(st.t_max, rec.next_snapshot)
        dt = min(dt, stop - state.t)
        if dt < st.dt_min:
            if stop - state.t < st.dt_min:
                dt = stop - state.t
            else:
                return rec.finish(state, Verdict.BLEW_UP, state.t, state.t, 0.0,
                                  f"step size collapsed to {dt:.3e}")
        try:
            new = stepper.step(state, dt)
        except BlowUpSignal as exc:
            return rec.finish(state, Verdict.BLEW_UP, state.t, state.t, 0.0, str(exc))
        if stop - new.t <= 1e-12 * max(1.0, stop):
            new.t = stop
        if not np.all(np.isfinite(new.u)):
            return rec.finish(state, Verdict.BLEW_UP, state.t, state.t, 0.0, "non-finite field")
        state = new
        sup = rec.accept(state, dt)
        rec.snapshot(state)
        if sup >= st.threshold:
            return rec.blowup(state, sup, dt)
        if sup < rec.quiet:
            return rec.finish(state, Verdict.QUIESCENT,
                              message="sup-norm decayed below 1e-3 of initial")
        if state.t >= st.t_max:
            return rec.finish(state, Verdict.REACHED_TMAX)
        rec.sup_prev = sup


class _Stop(Exception):
    def __init__(self, result: RunResult):
        self.result = result


def _simulate_characteristic(spec: ProblemSpec, snapshot_times, record_every: int) -> RunResult:
    st = spec.stepping
    stepper = CharacteristicStepper(spec)
    h = stepper.mesh.h
    state = stepper.initial_state()
    rec = _Recorder(spec, stepper.mesh, state, snapshot_times, record_every,
                    Scheme.CHARACTERISTIC)
    if rec.ref == 0.0:
        return rec.finish(state, Verdict.QUIESCENT, message="zero data")
    horizon = spec.sf.horizon_limit()

    def advance(state: FieldState, stop: float, coupled: bool) -> FieldState:
        """Pointwise dynamics up to ``stop``; raises _Stop on a verdict."""
        while state.t < stop:
            try:
                dt = min(stepper.local_dt(state), stop - state.t)
            except BlowUpSignal as exc:
                raise _Stop(rec.finish(state, Verdict.BLEW_UP, state.t, state.t, 0.0, str(exc)))
            if dt < st.dt_min and stop - state.t >= st.dt_min:
                raise _Stop(rec.finish(state, Verdict.BLEW_UP, state.t, state.t, 0.0,
                                       f"step size collapsed to {dt:.3e}"))
            try:
                new = stepper.local_step(state, dt)
            except BlowUpSignal as exc:
                raise _Stop(rec.finish(state, Verdict.BLEW_UP, state.t, state.t, 0.0, str(exc)))
            if stop - new.t <= 1e-12 * max(1.0, stop):
                new.t = stop
            if not np.all(np.isfinite(new.u)):
                raise _Stop(rec.finish(state, Verdict.BLEW_UP, state.t, state.t, 0.0,
                                       "non-finite field"))
            state = new
            sup = float(np.max(np.abs(state.u)))
            if sup >= st.threshold:
                rec.accept(state, dt, force=True)
                raise _Stop(rec.blowup(state, sup, dt))
            if not coupled:
                rec.accept(state, dt)
                rec.snapshot(state)
                if sup < rec.quiet:
                    raise _Stop(rec.finish(state, Verdict.QUIESCENT,
                                           message="sup-norm decayed below 1e-3 of initial"))
                rec.sup_prev = sup
            else:
                rec.sup_prev = sup
        return state

    k = 0
    try:
        while True:
            tau = (k + 1) * h
            t_next = math.inf
            if tau < horizon * (1.0 - 1e-12):
                try:
                    t_next = spec.sf.horizon_inverse(tau)
                except (ValueError, ArithmeticError):
                    t_next = math.inf
            if t_next > st.t_max:
                break
            t0 = state.t
            dt = t_next - t0
            state = advance(state, t0 + 0.5 * dt, coupled=True)
            stepper.transport(state, dt)
            state = advance(state, t_next, coupled=True)
            state.t = t_next
            k += 1
            sup = rec.accept(state, dt)
            rec.snapshot(state, late=True)
            if sup < rec.quiet:
                return rec.finish(state, Verdict.QUIESCENT,
                                  message="sup-norm decayed below 1e-3 of initial")
        # less than one cell of light cone is left: pointwise dynamics only
        rec.snapshot(state, late=True)
        while state.t < st.t_max:
            state = advance(state, min(st.t_max, rec.next_snapshot), coupled=False)
            rec.snapshot(state)
    except _Stop as stop:
        return stop.result
    return rec.finish(state, Verdict.REACHED_TMAX)


@dataclass
class SimulationOutcome:
    verdict: Verdict
    lifespan: float | None
    refinement: list
    converged: bool | None
    runs: list
    band: float = 0.05

    @property
    def history(self) -> dict:
        return self.runs[-1].history

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "lifespan": self.lifespan,
            "refinement": [{"N": n, "h": h, "verdict": v.value, "lifespan": T,
                            "crossing_time": c, "tail": tl, "steps": s}
                           for n, h, v, T, c, tl, s in self.refinement],
            "converged": self.converged,
            "convergence_band": self.band,
        }


def estimate_lifespan(spec: ProblemSpec, snapshot_times=None, band: float = 0.05,
                      record_every: int = 1) -> SimulationOutcome:
    """Run at N and 2N-1 points; the finer run's verdict and lifespan are reported."""
    runs = [simulate(spec, snapshot_times, record_every),
            simulate(replace(spec, grid=spec.grid.refined()), snapshot_times, record_every)]
    refinement = [(r.grid.N, r.grid.h, r.verdict, r.lifespan, r.crossing_time, r.tail, r.steps)
                  for r in runs]
    fine = runs[-1]
    converged = None
    if all(r.verdict is Verdict.BLEW_UP for r in runs):
        a, b = runs[0].lifespan, runs[1].lifespan
        converged = bool(abs(a - b) <= band * b)
    return SimulationOutcome(fine.verdict, fine.lifespan, refinement, converged, runs, band)
