"""Time-dependent propagation coefficients a(t) and their light-cone radius.

The wave operator is ``u_tt - a(t) Δu``.  A coefficient is *admissible* when
it is positive, nonincreasing and has an integrable square root, in which
case the light-cone radius

    A(t) = ∫_0^t sqrt(a(s)) ds

stays bounded by a finite horizon A(∞).

Four kinds are provided:

* :class:`DeSitter`  -- a(t) = exp(-2 H t)
* :class:`PowerLaw`  -- a(t) = a0 (1 + t)^(-alpha)
* :class:`Constant`  -- a(t) = c  (validation runs only; never admissible)
* :class:`Tabulated` -- piecewise-linear interpolation of measured samples
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

HORIZON_TOL = 1e-10
INVERSE_TOL = 1e-10
MAX_SUBDIVISIONS = 1_000_000


class QuadratureError(RuntimeError):
    """Adaptive quadrature hit its subdivision cap before converging."""

    def __init__(self, message: str, error_bound: float):
        super().__init__(f"{message} (achieved error bound {error_bound:.3e})")
        self.error_bound = error_bound


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = HORIZON_TOL,
                     max_intervals: int = MAX_SUBDIVISIONS) -> float:
    """Integrate ``f`` over [a, b] by adaptive Simpson with absolute tolerance ``tol``.

    Uses an explicit stack rather than recursion; each accepted panel gets the
    Richardson correction ``(S2 - S1) / 15``.
    """
    if b == a:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    stack = [(a, b, fa, fm, fb, whole, tol)]
    total = 0.0
    err_bound = 0.0
    intervals = 1
    while stack:
        lo, hi, flo, fmid, fhi, s, eps = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - s
        if abs(delta) <= 15.0 * eps or hi - lo < 1e-14 * max(1.0, abs(hi)):
            total += left + right + delta / 15.0
            err_bound += abs(delta) / 15.0
            continue
        intervals += 1
        if intervals > max_intervals:
            pending = sum(abs(item[5]) for item in stack) + abs(s)
            raise QuadratureError("adaptive Simpson exceeded subdivision cap",
                                  err_bound + pending)
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps))
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps))
    return total


def _check_time(t: float) -> None:
    if not t >= 0.0:
        raise ValueError(f"time must be nonnegative, got {t!r}")


@dataclass(frozen=True)
class ScaleFactor:
    """Base class; subclasses supply ``value`` and optionally closed forms."""

    kind = "abstract"

    def value(self, t: float) -> float:
        raise NotImplementedError

    def derivative(self, t: float) -> float:
        raise NotImplementedError

    def values(self, t) -> np.ndarray:
        return np.array([self.value(float(s)) for s in np.atleast_1d(t)])

    def sqrt_value(self, t: float) -> float:
        return math.sqrt(self.value(t))

    def horizons(self, t) -> np.ndarray:
        """A(t) at every entry of ``t``."""
        return np.array([self.horizon(float(s)) for s in np.atleast_1d(t)])

    def horizon(self, t: float) -> float:
        """Light-cone radius A(t)."""
        return self.horizon_quadrature(t)

    def horizon_quadrature(self, t: float, tol: float = HORIZON_TOL) -> float:
        """A(t) by adaptive Simpson, regardless of closed forms."""
        _check_time(t)
        return adaptive_simpson(self.sqrt_value, 0.0, float(t), tol)

    def horizon_limit(self) -> float:
        """A(∞); ``math.inf`` when the root of a is not integrable."""
        return math.inf

    def horizon_inverse(self, s: float, tol: float = INVERSE_TOL) -> float:
        """The time t with A(t) = s, by safeguarded Newton on the increasing A."""
        s = self._check_inverse_arg(s)
        if s == 0.0:
            return 0.0
        lo, hi = 0.0, 1.0
        while self.horizon(hi) < s:
            lo, hi = hi, 2.0 * hi
            if hi > 1e12:
                raise ValueError(f"could not bracket A^-1({s})")
        t = 0.5 * (lo + hi)
        for _ in range(200):
            g = self.horizon(t) - s
            if abs(g) <= tol:
                return t
            if g > 0:
                hi = t
            else:
                lo = t
            slope = self.sqrt_value(t)
            step = t - g / slope if slope > 0 else 0.5 * (lo + hi)
            t = step if lo < step < hi else 0.5 * (lo + hi)
        return t

    def _check_inverse_arg(self, s: float) -> float:
        s = float(s)
        if s < 0.0:
            if s > -1e-14:
                return 0.0
            raise ValueError(f"horizon_inverse argument must be nonnegative, got {s}")
        if s >= self.horizon_limit():
            raise ValueError(
                f"horizon_inverse undefined for s={s} >= A(inf)={self.horizon_limit()}")
        return s

    @property
    def derivative_is_exact(self) -> bool:
        return True

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class DeSitter(ScaleFactor):
    H: float = 1.0
    kind = "desitter"

    def __post_init__(self):
        if not self.H > 0:
            raise ValueError(f"de Sitter rate H must be positive, got {self.H}")

    def value(self, t):
        _check_time(t)
        return math.exp(-2.0 * self.H * t)

    def values(self, t):
        return np.exp(-2.0 * self.H * np.asarray(t, dtype=float))

    def derivative(self, t):
        _check_time(t)
        return -2.0 * self.H * math.exp(-2.0 * self.H * t)

    def horizon(self, t):
        _check_time(t)
        return -math.expm1(-self.H * t) / self.H

    def horizon_limit(self):
        return 1.0 / self.H

    def horizon_inverse(self, s, tol=INVERSE_TOL):
        s = self._check_inverse_arg(s)
        return -math.log1p(-self.H * s) / self.H

    def to_dict(self):
        return {"kind": self.kind, "H": self.H}


@dataclass(frozen=True)
class PowerLaw(ScaleFactor):
    """a(t) = a0 (1 + t)^(-alpha).

    The FLRW metric ``-dt^2 + t^(4/(n(1+w))) dσ^2`` gives alpha = 4/(n(1+w)),
    shifted by one unit of time to stay regular at t = 0.  The root of a is
    integrable iff alpha > 2, i.e. w < 2/n - 1 (accelerated expansion).
    """

    a0: float = 1.0
    alpha: float = 4.0
    kind = "powerlaw"

    def __post_init__(self):
        if not self.a0 > 0:
            raise ValueError(f"power-law amplitude a0 must be positive, got {self.a0}")
        if not self.alpha > 0:
            raise ValueError(f"power-law exponent alpha must be positive, got {self.alpha}")

    @classmethod
    def from_equation_of_state(cls, n: int, w: float, a0: float = 1.0) -> "PowerLaw":
        return cls(a0=a0, alpha=4.0 / (n * (1.0 + w)))

    def value(self, t):
        _check_time(t)
        return self.a0 * (1.0 + t) ** (-self.alpha)

    def values(self, t):
        return self.a0 * (1.0 + np.asarray(t, dtype=float)) ** (-self.alpha)

    def derivative(self, t):
        _check_time(t)
        return -self.alpha * self.a0 * (1.0 + t) ** (-self.alpha - 1.0)

    def horizon(self, t):
        _check_time(t)
        k = 1.0 - 0.5 * self.alpha
        if k == 0.0:
            return math.sqrt(self.a0) * math.log1p(t)
        return math.sqrt(self.a0) * math.expm1(k * math.log1p(t)) / k

    def horizon_limit(self):
        if self.alpha > 2.0:
            return math.sqrt(self.a0) * 2.0 / (self.alpha - 2.0)
        return math.inf

    def horizon_inverse(self, s, tol=INVERSE_TOL):
        s = self._check_inverse_arg(s)
        k = 1.0 - 0.5 * self.alpha
        y = s / math.sqrt(self.a0)
        if k == 0.0:
            return math.expm1(y)
        return math.expm1(math.log1p(k * y) / k)

    def to_dict(self):
        return {"kind": self.kind, "a0": self.a0, "alpha": self.alpha}


@dataclass(frozen=True)
class Constant(ScaleFactor):
    c: float = 1.0
    kind = "constant"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"constant coefficient must be positive, got {self.c}")

    def value(self, t):
        _check_time(t)
        return self.c

    def values(self, t):
        return np.full(np.shape(np.atleast_1d(t)), self.c, dtype=float)

    def derivative(self, t):
        _check_time(t)
        return 0.0

    def horizon(self, t):
        _check_time(t)
        return math.sqrt(self.c) * t

    def horizon_inverse(self, s, tol=INVERSE_TOL):
        s = self._check_inverse_arg(s)
        return s / math.sqrt(self.c)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class Tabulated(ScaleFactor):
    """Piecewise-linear a(t) through samples ``(t_i, a_i)``.

    ``tail_exponent`` optionally declares a(t) ~ a_last (t / t_last)^(-beta)
    past the table; without it the horizon limit is reported infinite.
    """

    times: tuple = ()
    samples: tuple = ()
    tail_exponent: float | None = None
    _cumulative: tuple = field(default=(), repr=False, compare=False)
    kind = "tabulated"

    def __post_init__(self):
        ts = np.asarray(self.times, dtype=float)
        av = np.asarray(self.samples, dtype=float)
        if ts.ndim != 1 or ts.shape != av.shape or ts.size < 2:
            raise ValueError("tabulated coefficient needs at least two (t, a) samples")
        if ts[0] != 0.0:
            raise ValueError("tabulated coefficient must start at t = 0")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("tabulated sample times must be strictly increasing")
        if np.any(av <= 0) or not np.all(np.isfinite(av)):
            raise ValueError("tabulated coefficient must be positive and finite")
        object.__setattr__(self, "times", tuple(float(x) for x in ts))
        object.__setattr__(self, "samples", tuple(float(x) for x in av))
        cum = [0.0]
        for i in range(ts.size - 1):
            cum.append(cum[-1] + adaptive_simpson(self.sqrt_value, ts[i], ts[i + 1],
                                                  HORIZON_TOL / ts.size))
        object.__setattr__(self, "_cumulative", tuple(cum))

    @classmethod
    def from_pairs(cls, pairs, tail_exponent=None) -> "Tabulated":
        pairs = np.asarray(pairs, dtype=float)
        return cls(times=tuple(pairs[:, 0]), samples=tuple(pairs[:, 1]),
                   tail_exponent=tail_exponent)

    def _segment(self, t: float) -> int:
        _check_time(t)
        if t > self.times[-1]:
            raise ValueError(f"t={t} beyond last tabulated sample {self.times[-1]}")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(i, 0), len(self.times) - 2)

    def value(self, t):
        i = self._segment(t)
        t0, t1 = self.times[i], self.times[i + 1]
        a0, a1 = self.samples[i], self.samples[i + 1]
        return a0 + (a1 - a0) * (t - t0) / (t1 - t0)

    def derivative(self, t):
        # forward one-sided quotient; the interpolant is only piecewise C^1
        i = self._segment(t)
        return (self.samples[i + 1] - self.samples[i]) / (self.times[i + 1] - self.times[i])

    @property
    def derivative_is_exact(self) -> bool:
        return False

    def horizon(self, t):
        i = self._segment(t)
        return self._cumulative[i] + adaptive_simpson(self.sqrt_value, self.times[i], t,
                                                      HORIZON_TOL)

    def horizon_limit(self):
        beta = self.tail_exponent
        if beta is None or beta <= 2.0:
            return math.inf
        t_last, a_last = self.times[-1], self.samples[-1]
        if t_last <= 0:
            return math.inf
        return self._cumulative[-1] + math.sqrt(a_last) * t_last / (0.5 * beta - 1.0)

    def horizon_inverse(self, s, tol=INVERSE_TOL):
        s = self._check_inverse_arg(s)
        if s > self._cumulative[-1]:
            raise ValueError(f"A^-1({s}) lies beyond the tabulated range")
        return super().horizon_inverse(s, tol)

    def to_dict(self):
        out = {"kind": self.kind, "table": [[t, a] for t, a in zip(self.times, self.samples)]}
        if self.tail_exponent is not None:
            out["tail_exponent"] = self.tail_exponent
        return out


@dataclass(frozen=True)
class AdmissibilityReport:
    positive: bool
    monotone: bool
    integrable_root: bool
    horizon_limit: float

    @property
    def admissible(self) -> bool:
        return self.positive and self.monotone and self.integrable_root

    def to_dict(self) -> dict:
        return {
            "positive": self.positive,
            "monotone": self.monotone,
            "integrable_root": self.integrable_root,
            "admissible": self.admissible,
            "horizon_limit": self.horizon_limit if math.isfinite(self.horizon_limit) else "infinite",
        }


def check_admissible(sf: ScaleFactor) -> AdmissibilityReport:
    """Positivity, monotonicity and integrability of sqrt(a)."""
    if isinstance(sf, Tabulated):
        av = np.asarray(sf.samples)
        positive = bool(np.all(av > 0))
        monotone = bool(np.all(np.diff(av) <= 0))
    else:
        # analytic kinds: positivity and sign of a' follow from the validated parameters
        positive = True
        monotone = True
    limit = sf.horizon_limit()
    return AdmissibilityReport(positive, monotone, math.isfinite(limit), limit)


_FIELDS = {
    "desitter": {"H"},
    "powerlaw": {"a0", "alpha"},
    "constant": {"c"},
    "tabulated": {"table", "tail_exponent"},
}


def from_dict(d: dict) -> ScaleFactor:
    """Build a coefficient from its JSON form (``{"kind": ..., params}``)."""
    params = dict(d)
    kind = str(params.pop("kind", "")).lower().replace("_", "").replace("-", "")
    if kind not in _FIELDS:
        raise ValueError(f"unknown scale_factor kind {d.get('kind')!r}")
    extra = set(params) - _FIELDS[kind]
    if extra:
        raise ValueError(f"unknown scale_factor fields for {kind}: {sorted(extra)}")
    try:
        if kind == "desitter":
            return DeSitter(H=float(params["H"]))
        if kind == "powerlaw":
            return PowerLaw(a0=float(params.get("a0", 1.0)), alpha=float(params["alpha"]))
        if kind == "constant":
            return Constant(c=float(params.get("c", 1.0)))
        return Tabulated.from_pairs(params["table"],
                                    tail_exponent=params.get("tail_exponent"))
    except KeyError as exc:
        raise ValueError(f"scale_factor of kind {kind!r} is missing field {exc}") from None
