"""ε-sweeps of the PDE solver and the ODE oracle, log-log fits, persistence."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import spec_from_config
from .oracle import OdeSpec, ode_blowup_time
from .solver import (HISTORY_FIELDS, Mesh, Nonlinearity, ProblemSpec, SimulationOutcome, Verdict,
                     estimate_lifespan, simulate)

WORKERS_ENV = "DSWAVE_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def theorem_exponent(p: float, mu: float) -> float:
    """Lifespan exponent of the upper bound: -(p-1) with damping, -(p-1)/(p+1) without."""
    return -(p - 1.0) if mu > 0 else -(p - 1.0) / (p + 1.0)


def comparison_exponent(p: float) -> float:
    """-(p-1)/2, the value quoted for comparison alongside the power-law family."""
    return -(p - 1.0) / 2.0


def geometric_epsilons(eps0: float, ratio: float = 0.5, count: int = 8) -> list[float]:
    return [eps0 * ratio ** k for k in range(count)]


@dataclass
class SweepFit:
    points: list
    slope: float
    intercept: float
    r_squared: float
    theorem_exponent: float | None
    tolerance: float
    tail: int
    verdict: str | None = None
    comparison_exponent: float | None = None

    def to_dict(self) -> dict:
        return {"points": [[e, t] for e, t in self.points], "slope": self.slope,
                "intercept": self.intercept, "r_squared": self.r_squared,
                "theorem_exponent": self.theorem_exponent, "tolerance": self.tolerance,
                "tail": self.tail, "verdict": self.verdict,
                "comparison_exponent": self.comparison_exponent}


def fit_loglog(points, tail: int = 4, p: float | None = None, mu: float | None = None,
               tolerance: float = 0.1, target: float | None = None) -> SweepFit:
    """Least squares of log T on log ε over the ``tail`` smallest ε.

    Points without a finite lifespan are dropped first.  The slope is judged
    against ``target`` if given, else against the theorem exponent for
    (p, mu) when both are known.
    """
    usable = sorted(((float(e), float(t)) for e, t in points
                     if t is not None and math.isfinite(t) and t > 0 and e > 0),
                    key=lambda et: -et[0])
    if tail < 4:
        raise ValueError("the fit needs a tail of at least 4 points")
    if len(usable) < tail:
        raise ValueError(f"only {len(usable)} usable points for a tail of {tail}")
    chosen = usable[-tail:]
    x = np.log([e for e, _ in chosen])
    y = np.log([t for _, t in chosen])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    expo = target
    if expo is None and p is not None and mu is not None:
        expo = theorem_exponent(p, mu)
    verdict = None
    if expo is not None:
        verdict = "pass" if abs(slope - expo) <= tolerance else "fail"
    return SweepFit(usable, float(slope), float(intercept), r2, expo, tolerance, tail, verdict,
                    comparison_exponent(p) if p is not None else None)


def tail_stability(points, tails=None) -> dict[int, float]:
    """Fitted slope for every tail size from 4 up to the number of usable points."""
    usable = [pt for pt in points if pt[1] is not None and math.isfinite(pt[1])]
    tails = tails or range(4, len(usable) + 1)
    return {k: fit_loglog(usable, k).slope for k in tails if k <= len(usable)}


def _check_epsilons(epsilons) -> list[float]:
    eps = sorted((float(e) for e in epsilons), reverse=True)
    if len(eps) < 6:
        raise ValueError("a sweep needs at least 6 epsilon values")
    if any(e <= 0 for e in eps):
        raise ValueError("epsilon values must be positive")
    return eps


def _run_point(args) -> SimulationOutcome:
    spec, refine, snapshot_times = args
    if refine:
        return estimate_lifespan(spec, snapshot_times)
    run = simulate(spec, snapshot_times)
    ref = [(run.grid.N, run.grid.h, run.verdict, run.lifespan, run.crossing_time, run.tail,
            run.steps)]
    return SimulationOutcome(run.verdict, run.lifespan, ref, None, [run])


def run_sweep(template: ProblemSpec, epsilons, workers: int | None = None,
              refine: bool = True, snapshot_times=None) -> list[tuple[float, SimulationOutcome]]:
    """Independent runs of ``template`` at every ε, largest first.

    With ``refine`` each point is run at N and 2N-1 nodes.  Runs that end
    without blow-up are kept with their verdict; the fit drops them later.
    """
    eps = _check_epsilons(epsilons)
    if len(set(eps)) == len(eps):
        ratios = [b / a for a, b in zip(eps, eps[1:])]
        if max(ratios) > 0.5 + 1e-12:
            raise ValueError("successive epsilon values must shrink by a factor of at least 2")
    template.validate()
    jobs = [(replace(template, epsilon=e), refine, snapshot_times) for e in eps]
    workers = workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_point, jobs))
    else:
        outcomes = [_run_point(j) for j in jobs]
    return list(zip(eps, outcomes))


def monotonicity_violations(points) -> list[tuple[float, float]]:
    """Consecutive (ε, T) pairs, by decreasing ε, where T went down as ε went down."""
    pts = sorted(((e, t) for e, t in points if t is not None), key=lambda et: -et[0])
    return [(a[0], b[0]) for a, b in zip(pts, pts[1:]) if b[1] < a[1]]


@dataclass
class FrozenProfile:
    """State a linear run settles to at the data centre once the light cone stops."""

    time: float
    u: float
    v: float


def frozen_center_state(template: ProblemSpec, fraction: float = 1e-6) -> FrozenProfile:
    """Linear (N = 0) evolution with ε = 1 up to A(t) = (1 - fraction) A(∞).

    Needs a finite horizon.  Past that time each point of the solution
    follows the spatially flat ODE to good accuracy.
    """
    limit = template.sf.horizon_limit()
    if not math.isfinite(limit):
        raise ValueError("a frozen profile needs a finite light-cone horizon")
    t_freeze = template.sf.horizon_inverse((1.0 - fraction) * limit)
    lin = replace(template, epsilon=1.0, nonlinearity=Nonlinearity.NONE,
                  stepping=replace(template.stepping, t_max=t_freeze))
    run = simulate(lin)
    i = int(np.argmin(Mesh(lin.n, lin.grid, lin.data.center).r))
    return FrozenProfile(run.final.t, float(run.final.u[i]), float(run.final.v[i]))


def matched_oracle_sweep(template: ProblemSpec, epsilons, threshold: float | None = None,
                         method: str = "LSODA") -> tuple[list[tuple[float, float | None]], FrozenProfile]:
    """ODE lifespans T_ode(ε u_f, ε v_f) matched to a PDE sweep.

    (u_f, v_f) is the linear state at the data centre once the light cone
    has stopped (see ``frozen_center_state``).  For small ε the solution is
    ε times that state by then, and the decoupled centre obeys
    v'' + mu v' = |v|^p; a fixed time shift would not change the exponent,
    so none is added.
    """
    frozen = frozen_center_state(template)
    thr = threshold or template.stepping.threshold
    out = []
    for e in _check_epsilons(epsilons):
        spec = OdeSpec(p=template.p, mu=template.mu, v0=e * frozen.u, v1=e * frozen.v,
                       threshold=thr, t_max=1e9, method=method)
        res = ode_blowup_time(spec)
        out.append((e, res.time if res.blew_up else None))
    return out, frozen


# ----------------------------------------------------------------------------- persistence


def write_history_csv(path: Path, history: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_FIELDS)
        for row in zip(*(history[k] for k in HISTORY_FIELDS)):
            w.writerow([repr(float(x)) for x in row])


def read_history_csv(path: Path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in HISTORY_FIELDS}


def write_run(directory, config: dict, outcome: SimulationOutcome, spec: ProblemSpec) -> Path:
    """config.json, summary.json, history.csv and (if any) snapshots.npz of one run."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fine = outcome.runs[-1]
    (d / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    summary = outcome.to_dict()
    summary.update({
        "scheme": fine.scheme.value, "h": fine.h, "N": fine.grid.N, "L": fine.grid.L,
        "support_tol": fine.support_tol, "R": spec.data.R, "center": spec.data.center,
        "n": spec.n, "scale_factor": spec.sf.to_dict(), "message": fine.message,
        "steps": fine.steps,
    })
    (d / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_history_csv(d / "history.csv", fine.history)
    if fine.snapshot_times.size:
        np.savez_compressed(d / "snapshots.npz", t=fine.snapshot_times, u=fine.snapshots_u,
                            v=fine.snapshots_v)
    return d


SWEEP_COLUMNS = ("epsilon", "verdict", "lifespan", "lifespan_coarse", "converged", "steps")


def write_sweep(directory, config: dict, results, fit: SweepFit | None,
                oracle=None, tail_stability: dict | None = None) -> Path:
    """sweep.csv, fit.json and one runs/eps_XX subdirectory per point.

    The directory is append-only: an existing sweep.csv is never replaced.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if (d / "sweep.csv").exists():
        raise FileExistsError(f"{d / 'sweep.csv'} already exists")
    (d / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    with open(d / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for eps, out in results:
            coarse = out.refinement[0][3] if len(out.refinement) > 1 else None
            w.writerow([repr(eps), out.verdict.value, _fmt(out.lifespan), _fmt(coarse),
                        "" if out.converged is None else str(out.converged).lower(),
                        out.refinement[-1][6]])
    payload = {"fit": fit.to_dict() if fit else None}
    if tail_stability is not None:
        payload["tail_stability"] = tail_stability
    if oracle is not None:
        payload["oracle"] = oracle
    (d / "fit.json").write_text(json.dumps(payload, indent=2) + "\n")
    base = spec_from_config(config)
    for k, (eps, out) in enumerate(results):
        cfg = json.loads(json.dumps(config))
        cfg["problem"]["epsilon"] = eps
        write_run(d / "runs" / f"eps_{k:02d}", cfg, out, replace(base, epsilon=eps))
    return d


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def read_sweep_points(directory) -> list[tuple[float, float | None]]:
    with open(Path(directory) / "sweep.csv", newline="") as fh:
        return [(float(r["epsilon"]), float(r["lifespan"]) if r["lifespan"] else None)
                for r in csv.DictReader(fh)]
