"""Command-line entry point: ``dswave <subcommand> ...``.

Exit status is 0 on success, 1 when a check fails and 2 on configuration or
usage errors; errors are also printed to stderr as a one-line JSON record.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import scale_factor as sfm
from .config import load_config, spec_from_config, validate_config
from .functional import check_CE_inequality, compute_functionals
from .geometry import check_support_containment
from .oracle import ode_lifespan_sweep
from .solver import ConfigError, RunResult, Verdict, estimate_lifespan


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(payload: dict, out: Path | None = None, name: str | None = None) -> None:
    text = json.dumps(payload, indent=2)
    print(text)
    if out is not None and name is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n")


def _error(kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return 2


def _snapshot_times(cfg: dict) -> np.ndarray | None:
    out = cfg.get("output", {})
    k = out.get("snapshots", 0)
    until = out.get("snapshot_until")
    if not k or until is None:
        return None
    return np.linspace(0.0, float(until), int(k) + 1)


def _overridden(args) -> dict:
    cfg = load_config(args.config)
    prob = cfg["problem"]
    for key in ("p", "mu", "epsilon"):
        val = getattr(args, key, None)
        if val is not None:
            prob[key] = val
    if getattr(args, "N", None) is not None:
        prob.setdefault("grid", {})["N"] = args.N
    if getattr(args, "t_max", None) is not None:
        prob.setdefault("stepping", {})["t_max"] = args.t_max
    out = cfg.setdefault("output", {})
    if getattr(args, "snapshots", None) is not None:
        out["snapshots"] = args.snapshots
    if getattr(args, "snapshot_until", None) is not None:
        out["snapshot_until"] = args.snapshot_until
    out["directory"] = str(args.out)
    validate_config(cfg)
    return cfg


# ----------------------------------------------------------------------------- subcommands


def cmd_simulate(args) -> int:
    cfg = _overridden(args)
    spec = spec_from_config(cfg)
    snaps = _snapshot_times(cfg)
    if args.no_refine:
        outcome = ex._run_point((spec, False, snaps))
    else:
        outcome = estimate_lifespan(spec, snaps, record_every=cfg["output"].get("record_every", 1))
    ex.write_run(args.out, cfg, outcome, spec)
    _emit(outcome.to_dict())
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    exp = cfg.setdefault("experiment", {})
    for key, val in (("eps0", args.eps0), ("ratio", args.ratio), ("count", args.count),
                     ("tail", args.tail), ("workers", args.workers),
                     ("tolerance", args.tolerance)):
        if val is not None:
            exp[key] = val
    if args.no_refine:
        exp["refine"] = False
    cfg.setdefault("output", {})["directory"] = str(args.out)
    validate_config(cfg)
    if "eps0" not in exp:
        raise ConfigError("the sweep needs eps0 (flag --eps0 or experiment.eps0)")
    spec = spec_from_config(cfg)
    eps = ex.geometric_epsilons(exp["eps0"], exp.get("ratio", 0.5), exp.get("count", 8))
    results = ex.run_sweep(spec, eps, workers=exp.get("workers"), refine=exp.get("refine", True))
    points = [(e, o.lifespan) for e, o in results]
    tail, tol = exp.get("tail", 4), exp.get("tolerance", 0.15)
    oracle_payload, fit, target = None, None, None
    if args.match_oracle:
        matched, frozen = ex.matched_oracle_sweep(spec, eps)
        ofit = ex.fit_loglog(matched, tail)
        target = ofit.slope
        oracle_payload = {"points": matched, "fit": ofit.to_dict(),
                          "frozen": {"time": frozen.time, "u": frozen.u, "v": frozen.v}}
    try:
        fit = ex.fit_loglog(points, tail, spec.p, spec.mu, tol, target=target)
    except ValueError as exc:
        fit = None
        reason = str(exc)
    stability = ex.tail_stability(points) if fit else {}
    ex.write_sweep(args.out, cfg, results, fit, oracle_payload, stability)
    summary = {"points": points, "fit": fit.to_dict() if fit else None,
               "tail_stability": stability,
               "monotonicity_violations": ex.monotonicity_violations(points)}
    if fit is None:
        summary["non_fitting"] = reason
    if oracle_payload:
        summary["oracle"] = oracle_payload
    _emit(summary)
    return 1 if fit is not None and fit.verdict == "fail" else 0


def cmd_oracle(args) -> int:
    eps = ex.geometric_epsilons(args.eps_start, args.eps_ratio, args.count)
    points = ode_lifespan_sweep(args.p, args.mu, eps, direction=(args.v0, args.v1),
                                threshold=args.threshold, workers=args.workers or 1,
                                method=args.method)
    fit = ex.fit_loglog(points, args.tail, args.p, args.mu, args.tolerance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if (out / "sweep.csv").exists():
        raise FileExistsError(f"{out / 'sweep.csv'} already exists")
    with open(out / "sweep.csv", "w") as fh:
        fh.write("epsilon,lifespan\n")
        for e, t in points:
            fh.write(f"{e!r},{'' if t is None else repr(t)}\n")
    (out / "fit.json").write_text(json.dumps({"fit": fit.to_dict()}, indent=2) + "\n")
    (out / "config.json").write_text(json.dumps(vars(args), indent=2, default=str) + "\n")
    _emit(fit.to_dict())
    return 0 if fit.verdict == "pass" else 1


def cmd_fit(args) -> int:
    points = ex.read_sweep_points(args.sweep)
    cfg = json.loads((Path(args.sweep) / "config.json").read_text())
    p, mu = cfg["problem"]["p"], cfg["problem"]["mu"]
    fit = ex.fit_loglog(points, args.tail, p, mu, args.tolerance, target=args.target)
    _emit(fit.to_dict(), Path(args.out) if args.out else None, f"fit_tail{args.tail}.json")
    return 0 if fit.verdict in (None, "pass") else 1


def _load_run(run_dir: Path) -> tuple[dict, dict, dict]:
    summary = json.loads((run_dir / "summary.json").read_text())
    cfg = json.loads((run_dir / "config.json").read_text())
    history = ex.read_history_csv(run_dir / "history.csv")
    return summary, cfg, history


def cmd_verify_support(args) -> int:
    run_dir = Path(args.run)
    summary, _, history = _load_run(run_dir)
    sf = sfm.from_dict(summary["scale_factor"])
    h = summary["h"]
    report = check_support_containment(history["t"], history["support_radius"], summary["R"],
                                       sf, args.slack_cells * h, h=h)
    payload = report.to_dict()
    payload.update({"h": h, "R": summary["R"], "support_tol": summary["support_tol"],
                    "checked": int(history["t"].size)})
    _emit(payload, Path(args.out) if args.out else None, "support_report.json")
    return 0 if report.passed else 1


def cmd_verify_functional(args) -> int:
    run_dir = Path(args.run)
    summary, cfg, _ = _load_run(run_dir)
    path = run_dir / "snapshots.npz"
    if not path.exists():
        raise ConfigError(f"{path} is missing; simulate with output.snapshots and snapshot_until")
    spec = spec_from_config(cfg)
    from dataclasses import replace
    from .solver import Grid
    spec = replace(spec, grid=Grid(summary["L"], summary["N"]))
    with np.load(path) as data:
        run = RunResult(Verdict(summary["verdict"]), summary["lifespan"], None, 0.0, {},
                        spec.grid, summary["support_tol"], 0, None, data["t"], data["u"],
                        data["v"])
    taus = [float(x) for x in args.tau_list.split(",") if x.strip()]
    rows, ok = [], True
    for tau in taus:
        rep = compute_functionals(run, tau, spec)
        ce = check_CE_inequality(rep, tau, spec.p, spec.mu)
        row = rep.to_dict()
        row.update(ce.to_dict())
        ok &= ce.closure_ok and (ce.C_hat is None or math.isfinite(ce.C_hat))
        rows.append(row)
    chats = [r["C_hat"] for r in rows if r["C_hat"] is not None]
    payload = {"lifespan": summary["lifespan"], "reports": rows,
               "C_hat_spread": (max(chats) - min(chats)) / min(chats) if chats else None,
               "pass": bool(ok)}
    _emit(payload, Path(args.out) if args.out else None, "functional_report.json")
    return 0 if ok else 1


def cmd_check_scale_factor(args) -> int:
    if args.config:
        d = load_config(args.config)["scale_factor"]
    elif args.scale_factor:
        try:
            d = json.loads(args.scale_factor)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--scale-factor is not valid JSON: {exc}") from None
    else:
        raise UsageError("give --config or --scale-factor")
    try:
        sf = sfm.from_dict(d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = sfm.check_admissible(sf)
    payload = {"scale_factor": sf.to_dict(), **report.to_dict(), "admissible": report.admissible}
    _emit(payload)
    return 0 if report.admissible else 1


# ----------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dswave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="one run at N and 2N-1 nodes")
    s.add_argument("--config", required=True, help="config path or preset name")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--p", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--N", type=int)
    s.add_argument("--t-max", dest="t_max", type=float)
    s.add_argument("--snapshots", type=int, help="number of snapshot intervals")
    s.add_argument("--snapshot-until", dest="snapshot_until", type=float)
    s.add_argument("--no-refine", action="store_true", help="skip the 2N-1 run")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="epsilon sweep of the PDE solver with a log-log fit")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--eps0", type=float)
    s.add_argument("--ratio", type=float)
    s.add_argument("--count", type=int)
    s.add_argument("--tail", type=int)
    s.add_argument("--tolerance", type=float)
    s.add_argument("--workers", type=int)
    s.add_argument("--no-refine", action="store_true")
    s.add_argument("--match-oracle", action="store_true",
                   help="judge the slope against the matched ODE sweep")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("oracle", help="epsilon sweep of the flat ODE")
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--eps-start", dest="eps_start", type=float, default=0.1)
    s.add_argument("--eps-ratio", dest="eps_ratio", type=float, default=0.5)
    s.add_argument("--count", type=int, default=8)
    s.add_argument("--v0", type=float, default=1.0, help="data direction, v(0) per unit eps")
    s.add_argument("--v1", type=float, default=1.0, help="data direction, v'(0) per unit eps")
    s.add_argument("--threshold", type=float, default=1e8)
    s.add_argument("--tail", type=int, default=4)
    s.add_argument("--tolerance", type=float, default=0.1)
    s.add_argument("--method", default="LSODA")
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("fit", help="re-fit a stored sweep")
    s.add_argument("--sweep", required=True, type=Path)
    s.add_argument("--tail", type=int, default=4)
    s.add_argument("--tolerance", type=float, default=0.15)
    s.add_argument("--target", type=float)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("verify-support", help="support containment of a stored run")
    s.add_argument("--run", required=True, type=Path)
    s.add_argument("--slack-cells", dest="slack_cells", type=float, default=2.0)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_verify_support)

    s = sub.add_parser("verify-functional", help="integral identity and constants of a stored run")
    s.add_argument("--run", required=True, type=Path)
    s.add_argument("--tau-list", dest="tau_list", required=True, help="comma-separated taus")
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_verify_functional)

    s = sub.add_parser("check-scale-factor", help="admissibility of a coefficient")
    s.add_argument("--config")
    s.add_argument("--scale-factor", dest="scale_factor", help='JSON, e.g. {"kind":"desitter","H":1}')
    s.set_defaults(func=cmd_check_scale_factor)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _error("usage", str(exc))
    try:
        return args.func(args)
    except UsageError as exc:
        return _error("usage", str(exc))
    except ConfigError as exc:
        return _error("config", str(exc))
    except FileExistsError as exc:
        return _error("output", str(exc))
    except (FileNotFoundError, KeyError, ValueError) as exc:
        return _error("input", str(exc))


if __name__ == "__main__":
    sys.exit(main())
