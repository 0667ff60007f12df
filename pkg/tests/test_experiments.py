import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dswave import experiments as ex
from dswave.config import load_config, spec_from_config
from dswave.scale_factor import DeSitter
from dswave.solver import Grid, ProblemSpec, Stepping, Verdict


def small_template(**kw):
    base = ProblemSpec(n=3, p=2, mu=3, epsilon=1, sf=DeSitter(1.0), grid=Grid(2.5, 301),
                       stepping=Stepping(t_max=1e4))
    return replace(base, **kw)


def test_exponents():
    assert ex.theorem_exponent(2.0, 1.0) == -1.0
    assert ex.theorem_exponent(3.0, 0.0) == -0.5
    assert ex.comparison_exponent(3.0) == -1.0


def test_geometric_epsilons():
    assert ex.geometric_epsilons(8.0, 0.5, 4) == [8.0, 4.0, 2.0, 1.0]


@settings(max_examples=50, deadline=None)
@given(slope=st.floats(-3.0, -0.1), logc=st.floats(-3, 3))
def test_fit_recovers_exact_power_law(slope, logc):
    pts = [(e, math.exp(logc) * e ** slope) for e in ex.geometric_epsilons(1.0, 0.5, 8)]
    fit = ex.fit_loglog(pts, tail=4)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_uses_smallest_epsilons_and_verdict():
    pts = [(8.0, 1.0), (4.0, 1.5)] + [(e, e ** -1.0) for e in (1.0, 0.5, 0.25, 0.125)]
    fit = ex.fit_loglog(pts, 4, p=2.0, mu=1.0, tolerance=0.1)
    assert fit.slope == pytest.approx(-1.0) and fit.verdict == "pass"
    assert ex.fit_loglog(pts, 4, target=-0.5, tolerance=0.1).verdict == "fail"


def test_fit_drops_missing_points():
    pts = [(1.0, None), (0.5, 2.0), (0.25, 4.0), (0.125, 8.0), (0.0625, 16.0)]
    assert len(ex.fit_loglog(pts, 4).points) == 4
    with pytest.raises(ValueError):
        ex.fit_loglog(pts[:4], 4)
    with pytest.raises(ValueError):
        ex.fit_loglog(pts, 3)


def test_monotonicity_violations():
    assert ex.monotonicity_violations([(1, 2.0), (0.5, 3.0), (0.25, 2.5)]) == [(0.5, 0.25)]


def test_sweep_argument_checks():
    with pytest.raises(ValueError):
        ex.run_sweep(small_template(), [1, 0.5, 0.25, 0.125, 0.0625])
    with pytest.raises(ValueError):
        ex.run_sweep(small_template(), [1, 0.6, 0.3, 0.15, 0.07, 0.03])


def test_small_sweep_is_monotone():
    res = ex.run_sweep(small_template(), ex.geometric_epsilons(8.0, 0.5, 6), refine=False)
    assert all(o.verdict is Verdict.BLEW_UP for _, o in res)
    pts = [(e, o.lifespan) for e, o in res]
    assert ex.monotonicity_violations(pts) == []
    assert ex.fit_loglog(pts, 4).slope == pytest.approx(-1.0, abs=0.1)


def test_frozen_center_state():
    frozen = ex.frozen_center_state(small_template(grid=Grid(2.5, 1001)))
    # regression value for n=3, H=1, mu=3, unit bump data
    assert frozen.u == pytest.approx(0.0762, abs=5e-4)
    assert abs(frozen.v) < 1e-4
    with pytest.raises(ValueError):
        from dswave.scale_factor import Constant
        ex.frozen_center_state(small_template(sf=Constant(1.0), validation=True))


def test_matched_oracle_slope():
    pts, frozen = ex.matched_oracle_sweep(small_template(), ex.geometric_epsilons(8.0, 0.5, 8))
    assert all(t is not None for _, t in pts)
    assert ex.fit_loglog(pts, 4).slope == pytest.approx(-1.0, abs=0.05)


def test_history_roundtrip(tmp_path):
    hist = {k: np.arange(3, dtype=float) * (i + 1) for i, k in enumerate(ex.HISTORY_FIELDS)}
    ex.write_history_csv(tmp_path / "h.csv", hist)
    back = ex.read_history_csv(tmp_path / "h.csv")
    for k in ex.HISTORY_FIELDS:
        assert np.array_equal(back[k], hist[k])


def test_write_sweep_is_append_only(tmp_path):
    cfg = load_config("desitter_p2")
    cfg["problem"]["grid"]["N"] = 201
    spec = spec_from_config(cfg)
    eps = ex.geometric_epsilons(8.0, 0.5, 6)
    res = ex.run_sweep(spec, eps, refine=False)
    fit = ex.fit_loglog([(e, o.lifespan) for e, o in res], 4, spec.p, spec.mu)
    d = ex.write_sweep(tmp_path / "sw", cfg, res, fit)
    assert (d / "runs" / "eps_05" / "summary.json").exists()
    assert [e for e, _ in ex.read_sweep_points(d)] == eps
    with pytest.raises(FileExistsError):
        ex.write_sweep(d, cfg, res, fit)


def test_default_workers(monkeypatch):
    monkeypatch.setenv(ex.WORKERS_ENV, "3")
    assert ex.default_workers() == 3
    monkeypatch.setenv(ex.WORKERS_ENV, "x")
    assert ex.default_workers() == 1


def test_tail_stability():
    pts = [(e, 2.0 * e ** -0.5) for e in ex.geometric_epsilons(1.0, 0.5, 7)]
    slopes = ex.tail_stability(pts)
    assert sorted(slopes) == [4, 5, 6, 7]
    assert all(s == pytest.approx(-0.5) for s in slopes.values())


def test_duplicated_epsilon_is_deterministic():
    res = ex.run_sweep(small_template(), [2.0] * 6, refine=False)
    assert len({o.lifespan for _, o in res}) == 1


def test_linear_sweep_does_not_fit():
    tmpl = small_template(nonlinearity="none", stepping=Stepping(t_max=20.0))
    res = ex.run_sweep(tmpl, ex.geometric_epsilons(1.0, 0.5, 6), refine=False)
    assert all(o.verdict is Verdict.REACHED_TMAX for _, o in res)
    with pytest.raises(ValueError):
        ex.fit_loglog([(e, o.lifespan) for e, o in res], 4)
