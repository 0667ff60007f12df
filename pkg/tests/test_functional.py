import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dswave.functional import (E_of_tau, TestWeight, check_CE_inequality, compute_functionals,
                               eta, eta_star, poincare_check, weight_bounds_check)
from dswave.scale_factor import DeSitter
from dswave.solver import Grid, InitialData, Mesh, ProblemSpec, Stepping, simulate


def test_eta_plateaus():
    assert eta(0.0) == 1.0 and eta(0.5) == 1.0
    assert eta(1.0) == 0.0 and eta(3.0) == 0.0
    assert eta(0.75) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        eta(-0.1)


@settings(max_examples=50, deadline=None)
@given(t=st.floats(0.52, 0.98))
def test_eta_derivatives_match_finite_differences(t):
    _, d1, d2 = eta(t, derivatives=True)
    h = 1e-5
    fd1 = (eta(t + h) - eta(t - h)) / (2 * h)
    fd2 = (eta(t + h) - 2 * eta(t) + eta(t - h)) / h ** 2
    assert d1 == pytest.approx(fd1, rel=1e-5, abs=1e-9)
    assert d2 == pytest.approx(fd2, rel=1e-3, abs=1e-5)


@settings(max_examples=50, deadline=None)
@given(t1=st.floats(0.5, 1.0), t2=st.floats(0.5, 1.0))
def test_eta_is_nonincreasing(t1, t2):
    lo, hi = sorted((t1, t2))
    assert eta(lo) >= eta(hi)


def test_eta_star_support():
    assert eta_star(0.3) == 0.0 and eta_star(1.2) == 0.0
    assert eta_star(0.7) == pytest.approx(eta(0.7))


def test_weight_exponent():
    w = TestWeight(10.0, 3.0)
    assert w.pprime == pytest.approx(1.5) and w.k == pytest.approx(3.0)
    assert w.psi(2.0) == 1.0 and w.psi(10.0) == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_weight_bounds_scale_invariant(p):
    ref = weight_bounds_check(1.0, p)
    for tau in (10.0, 100.0):
        wb = weight_bounds_check(tau, p)
        assert wb.finite
        assert wb.C1 == pytest.approx(ref.C1, rel=1e-9)
        assert wb.C2 == pytest.approx(ref.C2, rel=1e-9)


def test_E_of_tau():
    assert E_of_tau(1.0, 2.0, 3.0) == pytest.approx(4.0)
    assert E_of_tau(4.0, 2.0, 0.0) == pytest.approx(4.0 ** -1.5)
    with pytest.raises(ValueError):
        E_of_tau(0.0, 2.0, 1.0)


def test_poincare_ratio_on_bump():
    mesh = Mesh(3, Grid(2.0, 2001))
    u = np.clip(1 - mesh.r ** 2, 0, None) ** 3
    for p in (1.5, 2.0, 3.0):
        rep = poincare_check(u, mesh, p, 1.0)
        assert rep.passed and rep.ratio >= p
    assert poincare_check(0 * u, mesh, 2.0, 1.0).degenerate


@pytest.fixture(scope="module")
def linear_run():
    spec = ProblemSpec(n=3, p=2, mu=3, epsilon=1, sf=DeSitter(1.0), grid=Grid(2.5, 1001),
                       stepping=Stepping(t_max=1e4))
    tau = 3.4
    run = simulate(spec, snapshot_times=np.linspace(0, tau, 129))
    return spec, tau, run


def test_identity_residual_small(linear_run):
    spec, tau, run = linear_run
    rep = compute_functionals(run, tau, spec)
    assert rep.I_tau > 0 and rep.J > 0
    assert rep.relative_residual < 1e-4
    assert set(rep.to_dict()) >= {"I_tau", "J", "K1", "K2", "residual"}


def test_trapezoid_option(linear_run):
    spec, tau, run = linear_run
    rep = compute_functionals(run, tau, spec, quadrature="trapezoid")
    assert rep.relative_residual < 1e-2


def test_closure_within_young_bound(linear_run):
    spec, tau, run = linear_run
    ce = check_CE_inequality(compute_functionals(run, tau, spec), tau, spec.p, spec.mu)
    assert ce.C_hat is not None and math.isfinite(ce.C_hat)
    assert ce.closure_ok


def test_functionals_need_covering_snapshots(linear_run):
    spec, tau, run = linear_run
    with pytest.raises(ValueError):
        compute_functionals(run, 2 * tau, spec)
