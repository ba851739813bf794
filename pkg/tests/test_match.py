import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ovals.match import (GaugedRun, GaugeParams, MatchError, RescaledRun, RunDomainError, apply_gauge_rescaled,
                         apply_gauge_unrescaled, boundary_residuals, compose, cylinder_run, gauged_values,
                         gauged_values_unrescaled, invert_leading_order, leading_order_law, neutral_mode_series,
                         neutral_mode_track, parabolic_surrogate_run, projection_residual, zero_projections)

THETA = 0.3


def skewed_run(n=2):
    # parabolic surrogate plus an odd, decaying perturbation so every gauge direction is visible
    return parabolic_surrogate_run(n, lambda y, tau: 0.3 * y * np.exp(-y * y / 8) / abs(tau))


small = st.floats(-0.3, 0.3)


# -- gauge parameters -------------------------------------------------------------

def test_bGA_formula():
    g = GaugeParams(alpha=0.7, beta=3.0, gamma=0.2, tau0=-2.0)
    b, G, A = g.bGA
    q = 1 + 3.0 * math.exp(-2.0)
    assert b == pytest.approx(math.sqrt(q) - 1, abs=1e-15)
    assert G == pytest.approx((0.2 - math.log(q)) / -2.0, abs=1e-15)
    assert A == pytest.approx(0.7 * math.exp(-1.0), abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(b=st.floats(-0.5, 0.5), G=st.floats(-0.5, 0.5), A=st.floats(-1, 1), tau0=st.floats(-30, -1))
def test_bGA_round_trip(b, G, A, tau0):
    g = GaugeParams.from_bGA(b, G, A, tau0)
    assert g.bGA == pytest.approx((b, G, A), abs=1e-12)


def test_from_bGA_rejects_b_below_minus_one():
    with pytest.raises(ValueError):
        GaugeParams.from_bGA(-1.0, 0.0, 0.0, -5.0)


def test_admissibility_flags():
    tau0 = -10.0
    eps = 0.5
    edge = GaugeParams(eps * math.exp(5) / 10, eps * math.exp(10) / 10, eps * 10, tau0)
    assert edge.admissible(eps)["all"]
    far = GaugeParams(2 * edge.alpha, 0.0, 0.0, tau0)
    flags = far.admissible(eps)
    assert not flags["alpha"] and flags["beta"] and flags["gamma"] and not flags["all"]


def test_search_box():
    assert GaugeParams.from_bGA(0.5 / 20, 0.4, 0.9, -20.0).in_search_box()
    assert not GaugeParams.from_bGA(2.0 / 20, 0.0, 0.0, -20.0).in_search_box()


# -- applying gauges ----------------------------------------------------------------

def test_identity_gauge_rescaled():
    run = skewed_run()
    y = np.linspace(-4, 4, 41)
    p = apply_gauge_rescaled(run, GaugeParams(tau0=-10.0), y, -10.0)
    np.testing.assert_array_equal(p.u, run.profile(y, -10.0))


def test_identity_gauge_unrescaled():
    run = skewed_run()
    x = np.linspace(-5, 5, 41)
    p = apply_gauge_unrescaled(run, GaugeParams(), x, -20.0)
    np.testing.assert_array_equal(p.u, run.profile_unrescaled(x, -20.0))


@pytest.mark.parametrize("gamma", [-0.7, 0.3, 2.0])
def test_cylinder_invariant_under_dilation(gamma):
    run = cylinder_run(3)
    x = np.linspace(-2, 2, 21)
    for s in (-50.0, -10.0):
        np.testing.assert_allclose(gauged_values_unrescaled(run, GaugeParams(gamma=gamma), x, s),
                                   run.profile_unrescaled(x, s), rtol=1e-14)


def test_cylinder_time_translation():
    n, beta = 2, 0.5
    run = cylinder_run(n)
    x = np.linspace(-2, 2, 21)
    for s in (-10.0, -2.0):
        np.testing.assert_allclose(gauged_values_unrescaled(run, GaugeParams(beta=beta), x, s),
                                   math.sqrt(-2 * (n - 1) * (s - beta)), rtol=1e-14)


def test_cylinder_rescaled_time_shift():
    run = cylinder_run(2)
    y = np.linspace(-3, 3, 11)
    for tau in (-1.0, -4.0):
        got = gauged_values(run, GaugeParams(beta=2.0), y, tau)
        np.testing.assert_allclose(got, math.sqrt(1 + 2 * math.exp(tau)) * math.sqrt(2), rtol=1e-15)


@settings(max_examples=60, deadline=None)
@given(a1=small, b1=small, c1=small, a2=small, b2=small, c2=small)
def test_composition_law(a1, b1, c1, a2, b2, c2):
    run = skewed_run()
    g1, g2 = GaugeParams(a1, b1, c1, -8.0), GaugeParams(a2, b2, c2, -8.0)
    y = np.linspace(-3, 3, 13)
    twice = gauged_values(GaugedRun(run, g1), g2, y, -8.0)
    once = gauged_values(run, compose(g1, g2), y, -8.0)
    np.testing.assert_allclose(twice, once, rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(a=small, b=small, c=small)
def test_inverse_gauge(a, b, c):
    g = GaugeParams(a, b, c, -8.0)
    e = compose(g, g.inverse())
    assert (e.alpha, e.beta, e.gamma) == pytest.approx((0, 0, 0), abs=1e-15)


def test_commuting_diagram_on_stored_run(run_4to1_coarse):
    rr = RescaledRun(run_4to1_coarse)
    g = GaugeParams(alpha=2e-4, beta=3e-6, gamma=0.05, tau0=-12.0)
    y = np.linspace(-4, 4, 81)
    for tau in (-13.0, -11.5):
        s = -math.exp(-tau)
        L = math.sqrt(-s)
        via_unrescaled = gauged_values_unrescaled(rr, g, y * L, s) / L
        direct = gauged_values(rr, g, y, tau)
        # the two interpolations (linear in s versus in tau) differ most at the steep tips
        body = direct > 0.3
        assert body.sum() > 20
        assert np.max(np.abs(via_unrescaled - direct)[body]) < 1e-3


def test_stored_run_refuses_extrapolation(run_4to1_coarse):
    rr = RescaledRun(run_4to1_coarse)
    lo, hi = rr.tau_range
    with pytest.raises(RunDomainError):
        rr.profile(np.zeros(3), lo - 1.0)
    with pytest.raises(RunDomainError):
        rr.profile(np.zeros(3), hi + 1.0)


# -- projections -------------------------------------------------------------------

def test_identical_runs_have_zero_residual():
    run = skewed_run()
    assert np.all(projection_residual(run, run, GaugeParams(tau0=-20.0), THETA, -20.0) == 0.0)


def test_swap_negates_residuals():
    r1, r2 = skewed_run(), parabolic_surrogate_run(2)
    g = GaugeParams(tau0=-20.0)
    np.testing.assert_allclose(projection_residual(r1, r2, g, THETA, -20.0),
                               -projection_residual(r2, r1, g, THETA, -20.0), rtol=1e-14)


@pytest.mark.parametrize("bGA", [(0.3, 0.2, 0.5), (0.5, -0.3, -0.8), (-0.6, 0.1, 0.2)])
def test_leading_order_law(bGA):
    tau = -200.0
    b, G, A = bGA[0] / abs(tau), bGA[1], bGA[2]
    run = parabolic_surrogate_run(2)
    g = GaugeParams.from_bGA(b, G, A, tau)
    got = projection_residual(run, run, g, THETA, tau, "v")
    assert np.max(np.abs(got - leading_order_law(b, G, A, tau))) <= 0.1 / abs(tau)


def test_leading_order_inversion():
    d = leading_order_law(0.002, 0.1, 0.4, -100.0)
    assert invert_leading_order(d, -100.0) == pytest.approx((0.002, 0.1, 0.4), rel=1e-12)


def test_unknown_convention():
    run = skewed_run()
    with pytest.raises(ValueError):
        projection_residual(run, run, GaugeParams(tau0=-20.0), THETA, -20.0, "w")


# -- zero_projections --------------------------------------------------------------

def test_equal_runs_converge_to_identity():
    run = skewed_run()
    res = zero_projections(run, run, -30.0, THETA)
    assert res.residual == 0.0 and res.iterations == 0
    assert res.gauge.bGA == pytest.approx((0, 0, 0), abs=1e-15)


@pytest.mark.parametrize("tau0", [-30.0, -50.0])
def test_round_trip_recovers_inverse_gauge(tau0):
    run = skewed_run()
    gs = GaugeParams.from_bGA(0.2 / abs(tau0), 0.02, 0.02, tau0)
    res = zero_projections(run, GaugedRun(run, gs), tau0, THETA)
    assert res.residual <= 1e-8
    assert res.gauge.bGA == pytest.approx(gs.inverse().bGA, abs=1e-6)
    assert res.in_box


def test_converged_point_is_fixed():
    run = skewed_run()
    tau0 = -40.0
    gs = GaugeParams.from_bGA(0.1 / 40, -0.03, 0.2, tau0)
    first = zero_projections(run, GaugedRun(run, gs), tau0, THETA)
    again = zero_projections(run, GaugedRun(run, gs), tau0, THETA, guess=first.gauge.bGA, tol=1e-10)
    assert again.residual <= 1e-10
    assert again.iterations <= 1
    assert again.gauge.bGA == pytest.approx(first.gauge.bGA, abs=1e-8)


def test_newton_failure_reports_history():
    run = skewed_run()
    with pytest.raises(MatchError) as info:
        zero_projections(run, GaugedRun(run, GaugeParams.from_bGA(0.01, 0.05, 0.3, -30.0)), -30.0, THETA,
                         max_iter=1, tol=1e-30)
    assert len(info.value.history) >= 1


def test_boundary_residuals_do_not_vanish():
    run = parabolic_surrogate_run(2)
    for radius in (0.25, 0.5):
        r = boundary_residuals(run, run, -200.0, THETA, radius)
        assert r.shape == (26,) and np.min(r) > 1e-3


def test_time_shift_recovered_as_beta(run_4to1_coarse):
    base = RescaledRun(run_4to1_coarse)
    for delta in (2e-5, -2e-5):
        shifted = RescaledRun(run_4to1_coarse, T=run_4to1_coarse.T + delta, center=base.center)
        res = zero_projections(base, shifted, -13.0, THETA)
        expected = run_4to1_coarse.scale**2 * delta
        assert res.gauge.beta == pytest.approx(expected, rel=1e-3)


# -- neutral mode ----------------------------------------------------------------

def test_neutral_mode_equal_runs():
    run = skewed_run()
    tr = neutral_mode_track(run, run, GaugeParams(tau0=-40.0), THETA, (-45.0, -40.0), step=0.25)
    assert np.all(tr.a == 0.0)
    assert np.all(tr.F[2:-2] == 0.0)


def test_homogeneous_mode_series():
    taus = np.linspace(-60.0, -40.0, 401)
    tr = neutral_mode_series(taus, 1.0 / taus**2)
    F = tr.F[2:-2]
    assert np.max(np.abs(F)) < 1e-9
    assert tr.integral_residual < 1e-6


def test_homogeneous_mode_injected_into_pair():
    psi2 = lambda y, tau: (y * y - 2) / tau**2
    r1 = parabolic_surrogate_run(2, psi2)
    r2 = parabolic_surrogate_run(2)
    tr = neutral_mode_track(r1, r2, GaugeParams(tau0=-40.0), THETA, (-60.0, -40.0), step=0.5)
    np.testing.assert_allclose(tr.a, 1.0 / tr.tau**2, rtol=1e-6)
    assert np.max(np.abs(tr.F[2:-2])) < 1e-3 * np.max(np.abs(tr.a))


def test_neutral_series_needs_ten_uniform_samples():
    with pytest.raises(ValueError):
        neutral_mode_series(np.linspace(-10, -9, 5), np.zeros(5))
    with pytest.raises(ValueError):
        neutral_mode_series(np.r_[np.linspace(-10, -9, 10), -8.5], np.zeros(11))
