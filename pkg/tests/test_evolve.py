import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ovals.evolve import (CurveError, ExtinctionFitError, FlowRun, ParametricCurve, TipProfile, aspect_clock_scale,
                          enclosed_area, estimate_extinction, evolve, fit_extinction, init_capsule, init_ellipsoid,
                          init_sphere, mcf_step, rescale_profile, rescaled_rhs, stable_dt, StepRejected, tip_flip,
                          tip_zoom)
from ovals.geometry import GridProfile, ProfileError


def polyline_distance(points, c):
    """Distance from each point to the polygonal curve c."""
    a, b = c.pts[:-1], c.pts[1:]
    d = b - a
    rel = points[:, None, :] - a[None]
    s = np.clip(np.sum(rel * d, axis=2) / np.sum(d * d, axis=1), 0.0, 1.0)
    return np.min(np.linalg.norm(rel - s[..., None] * d, axis=2), axis=1)


def hausdorff(c1, c2):
    # vertex-to-polyline distances; the extremes of the distance sit at vertices for these convex curves
    return max(np.max(polyline_distance(c1.pts, c2)), np.max(polyline_distance(c2.pts, c1)))


def radius_at(c, x0):
    return float(np.interp(x0, c.x[::-1], c.r[::-1]))


# -- initial data ---------------------------------------------------------------

def test_unit_circle_generator():
    c = init_ellipsoid(2, 1.0, 1.0, 65)
    assert np.max(c.r) == pytest.approx(1.0)
    assert c.x[32] == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(np.hypot(c.x, c.r), 1.0, atol=1e-15)


def test_spheroid_tips_and_equator():
    c = init_ellipsoid(2, 4.0, 1.0, 129)
    assert (c.x[0], c.x[-1]) == pytest.approx((4.0, -4.0))
    assert c.r[0] == 0.0 and c.r[-1] == 0.0
    assert radius_at(c, 0.0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("args", [(2, -1.0, 1.0, 64), (2, 1.0, 0.0, 64), (2, 1.0, 1.0, 32)])
def test_init_rejects_bad_input(args):
    with pytest.raises(CurveError):
        init_ellipsoid(*args)


def test_curve_rejects_open_axis_endpoint():
    c = init_sphere(2, 1.0, 64)
    pts = c.pts.copy()
    pts[0, 1] = 0.1
    with pytest.raises(CurveError):
        ParametricCurve(2, 0.0, pts)


def test_resolution_refinement_is_second_order():
    ref = init_ellipsoid(2, 4.0, 1.0, 4096)
    errs = [hausdorff(init_ellipsoid(2, 4.0, 1.0, N), ref) for N in (64, 128, 256)]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(3.0 < q < 5.0 for q in ratios), ratios


# -- stepping -------------------------------------------------------------------

def test_sphere_extinction_time(sphere_run):
    assert sphere_run.T == pytest.approx(0.25, rel=5e-3)
    assert abs(sphere_run.T - 0.25) < 2e-3


def test_sphere_radius_law(sphere_run):
    for i in range(0, len(sphere_run), 25):
        c = sphere_run.curve(i)
        assert np.max(c.r) == pytest.approx(math.sqrt(1 - 4 * c.t), rel=5e-3)


def test_cylinder_midsection_radius_law():
    run = evolve(init_capsule(2, 1.0, 6.0, 512), t_end=0.3, cadence=0.01)
    for i in range(len(run)):
        c = run.curve(i)
        assert radius_at(c, 0.0) == pytest.approx(math.sqrt(1 - 2 * c.t), rel=1e-2)


def test_cylinder_midsection_rescales_to_neck():
    run = evolve(init_capsule(2, 1.0, 6.0, 512), t_end=0.3, cadence=0.01)
    p = rescale_profile(run.curve(len(run) - 1), T=0.5, center="origin")
    assert float(np.interp(0.0, p.y, p.u)) == pytest.approx(math.sqrt(2), rel=1e-2)


def test_area_strictly_decreases():
    c = init_ellipsoid(2, 3.0, 1.0, 128)
    areas = [enclosed_area(c)]
    for _ in range(300):
        c = mcf_step(c, stable_dt(c))
        areas.append(enclosed_area(c))
    assert np.all(np.diff(areas) < 0)


def test_step_rejects_oversized_dt():
    c = init_sphere(2, 1.0, 128)
    with pytest.raises(StepRejected):
        mcf_step(c, 100 * stable_dt(c))


def test_nested_runs_stay_nested_and_extinction_orders():
    inner0 = init_ellipsoid(2, 3.0, 1.0, 128)
    outer0 = init_ellipsoid(2, 3.3, 1.1, 128)
    for t_end in (0.1, 0.2, 0.3, 0.4):
        ci = evolve(inner0, t_end=t_end).curve(-1)
        co = evolve(outer0, t_end=t_end).curve(-1)
        assert ci.x[0] < co.x[0] and ci.x[-1] > co.x[-1]
        r_outer = np.interp(ci.x[::-1], co.x[::-1], co.r[::-1])
        assert np.all(ci.r[::-1][1:-1] < r_outer[1:-1])
    Ti = fit_extinction(evolve(inner0)).T
    To = fit_extinction(evolve(outer0)).T
    assert 0 < Ti < To


# -- extinction ------------------------------------------------------------------

def test_extinction_from_exact_sphere_data():
    pairs = []
    for t in np.linspace(0.0, 0.24, 30):
        c = init_sphere(2, math.sqrt(1 - 4 * t), 64)
        pairs.append((t, ParametricCurve(2, t, c.pts)))
    assert estimate_extinction(pairs) == pytest.approx(0.25, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(T=st.floats(0.1, 10), c=st.floats(0.5, 8))
def test_extinction_fit_recovers_linear_data(T, c):
    run = FlowRun(n=2)
    for t in np.linspace(0, 0.9 * T, 20):
        run.append(t, np.array([[1.0, 0.0], [0.0, math.sqrt(c * (T - t))], [-1.0, 0.0]]))
    fit = fit_extinction(run)
    assert fit.T == pytest.approx(T, rel=1e-9)
    assert fit.slope == pytest.approx(c, rel=1e-9)


def test_extinction_fit_reports_diagnostics():
    run = FlowRun(n=2)
    for t in np.linspace(0, 1, 20):
        run.append(t, np.array([[1.0, 0.0], [0.0, 1.0 + t], [-1.0, 0.0]]))
    with pytest.raises(ExtinctionFitError) as info:
        fit_extinction(run)
    assert info.value.diagnostics["slope"] > 0


def test_spheroid_extinction_finite(run_4to1_coarse):
    assert 0 < run_4to1_coarse.T < math.inf
    assert run_4to1_coarse.T > run_4to1_coarse.times[-1]


# -- rescaling -------------------------------------------------------------------

def test_sphere_rescales_to_shrinker(sphere_run):
    for i in (10, len(sphere_run) // 2, len(sphere_run) - 5):
        p = rescale_profile(sphere_run.curve(i), sphere_run.T)
        m = np.abs(p.y) < 1.8
        np.testing.assert_allclose(p.u[m], np.sqrt(4 - p.y[m] ** 2), rtol=1e-2)


def test_rescale_rejects_time_past_extinction():
    c = ParametricCurve(2, 0.3, init_sphere(2, 1.0, 64).pts)
    with pytest.raises(ValueError):
        rescale_profile(c, T=0.25)


def test_rescale_interpolation_error_drops_with_resolution():
    def err(N):
        p = rescale_profile(init_sphere(2, 1.0, N), T=0.25, center="origin")
        yy = np.linspace(-1.5, 1.5, 997)
        return np.max(np.abs(np.interp(yy, p.y, p.u) - np.sqrt(4 - yy**2)))

    e = [err(N) for N in (64, 128, 256)]
    assert e[0] / e[1] > 2 and e[1] / e[2] > 2


def test_aspect_clock_start():
    s = aspect_clock_scale(2, 4.0, 1.0)
    assert -math.log(s * s * 0.5) == pytest.approx(-16.0, abs=1.0)


# -- rescaled equation -----------------------------------------------------------

def test_rhs_symbolic_oracle_for_shrinker():
    y, n = sp.symbols("y n", positive=True)
    u = sp.sqrt(2 * n - y**2)
    uy, uyy = sp.diff(u, y), sp.diff(u, y, 2)
    rhs = uyy / (1 + uy**2) - y / 2 * uy - (n - 1) / u + u / 2
    assert sp.simplify(rhs) == 0
    c = sp.sqrt(2 * (n - 1))
    assert sp.simplify(-(n - 1) / c + c / 2) == 0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_rhs_vanishes_on_cylinder(n):
    y = np.linspace(-5, 5, 101)
    p = GridProfile(n, -5.0, y, np.full_like(y, math.sqrt(2 * (n - 1))), "rescaled")
    assert np.max(np.abs(rescaled_rhs(p))) < 1e-10


@pytest.mark.parametrize("n", [2, 3])
def test_rhs_vanishes_on_shrinker_nonuniform_grid(n):
    # neighbouring spacings differ by at most 3x; coincident nodes would only amplify rounding
    steps = np.random.default_rng(n).uniform(0.5, 1.5, 200)
    y = -1.9 + 3.8 * np.r_[0.0, np.cumsum(steps)] / steps.sum()
    p = GridProfile(n, -5.0, y, np.sqrt(2 * n - y * y), "rescaled")
    assert np.max(np.abs(rescaled_rhs(p))) < 1e-10


def test_rhs_of_expansion_is_second_order_in_inverse_tau():
    c = math.sqrt(2)

    def worst(tau):
        y = np.linspace(-2, 2, 201)
        s = 4 * abs(tau)
        u = c * (1 - (y * y - 2) / s)
        d = (-2 * c * y / s, np.full_like(y, -2 * c / s))
        return np.max(np.abs(rescaled_rhs(GridProfile(2, tau, y, u, "rescaled"), d)))

    w = [worst(t) for t in (-100.0, -200.0, -400.0)]
    assert 3.5 < w[0] / w[1] < 4.5 and 3.5 < w[1] / w[2] < 4.5
    assert w[0] * 100**2 < 10


def test_rhs_rejects_unrescaled_profile():
    y = np.linspace(-1, 1, 11)
    with pytest.raises(ProfileError):
        rescaled_rhs(GridProfile(2, 0.0, y, np.ones_like(y), "unrescaled"))


# -- tips --------------------------------------------------------------------------

def shrinker_profile(n=2, m=4001):
    y = np.linspace(-math.sqrt(2 * n), math.sqrt(2 * n), m)
    return GridProfile(n, -5.0, y, np.sqrt(np.maximum(2 * n - y * y, 0.0)), "rescaled")


@pytest.mark.parametrize("side", ["right", "left"])
def test_shrinker_tip_flip_is_explicit_inverse(side):
    tp = tip_flip(shrinker_profile(), 0.4, side)
    np.testing.assert_allclose(tp.Y, np.sqrt(4 - tp.u**2), atol=1e-5)
    assert tp.Y0 == pytest.approx(2.0)


def test_flip_round_trip():
    p = shrinker_profile()
    tp = tip_flip(p, 0.4, "right", samples=400)
    m = (p.u > 0.05) & (p.u < 0.75) & (p.y > 0)
    back = np.interp(p.y[m], tp.Y[::-1], tp.u[::-1])
    np.testing.assert_allclose(back, p.u[m], atol=1e-4)


def test_flip_rejects_non_monotone_window():
    y = np.linspace(-2, 2, 401)
    u = np.sqrt(np.maximum(4 - y * y, 0)) * (1 + 0.3 * np.sin(40 * y) * (y > 1.6))
    with pytest.raises(ProfileError):
        tip_flip(GridProfile(2, -5.0, y, np.abs(u), "rescaled"), 0.4)


def test_zoom_of_flat_cap_is_zero():
    u = np.linspace(0.01, 0.5, 50)
    z = tip_zoom(TipProfile(2, -25.0, "right", u, np.full_like(u, 3.0), 3.0))
    assert np.all(z.Z == 0.0)


def test_zoom_of_linear_profile():
    u = np.linspace(0.01, 0.5, 50)
    z = tip_zoom(TipProfile(2, -25.0, "right", u, 3.0 - u, 3.0))
    np.testing.assert_allclose(z.Z, -z.rho, atol=1e-12)
    np.testing.assert_allclose(z.rho[1:], 5 * u)


def test_zoom_rejects_positive_tau():
    u = np.linspace(0.01, 0.5, 50)
    with pytest.raises(ValueError):
        tip_zoom(TipProfile(2, 1.0, "right", u, 3.0 - u, 3.0))


def test_eccentric_run_tip_position(run_4to1):
    for tau in (-12.0, -14.0):
        i = int(np.argmin([abs(run_4to1.tau(k) - tau) for k in range(len(run_4to1))]))
        p = rescale_profile(run_4to1.curve(i), run_4to1.T, run_4to1.scale)
        for side in ("right", "left"):
            tp = tip_flip(p, 0.25, side)
            assert np.all(np.diff(tp.Y) < 0)
            assert 0.8 < abs(tp.Y0) / math.sqrt(2 * abs(p.tau)) < 1.2
            z = tip_zoom(tp)
            assert z.Z[0] == 0.0 and np.all(z.Z <= 0)
