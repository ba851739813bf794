import math

import numpy as np
import pytest

from ovals.evolve import rescaled_rhs, tip_zoom
from ovals.geometry import GridProfile
from ovals.surrogate import SurrogateTip, cylinder_surrogate


def test_cylinder_surrogate_values():
    assert cylinder_surrogate(2, 0.0, -4.0) == pytest.approx(math.sqrt(2) * 1.125)
    assert cylinder_surrogate(3, math.sqrt(2), -50.0) == pytest.approx(2.0)


def test_cylinder_surrogate_needs_negative_tau():
    with pytest.raises(ValueError):
        cylinder_surrogate(2, 0.0, 0.0)


def test_cylinder_surrogate_nearly_stationary():
    y = np.linspace(-2, 2, 401)
    tau = -300.0
    p = GridProfile(2, tau, y, cylinder_surrogate(2, y, tau), "rescaled")
    assert np.max(np.abs(rescaled_rhs(p))) < 10 / tau**2


@pytest.fixture(scope="module")
def tip(bowl2):
    return SurrogateTip(2, -400.0, bowl2)


def test_tip_position(tip):
    assert float(tip(np.array([0.0]))[0]) == pytest.approx(math.sqrt(800.0), abs=1e-12)
    assert tip.Y0 == pytest.approx(math.sqrt(800.0))


@pytest.mark.parametrize("nu", [1, 2])
def test_derivatives_match_differences(tip, nu):
    u = np.linspace(0.05, 1.2, 40)
    h = 1e-5
    fd = (tip(u + h, nu - 1) - tip(u - h, nu - 1)) / (2 * h)
    np.testing.assert_allclose(tip(u, nu), fd, rtol=1e-5, atol=1e-5)


def test_monotone_and_decreasing(tip):
    u = np.linspace(1e-4, tip.u_max * 0.999, 2000)
    assert np.all(np.diff(tip(u)) < 0)


def test_zoom_matches_bowl_near_axis(bowl2):
    errs = []
    for tau in (-100.0, -1000.0, -10000.0):
        z = tip_zoom(SurrogateTip(2, tau, bowl2).tip_profile(5.0 / math.sqrt(-tau) / 2, samples=200))
        errs.append(np.max(np.abs(z.Z - bowl2.Z0_at(z.rho))))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2


def test_profile_inverts_tip(tip):
    y = np.linspace(5.0, tip.Y0 - 1e-3, 200)
    u = tip.profile_u(y)
    np.testing.assert_allclose(tip(u), y, atol=1e-5)
    assert tip.profile_u(np.array([tip.Y0 + 1.0]))[0] == 0.0


def test_domain_checks(bowl2, bowl3, tip):
    with pytest.raises(ValueError):
        SurrogateTip(2, 1.0, bowl2)
    with pytest.raises(ValueError):
        SurrogateTip(2, -10.0, bowl3)
    with pytest.raises(ValueError):
        tip(np.array([tip.u_max * 1.01]))
    with pytest.raises(ValueError):
        tip(np.array([0.5]), 3)
