"""Closed-form stand-ins for an ancient oval at very negative rescaled time.

Forward simulations only reach moderate |tau|.  The checks that need
|tau| in the hundreds or beyond use these surrogates instead:

* the parabolic cylinder law u = sqrt(2(n-1)) (1 - (y^2 - 2)/(4|tau|)),
  valid on bounded y;
* a tip profile that follows the intermediate shape
  Y = sqrt|tau| sqrt(2 - u^2/(n-1)) away from the axis and the bowl soliton
  Y = Y(0) + Z0(u sqrt|tau|)/sqrt|tau| near it.  The two are joined
  additively through g(rho) = Z0(rho) + sqrt2 rho^2/(4(n-1)), which is
  O(log rho) at large rho and cancels the quadratic part of the
  intermediate shape at small u.
"""

from __future__ import annotations

import math

import numpy as np

from .evolve import TipProfile
from .soliton import SolitonTable, bowl_zpp


def cylinder_surrogate(n: int, y, tau: float) -> np.ndarray:
    """sqrt(2(n-1)) (1 - (y^2 - 2)/(4|tau|))."""
    if tau >= 0:
        raise ValueError("surrogate needs tau < 0")
    y = np.asarray(y, dtype=float)
    return math.sqrt(2 * (n - 1)) * (1.0 - (y * y - 2.0) / (4.0 * abs(tau)))


class SurrogateTip:
    """Analytic tip profile Y(u) on 0 <= u < sqrt(2(n-1)).

    Calling the object as ``tip(u, nu)`` returns the nu-th u-derivative, so
    it can stand in wherever a fitted tip spline is expected.
    """

    def __init__(self, n: int, tau: float, tab: SolitonTable):
        if tau >= 0:
            raise ValueError("surrogate needs tau < 0")
        if tab.n != n:
            raise ValueError("soliton table dimension does not match n")
        self.n = n
        self.tau = float(tau)
        self.tab = tab
        self.side = "right"
        self._s = math.sqrt(abs(tau))
        self._k = math.sqrt(2.0) / (4.0 * (n - 1))
        self.Y0 = math.sqrt(2.0 * abs(tau))

    @property
    def u_max(self) -> float:
        """Largest u whose rho stays inside the soliton table."""
        return min(math.sqrt(2.0 * (self.n - 1)), float(self.tab.rho[-1]) / self._s)

    def _g(self, rho, nu: int):
        tab = self.tab
        if nu == 0:
            return tab.Z0_at(rho) + self._k * rho**2
        zp = tab.Z0p_at(rho)
        if nu == 1:
            return zp + 2.0 * self._k * rho
        if nu == 2:
            return bowl_zpp(self.n, rho, zp) + 2.0 * self._k
        raise ValueError("derivative order must be 0, 1 or 2")

    def __call__(self, u, nu: int = 0) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(u > self.u_max * (1 + 1e-12)):
            raise ValueError(f"u outside [0, {self.u_max:.6g}]")
        s, n = self._s, self.n
        rho = u * s
        w = np.sqrt(np.maximum(2.0 - u * u / (n - 1), 0.0))
        if nu == 0:
            return s * w + self._g(rho, 0) / s
        if nu == 1:
            return -s * u / ((n - 1) * w) + self._g(rho, 1)
        if nu == 2:
            # d^2/du^2 of sqrt(2 - u^2/(n-1)) is -2/((n-1) w^3)
            return -2.0 * s / ((n - 1) * w**3) + s * self._g(rho, 2)
        raise ValueError("derivative order must be 0, 1 or 2")

    def spline(self) -> "SurrogateTip":
        return self

    def tip_profile(self, theta: float, samples: int = 400) -> TipProfile:
        """Sampled version on u in (0, 2 theta]."""
        ug = 2.0 * theta * np.arange(1, samples + 1) / samples
        return TipProfile(self.n, self.tau, "right", ug, self(ug), self.Y0)

    def profile_u(self, y, u_lo: float = 1e-6, samples: int = 20001) -> np.ndarray:
        """Invert Y to u(y) for 0 <= y <= Y0; returns 0 beyond the tip."""
        ug = np.linspace(u_lo, self.u_max * (1 - 1e-9), samples)
        Yg = self(ug)
        if np.any(np.diff(Yg) >= 0):
            raise ValueError("surrogate tip is not monotone on the inversion grid")
        y = np.abs(np.asarray(y, dtype=float))
        out = np.interp(y, Yg[::-1], ug[::-1])
        return np.where(y >= self.Y0, 0.0, out)
