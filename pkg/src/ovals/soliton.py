"""Translating bowl soliton, its weight m(rho), and self-shrinker profiles.

The bowl profile Z0(rho) solves

    Z'' / (1 + Z'^2) + (n - 1) Z' / rho + sqrt(2)/2 = 0,   Z(0) = Z'(0) = 0,

a translator of speed sqrt(2)/2 written as a graph over the radius.  The
origin is a regular singular point, so integration starts from the even
Taylor series a rho^2 + b rho^4 at a small radius rho0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline

SPEED = math.sqrt(2.0) / 2.0


class SolitonError(RuntimeError):
    """Raised when an ODE solve misses its tolerance."""


def bowl_series_coeffs(n: int) -> tuple[float, float]:
    """Coefficients of rho^2 and rho^4 in the bowl profile at the origin."""
    if n < 2:
        raise ValueError("n must be >= 2")
    a = -1.0 / (2.0 * math.sqrt(2.0) * n)
    b = -math.sqrt(2.0) / (16.0 * n**3 * (2 + n))
    return a, b


def _bowl_rhs(n: int):
    def rhs(rho, z):
        zp = z[1]
        return [zp, -(1.0 + zp * zp) * (SPEED + (n - 1) * zp / rho)]

    return rhs


def bowl_zpp(n: int, rho, zp):
    """Second derivative of the bowl profile from the ODE itself."""
    rho = np.asarray(rho, dtype=float)
    zp = np.asarray(zp, dtype=float)
    return -(1.0 + zp * zp) * (SPEED + (n - 1) * zp / rho)


def fd_weights(offsets, deriv: int) -> np.ndarray:
    """Finite-difference weights on integer offsets (unit spacing)."""
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    V = np.vander(offsets, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(V, rhs)


def uniform_derivative(f: np.ndarray, h: float, order: int = 6) -> np.ndarray:
    """First derivative on a uniform grid with a centered stencil of the given order.

    Points within half a stencil of either end use one-sided stencils with
    the same number of nodes.
    """
    f = np.asarray(f, dtype=float)
    m = order // 2
    width = 2 * m + 1
    if len(f) < width:
        raise ValueError("grid too short for the requested stencil")
    out = np.empty_like(f)
    wc = fd_weights(np.arange(-m, m + 1), 1)
    N = len(f)
    out[m : N - m] = sum(wc[j] * f[j : N - 2 * m + j] for j in range(width))
    for i in list(range(m)) + list(range(N - m, N)):
        lo = min(max(i - m, 0), N - width)
        offs = np.arange(lo, lo + width) - i
        out[i] = np.dot(fd_weights(offs, 1), f[lo : lo + width])
    return out / h


@dataclass(frozen=True)
class SolitonTable:
    """Bowl profile and its weight sampled on a uniform rho grid starting at 0.

    ``Z0pp`` is obtained by differencing ``Z0p``, so the ODE residual is an
    independent accuracy check.  ``m[0]`` is -inf.
    """

    n: int
    rho: np.ndarray
    Z0: np.ndarray
    Z0p: np.ndarray
    Z0pp: np.ndarray
    m: np.ndarray
    series_a: float
    series_b: float

    def residual(self) -> np.ndarray:
        """ODE residual at interior nodes."""
        rho = self.rho[1:]
        return self.Z0pp[1:] / (1.0 + self.Z0p[1:] ** 2) + (self.n - 1) * self.Z0p[1:] / rho + SPEED

    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual())))

    def _spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.rho, self.Z0, self.Z0p)

    def Z0_at(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0) or np.any(rho > self.rho[-1] * (1 + 1e-12)):
            raise ValueError("rho outside the table")
        return self._spline()(rho)

    def Z0p_at(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0) or np.any(rho > self.rho[-1] * (1 + 1e-12)):
            raise ValueError("rho outside the table")
        return CubicHermiteSpline(self.rho, self.Z0p, self.Z0pp)(rho)

    def coarsen(self, every: int) -> "SolitonTable":
        """Every ``every``-th node, with Z0pp re-differenced on the coarse grid."""
        rho = self.rho[::every]
        Z0p = self.Z0p[::every]
        Z0pp = uniform_derivative(Z0p, rho[1] - rho[0])
        return SolitonTable(self.n, rho, self.Z0[::every], Z0p, Z0pp, self.m[::every], self.series_a, self.series_b)


def weight_m(n: int, rho, Z0, Z0p) -> np.ndarray:
    """m = (n-1) log rho - (sqrt2/2) Z0 - (1/2) log(1 + Z0'^2)."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        return (n - 1) * np.log(rho) - SPEED * np.asarray(Z0) - 0.5 * np.log1p(np.asarray(Z0p) ** 2)


def _series(n: int, rho):
    a, b = bowl_series_coeffs(n)
    rho = np.asarray(rho, dtype=float)
    return a * rho**2 + b * rho**4, 2 * a * rho + 4 * b * rho**3


def bowl_ode_solution(n: int, rho_max: float, tol: float, rho0: float = 1e-2, method: str = "DOP853"):
    """Dense ODE solution on [rho0, rho_max] started from the series."""
    z0, zp0 = _series(n, rho0)
    sol = solve_ivp(
        _bowl_rhs(n),
        (rho0, rho_max),
        [float(z0), float(zp0)],
        method=method,
        rtol=tol,
        atol=tol * 1e-2,
        dense_output=True,
    )
    if not sol.success:
        raise SolitonError(f"bowl integration failed: {sol.message}")
    return sol


def solve_bowl(n: int, rho_max: float = 100.0, tol: float = 1e-9, rho0: float = 1e-2, h: float = 1e-2) -> SolitonTable:
    """Tabulate the bowl profile on [0, rho_max] with spacing ``h``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if rho_max < 10 or tol > 1e-8:
        raise ValueError("need rho_max >= 10 and tol <= 1e-8")
    if not 0 < rho0 < 1:
        raise ValueError("rho0 must lie in (0, 1)")
    sol = bowl_ode_solution(n, rho_max, min(tol * 1e-3, 1e-12), rho0)
    npts = int(round(rho_max / h)) + 1
    rho = np.linspace(0.0, rho_max, npts)
    Z0 = np.empty(npts)
    Z0p = np.empty(npts)
    inner = rho < rho0
    Z0[inner], Z0p[inner] = _series(n, rho[inner])
    Z0[~inner], Z0p[~inner] = sol.sol(rho[~inner])
    Z0[0] = Z0p[0] = 0.0
    Z0pp = uniform_derivative(Z0p, rho[1] - rho[0])
    a, b = bowl_series_coeffs(n)
    tab = SolitonTable(n, rho, Z0, Z0p, Z0pp, weight_m(n, rho, Z0, Z0p), a, b)
    res = tab.max_residual()
    if res > tol:
        raise SolitonError(f"bowl residual {res:.2e} exceeds tol {tol:.1e}")
    return tab


def m_prime(tab: SolitonTable) -> np.ndarray:
    """Derivative of m from the chain rule on the tabulated Z0, Z0', Z0''."""
    rho = tab.rho
    with np.errstate(divide="ignore", invalid="ignore"):
        return (tab.n - 1) / rho - SPEED * tab.Z0p - tab.Z0p * tab.Z0pp / (1.0 + tab.Z0p**2)


def weight_m_identity_check(tab: SolitonTable) -> float:
    """max |m'(rho) - (n-1)(1 + Z0'^2)/rho| over interior nodes."""
    mp = m_prime(tab)[1:]
    target = (tab.n - 1) * (1.0 + tab.Z0p[1:] ** 2) / tab.rho[1:]
    return float(np.max(np.abs(mp - target)))


def a_infinity(tab: SolitonTable, L) -> np.ndarray:
    """Large-|tau| limit of the gluing slope: -m'(L) - (sqrt2/2) Z0'(L)."""
    L = np.asarray(L, dtype=float)
    zp = tab.Z0p_at(L)
    return -(tab.n - 1) * (1.0 + zp * zp) / L - SPEED * zp


def apply_M(tab: SolitonTable, phi) -> np.ndarray:
    """Flux-form discretization of e^{-m} (e^m phi' / (1 + Z0'^2))'.

    Weights enter only through differences of m, so no exponential overflow
    occurs on long tables.  At rho = 0 the operator reduces to n phi''(0).
    """
    phi = np.asarray(phi, dtype=float)
    rho = tab.rho
    if phi.shape != rho.shape:
        raise ValueError("phi must be sampled on the table grid")
    g = 1.0 / (1.0 + tab.Z0p**2)
    m = tab.m
    h = np.diff(rho)
    flux_coef = 0.5 * (g[1:] + g[:-1])
    dphi = np.diff(phi) / h
    out = np.empty_like(phi)
    # interior: faces i-1/2 and i+1/2, exp(m_face - m_i) with m_face the average
    mi = m[1:-1]
    mr = 0.5 * (m[1:-1] + m[2:])
    ml = np.where(np.isfinite(m[:-2]), 0.5 * (m[:-2] + m[1:-1]), -np.inf)
    right = np.exp(mr - mi) * flux_coef[1:] * dphi[1:]
    left = np.exp(ml - mi) * flux_coef[:-1] * dphi[:-1]
    vol = 0.5 * (h[1:] + h[:-1])
    out[1:-1] = (right - left) / vol
    out[0] = 2.0 * tab.n * (phi[1] - phi[0]) / h[0] ** 2
    out[-1] = np.nan
    return out


def control_volume_weights(tab: SolitonTable) -> np.ndarray:
    """Log of e^{m_i} times the control-volume width; the inner product that makes apply_M symmetric."""
    rho = tab.rho
    h = np.diff(rho)
    vol = np.empty_like(rho)
    vol[1:-1] = 0.5 * (h[1:] + h[:-1])
    vol[0] = 0.5 * h[0]
    vol[-1] = 0.5 * h[-1]
    with np.errstate(divide="ignore"):
        return tab.m + np.log(vol)


def inner_m(tab: SolitonTable, f, g, rule: str = "simpson") -> float:
    """Weighted inner product int f g e^{m} drho over the table.

    ``rule`` is ``"simpson"`` (composite Simpson) or ``"cv"`` (control
    volumes, under which apply_M is exactly symmetric).  The last node is
    excluded since apply_M is undefined there.
    """
    f = np.asarray(f, dtype=float)[:-1]
    g = np.asarray(g, dtype=float)[:-1]
    fg = f * g
    if rule == "cv":
        lw = control_volume_weights(tab)[:-1]
        keep = np.isfinite(lw) & (fg != 0)
        if not np.any(keep):
            return 0.0
        shift = np.max(lw[keep])
        return float(np.sum(fg[keep] * np.exp(lw[keep] - shift)) * math.exp(shift))
    if rule != "simpson":
        raise ValueError(f"unknown rule {rule!r}")
    m = tab.m[:-1]
    # e^m overflows on long tables; evaluate it only where the integrand is nonzero, shifted by its max
    keep = np.isfinite(m) & (fg != 0)
    if not np.any(keep):
        return 0.0
    shift = np.max(m[keep])
    w = np.zeros_like(m)
    w[keep] = np.exp(m[keep] - shift)
    return float(simpson(fg * w, x=tab.rho[:-1]) * math.exp(shift))


def write_table_csv(tab: SolitonTable, path) -> None:
    from .io import write_csv

    rows = zip(tab.rho, tab.Z0, tab.Z0p, tab.m)
    write_csv(path, ["rho", "Z0", "Z0p", "m"], rows)


class ShrinkerTable(NamedTuple):
    n: int
    a: float
    slope: float
    y: np.ndarray
    U: np.ndarray
    Up: np.ndarray
    exit_reason: str
    residual: float


def _shrinker_rhs(n: int):
    def rhs(y, s):
        U, Up = s
        return [Up, (1.0 + Up * Up) * (0.5 * y * Up - 0.5 * U + (n - 1) / U)]

    return rhs


def _integrate_shrinker(n, a, y0, y_max, slope, tol):
    def hits_axis(y, s):
        return s[0] - 1e-6

    hits_axis.terminal = True

    def blows_up(y, s):
        return abs(s[1]) - 1e6

    blows_up.terminal = True
    sol = solve_ivp(
        _shrinker_rhs(n),
        (y0, y_max),
        [a, slope],
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        dense_output=True,
        events=[hits_axis, blows_up],
    )
    if sol.status == 1:
        # the slope diverges to -inf as U approaches the axis
        reason = "axis" if len(sol.t_events[0]) or sol.y[1, -1] < 0 else "blowup"
    elif sol.status == 0:
        reason = "reached_y_max"
    else:
        raise SolitonError(f"shrinker integration failed: {sol.message}")
    return sol, reason


def solve_shrinker(n: int, a: float, y0: float, y_max: float, slope: float | str = 0.0, tol: float = 1e-13,
                   samples: int = 2001) -> ShrinkerTable:
    """Integrate the self-shrinker ODE U''/(1+U'^2) - (y/2)U' + U/2 - (n-1)/U = 0 from U(y0) = a.

    ``slope`` is U'(y0); the string ``"shoot"`` bisects for the separatrix
    slope between solutions that reach the axis and solutions that blow up.
    The exit reason is ``reached_y_max``, ``axis`` or ``blowup``.
    """
    cyl = math.sqrt(2 * (n - 1))
    if not 0 < a <= cyl:
        raise ValueError(f"need 0 < a <= sqrt(2(n-1)) = {cyl:.6g}")
    if y_max <= y0:
        raise ValueError("y_max must exceed y0")
    if slope == "shoot":
        slope = shoot_shrinker_slope(n, a, y0, y_max, tol=tol)
    slope = float(slope)
    if a == cyl and slope == 0.0:
        y = np.linspace(y0, y_max, samples)
        return ShrinkerTable(n, a, 0.0, y, np.full_like(y, cyl), np.zeros_like(y), "reached_y_max", 0.0)
    sol, reason = _integrate_shrinker(n, a, y0, y_max, slope, tol)
    y_end = float(sol.t[-1])
    y = np.linspace(y0, y_end, samples)
    U, Up = sol.sol(y)
    residual = _shrinker_residual(n, sol, y0, y_end)
    return ShrinkerTable(n, a, slope, y, U, Up, reason, residual)


def _shrinker_residual(n: int, sol, y0: float, y_end: float, h_rel: float = 3e-4) -> float:
    """ODE residual at accepted solver nodes, U'' from a local 7-point stencil on the dense output.

    Nodes in the steep exit layer (|U'| > 10 or U < 0.01) are skipped.
    """
    worst = 0.0
    for yk in sol.t:
        Uk, Upk = sol.sol(yk)
        if abs(Upk) > 10.0 or Uk < 1e-2:
            continue
        h = h_rel / (1.0 + abs(Upk))
        lo = max(-3, int(np.ceil((y0 - yk) / h)))
        lo = min(lo, int(np.floor((y_end - yk) / h)) - 6)
        offs = np.arange(lo, lo + 7)
        Upp = np.dot(fd_weights(offs, 1), sol.sol(yk + offs * h)[1]) / h
        res = Upp / (1 + Upk**2) - 0.5 * yk * Upk + 0.5 * Uk - (n - 1) / Uk
        worst = max(worst, abs(res))
    return float(worst)


def shoot_shrinker_slope(n: int, a: float, y0: float, y_max: float, tol: float = 1e-12, iters: int = 60) -> float:
    """Bisect U'(y0) between an axis-hitting and a blowing-up shrinker."""
    lo, hi = -1.0, 0.0
    while _integrate_shrinker(n, a, y0, y_max, lo, 1e-9)[1] != "axis":
        lo *= 2.0
        if lo < -1e6:
            raise SolitonError("no axis-hitting slope found")
    while _integrate_shrinker(n, a, y0, y_max, hi, 1e-9)[1] == "axis":
        hi = hi + 1.0 if hi >= 0 else 0.0
        if hi > 1e6:
            raise SolitonError("no blowing-up slope found")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        reason = _integrate_shrinker(n, a, y0, y_max, mid, 1e-10)[1]
        if reason == "axis":
            lo = mid
        elif reason == "blowup":
            hi = mid
        else:
            return mid
    return 0.5 * (lo + hi)
