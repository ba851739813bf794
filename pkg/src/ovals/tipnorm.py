"""Weighted norms in the tip region.

Near a tip the profile is described by Y(u, tau), 0 <= u <= 2 theta.  The
weight mu(u, tau) equals -Y^2/4 on the collar u >= u* = L/sqrt|tau| and the
soliton weight m(rho) + a rho + b on u <= u*, rho = u sqrt|tau|, with a and
b chosen so that mu is C^1 at u*.  Solving the two continuity conditions
gives

    a = -m'(L) - Y Y_u / (2 sqrt|tau|),    b = -Y^2/4 - m(L) - L a,

with Y, Y_u evaluated at u*.

The tip profile may be any object with ``n``, ``tau`` and a ``spline()``
method returning a callable ``(u, nu) -> d^nu Y/du^nu`` (a fitted
``TipProfile`` or an analytic ``SurrogateTip``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import simpson

from .geometry import grid_derivatives
from .soliton import SolitonTable, weight_m
from .spectral import smoothstep, windowed_integrals

ETA_MU_TAU = 0.1
ETA_SLOPE = 0.2


class WeightError(ValueError):
    """Raised when a tip weight cannot be built or evaluated."""


def _m(tab: SolitonTable, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        return weight_m(tab.n, rho, tab.Z0_at(rho), tab.Z0p_at(rho))


def _m_prime(tab: SolitonTable, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        return (tab.n - 1) * (1.0 + tab.Z0p_at(rho) ** 2) / rho


@dataclass(frozen=True)
class TipWeight:
    n: int
    theta: float
    L: float
    tau: float
    aL: float
    bL: float
    Y1_ref: object = field(repr=False)
    soliton: SolitonTable = field(repr=False)
    junction: float

    @property
    def sqrt_tau(self) -> float:
        return math.sqrt(abs(self.tau))

    def _Y(self) -> Callable:
        return self.Y1_ref.spline()

    def mu_soliton(self, u) -> np.ndarray:
        rho = np.asarray(u, dtype=float) * self.sqrt_tau
        return _m(self.soliton, rho) + self.aL * rho + self.bL

    def mu_soliton_u(self, u) -> np.ndarray:
        rho = np.asarray(u, dtype=float) * self.sqrt_tau
        return self.sqrt_tau * (_m_prime(self.soliton, rho) + self.aL)

    def mu_collar(self, u) -> np.ndarray:
        return -0.25 * self._Y()(np.asarray(u, dtype=float), 0) ** 2

    def mu_collar_u(self, u) -> np.ndarray:
        Y = self._Y()
        u = np.asarray(u, dtype=float)
        return -0.5 * Y(u, 0) * Y(u, 1)

    def mu(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        inner = u <= self.junction
        out = np.empty_like(u)
        out[inner] = self.mu_soliton(u[inner])
        out[~inner] = self.mu_collar(u[~inner])
        return out

    def mu_u(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        inner = u <= self.junction
        out = np.empty_like(u)
        out[inner] = self.mu_soliton_u(u[inner])
        out[~inner] = self.mu_collar_u(u[~inner])
        return out

    def continuity_residuals(self) -> tuple[float, float]:
        """(value jump, slope jump) of mu at the junction."""
        us = np.array([self.junction])
        v = float(self.mu_collar(us)[0] - self.mu_soliton(us)[0])
        s = float(self.mu_collar_u(us)[0] - self.mu_soliton_u(us)[0])
        return abs(v), abs(s)

    def b_identity_residual(self) -> float:
        """b + m(L) + L a; nonzero by -Y(u*)^2/4 for value-continuous weights."""
        return float(self.bL + _m(self.soliton, np.array([self.L]))[0] + self.L * self.aL)

    def b_identity_residual_with_offset(self) -> float:
        """b - (-Y(u*)^2/4 - m(L) - L a), the identity continuity actually implies."""
        Ys = float(self._Y()(np.array([self.junction]), 0)[0])
        return self.b_identity_residual() + 0.25 * Ys * Ys

    def a_formula_residual(self) -> float:
        """a minus the closed-form slope-continuity expression."""
        Y = self._Y()
        us = np.array([self.junction])
        expect = -_m_prime(self.soliton, np.array([self.L]))[0] - Y(us, 0)[0] * Y(us, 1)[0] / (2.0 * self.sqrt_tau)
        return float(self.aL - expect)

    def table(self, u) -> dict:
        """Plot-ready columns u, mu, mu_u."""
        u = np.asarray(u, dtype=float)
        return {"u": u, "mu": self.mu(u), "mu_u": self.mu_u(u)}


def build_weight(Y1, tab: SolitonTable, theta: float, L: float, override_a: float | None = None) -> TipWeight:
    """Glue -Y^2/4 and the soliton weight at u* = L/sqrt|tau|.

    ``override_a`` replaces the slope-matching value of a (b still restores
    value continuity); it exists to break the gluing on purpose.
    """
    n, tau = Y1.n, float(Y1.tau)
    if tab.n != n:
        raise WeightError("soliton table dimension does not match the tip profile")
    if tau >= 0:
        raise WeightError("tip weight needs tau < 0")
    if not 0 < theta < 0.5:
        raise WeightError(f"theta must lie in (0, 1/2), got {theta}")
    st = math.sqrt(abs(tau))
    us = L / st
    top = 2.0 * theta
    u_hi = getattr(Y1, "u_max", None)
    if u_hi is None:
        u_hi = float(np.max(Y1.u))
    if not 0 < us < top or us > u_hi:
        raise WeightError(f"junction u*={us:.4g} outside the tip profile domain (0, {min(top, u_hi):.4g})")
    # the soliton branch only reads the table on rho <= L
    if tab.rho[-1] < 2 * L * (1 - 1e-12):
        raise WeightError(f"soliton table reaches rho={tab.rho[-1]:.4g}, need {2 * L:.4g}")
    Y = Y1.spline()
    uarr = np.array([us])
    Ys, Yus = float(Y(uarr, 0)[0]), float(Y(uarr, 1)[0])
    Larr = np.array([float(L)])
    mL, mpL = float(_m(tab, Larr)[0]), float(_m_prime(tab, Larr)[0])
    # value and slope continuity at u*; rows are (a, b) coefficients
    M = np.array([[L, 1.0], [st, 0.0]])
    rhs = np.array([-0.25 * Ys * Ys - mL, -0.5 * Ys * Yus - st * mpL])
    if abs(np.linalg.det(M)) < 1e-14:
        raise WeightError("continuity system is singular")
    a, b = np.linalg.solve(M, rhs)
    if override_a is not None:
        a = float(override_a)
        b = rhs[0] - L * a
    return TipWeight(n, float(theta), float(L), tau, float(a), float(b), Y1, tab, us)


# -- grids and quadrature -----------------------------------------------------

class TipGrid(NamedTuple):
    u: np.ndarray
    pieces: tuple  # slices, one per smooth piece, sharing endpoints


def tip_grid(w: TipWeight, points: int = 4001) -> TipGrid:
    """Piecewise-uniform grid on [0, 2 theta] with nodes at u* and theta."""
    breaks = sorted({0.0, w.junction, w.theta, 2.0 * w.theta})
    segs, pieces, start = [], [], 0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        m = max(5, int(points * (hi - lo) / (2.0 * w.theta)) | 1)
        seg = np.linspace(lo, hi, m)
        pieces.append(slice(start, start + m))
        segs.append(seg if not segs else seg[1:])
        start += m - 1
    return TipGrid(np.concatenate(segs), tuple(pieces))


def _piece_integral(grid: TipGrid, f: np.ndarray, lo: float, hi: float) -> float:
    total = 0.0
    for sl in grid.pieces:
        a, b = grid.u[sl.start], grid.u[sl.stop - 1]
        if a >= lo - 1e-15 and b <= hi + 1e-15:
            total += simpson(f[sl], x=grid.u[sl])
    return float(total)


def _shifted_weight(w: TipWeight, u: np.ndarray) -> tuple[np.ndarray, float]:
    mu = w.mu(u)
    shift = float(np.max(mu[np.isfinite(mu)]))
    with np.errstate(under="ignore"):
        return np.exp(mu - shift), shift


def _grid_values(W, grid: TipGrid) -> np.ndarray:
    if callable(W):
        return np.asarray(W(grid.u), dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape != grid.u.shape:
        raise WeightError(f"samples of length {W.size} do not match the tip grid ({grid.u.size})")
    return W


def tip_norm(W, w: TipWeight, grid: TipGrid | None = None, rule: str = "simpson", nodes: int = 200) -> float:
    """(int_0^{2 theta} W^2 e^mu du)^{1/2}.

    ``simpson`` integrates samples (or a callable) on a tip grid;
    ``gauss`` applies Gauss-Legendre on each smooth piece and needs a
    callable W.
    """
    if rule == "simpson":
        grid = grid or tip_grid(w)
        Wv = _grid_values(W, grid)
        e, shift = _shifted_weight(w, grid.u)
        val = _piece_integral(grid, Wv * Wv * e, 0.0, 2.0 * w.theta)
        return math.sqrt(val) * math.exp(0.5 * shift)
    if rule == "gauss":
        if not callable(W):
            raise WeightError("gauss rule needs a callable W")
        x, wt = leggauss(nodes)
        breaks = sorted({0.0, w.junction, w.theta, 2.0 * w.theta})
        us = np.concatenate([0.5 * (hi - lo) * x + 0.5 * (hi + lo) for lo, hi in zip(breaks[:-1], breaks[1:])])
        ws = np.concatenate([0.5 * (hi - lo) * wt for lo, hi in zip(breaks[:-1], breaks[1:])])
        mu = w.mu(us)
        shift = float(np.max(mu))
        val = float(np.sum(ws * np.asarray(W(us)) ** 2 * np.exp(mu - shift)))
        return math.sqrt(val) * math.exp(0.5 * shift)
    raise WeightError(f"unknown rule {rule!r}")


def tip_sup_norm(taus, norms, window: float = 1.0) -> float:
    """sup over tau' of |tau'|^{-1/4} (int_{tau'-1}^{tau'} |W|_s^2 ds)^{1/2}."""
    t = np.asarray(taus, dtype=float)
    v = np.asarray(norms, dtype=float)
    if t.size == 0:
        raise WeightError("empty series")
    if t.shape != v.shape or np.any(np.diff(t) <= 0):
        raise WeightError("series must be strictly increasing in tau with matching values")
    if np.any(t >= 0):
        raise WeightError("tip series need tau < 0")
    if t[-1] - t[0] < window * (1 - 1e-12):
        raise WeightError("series shorter than one window")
    if np.max(np.diff(t)) > 0.1 * window * (1 + 1e-9):
        raise WeightError("sampling step exceeds 0.1")
    sig, I = windowed_integrals(t, v * v, window)
    return float(np.max(np.abs(sig) ** -0.25 * np.sqrt(np.maximum(I, 0.0))))


# -- Poincare probe -----------------------------------------------------------

class PoincareTerms(NamedTuple):
    lhs: float
    gradient: float
    outer: float
    ratio: float


def poincare_terms(f, w: TipWeight, Y1=None, grid: TipGrid | None = None, df=None) -> PoincareTerms:
    """Both sides of the tip Poincare inequality with C = 1.

    lhs = |tau| int_0^theta f^2 e^mu, gradient = int_0^{2 theta}
    f_u^2/(1+Y_u^2) e^mu, outer = int_theta^{2 theta} f^2 e^mu and
    ratio = lhs/(gradient + outer).  All three carry a common factor
    exp(-max mu), which cancels in the ratio.
    """
    grid = grid or tip_grid(w)
    Y = (Y1 or w.Y1_ref).spline()
    u = grid.u
    fv = _grid_values(f, grid)
    if df is not None:
        dfv = _grid_values(df, grid)
    else:
        dfv, _ = grid_derivatives(u, fv)
    scale = max(float(np.max(np.abs(fv))), 1e-300)
    if abs(fv[-1]) > 1e-10 * scale:
        raise WeightError("test function must vanish at u = 2 theta")
    dscale = max(float(np.max(np.abs(dfv))), 1e-300)
    if abs(dfv[0]) > 1e-3 * dscale:
        raise WeightError("test function must satisfy f'(0) = 0")
    e, _ = _shifted_weight(w, u)
    Yu = Y(u, 1)
    lhs = abs(w.tau) * _piece_integral(grid, fv * fv * e, 0.0, w.theta)
    grad = _piece_integral(grid, dfv * dfv / (1.0 + Yu * Yu) * e, 0.0, 2.0 * w.theta)
    outer = _piece_integral(grid, fv * fv * e, w.theta, 2.0 * w.theta)
    den = grad + outer
    return PoincareTerms(lhs, grad, outer, lhs / den if den > 0 else math.inf)


def poincare_ratio(f, w: TipWeight, Y1=None, grid: TipGrid | None = None, df=None) -> float:
    """Empirical constant lhs/(gradient + outer) a test function requires."""
    return poincare_terms(f, w, Y1, grid, df).ratio


def _bump(s) -> np.ndarray:
    return 1.0 - smoothstep(s)


def poincare_test_functions(theta: float, count: int = 60, seed: int = 0, rho_max: float = 7.0) -> list[dict]:
    """Seeded family of admissible test functions.

    Half live on the soliton scale (functions of rho = u sqrt|tau| supported
    in rho <= R, R <= rho_max), half on the u scale (supported in
    u <= s theta, s < 2).  Each entry holds the recipe; evaluate with
    ``eval_test_function``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        coeffs = rng.normal(0.0, 0.3, size=3)
        if i % 2 == 0:
            out.append({"scale": "rho", "R": float(rng.uniform(0.5, rho_max)), "c": coeffs})
        else:
            s2 = float(rng.uniform(0.3, 1.9))
            s1 = float(rng.uniform(0.0, 0.8 * s2))
            out.append({"scale": "u", "s1": s1 * theta, "s2": s2 * theta, "c": coeffs})
    return out


def eval_test_function(tf: dict, u, tau: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    k = np.arange(1, 4)
    if tf["scale"] == "rho":
        R = tf["R"]
        s = u * math.sqrt(abs(tau)) / R
        mod = 1.0 + np.cos(np.pi * np.multiply.outer(s, k)) @ tf["c"]
        return _bump(s) * mod
    s1, s2 = tf["s1"], tf["s2"]
    mod = 1.0 + np.cos(np.pi * np.multiply.outer(u / s2, k)) @ tf["c"]
    return _bump((u - s1) / (s2 - s1)) * mod


def poincare_suite(w: TipWeight, tests: list[dict], grid: TipGrid | None = None) -> np.ndarray:
    grid = grid or tip_grid(w)
    return np.array([poincare_ratio(eval_test_function(t, grid.u, w.tau), w, grid=grid) for t in tests])


# -- collar diagnostics -------------------------------------------------------

def _collar_u(Y1, theta: float, L: float, samples: int) -> np.ndarray:
    us = L / math.sqrt(abs(Y1.tau))
    if not us < 2.0 * theta:
        raise WeightError(f"collar is empty: L/sqrt|tau| = {us:.4g} >= 2 theta")
    return np.linspace(us, 2.0 * theta, samples)


def collar_diagnostic(Y1, theta: float, L: float, samples: int = 2001) -> tuple[float, float]:
    """(eps1, eps2) on the collar L/sqrt|tau| <= u <= 2 theta.

    eps1 = sup |1 + Y u/(2(n-1) Y_u)|;
    eps2 = sup | |Y_u|/u / (Y/(2(n-1))) - 1 |.
    """
    u = _collar_u(Y1, theta, L, samples)
    Y = Y1.spline()
    Yv, Yu = Y(u, 0), Y(u, 1)
    n = Y1.n
    eps1 = float(np.max(np.abs(1.0 + Yv * u / (2 * (n - 1) * Yu))))
    eps2 = float(np.max(np.abs(np.abs(Yu) / u / (Yv / (2 * (n - 1))) - 1.0)))
    return eps1, eps2


def collar_slope_bracket(w: TipWeight, samples: int = 2001) -> tuple[tuple[float, float], tuple[float, float]]:
    """Ranges of u mu_u/((n-1)(1+Y_u^2)) and 2(n-1) mu_u/(u|tau|) on the collar."""
    u = _collar_u(w.Y1_ref, w.theta, w.L, samples)
    Yu = w.Y1_ref.spline()(u, 1)
    mu_u = w.mu_collar_u(u)
    r1 = u * mu_u / ((w.n - 1) * (1.0 + Yu * Yu))
    r2 = 2 * (w.n - 1) * mu_u / (u * abs(w.tau))
    return (float(r1.min()), float(r1.max())), (float(r2.min()), float(r2.max()))


def mu_tau_probe(make_tip: Callable[[float], object], tab: SolitonTable, theta: float, L: float, tau: float,
                 dtau: float = 1e-2, samples: int = 2001) -> float:
    """max over 0 < u <= 2 theta of d mu/d tau divided by |tau|.

    ``make_tip(tau)`` returns the tip profile at that time; mu is rebuilt at
    tau +- dtau and differenced centrally.
    """
    u = np.linspace(2.0 * theta / samples, 2.0 * theta, samples)
    wp = build_weight(make_tip(tau + dtau), tab, theta, L)
    wm = build_weight(make_tip(tau - dtau), tab, theta, L)
    d = (wp.mu(u) - wm.mu(u)) / (2.0 * dtau)
    return float(np.max(d) / abs(tau))


# -- transition-region norm equivalence ---------------------------------------

def norm_equivalence_ratio(Y1: Callable, Y2: Callable, u1: Callable, u2: Callable, tau: float, theta: float,
                           samples: int = 4001) -> float:
    """|tau|^{-1/4} |W chi_[theta,2theta]|_tau / |w chi_D|_h at one time.

    W = Y1 - Y2 on theta <= u <= 2 theta with weight exp(-Y1^2/4);
    w = u1 - u2 on D = {y >= 0 : theta <= u1(y) <= 2 theta} with weight
    exp(-y^2/4).  Y1, Y2 are callables of u and u1, u2 callables of y.
    """
    uu = np.linspace(theta, 2.0 * theta, samples)
    Yv = Y1(uu)
    W = Yv - Y2(uu)
    shift = float(np.max(-0.25 * Yv * Yv))
    tip2 = simpson(W * W * np.exp(-0.25 * Yv * Yv - shift), x=uu)
    y_lo, y_hi = float(Y1(np.array([2.0 * theta]))[0]), float(Y1(np.array([theta]))[0])
    yy = np.linspace(y_lo, y_hi, samples)
    wv = u1(yy) - u2(yy)
    cyl2 = simpson(wv * wv * np.exp(-0.25 * yy * yy - shift), x=yy)
    return abs(tau) ** -0.25 * math.sqrt(tip2 / cyl2)
