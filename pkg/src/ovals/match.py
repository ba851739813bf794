"""Gauge fixing between two flows and the neutral-mode tracker.

A flow is transformed by a space shift alpha, a time shift beta and a
parabolic dilation gamma,

    U^g(x, t) = e^{gamma/2} U(e^{-gamma/2}(x - alpha), e^{-gamma}(t - beta)),

which in rescaled variables (U(x, t) = sqrt(-t) u(x/sqrt(-t), -log(-t)))
reads

    u^g(y, tau) = sqrt(1 + beta e^tau) u((y - alpha e^{tau/2})/sqrt(1 + beta e^tau),
                                         tau + gamma - log(1 + beta e^tau)).

At a reference time tau0 it is convenient to use b = sqrt(1 + beta e^tau0) - 1,
Gamma = (gamma - log(1 + beta e^tau0))/tau0 and A = alpha e^{tau0/2}, so that
u^g(y, tau0) = (1 + b) u((y - A)/(1 + b), (1 + Gamma) tau0).

Flows are accessed through run handles exposing ``profile(y, tau)`` and
``profile_unrescaled(x, s)`` (s < 0 is time before extinction).  Profiles
are extended by zero beyond the tips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import simpson

from .evolve import FlowRun, axial_centroid, fit_extinction
from .geometry import GridProfile
from .spectral import build_basis, cylindrical_window, make_cutoff

SEARCH_BOX = (1.0, 0.5, 1.0)  # |b| |tau|, |Gamma|, |A|


class RunDomainError(ValueError):
    """Raised when a pulled-back time falls outside a stored run."""


class MatchError(RuntimeError):
    def __init__(self, message: str, history: list | None = None):
        super().__init__(message)
        self.history = history or []


# -- gauge parameters ---------------------------------------------------------

@dataclass(frozen=True)
class GaugeParams:
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    tau0: float = -1.0

    def bGA_at(self, tau: float) -> tuple[float, float, float]:
        q = 1.0 + self.beta * math.exp(tau)
        if q <= 0:
            raise ValueError("1 + beta e^tau must be positive")
        return math.sqrt(q) - 1.0, (self.gamma - math.log(q)) / tau, self.alpha * math.exp(tau / 2)

    @property
    def bGA(self) -> tuple[float, float, float]:
        return self.bGA_at(self.tau0)

    @classmethod
    def from_bGA(cls, b: float, Gamma: float, A: float, tau0: float) -> "GaugeParams":
        if b <= -1:
            raise ValueError("b must exceed -1")
        beta = ((1.0 + b) ** 2 - 1.0) * math.exp(-tau0)
        return cls(A * math.exp(-tau0 / 2), beta, Gamma * tau0 + 2.0 * math.log1p(b), tau0)

    def admissible(self, eps: float) -> dict:
        """Flags |alpha| <= eps e^{-tau0/2}/|tau0|, |beta| <= eps e^{-tau0}/|tau0|, |gamma| <= eps |tau0|."""
        t = abs(self.tau0)
        flags = {
            "alpha": abs(self.alpha) <= eps * math.exp(-self.tau0 / 2) / t,
            "beta": abs(self.beta) <= eps * math.exp(-self.tau0) / t,
            "gamma": abs(self.gamma) <= eps * t,
        }
        flags["all"] = all(flags.values())
        return flags

    def in_search_box(self) -> bool:
        b, G, A = self.bGA
        return abs(b) * abs(self.tau0) <= SEARCH_BOX[0] and abs(G) <= SEARCH_BOX[1] and abs(A) <= SEARCH_BOX[2]

    def inverse(self) -> "GaugeParams":
        return GaugeParams(-math.exp(-self.gamma / 2) * self.alpha, -math.exp(-self.gamma) * self.beta, -self.gamma,
                           self.tau0)


def compose(first: GaugeParams, second: GaugeParams) -> GaugeParams:
    """Parameters of applying ``first`` and then ``second``."""
    return GaugeParams(
        second.alpha + math.exp(second.gamma / 2) * first.alpha,
        second.beta + math.exp(second.gamma) * first.beta,
        first.gamma + second.gamma,
        first.tau0,
    )


# -- run handles ---------------------------------------------------------------

class RescaledRun:
    """Snapshot archive of a flow, interpolated linearly in tau (rescaled) or t.

    Lengths are measured from a fixed axial centre (default: the volume
    centroid of the last snapshot) in the units fixed by ``run.scale``; s =
    scale^2 (t - T) is the time before extinction.
    """

    def __init__(self, run: FlowRun, T: float | None = None, center: float | None = None):
        if T is None:
            T = run.T if run.T is not None else fit_extinction(run).T
        self.n = run.n
        self.T = float(T)
        self.scale = float(run.scale)
        keep = [i for i, t in enumerate(run.times) if t < self.T]
        if len(keep) < 2:
            raise RunDomainError("fewer than two snapshots before extinction")
        if center is None:
            center = axial_centroid(run.curve(keep[-1]))
        self.center = float(center)
        sc = self.scale
        self.s = np.array([sc * sc * (run.times[i] - self.T) for i in keep])
        self.taus = -np.log(-self.s)
        self._X, self._U = [], []
        for i in keep:
            pts = run.curves[i]
            self._X.append(sc * (pts[::-1, 0] - self.center))
            self._U.append(sc * pts[::-1, 1])

    @property
    def tau_range(self) -> tuple[float, float]:
        return float(self.taus[0]), float(self.taus[-1])

    def _bracket(self, grid: np.ndarray, v: float, what: str) -> tuple[int, float]:
        if not grid[0] - 1e-12 <= v <= grid[-1] + 1e-12:
            raise RunDomainError(f"{what}={v:.6g} outside stored range [{grid[0]:.6g}, {grid[-1]:.6g}]")
        i = int(np.clip(np.searchsorted(grid, v) - 1, 0, len(grid) - 2))
        return i, float((v - grid[i]) / (grid[i + 1] - grid[i]))

    def profile(self, y, tau: float) -> np.ndarray:
        i, lam = self._bracket(self.taus, tau, "tau")
        y = np.asarray(y, dtype=float)
        vals = []
        for j in (i, i + 1):
            L = math.sqrt(-self.s[j])
            vals.append(np.interp(y, self._X[j] / L, self._U[j] / L, left=0.0, right=0.0))
        return (1.0 - lam) * vals[0] + lam * vals[1]

    def profile_unrescaled(self, x, s: float) -> np.ndarray:
        i, lam = self._bracket(self.s, s, "s")
        x = np.asarray(x, dtype=float)
        a = np.interp(x, self._X[i], self._U[i], left=0.0, right=0.0)
        b = np.interp(x, self._X[i + 1], self._U[i + 1], left=0.0, right=0.0)
        return (1.0 - lam) * a + lam * b


class SurrogateRun:
    """Run handle backed by a closed-form rescaled profile f(y, tau), tau < 0."""

    def __init__(self, n: int, f: Callable, tau_range: tuple[float, float] = (-math.inf, 0.0)):
        self.n = n
        self._f = f
        self.tau_range = tau_range

    def _check(self, tau: float) -> None:
        lo, hi = self.tau_range
        if not lo <= tau <= hi or tau >= 0:
            raise RunDomainError(f"tau={tau:.6g} outside surrogate range {self.tau_range}")

    def profile(self, y, tau: float) -> np.ndarray:
        self._check(tau)
        return np.asarray(self._f(np.asarray(y, dtype=float), tau), dtype=float)

    def profile_unrescaled(self, x, s: float) -> np.ndarray:
        if s >= 0:
            raise RunDomainError("unrescaled time must be negative")
        L = math.sqrt(-s)
        return L * self.profile(np.asarray(x, dtype=float) / L, -math.log(-s))


def cylinder_run(n: int) -> SurrogateRun:
    c = math.sqrt(2 * (n - 1))
    return SurrogateRun(n, lambda y, tau: np.full_like(y, c))


def parabolic_surrogate_run(n: int, extra: Callable | None = None) -> SurrogateRun:
    """sqrt(2(n-1)) (1 - (y^2 - 2)/(4|tau|)), plus an optional extra(y, tau)."""
    c = math.sqrt(2 * (n - 1))

    def f(y, tau):
        base = c * (1.0 - (y * y - 2.0) / (4.0 * abs(tau)))
        return base if extra is None else base + extra(y, tau)

    return SurrogateRun(n, f)


class GaugedRun:
    """A run handle seen through a gauge transformation."""

    def __init__(self, base, g: GaugeParams):
        self.base = base
        self.g = g
        self.n = base.n

    def profile(self, y, tau: float) -> np.ndarray:
        return gauged_values(self.base, self.g, y, tau)

    def profile_unrescaled(self, x, s: float) -> np.ndarray:
        return gauged_values_unrescaled(self.base, self.g, x, s)


# -- applying a gauge ----------------------------------------------------------

def gauged_values(run, g: GaugeParams, y, tau: float) -> np.ndarray:
    q = 1.0 + g.beta * math.exp(tau)
    if q <= 0:
        raise RunDomainError("1 + beta e^tau must be positive")
    r = math.sqrt(q)
    y = np.asarray(y, dtype=float)
    return r * run.profile((y - g.alpha * math.exp(tau / 2)) / r, tau + g.gamma - math.log(q))


def gauged_values_unrescaled(run, g: GaugeParams, x, s: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = math.exp(g.gamma / 2)
    return e * run.profile_unrescaled((x - g.alpha) / e, (s - g.beta) / (e * e))


def apply_gauge_rescaled(run, g: GaugeParams, y, tau: float) -> GridProfile:
    return GridProfile(run.n, tau, np.asarray(y, dtype=float), gauged_values(run, g, y, tau), "rescaled")


def apply_gauge_unrescaled(run, g: GaugeParams, x, t: float) -> GridProfile:
    """U^g on the grid x at time t (t < 0 measured from extinction)."""
    return GridProfile(run.n, t, np.asarray(x, dtype=float), gauged_values_unrescaled(run, g, x, t), "unrescaled")


# -- projections ---------------------------------------------------------------

_BASIS = build_basis(2)


def _projection_grid(tau: float, theta: float, n: int, points: int) -> np.ndarray:
    _, z2 = cylindrical_window(theta, n)
    Y = min(z2 * math.sqrt(abs(tau)), 40.0)
    return np.linspace(-Y, Y, points)


def cutoff_projections(f: np.ndarray, y: np.ndarray, tau: float, theta: float, n: int) -> np.ndarray:
    """<psi_j, phi_C f>/<psi_j, psi_j> for j = 0, 1, 2 on a symmetric grid."""
    phi = make_cutoff("cylindrical", theta, tau, n)(y)
    wgt = phi * f * np.exp(-0.25 * y * y)
    psi = _BASIS.evaluate(y)
    return np.array([simpson(wgt * psi[j], x=y) / _BASIS.sq_norms[j] for j in range(3)])


def projection_residual(run1, run2, g: GaugeParams, theta: float, tau: float, convention: str = "u",
                        points: int = 4001) -> np.ndarray:
    """(r0, r1, r2) = <psi_j/|psi_j|^2, phi_C (u1 - u2^g)> at time tau.

    ``convention="v"`` reports the components of phi_C (v2^g - v1) with
    v = u/sqrt(2(n-1)) - 1, the normalization of the leading-order law.
    """
    n = run1.n
    y = _projection_grid(tau, theta, n, points)
    w = run1.profile(y, tau) - gauged_values(run2, g, y, tau)
    r = cutoff_projections(w, y, tau, theta, n)
    if convention == "u":
        return r
    if convention == "v":
        return -r / math.sqrt(2 * (n - 1))
    raise ValueError(f"unknown convention {convention!r}")


def leading_order_law(b: float, Gamma: float, A: float, tau: float) -> np.ndarray:
    """Predicted v-convention residuals for two solutions with the same asymptotics."""
    t = abs(tau)
    g1 = Gamma + 1.0
    return np.array([b - A * A / (4.0 * g1 * t), A / (2.0 * t * g1), Gamma / (4.0 * g1 * t)])


def invert_leading_order(d: np.ndarray, tau: float) -> tuple[float, float, float]:
    """(b, Gamma, A) whose leading-order law equals d."""
    t = abs(tau)
    Gamma = 4.0 * t * d[2] / (1.0 - 4.0 * t * d[2])
    A = 2.0 * t * (1.0 + Gamma) * d[1]
    b = d[0] + A * A / (4.0 * (1.0 + Gamma) * t)
    return b, Gamma, A


class MatchResult(NamedTuple):
    gauge: GaugeParams
    residual: float
    iterations: int
    history: list
    admissible: dict
    in_box: bool


def zero_projections(run1, run2, tau0: float, theta: float, *, tol: float = 1e-8, max_iter: int = 50,
                     eps_admissible: float = 1.0, guess: tuple | None = None, fd_step: float = 1e-6) -> MatchResult:
    """Find (b, Gamma, A) at tau0 making all three cutoff projections of u1 - u2^g vanish.

    Damped Newton with a forward-difference Jacobian on the |tau0|-scaled
    v-convention residual; convergence is declared when the unscaled
    u-convention residual norm drops below ``tol``.
    """
    t = abs(tau0)
    scale = np.array([1.0 / t, 1.0, 1.0])

    def F(x):
        g = GaugeParams.from_bGA(x[0], x[1], x[2], tau0)
        r = projection_residual(run1, run2, g, theta, tau0, "v")
        return t * r

    def unscaled(Fx):
        return float(np.linalg.norm(Fx) / t * math.sqrt(2 * (run1.n - 1)))

    if guess is None:
        d = -projection_residual(run1, run2, GaugeParams(tau0=tau0), theta, tau0, "v")
        x = np.array(invert_leading_order(d, tau0))
        # the first-order inversion is only trustworthy for small Gamma; start inside the search box
        x = np.clip(x, -np.array(SEARCH_BOX) * scale, np.array(SEARCH_BOX) * scale)
    else:
        x = np.array(guess, dtype=float)
    for _ in range(40):
        try:
            Fx = F(x)
            break
        except (RunDomainError, ValueError):
            # guess leaves the stored tau range: shrink toward the identity gauge
            x = 0.5 * x
    else:
        raise MatchError("no evaluable initial guess", [])
    history = [unscaled(Fx)]
    for it in range(max_iter):
        if history[-1] <= tol:
            break
        J = np.empty((3, 3))
        for k in range(3):
            h = fd_step * scale[k]
            xp = x.copy()
            xp[k] += h
            J[:, k] = (F(xp) - Fx) / h
        try:
            step = np.linalg.solve(J, -Fx)
        except np.linalg.LinAlgError as exc:
            raise MatchError("singular Jacobian", history) from exc
        lam = 1.0
        while lam > 1e-4:
            xn = x + lam * step
            try:
                Fn = F(xn)
            except (RunDomainError, ValueError):
                lam *= 0.5
                continue
            if np.linalg.norm(Fn) < np.linalg.norm(Fx) * (1.0 - 1e-4 * lam):
                break
            lam *= 0.5
        else:
            raise MatchError(f"line search failed at residual {history[-1]:.3e}", history)
        x, Fx = xn, Fn
        history.append(unscaled(Fx))
    else:
        if history[-1] > tol:
            raise MatchError(f"Newton did not converge in {max_iter} iterations (residual {history[-1]:.3e})", history)
    g = GaugeParams.from_bGA(x[0], x[1], x[2], tau0)
    return MatchResult(g, history[-1], len(history) - 1, history, g.admissible(eps_admissible), g.in_search_box())


def boundary_residuals(run1, run2, tau: float, theta: float, radius: float) -> np.ndarray:
    """|tau|-scaled residual norms on 26 points of the sphere |tau|^2 b^2 + Gamma^2 + A^2 = radius^2."""
    t = abs(tau)
    out = []
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            for k in (-1, 0, 1):
                if i == j == k == 0:
                    continue
                d = np.array([i, j, k], dtype=float)
                d *= radius / np.linalg.norm(d)
                g = GaugeParams.from_bGA(d[0] / t, d[1], d[2], tau)
                out.append(np.linalg.norm(t * projection_residual(run1, run2, g, theta, tau, "v")))
    return np.array(out)


# -- neutral mode --------------------------------------------------------------

class NeutralTrack(NamedTuple):
    tau: np.ndarray
    a: np.ndarray
    F: np.ndarray
    integral_residual: float
    noise_floor: float


def centered_derivative(a: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order centered first derivative; the two end nodes on each side are NaN."""
    d = np.full_like(a, np.nan)
    d[2:-2] = (-a[4:] + 8.0 * a[3:-1] - 8.0 * a[1:-3] + a[:-4]) / (12.0 * h)
    return d


def neutral_mode_series(taus: np.ndarray, a: np.ndarray) -> NeutralTrack:
    """F = a' - 2a/|tau| and the integral-form consistency check.

    The check compares a(tau) tau^2 with a(tau_b) tau_b^2 - int_tau^{tau_b}
    F s^2 ds over the interior nodes, relative to max |a|.
    """
    taus = np.asarray(taus, dtype=float)
    a = np.asarray(a, dtype=float)
    if len(taus) < 10:
        raise ValueError("window too short: need at least 10 samples")
    h = float(taus[1] - taus[0])
    if not np.allclose(np.diff(taus), h, rtol=1e-9, atol=0):
        raise ValueError("neutral-mode tracking needs a uniform tau grid")
    da = centered_derivative(a, h)
    F = da - 2.0 * a / np.abs(taus)
    ti, ai, Fi = taus[2:-2], a[2:-2], F[2:-2]
    g = Fi * ti * ti
    # int_{t_i}^{t_end} g by the trapezoid rule, accumulated from the right
    seg = 0.5 * (g[1:] + g[:-1]) * np.diff(ti)
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    pred = (ai[-1] * ti[-1] ** 2 - tail) / (ti * ti)
    amax = float(np.max(np.abs(ai)))
    resid = float(np.max(np.abs(pred - ai)) / amax) if amax > 0 else 0.0
    # differencing noise: fourth differences of a
    noise = float(np.std(np.diff(a, 4)) / (12.0 * h)) if len(a) > 5 else math.nan
    return NeutralTrack(taus, a, F, resid, noise)


def neutral_mode_track(run1, run2, g: GaugeParams, theta: float, window: tuple[float, float],
                       step: float = 0.05, points: int = 4001) -> NeutralTrack:
    """a(tau) = <psi_2, phi_C (u1 - u2^g)>/|psi_2|^2 on a uniform tau grid and its forcing F."""
    ta, tb = window
    m = int(round((tb - ta) / step)) + 1
    if m < 10:
        raise ValueError("window too short: need at least 10 samples")
    taus = np.linspace(ta, tb, m)
    a = np.array([projection_residual(run1, run2, g, theta, float(t), "u", points)[2] for t in taus])
    return neutral_mode_series(taus, a)
