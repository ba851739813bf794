"""Front-tracking solver for rotationally symmetric mean curvature flow.

The evolving hypersurface is represented by its generator curve (x, r) in the
half plane r >= 0, ordered from the right axis point to the left one.  Each
interior node moves with normal velocity -H nu where

    H = kappa + (n - 1) nu_r / r,

kappa being the curvature of the planar curve (circle through three nodes)
and nu the outward normal.  Axis points move along the axis with speed
n * kappa, the smooth limit of H at an umbilic tip.  Nodes are kept close to
uniform in arclength by a tangential relaxation step after every move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import GridProfile, ProfileError, grid_derivatives


class CurveError(ValueError):
    """Raised for invalid generator curves."""


class StepRejected(RuntimeError):
    """Raised when an explicit step produces an invalid curve."""


class ExtinctionFitError(RuntimeError):
    """Raised when the extinction-time fit is unreliable."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class ParametricCurve:
    """Generator curve of a surface of revolution at time ``t``.

    ``pts`` has shape (N, 2) with columns (x, r); the first and last rows lie
    on the axis.
    """

    n: int
    t: float
    pts: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.pts, dtype=float)
        object.__setattr__(self, "pts", pts)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 5:
            raise CurveError("pts must have shape (N, 2) with N >= 5")
        if pts[0, 1] != 0.0 or pts[-1, 1] != 0.0:
            raise CurveError("first and last points must lie on the axis (r = 0)")
        if np.any(pts[1:-1, 1] <= 0.0):
            raise CurveError("interior points must have r > 0")

    @property
    def x(self) -> np.ndarray:
        return self.pts[:, 0]

    @property
    def r(self) -> np.ndarray:
        return self.pts[:, 1]

    def __len__(self) -> int:
        return len(self.pts)


def init_ellipsoid(n: int, a: float, b: float, N: int) -> ParametricCurve:
    """Generator of the spheroid x^2/a^2 + r^2/b^2 = 1, equispaced in the ellipse angle."""
    if n < 2 or a <= 0 or b <= 0 or N < 64:
        raise CurveError(f"invalid spheroid parameters n={n}, a={a}, b={b}, N={N}")
    th = np.linspace(0.0, math.pi, N)
    x = a * np.cos(th)
    r = b * np.sin(th)
    x[0], x[-1] = a, -a
    r[0] = r[-1] = 0.0
    return ParametricCurve(n, 0.0, np.column_stack([x, r]))


def init_sphere(n: int, radius: float, N: int) -> ParametricCurve:
    return init_ellipsoid(n, radius, radius, N)


def init_capsule(n: int, radius: float, half_length: float, N: int) -> ParametricCurve:
    """Cylinder of the given radius capped by hemispheres, total half length ``half_length``.

    Nodes are equispaced in arclength.
    """
    if radius <= 0 or half_length <= radius or N < 64:
        raise CurveError("capsule needs half_length > radius > 0 and N >= 64")
    flat = half_length - radius
    arc = 0.5 * math.pi * radius
    total = 2 * arc + 2 * flat
    s = np.linspace(0.0, total, N)
    x = np.empty(N)
    r = np.empty(N)
    for i, si in enumerate(s):
        if si <= arc:
            phi = si / radius
            x[i] = flat + radius * math.cos(phi)
            r[i] = radius * math.sin(phi)
        elif si <= arc + 2 * flat:
            x[i] = flat - (si - arc)
            r[i] = radius
        else:
            phi = 0.5 * math.pi + (si - arc - 2 * flat) / radius
            x[i] = -flat + radius * math.cos(phi)
            r[i] = radius * math.sin(phi)
    x[0], x[-1] = half_length, -half_length
    r[0] = r[-1] = 0.0
    return ParametricCurve(n, 0.0, np.column_stack([x, r]))


def _tip_curvature(x0: float, x1: float, r1: float) -> float:
    # circle centred on the axis through (x0, 0) and (x1, r1)
    c = (x0 * x0 - x1 * x1 - r1 * r1) / (2.0 * (x0 - x1))
    return 1.0 / abs(x0 - c)


def _geometry(x: np.ndarray, r: np.ndarray, n: int):
    """Mean curvature at every node plus interior unit tangents."""
    dx1 = x[1:-1] - x[:-2]
    dr1 = r[1:-1] - r[:-2]
    dx2 = x[2:] - x[1:-1]
    dr2 = r[2:] - r[1:-1]
    dx3 = x[2:] - x[:-2]
    dr3 = r[2:] - r[:-2]
    l1 = np.sqrt(dx1 * dx1 + dr1 * dr1)
    l2 = np.sqrt(dx2 * dx2 + dr2 * dr2)
    l3 = np.sqrt(dx3 * dx3 + dr3 * dr3)
    kappa = 2.0 * (dx1 * dr2 - dr1 * dx2) / (l1 * l2 * l3)
    tx = dx3 / l3
    tr = dr3 / l3
    H = np.empty_like(x)
    # outward normal is (tr, -tx); its radial component is -tx
    H[1:-1] = kappa - (n - 1) * tx / r[1:-1]
    H[0] = n * _tip_curvature(x[0], x[1], r[1])
    H[-1] = n * _tip_curvature(x[-1], x[-2], r[-2])
    return H, tx, tr, min(l1.min(), l2.min())


def mean_curvature(c: ParametricCurve) -> np.ndarray:
    """Mean curvature at every node of the generator curve (tips included)."""
    H, _, _, _ = _geometry(c.x, c.r, c.n)
    return H


def min_spacing(c: ParametricCurve) -> float:
    return float(np.min(np.hypot(np.diff(c.x), np.diff(c.r))))


def enclosed_area(c: ParametricCurve) -> float:
    """Area between the generator curve and the axis."""
    return float(np.sum(0.5 * (c.r[1:] + c.r[:-1]) * (c.x[:-1] - c.x[1:])))


def axial_centroid(c: ParametricCurve) -> float:
    """Axial coordinate of the centroid of the enclosed solid of revolution."""
    rn = c.r**c.n
    dx = c.x[:-1] - c.x[1:]
    w = 0.5 * (rn[1:] + rn[:-1]) * dx
    xm = 0.5 * (c.x[1:] + c.x[:-1])
    return float(np.sum(w * xm) / np.sum(w))


def _validate_arrays(x: np.ndarray, r: np.ndarray) -> None:
    if np.any(r[1:-1] <= 0.0) or not np.all(np.isfinite(x)) or not np.all(np.isfinite(r)):
        raise StepRejected("radius became non-positive")
    if np.any(np.diff(x) >= 0.0):
        raise StepRejected("axial coordinate lost monotonicity")


def _step_arrays(x: np.ndarray, r: np.ndarray, n: int, dt: float, relax: float):
    H, tx, tr, _ = _geometry(x, r, n)
    xn = x.copy()
    rn = r.copy()
    xn[1:-1] -= dt * H[1:-1] * tr
    rn[1:-1] += dt * H[1:-1] * tx
    xn[0] -= dt * H[0]
    xn[-1] += dt * H[-1]
    # tangential relaxation toward arclength midpoints
    d = (0.5 * (xn[2:] + xn[:-2]) - xn[1:-1]) * tx + (0.5 * (rn[2:] + rn[:-2]) - rn[1:-1]) * tr
    xn[1:-1] += relax * d * tx
    rn[1:-1] += relax * d * tr
    rn[0] = rn[-1] = 0.0
    return xn, rn


def stable_dt(c: ParametricCurve, cfl: float = 0.2) -> float:
    """Explicit time step cfl * h_min^2 * (2/n); equals cfl * h_min^2 for n = 2."""
    return cfl * min_spacing(c) ** 2 * 2.0 / c.n


def mcf_step(c: ParametricCurve, dt: float, relax: float = 0.5, cfl: float = 0.2) -> ParametricCurve:
    """One explicit Euler step of the flow followed by tangential redistribution."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    limit = stable_dt(c, cfl)
    if dt > limit * (1 + 1e-12):
        raise StepRejected(f"dt={dt:.3e} exceeds the stability limit {limit:.3e}")
    x, r = _step_arrays(c.x, c.r, c.n, dt, relax)
    _validate_arrays(x, r)
    return ParametricCurve(c.n, c.t + dt, np.column_stack([x, r]))


@dataclass
class FlowRun:
    """Time-ordered snapshots of one flow.

    ``scale`` converts simulation lengths to the length unit of the rescaled
    clock: tau = -log(scale^2 (T - t)).
    """

    n: int
    times: list[float] = field(default_factory=list)
    curves: list[np.ndarray] = field(default_factory=list)
    scale: float = 1.0
    meta: dict = field(default_factory=dict)
    T: float | None = None

    def append(self, t: float, pts: np.ndarray) -> None:
        self.times.append(float(t))
        self.curves.append(np.array(pts, dtype=float))

    def curve(self, i: int) -> ParametricCurve:
        return ParametricCurve(self.n, self.times[i], self.curves[i])

    def __len__(self) -> int:
        return len(self.times)

    def tau(self, i: int) -> float:
        if self.T is None:
            raise ExtinctionFitError("extinction time not estimated", {})
        return -math.log(self.scale**2 * (self.T - self.times[i]))


def evolve(
    c0: ParametricCurve,
    *,
    cfl: float = 0.2,
    cadence: float = 0.02,
    area_stop: float = 1e-3,
    t_end: float | None = None,
    max_steps: int = 5_000_000,
    relax: float = 0.5,
    scale: float = 1.0,
    max_halvings: int = 8,
) -> FlowRun:
    """Evolve until the enclosed area drops below ``area_stop`` times its initial value.

    Snapshots are stored whenever -log(area/area0) advances by ``cadence``;
    near extinction this is close to uniform spacing in the rescaled time.
    Rejected steps are retried with halved time steps.
    """
    run = FlowRun(n=c0.n, scale=scale)
    x, r, t = c0.x.copy(), c0.r.copy(), c0.t
    area0 = enclosed_area(c0)
    run.append(t, c0.pts)
    next_mark = cadence
    n = c0.n
    for step in range(max_steps):
        h = np.min(np.hypot(np.diff(x), np.diff(r)))
        dt = cfl * h * h * 2.0 / n
        if t_end is not None and t + dt >= t_end:
            dt = t_end - t
        for _ in range(max_halvings + 1):
            try:
                xn, rn = _step_arrays(x, r, n, dt, relax)
                _validate_arrays(xn, rn)
                break
            except StepRejected:
                dt *= 0.5
        else:
            raise StepRejected(f"step rejected after {max_halvings} halvings at t={t:.6g}")
        x, r, t = xn, rn, t + dt
        area = float(np.sum(0.5 * (r[1:] + r[:-1]) * (x[:-1] - x[1:])))
        done = area < area_stop * area0 or (t_end is not None and t >= t_end)
        level = -math.log(area / area0)
        if level >= next_mark or done:
            run.append(t, np.column_stack([x, r]))
            next_mark = (math.floor(level / cadence) + 1) * cadence
        if done:
            run.meta["steps"] = step + 1
            return run
    raise StepRejected(f"step budget {max_steps} exhausted at t={t:.6g}")


class ExtinctionFit(NamedTuple):
    T: float
    slope: float
    rms: float
    window: int


def fit_extinction(run: FlowRun, fraction: float = 0.2, max_rel_rms: float = 1e-2) -> ExtinctionFit:
    """Fit max r^2 = c (T - t) over the last ``fraction`` of the snapshots."""
    times = np.asarray(run.times)
    r2 = np.array([np.max(p[:, 1]) ** 2 for p in run.curves])
    return _fit_extinction_data(times, r2, fraction, max_rel_rms)


def _fit_extinction_data(times, r2, fraction=0.2, max_rel_rms=1e-2) -> ExtinctionFit:
    times = np.asarray(times, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    m = max(5, int(math.ceil(fraction * len(times))))
    if len(times) < 5:
        raise ExtinctionFitError("need at least 5 samples", {"samples": len(times)})
    tw, rw = times[-m:], r2[-m:]
    slope, icpt = np.polyfit(tw, rw, 1)
    resid = rw - (slope * tw + icpt)
    rms = float(np.sqrt(np.mean(resid**2)) / max(np.mean(np.abs(rw)), 1e-300))
    diag = {"slope": float(slope), "rel_rms": rms, "window": int(m)}
    if slope >= 0:
        raise ExtinctionFitError("max radius is not shrinking", diag)
    if rms > max_rel_rms:
        raise ExtinctionFitError(f"fit residual {rms:.2e} too large", diag)
    return ExtinctionFit(float(-icpt / slope), float(-slope), rms, int(m))


def estimate_extinction(run) -> float:
    """Extinction time from the final stretch of a run.

    Accepts a FlowRun or a sequence of (t, ParametricCurve) pairs.
    """
    if isinstance(run, FlowRun):
        return fit_extinction(run).T
    pairs = list(run)
    times = [float(t) for t, _ in pairs]
    r2 = [float(np.max(c.r)) ** 2 for _, c in pairs]
    return _fit_extinction_data(times, r2).T


def rescale_profile(c: ParametricCurve, T: float, scale: float = 1.0, center: str | float = "centroid") -> GridProfile:
    """Type-I rescaling around (x_c, T): y = (x - x_c)/sqrt(T - t), u = r/sqrt(T - t).

    ``center`` is ``"centroid"`` (enclosed-volume centroid), ``"origin"`` or a
    number.  The clock is tau = -log(scale^2 (T - t)).
    """
    if T <= c.t:
        raise ValueError(f"extinction time T={T} must exceed t={c.t}")
    if center == "centroid":
        xc = axial_centroid(c)
    elif center == "origin":
        xc = 0.0
    else:
        xc = float(center)
    L = math.sqrt(T - c.t)
    y = (c.x[::-1] - xc) / L
    u = c.r[::-1] / L
    tau = -math.log(scale * scale * (T - c.t))
    return GridProfile(c.n, tau, y, u, "rescaled", meta={"t": c.t, "T": T, "xc": xc, "scale": scale})


def squared_profile_derivatives(p: GridProfile) -> tuple[np.ndarray, np.ndarray]:
    """u_y and u_yy obtained by differencing q = u^2.

    The stencils are exact when q is quadratic, so shrinking spheres and
    cylinders are reproduced to rounding error on any grid.
    """
    q_y, q_yy = grid_derivatives(p.y, p.u**2)
    u_y = q_y / (2.0 * p.u)
    u_yy = (q_yy - 2.0 * u_y**2) / (2.0 * p.u)
    return u_y, u_yy


def rescaled_rhs(p: GridProfile, derivs: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Pointwise u_yy/(1+u_y^2) - (y/2) u_y - (n-1)/u + u/2."""
    if p.kind != "rescaled":
        raise ProfileError("rescaled_rhs needs a rescaled profile")
    if np.any(p.u <= 0):
        raise ProfileError("u must be positive everywhere")
    u_y, u_yy = squared_profile_derivatives(p) if derivs is None else derivs
    return u_yy / (1.0 + u_y**2) - 0.5 * p.y * u_y - (p.n - 1) / p.u + 0.5 * p.u


@dataclass(frozen=True)
class TipProfile:
    """Axial position Y as a function of the radius u near one tip.

    Both tips are stored in the right-tip orientation (the left tip is
    mirrored), so Y decreases in u and ``Y0`` is the tip position.
    """

    n: int
    tau: float
    side: str
    u: np.ndarray
    Y: np.ndarray
    Y0: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "Y", Y)
        if self.side not in ("right", "left"):
            raise ProfileError(f"side must be 'right' or 'left', got {self.side!r}")
        if u.shape != Y.shape or u.ndim != 1 or len(u) < 2:
            raise ProfileError("u and Y must be 1-d arrays of equal length")
        if u[0] <= 0 or np.any(np.diff(u) <= 0):
            raise ProfileError("u must be positive and strictly increasing")

    def spline(self) -> CubicSpline:
        """Cubic spline through (0, Y0) and the samples with Y_u(0) = 0."""
        return CubicSpline(np.r_[0.0, self.u], np.r_[self.Y0, self.Y], bc_type=((1, 0.0), "not-a-knot"))


@dataclass(frozen=True)
class ZoomProfile:
    n: int
    tau: float
    rho: np.ndarray
    Z: np.ndarray
    Y0: float


def tip_flip(p: GridProfile, theta: float, side: str = "right", samples: int = 200) -> TipProfile:
    """Invert the profile near a tip: Y(u) on u in (0, 2 theta]."""
    if side not in ("right", "left"):
        raise ProfileError(f"side must be 'right' or 'left', got {side!r}")
    if theta <= 0:
        raise ValueError("theta must be positive")
    y, u = (p.y, p.u) if side == "right" else (-p.y[::-1], p.u[::-1])
    top = 2.0 * theta
    if u[-1] > 1e-12 * max(1.0, u.max()):
        raise ProfileError("profile does not reach the axis on this side")
    below = u <= top
    # contiguous stretch ending at the tip plus one point beyond 2 theta
    start = len(u) - 1
    while start > 0 and below[start - 1]:
        start -= 1
    if start == 0:
        raise ProfileError("u never exceeds 2 theta on this side")
    seg_u = u[start - 1 :][::-1]
    seg_y = y[start - 1 :][::-1]
    if np.any(np.diff(seg_u) <= 0):
        raise ProfileError("u is not monotone on the flip window")
    spl = CubicSpline(seg_u, seg_y, bc_type=((1, 0.0), "not-a-knot"))
    ug = top * np.arange(1, samples + 1) / samples
    return TipProfile(p.n, p.tau, side, ug, spl(ug), float(seg_y[0]))


def tip_zoom(tp: TipProfile, tol: float = 1e-9) -> ZoomProfile:
    """Zoom to the soliton scale: rho = u sqrt|tau|, Z = sqrt|tau| (Y - Y0)."""
    if tp.tau >= 0:
        raise ValueError("tip zoom needs tau < 0")
    s = math.sqrt(-tp.tau)
    rho = np.r_[0.0, tp.u * s]
    Z = np.r_[0.0, s * (tp.Y - tp.Y0)]
    scale = tol * max(1.0, float(np.max(np.abs(Z))))
    if np.any(Z > scale) or np.any(np.diff(Z) > scale):
        raise ProfileError("zoomed tip is not non-positive and non-increasing")
    return ZoomProfile(tp.n, tp.tau, rho, Z, tp.Y0)


def aspect_clock_scale(n: int, a: float, b: float) -> float:
    """Length unit tying a spheroid's aspect ratio to the rescaled clock.

    An ancient oval at rescaled time tau has neck radius sqrt(2(n-1)) and
    half length close to sqrt(2|tau|), so its aspect ratio is
    sqrt(|tau|/(n-1)).  Scaling the initial spheroid so that its minor
    semi-axis equals the neck radius at tau_start = -(n-1)(a/b)^2 puts the
    start of the run at that rescaled time.
    """
    tau_start = -(n - 1) * (a / b) ** 2
    return math.sqrt(2 * (n - 1)) * math.exp(-tau_start / 2) / b
