"""Differential-geometric diagnostics for rotationally symmetric profiles.

A hypersurface in R^{n+1} that is invariant under rotations about the x-axis
is described by its profile u(y) (radius as a function of the axial
coordinate).  This module differentiates sampled profiles on non-uniform
grids and evaluates principal curvatures, mean curvature, the convexity
measure (u^2)_yy and the scale-free curvature ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

if TYPE_CHECKING:
    from .evolve import ParametricCurve

SLOPE_CAP = 1.0e3


class ProfileError(ValueError):
    """Raised for malformed profile data."""


@dataclass(frozen=True)
class GridProfile:
    """Radius u sampled on a strictly increasing axial grid y.

    ``kind`` is ``"rescaled"`` for u(y, tau) and ``"unrescaled"`` for U(x, t);
    in the latter case ``tau`` holds the unrescaled time t.
    """

    n: int
    tau: float
    y: np.ndarray
    u: np.ndarray
    kind: str = "rescaled"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "u", u)
        if self.n < 2:
            raise ProfileError(f"dimension n must be >= 2, got {self.n}")
        if self.kind not in ("rescaled", "unrescaled"):
            raise ProfileError(f"unknown profile kind {self.kind!r}")
        if y.ndim != 1 or y.shape != u.shape:
            raise ProfileError("y and u must be 1-d arrays of equal length")
        if len(y) < 5:
            raise ProfileError(f"grid too short: {len(y)} points, need >= 5")
        if not np.all(np.diff(y) > 0):
            raise ProfileError("y must be strictly increasing")
        if np.any(u[1:-1] <= 0):
            raise ProfileError("u must be positive at interior points")


class CurvaturePoint(NamedTuple):
    lambda1: np.ndarray | float
    lambda2: np.ndarray | float
    H: np.ndarray | float
    ratio: np.ndarray | float


def _check_grid(y: np.ndarray, f: np.ndarray) -> None:
    if len(y) < 5:
        raise ProfileError(f"grid too short: {len(y)} points, need >= 5")
    if not np.all(np.diff(y) > 0):
        raise ProfileError("grid must be strictly increasing")
    if len(f) != len(y):
        raise ProfileError("sample length does not match grid")


def grid_derivatives(y: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Three-point Lagrange first and second derivatives on a non-uniform grid.

    Interior points use the centered three-point stencil; the endpoints use
    the one-sided three-point stencil (second order for the first derivative).
    Both stencils are exact for quadratics.
    """
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    _check_grid(y, f)
    h = np.diff(y)
    hm, hp = h[:-1], h[1:]
    fm, f0, fp = f[:-2], f[1:-1], f[2:]

    d1 = np.empty_like(f)
    d2 = np.empty_like(f)
    d1[1:-1] = (-hp / (hm * (hm + hp))) * fm + ((hp - hm) / (hm * hp)) * f0 + (hm / (hp * (hm + hp))) * fp
    d2[1:-1] = 2.0 * (fm / (hm * (hm + hp)) - f0 / (hm * hp) + fp / (hp * (hm + hp)))

    # left end: nodes 0, 1, 2
    a, b = h[0], h[1]
    d1[0] = -(2 * a + b) / (a * (a + b)) * f[0] + (a + b) / (a * b) * f[1] - a / (b * (a + b)) * f[2]
    d2[0] = 2.0 * (f[0] / (a * (a + b)) - f[1] / (a * b) + f[2] / (b * (a + b)))
    # right end: nodes -3, -2, -1
    a, b = h[-2], h[-1]
    d1[-1] = b / (a * (a + b)) * f[-3] - (a + b) / (a * b) * f[-2] + (a + 2 * b) / (b * (a + b)) * f[-1]
    d2[-1] = 2.0 * (f[-3] / (a * (a + b)) - f[-2] / (a * b) + f[-1] / (b * (a + b)))
    return d1, d2


def derivatives(p: GridProfile) -> tuple[np.ndarray, np.ndarray]:
    """First and second y-derivatives of the sampled profile."""
    return grid_derivatives(p.y, p.u)


def principal_curvatures(u, u_y, u_yy, n: int) -> CurvaturePoint:
    """Principal curvatures of the surface of revolution with profile u.

    The meridional curvature is -u_yy/(1+u_y^2)^{3/2}, the rotational one
    1/(u sqrt(1+u_y^2)); both are non-negative on convex profiles.  Works
    elementwise on arrays.
    """
    u = np.asarray(u, dtype=float)
    u_y = np.asarray(u_y, dtype=float)
    u_yy = np.asarray(u_yy, dtype=float)
    if np.any(u <= 0):
        raise ProfileError("principal curvatures need u > 0")
    g = 1.0 + u_y * u_y
    lam1 = -u_yy / g**1.5
    lam2 = 1.0 / (u * np.sqrt(g))
    H = lam1 + (n - 1) * lam2
    ratio = np.abs(u * u_yy) / g
    if lam1.ndim == 0:
        return CurvaturePoint(float(lam1), float(lam2), float(H), float(ratio))
    return CurvaturePoint(lam1, lam2, H, ratio)


def _graph_mask(p: GridProfile, u_y: np.ndarray, slope_cap: float) -> np.ndarray:
    return (np.abs(u_y) <= slope_cap) & (p.u > 0)


def convexity_diagnostic(p: GridProfile, slope_cap: float = SLOPE_CAP) -> float:
    """Maximum over the grid of q_yy with q = u^2.

    Points where the graph slope exceeds ``slope_cap`` (the tips) are skipped.
    Non-positive values indicate (u^2)_yy <= 0 along the profile.
    """
    u_y, _ = derivatives(p)
    _, q_yy = grid_derivatives(p.y, p.u**2)
    mask = _graph_mask(p, u_y, slope_cap)
    if not np.any(mask):
        raise ProfileError("no graph points below the slope cap")
    return float(np.max(q_yy[mask]))


def qyy_from_zoom(rho, Z_rho, Z_rhorho):
    """(u^2)_yy expressed in zoomed tip variables: (2/Z_rho^3)(Z_rho - rho Z_rhorho)."""
    rho = np.asarray(rho, dtype=float)
    Z_rho = np.asarray(Z_rho, dtype=float)
    Z_rhorho = np.asarray(Z_rhorho, dtype=float)
    return 2.0 / Z_rho**3 * (Z_rho - rho * Z_rhorho)


def tip_limit_qyy(n: int) -> float:
    """Limit of (u^2)_yy at a soliton-like tip.

    With Z = a rho^2 + b rho^4 + ... and b = 2a^3/(n+2) the limit of
    qyy_from_zoom is -2b/a^3 = -4/(n+2).
    """
    return -4.0 / (n + 2)


def curvature_ratio_profile(p: GridProfile, slope_cap: float = SLOPE_CAP) -> np.ndarray:
    """Scale-free ratio |u u_yy|/(1+u_y^2) of the two principal curvatures.

    Entries beyond the slope cap are NaN.
    """
    u_y, u_yy = derivatives(p)
    out = np.full_like(p.u, np.nan)
    mask = _graph_mask(p, u_y, slope_cap)
    out[mask] = np.abs(p.u[mask] * u_yy[mask]) / (1.0 + u_y[mask] ** 2)
    return out


class HmaxLocation(NamedTuple):
    location: str
    value: float
    index: int


def mean_curvature_max_location(c: "ParametricCurve", rel_tie: float = 1e-9) -> HmaxLocation:
    """Where the mean curvature of a generator curve is largest.

    Returns ``tip1`` (first endpoint), ``tip2`` (last endpoint) or
    ``interior``.  An argmax within one grid cell of an axis point counts as
    that tip, and ties within ``rel_tie`` are resolved toward the tips.
    """
    from .evolve import mean_curvature

    H = mean_curvature(c)
    imax = int(np.argmax(H))
    hmax = float(H[imax])
    N = len(H)
    tol = rel_tie * abs(hmax)
    if H[0] >= hmax - tol and H[0] >= H[-1]:
        return HmaxLocation("tip1", float(H[0]), 0)
    if H[-1] >= hmax - tol:
        return HmaxLocation("tip2", float(H[-1]), N - 1)
    if imax <= 1:
        return HmaxLocation("tip1", hmax, imax)
    if imax >= N - 2:
        return HmaxLocation("tip2", hmax, imax)
    return HmaxLocation("interior", hmax, imax)
