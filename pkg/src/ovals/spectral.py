"""Gaussian-weighted Hermite machinery for the linearized rescaled flow.

The operator L f = f'' - (y/2) f' + f is self-adjoint for the inner product
<f, g> = int f g exp(-y^2/4) dy.  Its eigenfunctions are the monic
polynomials psi_k (psi_0 = 1, psi_1 = y, psi_2 = y^2 - 2, ...) obeying

    psi_{k+1} = y psi_k - 2k psi_{k-1},    L psi_k = (1 - k/2) psi_k,
    psi_k' = k psi_{k-1},                  <psi_k, psi_k> = 2^k k! 2 sqrt(pi).

Functions are handled either as callables (integrated by Gauss-Hermite
quadrature after the substitution y = 2x) or as coefficient vectors in this
basis.  The norms h, d and d* weight coefficient k by 1, 1 + k/2 and
1/(1 + k/2) respectively.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.special import roots_hermite

from .geometry import grid_derivatives

MAX_DEGREE = 40
DEFAULT_DEGREE = 24
SQRT_PI = math.sqrt(math.pi)


class SpectralError(ValueError):
    """Raised for invalid basis requests or unresolved expansions."""


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature does not settle."""


def _monic_rows(K: int) -> list[list[int]]:
    """Integer monomial coefficients (ascending powers) of psi_0..psi_K."""
    rows = [[1]]
    if K >= 1:
        rows.append([0, 1])
    for k in range(1, K):
        nxt = [0] + rows[k]
        for j, c in enumerate(rows[k - 1]):
            nxt[j] -= 2 * k * c
        rows.append(nxt)
    return rows


@dataclass(frozen=True)
class EigenBasis:
    """psi_0..psi_K with exact integer coefficients and closed-form norms."""

    max_degree: int
    int_coeffs: tuple = field(repr=False)
    polys: np.ndarray = field(repr=False)
    sq_norms: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)

    def evaluate(self, y) -> np.ndarray:
        """Values psi_k(y), shape (K + 1,) + shape(y), by the recurrence."""
        y = np.asarray(y, dtype=float)
        out = np.empty((self.max_degree + 1,) + y.shape)
        out[0] = 1.0
        if self.max_degree >= 1:
            out[1] = y
        for k in range(1, self.max_degree):
            out[k + 1] = y * out[k] - 2 * k * out[k - 1]
        return out

    def psi(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        if not 0 <= k <= self.max_degree:
            raise SpectralError(f"degree {k} outside basis 0..{self.max_degree}")
        return lambda y: self.evaluate(y)[k]

    def dpsi(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        """Derivative psi_k' = k psi_{k-1}."""
        if k == 0:
            return lambda y: np.zeros_like(np.asarray(y, dtype=float))
        return lambda y: k * self.evaluate(y)[k - 1]

    def synthesize(self, coeffs) -> Callable[[np.ndarray], np.ndarray]:
        """Callable for sum_k c_k psi_k."""
        c = _pad(coeffs, self.max_degree)
        return lambda y: np.tensordot(c, self.evaluate(y), axes=1)


def _pad(coeffs, K: int) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or len(c) > K + 1:
        raise SpectralError(f"coefficient vector must have at most {K + 1} entries")
    return np.concatenate([c, np.zeros(K + 1 - len(c))])


def build_basis(K: int = DEFAULT_DEGREE) -> EigenBasis:
    """Monic orthogonal basis up to degree K (K <= 40)."""
    if not 0 <= K <= MAX_DEGREE:
        raise SpectralError(f"K must lie in [0, {MAX_DEGREE}], got {K}")
    rows = _monic_rows(K)
    polys = np.zeros((K + 1, K + 1))
    for k, row in enumerate(rows):
        polys[k, : len(row)] = [float(c) for c in row]
    sq = np.array([2.0**k * math.factorial(k) * 2.0 * SQRT_PI for k in range(K + 1)])
    lam = 1.0 - 0.5 * np.arange(K + 1)
    return EigenBasis(K, tuple(tuple(r) for r in rows), polys, sq, lam)


def gaussian_moment(power: int) -> float:
    """int y^p exp(-y^2/4) dy = (p-1)!! 2^{p/2} 2 sqrt(pi) for even p, 0 for odd."""
    if power % 2:
        return 0.0
    m = power // 2
    dfact = math.prod(range(2 * m - 1, 0, -2)) if m else 1
    return float(dfact * 2**m) * 2.0 * SQRT_PI


# -- quadrature ---------------------------------------------------------------

@lru_cache(maxsize=None)
def hermite_rule(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for int F(y) exp(-y^2/4) dy via y = 2x."""
    x, w = roots_hermite(m)
    return 2.0 * x, 2.0 * w


class Samples(NamedTuple):
    """A function given by values on a strictly increasing grid."""

    y: np.ndarray
    values: np.ndarray


def _gauss_hermite(integrand, m: int) -> tuple[float, float]:
    y, w = hermite_rule(m)
    vals = integrand(y)
    return float(np.dot(w, vals)), float(np.dot(w, np.abs(vals)))


def integrate_weighted(integrand: Callable, tol: float = 1e-12, start: int = 64, cap: int = 4096) -> float:
    """Adaptive Gauss-Hermite integral of integrand(y) exp(-y^2/4).

    The node count doubles until two successive values agree to ``tol``
    relative to the absolute integral.
    """
    prev, _ = _gauss_hermite(integrand, start)
    m = start
    while m < cap:
        m *= 2
        cur, scale = _gauss_hermite(integrand, m)
        if abs(cur - prev) <= tol * max(1.0, scale):
            return cur
        prev = cur
    raise QuadratureError(f"Gauss-Hermite did not settle by {cap} nodes (last change {abs(cur - prev):.3e})")


def _samples_inner(f: Samples, g: Samples) -> float:
    if len(f.y) != len(g.y) or not np.array_equal(f.y, g.y):
        raise SpectralError("sampled functions must share a grid")
    y = np.asarray(f.y, dtype=float)
    return float(simpson(np.asarray(f.values) * np.asarray(g.values) * np.exp(-y * y / 4.0), x=y))


def inner(f, g, tol: float = 1e-12) -> float:
    """Weighted inner product <f, g>.

    Callables go through adaptive Gauss-Hermite quadrature; two ``Samples``
    on a common grid use composite Simpson (the grid must cover the
    effective support of the weight).
    """
    if isinstance(f, Samples) or isinstance(g, Samples):
        if not (isinstance(f, Samples) and isinstance(g, Samples)):
            raise SpectralError("mixing callables and samples is not supported")
        return _samples_inner(f, g)
    return integrate_weighted(lambda y: f(y) * g(y), tol=tol)


# -- coefficients and norms ---------------------------------------------------

class Norms(NamedTuple):
    h: float
    d: float
    dstar: float


@dataclass(frozen=True)
class SpectralDecomposition:
    """Neutral/unstable coefficients and the stable remainder of a function."""

    c0: float
    c1: float
    c2: float
    minus_norm: float
    norms: Norms
    coeffs: np.ndarray = field(repr=False)
    tail: float = 0.0


def coefficient_norms(coeffs, basis: EigenBasis) -> Norms:
    c = _pad(coeffs, basis.max_degree)
    k = np.arange(basis.max_degree + 1)
    e = c * c * basis.sq_norms
    return Norms(
        math.sqrt(e.sum()),
        math.sqrt(np.sum((1.0 + 0.5 * k) * e)),
        math.sqrt(np.sum(e / (1.0 + 0.5 * k))),
    )


def fit_coefficients(f, basis: EigenBasis, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Coefficients c_k = <f, psi_k>/<psi_k, psi_k> and the relative tail.

    The tail is 1 - sum c_k^2 |psi_k|^2 / |f|^2, the fraction of h-mass of f
    not captured by degrees <= K.  For ``Samples`` the coefficients come from
    a weighted least-squares fit on the sample grid.
    """
    K = basis.max_degree
    if isinstance(f, Samples):
        y = np.asarray(f.y, dtype=float)
        v = np.asarray(f.values, dtype=float)
        sw = np.exp(-y * y / 8.0)
        # columns scaled to unit norm to keep the system well conditioned
        P = basis.evaluate(y).T / np.sqrt(basis.sq_norms)
        sol, *_ = np.linalg.lstsq(P * sw[:, None], v * sw, rcond=None)
        c = sol / np.sqrt(basis.sq_norms)
        total = _samples_inner(f, f)
        resid = v - np.tensordot(c, basis.evaluate(y), axes=1)
        miss = _samples_inner(Samples(y, resid), Samples(y, resid))
        return c, (miss / total if total > 0 else 0.0)
    psi = basis.evaluate
    cols = []
    for k in range(K + 1):
        cols.append(integrate_weighted(lambda y, k=k: f(y) * psi(y)[k], tol=tol) / basis.sq_norms[k])
    c = np.array(cols)
    total = integrate_weighted(lambda y: f(y) ** 2, tol=tol)
    captured = float(np.sum(c * c * basis.sq_norms))
    tail = max(0.0, 1.0 - captured / total) if total > 0 else 0.0
    return c, tail


def _coefficients(f, basis: EigenBasis, max_tail: float) -> tuple[np.ndarray, float]:
    if isinstance(f, np.ndarray) or isinstance(f, (list, tuple)) and not isinstance(f, Samples):
        return _pad(f, basis.max_degree), 0.0
    c, tail = fit_coefficients(f, basis)
    if tail > max_tail:
        raise SpectralError(f"tail mass {tail:.2e} above {max_tail:.0e}; increase the basis degree")
    return c, tail


def norms(f, basis: EigenBasis | None = None, max_tail: float = 1e-6) -> Norms:
    """(h, d, d*) norms of a callable, ``Samples`` or coefficient vector."""
    basis = basis or build_basis()
    c, _ = _coefficients(f, basis, max_tail)
    return coefficient_norms(c, basis)


def project(f, basis: EigenBasis | None = None, max_tail: float = 1e-6) -> SpectralDecomposition:
    """Split f into its psi_0, psi_1, psi_2 components and the stable rest."""
    basis = basis or build_basis()
    c, tail = _coefficients(f, basis, max_tail)
    rest = c.copy()
    rest[:3] = 0.0
    return SpectralDecomposition(
        float(c[0]),
        float(c[1]) if len(c) > 1 else 0.0,
        float(c[2]) if len(c) > 2 else 0.0,
        coefficient_norms(rest, basis).h,
        coefficient_norms(c, basis),
        c,
        tail,
    )


def pr_plus(coeffs) -> np.ndarray:
    c = np.array(coeffs, dtype=float)
    c[2:] = 0.0
    return c


def pr_zero(coeffs) -> np.ndarray:
    c = np.zeros(len(coeffs))
    if len(coeffs) > 2:
        c[2] = coeffs[2]
    return c


def pr_minus(coeffs) -> np.ndarray:
    c = np.array(coeffs, dtype=float)
    c[:3] = 0.0
    return c


def multiply_y(coeffs) -> np.ndarray:
    """Coefficients of y f, using y psi_k = psi_{k+1} + 2k psi_{k-1}."""
    c = np.asarray(coeffs, dtype=float)
    out = np.zeros(len(c) + 1)
    for k, ck in enumerate(c):
        out[k + 1] += ck
        if k:
            out[k - 1] += 2 * k * ck
    return out


def differentiate(coeffs) -> np.ndarray:
    """Coefficients of f', using psi_k' = k psi_{k-1}."""
    c = np.asarray(coeffs, dtype=float)
    if len(c) <= 1:
        return np.zeros(1)
    return c[1:] * np.arange(1, len(c))


def squared_h_norm(coeffs) -> float:
    """|f|_h^2 for a coefficient vector of any length."""
    c = np.asarray(coeffs, dtype=float)
    sq = np.array([2.0**k * math.factorial(k) * 2.0 * SQRT_PI for k in range(len(c))])
    return float(np.sum(c * c * sq))


# -- the operator L -----------------------------------------------------------

def L_coeffs(coeffs) -> np.ndarray:
    """L in the eigenbasis: c_k -> (1 - k/2) c_k."""
    c = np.asarray(coeffs, dtype=float)
    return c * (1.0 - 0.5 * np.arange(len(c)))


def L_monomial(coeffs: Sequence) -> list[Fraction]:
    """L on ascending monomial coefficients, in exact rational arithmetic.

    y^j maps to j(j-1) y^{j-2} + (1 - j/2) y^j.
    """
    c = [Fraction(v) for v in coeffs]
    out = [Fraction(0)] * len(c)
    for j, cj in enumerate(c):
        out[j] += (1 - Fraction(j, 2)) * cj
        if j >= 2:
            out[j - 2] += j * (j - 1) * cj
    return out


def L_samples(y, f) -> np.ndarray:
    """Pointwise L f from samples via three-point stencils."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    d1, d2 = grid_derivatives(y, f)
    return d2 - 0.5 * y * d1 + f


def apply_L(f, y=None):
    """Apply L to a polynomial, a monomial coefficient list or samples.

    ``numpy.polynomial.Polynomial`` in, Polynomial out; a sequence of exact
    numbers (monomial coefficients) returns exact Fractions; samples need
    the grid ``y``.
    """
    if y is not None:
        return L_samples(y, f)
    if isinstance(f, np.polynomial.Polynomial):
        yp = np.polynomial.Polynomial([0.0, 1.0])
        return f.deriv(2) - 0.5 * yp * f.deriv(1) + f
    return L_monomial(f)


# -- windowed norms -----------------------------------------------------------

def sliding_sup_norm(taus, values, window: float = 1.0) -> float:
    """sup over sigma of (int_{sigma - window}^{sigma} value(s)^2 ds)^{1/2}.

    Trapezoidal integration; only right endpoints whose window lies inside
    the sampled range are considered.
    """
    t = np.asarray(taus, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size == 0:
        raise SpectralError("empty series")
    if t.shape != v.shape:
        raise SpectralError("taus and values differ in length")
    if np.any(np.diff(t) <= 0):
        raise SpectralError("series must be strictly increasing in tau")
    if t[-1] - t[0] < window * (1 - 1e-12):
        raise SpectralError("series shorter than one window")
    if np.max(np.diff(t)) > window / 10 * (1 + 1e-9):
        raise SpectralError("sampling step exceeds window/10")
    return float(np.sqrt(np.max(windowed_integrals(t, v * v, window)[1])))


def windowed_integrals(t: np.ndarray, f: np.ndarray, window: float) -> tuple[np.ndarray, np.ndarray]:
    """(sigma, int_{sigma-window}^{sigma} f) at nodes sigma with full windows."""
    F = np.concatenate([[0.0], cumulative_trapezoid(f, t)])
    ok = t >= t[0] + window - 1e-12 * max(1.0, abs(t[0]))
    sig = t[ok]
    return sig, F[ok] - np.interp(sig - window, t, F)


# -- cutoffs ------------------------------------------------------------------

def smoothstep(s) -> np.ndarray:
    """Quintic step: 0 for s <= 0, 1 for s >= 1, C^2 in between."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def cylindrical_window(theta: float, n: int) -> tuple[float, float]:
    """z-interval on which the cylindrical cutoff drops from 1 to 0."""
    return math.sqrt(2.0 - theta**2 / (n - 1)), math.sqrt(2.0 - theta**2 / (4.0 * (n - 1)))


def make_cutoff(kind: str, theta: float, tau: float, n: int = 2, width: float | None = None) -> Callable:
    """Cutoff functions for the cylindrical and tip regions.

    ``cylindrical`` is a function of y: 1 for |z| below the inner bound and 0
    beyond the outer bound, z = y/sqrt|tau|.  ``tip`` is a function of u: 1
    on u <= theta and 0 on u >= 2 theta.  ``transition`` is the indicator of
    theta/2 <= u <= theta with edges smoothed over ``width`` (default
    theta/50).
    """
    if not 0 < theta < 0.5:
        raise SpectralError(f"theta must lie in (0, 1/2), got {theta}")
    if tau >= 0:
        raise SpectralError("cutoffs need tau < 0")
    if kind == "cylindrical":
        z1, z2 = cylindrical_window(theta, n)
        st = math.sqrt(abs(tau))
        return lambda y: 1.0 - smoothstep((np.abs(np.asarray(y, dtype=float)) / st - z1) / (z2 - z1))
    if kind == "tip":
        return lambda u: 1.0 - smoothstep((np.asarray(u, dtype=float) - theta) / theta)
    if kind == "transition":
        w = width if width is not None else theta / 50.0
        lo, hi = theta / 2.0, theta

        def chi(u):
            u = np.asarray(u, dtype=float)
            return smoothstep((u - lo) / w + 0.5) * (1.0 - smoothstep((u - hi) / w + 0.5))

        return chi
    raise SpectralError(f"unknown cutoff kind {kind!r}")


def cutoff_derivative_sup(theta: float, tau: float, n: int = 2, samples: int = 20001) -> tuple[float, float]:
    """sup |d/dy phi_C| and sup |d^2/dy^2 phi_C| on a dense grid."""
    z1, z2 = cylindrical_window(theta, n)
    st = math.sqrt(abs(tau))
    y = np.linspace(z1 * st, z2 * st, samples)
    phi = make_cutoff("cylindrical", theta, tau, n)(y)
    d1, d2 = grid_derivatives(y, phi)
    return float(np.max(np.abs(d1))), float(np.max(np.abs(d2[1:-1])))


# -- serialization ------------------------------------------------------------

def basis_to_dict(basis: EigenBasis, quadrature_nodes: int | None = None) -> dict:
    out = {
        "max_degree": basis.max_degree,
        "int_coeffs": [list(r) for r in basis.int_coeffs],
        "sq_norms": [float(v) for v in basis.sq_norms],
        "eigenvalues": [float(v) for v in basis.eigenvalues],
    }
    if quadrature_nodes:
        y, w = hermite_rule(quadrature_nodes)
        out["quadrature"] = {"nodes": [float(v) for v in y], "weights": [float(v) for v in w]}
    return out


def dump_basis_json(basis: EigenBasis, path, quadrature_nodes: int | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(basis_to_dict(basis, quadrature_nodes), fh, indent=1, sort_keys=True)
        fh.write("\n")
