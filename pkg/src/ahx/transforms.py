"""Coordinate transformations g: Omega -> R.

Every transform evaluates (g, g', g'') at points of its domain and inverts on
the image. g' > 0 is assumed throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numkit import cumulative_integral, monotone_invert_array

SQRT_PI = math.sqrt(math.pi)
LOG_SQRT_PI = 0.5 * math.log(math.pi)


class Transform:
    """Base class; subclasses implement ``eval`` and ``inverse``."""

    domain = (-np.inf, np.inf)

    def eval(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.eval(x)[0]

    def deriv(self, x):
        return self.eval(x)[1]

    def inverse(self, y):
        raise NotImplementedError

    def inverse_deriv(self, y):
        return 1.0 / self.deriv(self.inverse(y))


class IdentityTransform(Transform):
    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return x.copy(), np.ones_like(x), np.zeros_like(x)

    def eval3(self, x):
        x = np.asarray(x, dtype=float)
        return x.copy(), np.ones_like(x), np.zeros_like(x), np.zeros_like(x)

    def inverse(self, y):
        return np.array(y, dtype=float, copy=True)

    def __repr__(self):
        return "IdentityTransform()"


@dataclass(frozen=True)
class LinearTransform(Transform):
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale * x + self.shift, np.full_like(x, self.scale), np.zeros_like(x)

    def eval3(self, x):
        g, g1, g2 = self.eval(x)
        return g, g1, g2, np.zeros_like(g2)

    def inverse(self, y):
        return (np.asarray(y, dtype=float) - self.shift) / self.scale


def power_law_eval(eps: float, beta: float, x, order: int = 2):
    """g(x) = x / (x^2 + eps)^beta and its first ``order`` derivatives."""
    x = np.asarray(x, dtype=float)
    s = x * x + eps
    u = s ** -beta
    g = x * u
    g1 = u * (1.0 - 2.0 * beta * x * x / s)
    g2 = -6.0 * beta * x * u / s + 4.0 * beta * (beta + 1.0) * x ** 3 * u / s ** 2
    if order == 2:
        return g, g1, g2
    g3 = (-6.0 * beta * u / s
          + 24.0 * beta * (beta + 1.0) * x * x * u / s ** 2
          - 8.0 * beta * (beta + 1.0) * (beta + 2.0) * x ** 4 * u / s ** 3)
    return g, g1, g2, g3


@dataclass(frozen=True)
class PowerLawTransform(Transform):
    eps: float
    beta: float

    def __post_init__(self):
        if not (self.eps > 0 and self.beta < 0.5):
            raise ValueError(f"need eps > 0 and beta < 1/2, got eps={self.eps}, beta={self.beta}")
        # g' > 0 is analytic for these parameters; confirm on a sign grid anyway
        x = np.concatenate([-np.logspace(3, -3, 200), [0.0], np.logspace(-3, 3, 200)])
        if np.any(power_law_eval(self.eps, self.beta, x)[1] <= 0):
            raise ValueError("power-law transform is not strictly increasing")

    def eval(self, x):
        return power_law_eval(self.eps, self.beta, x)

    def eval3(self, x):
        return power_law_eval(self.eps, self.beta, x, order=3)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        # |g(x)| >= |x| eps^-beta (1 + x^2/eps)^-beta gives a crude but safe bracket
        r = np.abs(y) + 1.0
        hi = r
        while np.any(self(hi) < r):
            hi = np.where(self(hi) < r, 2.0 * hi, hi)
        fd = lambda x: self.eval(x)[:2]
        return monotone_invert_array(fd, y, -hi, hi, tol=1e-13 * (1.0 + np.abs(y)))


# ---------------------------------------------------------------------------
# transport maps


def _log_erfc(z):
    """log(erfc(z)) for an array, stable for large positive z."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 25.0
    out[small] = np.log(np.array([math.erfc(v) for v in z[small]]))
    zb = z[~small]
    zi2 = 1.0 / (zb * zb)
    out[~small] = (-zb * zb - np.log(zb * SQRT_PI)
                   + np.log1p(-0.5 * zi2 + 0.75 * zi2 ** 2 - 1.875 * zi2 ** 3))
    return out


def log_gauss_cdf(x):
    """log K(x), K the CDF of the density pi^-1/2 exp(-x^2)."""
    return _log_erfc(-np.asarray(x, dtype=float)) - math.log(2.0)


def gauss_cdf_inverse(P, Q=None):
    """K^-1 evaluated from P = K(x), using Q = 1 - P on the upper half for accuracy."""
    P = np.asarray(P, dtype=float)
    Q = 1.0 - P if Q is None else np.asarray(Q, dtype=float)
    lower = P <= Q
    t = np.where(lower, P, Q)  # solve K(z) = t with z <= 0, then x = +-z
    if np.any(t <= 0):
        raise ValueError("CDF values must lie strictly inside (0, 1)")
    logt = np.log(t)

    def fd(z):
        lk = log_gauss_cdf(z)
        # d/dz log K = k / K
        return lk, np.exp(-z * z - LOG_SQRT_PI - lk)

    hi = np.zeros_like(t)
    lo = -np.sqrt(np.maximum(-logt, 0.0)) - 2.0
    z = monotone_invert_array(fd, logt, lo, hi, tol=1e-14)
    return np.where(lower, z, -z)


def _hermite_cubic(x, xs, ys, ds):
    """Piecewise cubic Hermite interpolant with linear extrapolation; returns (g, g', g'')."""
    x = np.asarray(x, dtype=float)
    n = xs.size
    i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, n - 2)
    h = xs[i + 1] - xs[i]
    t = (x - xs[i]) / h
    y0, y1, d0, d1 = ys[i], ys[i + 1], ds[i] * h, ds[i + 1] * h
    t2 = t * t
    t3 = t2 * t
    g = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * d1
    g1 = ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * d0 + (-6 * t2 + 6 * t) * y1 + (3 * t2 - 2 * t) * d1) / h
    g2 = ((12 * t - 6) * y0 + (6 * t - 4) * d0 + (-12 * t + 6) * y1 + (6 * t - 2) * d1) / (h * h)
    left = x < xs[0]
    right = x > xs[-1]
    g = np.where(left, ys[0] + ds[0] * (x - xs[0]), g)
    g = np.where(right, ys[-1] + ds[-1] * (x - xs[-1]), g)
    g1 = np.where(left, ds[0], np.where(right, ds[-1], g1))
    g2 = np.where(left | right, 0.0, g2)
    return g, g1, g2


def fritsch_carlson(xs, ys, ds):
    """Limit slopes so that the cubic Hermite interpolant is monotone.

    Slopes are only touched on intervals where the sufficient condition
    alpha^2 + beta^2 <= 9 fails. Returns (slopes, number of modified intervals).
    """
    ds = np.array(ds, dtype=float, copy=True)
    delta = np.diff(ys) / np.diff(xs)
    changed = 0
    for i in range(delta.size):
        if delta[i] <= 0:
            raise ValueError("values must be strictly increasing")
        a = ds[i] / delta[i]
        b = ds[i + 1] / delta[i]
        if a < 0 or b < 0:
            ds[i] = max(ds[i], 0.0)
            ds[i + 1] = max(ds[i + 1], 0.0)
            a, b = ds[i] / delta[i], ds[i + 1] / delta[i]
            changed += 1
        r = a * a + b * b
        if r > 9.0:
            tau = 3.0 / math.sqrt(r)
            ds[i] = tau * a * delta[i]
            ds[i + 1] = tau * b * delta[i]
            changed += 1
    return ds, changed


@dataclass(frozen=True, eq=False)
class TransportTransform(Transform):
    grid: np.ndarray
    g_values: np.ndarray
    slopes: np.ndarray
    cdf: np.ndarray = field(default=None)      # normalized P on the grid, P[-1] = 1
    density: np.ndarray = field(default=None)  # normalized p on the grid

    def __post_init__(self):
        if self.grid.size < 2 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least two points")
        if np.any(np.diff(self.g_values) <= 0):
            raise ValueError("g_values must be strictly increasing")

    def eval(self, x):
        return _hermite_cubic(x, self.grid, self.g_values, self.slopes)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        xs, gs, ds = self.grid, self.g_values, self.slopes
        x_lin_lo = xs[0] + (y - gs[0]) / ds[0]
        x_lin_hi = xs[-1] + (y - gs[-1]) / ds[-1]
        j = np.clip(np.searchsorted(gs, y, side="right") - 1, 0, xs.size - 2)
        fd = lambda x: self.eval(x)[:2]
        inside = (y >= gs[0]) & (y <= gs[-1])
        x = np.where(y < gs[0], x_lin_lo, x_lin_hi)
        if np.any(inside):
            yi = y[inside]
            ji = j[inside]
            x[inside] = monotone_invert_array(fd, yi, xs[ji], xs[ji + 1], tol=1e-14 * (1 + np.abs(yi)))
        return x


def transport_eval(t: TransportTransform, x):
    return t.eval(x)


def regularizer(x):
    with np.errstate(over="ignore"):
        r = np.exp(-np.exp(np.asarray(x, dtype=float) ** 2))
    return np.maximum(r, 1e-300)


def build_transport(grid, values, reg: str = "exp_exp") -> TransportTransform:
    """Monotone map g = K^-1 o P pushing p ~ f^2 + r onto the Gaussian density.

    The tabulated CDF is the trapezoid cumulative integral of p. To keep g
    finite at the two end nodes, each end is assigned a tail mass of half its
    adjacent cell when P is inverted; slopes at nodes are p / k(g).
    """
    x = np.asarray(grid, dtype=float)
    f = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 3 or x.shape != f.shape:
        raise ValueError("need matching 1-D grid and values with at least 3 points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing")
    if reg == "exp_exp":
        raw = f * f + regularizer(x)
    elif reg == "none":
        raw = f * f
    else:
        raise ValueError(f"unknown regularizer {reg!r}")
    cum = cumulative_integral(x, raw)
    mass = cum[-1]
    if not (np.isfinite(mass) and mass > 0):
        raise ValueError("density has zero (or non-finite) total mass")
    cells = 0.5 * (raw[1:] + raw[:-1]) * np.diff(x)
    t_lo, t_hi = 0.5 * cells[0], 0.5 * cells[-1]
    total = mass + t_lo + t_hi
    rcum = np.zeros_like(cum)
    rcum[:-1] = np.cumsum(cells[::-1])[::-1]
    P = (t_lo + cum) / total
    Q = (t_hi + rcum) / total
    if np.any(P[1:-1] <= 0) or np.any(Q[1:-1] <= 0):
        raise ValueError("CDF saturates inside the grid; extend the grid or add a regularizer")
    g = gauss_cdf_inverse(P, Q)
    if np.any(np.diff(g) <= 0):
        raise ValueError(
            "transport values are not strictly increasing (CDF resolution lost in the tails); "
            "shrink the grid to where the density is resolvable"
        )
    p = raw / total
    slopes = np.exp(np.log(p) + g * g + LOG_SQRT_PI)
    slopes, _ = fritsch_carlson(x, g, slopes)
    cdf = cum / mass
    cdf[-1] = 1.0
    return TransportTransform(x, g, slopes, cdf=cdf, density=p)


def pushforward_residual(t: TransportTransform) -> float:
    """sum_k |k(g(x_k)) g'(x_k) - p(x_k)|^2 w_k on the build grid (trapezoid w)."""
    g, g1, _ = t.eval(t.grid)
    r = np.exp(-g * g - LOG_SQRT_PI) * g1 - t.density
    w = np.zeros_like(t.grid)
    dx = np.diff(t.grid)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return float(np.sum(r * r * w))
