"""Small dense numerics used throughout the package.

Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class ConvergenceError(RuntimeError):
    pass


def _round_robin(n: int):
    """Pairings for one cyclic sweep; each round is a set of disjoint (p, q) pairs."""
    players = list(range(n + (n % 2)))
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def sym_eigs(m, tol: float = 1e-12, max_sweeps: int = 100, vectors: bool = True):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations within one round act on disjoint index pairs, so they are applied
    together. Returns ascending eigenvalues and orthonormal eigenvector columns
    (None when ``vectors`` is false).
    """
    a = np.array(m, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValueError(f"expected a nonempty square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12 * max(scale, 1e-300)):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    vt = np.eye(n) if vectors else None
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), vt

    rounds = _round_robin(n)
    mask = ~np.eye(n, dtype=bool)
    offdiag = lambda: float(np.linalg.norm(a[mask]))
    off = offdiag()
    extra = 1  # one more sweep after the threshold; convergence is quadratic
    for _ in range(max_sweeps):
        if off <= tol * scale:
            if extra == 0:
                break
            extra -= 1
        for p, q in rounds:
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            theta = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            at = np.abs(theta)
            big = at > 1e150
            root = np.sqrt(np.where(big, 1.0, theta) ** 2 + 1.0)
            t = np.where(
                active,
                np.sign(theta + (theta == 0)) / np.where(big, 2.0 * at, at + root),
                0.0,
            )
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # A' = R^T (R^T A)^T for symmetric A: two contiguous row updates
            for _ in range(2):
                ap = a[p]
                aq = a[q]
                a[p] = c[:, None] * ap - s[:, None] * aq
                a[q] = s[:, None] * ap + c[:, None] * aq
                a = np.ascontiguousarray(a.T)
            a[p, q] = 0.0
            a[q, p] = 0.0
            if vt is not None:
                vp = vt[p]
                vq = vt[q]
                vt[p] = c[:, None] * vp - s[:, None] * vq
                vt[q] = s[:, None] * vp + c[:, None] * vq
        off = offdiag()
    else:
        if off > tol * scale:
            raise ConvergenceError(
                f"Jacobi iteration did not converge in {max_sweeps} sweeps; "
                f"off-diagonal norm {off:.3e} (matrix norm {scale:.3e})"
            )
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    if vt is None:
        return w[order], None
    return w[order], vt[order].T.copy()


def spectral_norm(w, iters: int = 100, seed: int = 0) -> float:
    """Largest singular value by power iteration on w^T w from a seeded start."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if w.size == 0:
        raise ValueError("empty matrix")
    if not np.any(w):
        return 0.0
    if min(w.shape) == 1:
        return float(np.linalg.norm(w))
    u = np.random.default_rng(seed).standard_normal(w.shape[1])
    u /= np.linalg.norm(u)
    sigma = 0.0
    for _ in range(iters):
        z = w @ u
        sigma = float(np.linalg.norm(z))
        if sigma == 0.0:
            return 0.0
        u = w.T @ z
        u /= np.linalg.norm(u)
    return float(np.linalg.norm(w @ u))


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    residual_norm: float  # root-mean-square residual


def linfit(xs, ys) -> LineFit:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 2:
        raise ValueError("need at least two (x, y) pairs of equal length")
    xm = xs.mean()
    dx = xs - xm
    sxx = float(dx @ dx)
    if sxx <= 1e-300 * max(1.0, float(xs @ xs)):
        raise ValueError("degenerate abscissae: all x equal")
    slope = float(dx @ (ys - ys.mean())) / sxx
    intercept = float(ys.mean() - slope * xm)
    res = ys - (slope * xs + intercept)
    return LineFit(slope, intercept, float(np.sqrt(np.mean(res * res))))


def cumulative_integral(xs, fs) -> np.ndarray:
    """Cumulative trapezoid sums starting at 0."""
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if xs.shape != fs.shape or xs.ndim != 1:
        raise ValueError("xs and fs must be 1-D arrays of equal length")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("grid must be strictly increasing")
    if np.any(fs < 0):
        raise ValueError("samples must be nonnegative")
    out = np.zeros_like(fs)
    out[1:] = np.cumsum(0.5 * (fs[1:] + fs[:-1]) * np.diff(xs))
    return out


def monotone_invert(
    f: Callable[[float], float],
    y: float,
    bracket: tuple[float, float],
    tol: float = 1e-12,
    df: Optional[Callable[[float], float]] = None,
    max_iter: int = 200,
) -> float:
    """Solve f(x) = y for increasing f on a bracket.

    Bisection keeps a valid bracket; when df is given, Newton steps that stay
    inside it are taken instead of halving.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    flo, fhi = f(lo) - y, f(hi) - y
    if flo > 0 or fhi < 0:
        raise ValueError(f"target {y!r} outside [{f(lo)!r}, {f(hi)!r}] on bracket {bracket}")
    if abs(flo) <= tol:
        return lo
    if abs(fhi) <= tol:
        return hi
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x) - y
        if abs(fx) <= tol:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        step = None
        if df is not None:
            d = df(x)
            if d > 0:
                cand = x - fx / d
                if lo < cand < hi:
                    step = cand
        x_new = step if step is not None else 0.5 * (lo + hi)
        if x_new == x or hi - lo <= 4 * np.finfo(float).eps * max(abs(lo), abs(hi), 1e-300):
            return x_new
        x = x_new
    return x


def monotone_invert_array(fd, y, lo, hi, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Vectorized version of monotone_invert.

    ``fd(x)`` returns (f(x), f'(x)) for an array x; ``lo``/``hi`` are
    elementwise brackets with f(lo) <= y <= f(hi). Newton steps are accepted
    only when they land strictly inside the current bracket.
    """
    y = np.asarray(y, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), y.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), y.shape).copy()
    flo = fd(lo)[0] - y
    fhi = fd(hi)[0] - y
    if np.any(flo > tol) or np.any(fhi < -tol):
        bad = int(np.argmax((flo > tol) | (fhi < -tol)))
        raise ValueError(f"target {y.flat[bad]!r} outside bracket [{lo.flat[bad]!r}, {hi.flat[bad]!r}]")
    x = 0.5 * (lo + hi)
    done = np.zeros(y.shape, dtype=bool)
    out = x.copy()
    for _ in range(max_iter):
        fx, dx = fd(x)
        fx = fx - y
        conv = (np.abs(fx) <= tol) & ~done
        out[conv] = x[conv]
        done |= conv
        if done.all():
            return out
        neg = fx < 0
        lo = np.where(neg, x, lo)
        hi = np.where(neg, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = x - fx / dx
        ok = (dx > 0) & (cand > lo) & (cand < hi)
        x_new = np.where(ok, cand, 0.5 * (lo + hi))
        tiny = (x_new == x) | (hi - lo <= 4 * np.finfo(float).eps * np.maximum(np.abs(lo), np.abs(hi)))
        stop = tiny & ~done
        out[stop] = x_new[stop]
        done |= stop
        x = x_new
    out[~done] = x[~done]
    return out
