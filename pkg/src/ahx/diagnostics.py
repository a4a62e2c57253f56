"""Convergence-rate fits and decay moments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numkit import LineFit, linfit

FLOOR = 1e-14


@dataclass(frozen=True)
class ConvergenceReport:
    Ns: np.ndarray
    errors: np.ndarray
    model: str  # "algebraic" | "exponential"
    fit: LineFit
    params: dict
    excluded: tuple = ()
    warnings: tuple = ()

    @property
    def l(self) -> float:
        return self.params["l"]

    @property
    def nu(self) -> float:
        return self.params["nu"]

    @property
    def kappa(self) -> float:
        return self.params["kappa"]


def _prepare(Ns, errors, floor, min_points):
    Ns = np.asarray(Ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if Ns.shape != errors.shape or Ns.ndim != 1:
        raise ValueError("Ns and errors must be 1-D and of equal length")
    if np.any(np.diff(Ns) <= 0):
        raise ValueError("Ns must be strictly increasing")
    keep = np.isfinite(errors) & (errors > floor)
    excluded = tuple(int(n) for n in Ns[~keep])
    warnings = ()
    if excluded:
        warnings = (f"excluded {len(excluded)} point(s) at or below the floor {floor:g}: N = {list(excluded)}",)
    if keep.sum() < min_points:
        raise ValueError(f"need at least {min_points} errors above {floor:g}, have {int(keep.sum())}")
    return Ns, errors, keep, excluded, warnings


def fit_algebraic(Ns, errors, floor: float = FLOOR, min_points: int = 3) -> ConvergenceReport:
    """error ~ c N^-l, fitted by least squares on (log N, log error)."""
    Ns, errors, keep, excluded, warnings = _prepare(Ns, errors, floor, min_points)
    fit = linfit(np.log(Ns[keep]), np.log(errors[keep]))
    return ConvergenceReport(Ns, errors, "algebraic", fit, {"l": -fit.slope}, excluded, warnings)


def fit_exponential(Ns, errors, floor: float = FLOOR, min_points: int = 3) -> ConvergenceReport:
    """error ~ exp(-nu N^kappa), fitted on (log N, log(-log error)).

    If any error is >= 1 the sequence is divided by its first entry (which is
    then dropped), so that -log(error) is positive.
    """
    Ns, errors, keep, excluded, warnings = _prepare(Ns, errors, floor, min_points)
    N = Ns[keep]
    e = errors[keep]
    if e[-1] >= e[0]:
        raise ValueError("errors do not decrease; no exponential rate to fit")
    normalized = False
    if np.any(e >= 1.0):
        e = e[1:] / e[0]
        N = N[1:]
        normalized = True
        if np.any(e >= 1.0):
            raise ValueError("errors are not below the first error after normalization")
        if e.size < 2:
            raise ValueError("too few points left after normalization")
    fit = linfit(np.log(N), np.log(-np.log(e)))
    params = {"kappa": fit.slope, "nu": math.exp(fit.intercept), "normalized": normalized}
    return ConvergenceReport(Ns, errors, "exponential", fit, params, excluded, warnings)


def gaussian_moment(s):
    """sqrt(int |x|^s exp(-x^2) dx) = sqrt(Gamma((s + 1) / 2))."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return np.sqrt(np.array([math.gamma(0.5 * (v + 1.0)) for v in s]))


def decay_moments(g, f, s_grid, grid, tail_tol: float = 1e-6) -> np.ndarray:
    """I(s) = sqrt(int |y|^s (W_{g^-1} f)(y)^2 dy) on a dense trapezoid grid.

    The integral is taken in the original coordinate, where it reads
    int |g(x)|^s f(x)^2 dx; ``g`` may be None for the identity.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 3 or np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing with at least 3 points")
    fx2 = np.asarray(f(x), dtype=float) ** 2
    y = x if g is None else np.asarray(g(x), dtype=float)
    ay = np.abs(y)
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    out = []
    for s in np.atleast_1d(s_grid):
        integrand = fx2 * (ay ** s if s != 0 else 1.0)
        total = float(np.sum(w * integrand))
        edge = float(integrand[0] * w[0] + integrand[1] * w[1] + integrand[-2] * w[-2] + integrand[-1] * w[-1])
        if not total > 0 or edge > tail_tol * total:
            raise ValueError(
                f"moment integral at s={s:g} has not converged within the grid "
                f"(edge contribution {edge:.3e} of total {total:.3e}); widen the grid"
            )
        out.append(math.sqrt(total))
    return np.array(out)
