"""Weighted composition / composition operators and adaptive Hermite projections.

Integrals over Omega are evaluated with a rule that lives either on R (Gauss-
Hermite nodes y_k, mapped back through g^-1) or directly on Omega (uniform
trapezoid nodes). In the first case

    int_Omega F(x) dx = int_R F(g^-1(y)) (g^-1)'(y) dy ~ sum_k W_k F(x_k) / g'(x_k),

with x_k = g^-1(y_k), and h_n(g(x_k)) is evaluated as h_n(y_k).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hermite import QuadratureRule, hermite_eval
from .transforms import IdentityTransform, Transform

KINDS = ("orthonormal", "riesz")


@dataclass(frozen=True)
class AdaptiveBasis:
    transform: Transform
    N: int
    kind: str = "orthonormal"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")


@dataclass(frozen=True)
class SpectralApproximation:
    basis: AdaptiveBasis
    coeffs: np.ndarray
    form: str = "primal"  # "dual": expansion in (C_g h_n) g'


def wg_apply(g: Transform, f, x):
    """(W_g f)(x) = f(g(x)) sqrt(g'(x))."""
    gx, g1, _ = g.eval(x)
    return np.asarray(f(gx), dtype=float) * np.sqrt(g1)


def cg_apply(g: Transform, f, x):
    """(C_g f)(x) = f(g(x))."""
    return np.asarray(f(g(x)), dtype=float)


def pullback(g: Transform, f):
    """W_{g^-1} f as a callable on R."""

    def u(y):
        x = g.inverse(y)
        return np.asarray(f(x), dtype=float) / np.sqrt(g.deriv(x))

    return u


def omega_rule(q: QuadratureRule, g: Transform):
    """Nodes x_k in Omega, their images y_k = g(x_k), g'(x_k) and Omega-weights."""
    if q.kind == "gauss_hermite_modified":
        y = q.nodes
        x = g.inverse(y)
        g1 = g.deriv(x)
        return x, y, g1, q.weights / g1
    if q.kind == "uniform_trapezoid":
        x = q.nodes
        y, g1, _ = g.eval(x)
        return x, y, g1, q.weights
    raise ValueError(f"unsupported quadrature kind {q.kind!r}")


def _check_riesz(g1):
    if not np.all(np.isfinite(g1)) or np.min(g1) <= 0:
        raise ValueError("g' is not bounded away from zero on the quadrature nodes; no Riesz basis")


def riesz_constants(g: Transform, q: QuadratureRule):
    """(k, K) = (min g', max g') over the quadrature nodes."""
    _, _, g1, _ = omega_rule(q, g)
    _check_riesz(g1)
    return float(np.min(g1)), float(np.max(g1))


def adaptive_project_on(basis: AdaptiveBasis, f, q: QuadratureRule) -> SpectralApproximation:
    """Coefficients <f, W_g h_n>_Omega."""
    if basis.kind != "orthonormal":
        raise ValueError("adaptive_project_on needs an orthonormal basis")
    x, y, g1, w = omega_rule(q, basis.transform)
    h = hermite_eval(basis.N - 1, y)
    return SpectralApproximation(basis, h @ (w * np.asarray(f(x), dtype=float) * np.sqrt(g1)))


def adaptive_project_riesz(basis: AdaptiveBasis, f, q: QuadratureRule) -> SpectralApproximation:
    """Riesz coefficients <f, (C_g h_n) g'>_Omega = <C_{g^-1} f, h_n>_R."""
    if basis.kind != "riesz":
        raise ValueError("adaptive_project_riesz needs a riesz basis")
    x, y, g1, w = omega_rule(q, basis.transform)
    _check_riesz(g1)
    h = hermite_eval(basis.N - 1, y)
    return SpectralApproximation(basis, h @ (w * np.asarray(f(x), dtype=float) * g1))


def dual_form_project(basis: AdaptiveBasis, f, q: QuadratureRule) -> SpectralApproximation:
    """Coefficients <f, C_g h_n>_Omega for an expansion in the dual basis (C_g h_n) g'."""
    if basis.kind != "riesz":
        raise ValueError("dual_form_project needs a riesz basis")
    x, y, g1, w = omega_rule(q, basis.transform)
    _check_riesz(g1)
    h = hermite_eval(basis.N - 1, y)
    return SpectralApproximation(basis, h @ (w * np.asarray(f(x), dtype=float)), form="dual")


def _synth(a: SpectralApproximation, y, g1):
    c = np.asarray(a.coeffs, dtype=float)
    s = c @ hermite_eval(c.size - 1, y)
    if a.basis.kind == "orthonormal":
        return s * np.sqrt(g1)
    if a.form == "dual":
        return s * g1
    return s


def reconstruct(a: SpectralApproximation, x):
    x = np.asarray(x, dtype=float)
    if np.asarray(a.coeffs).size == 0:
        return np.zeros_like(x)
    y, g1, _ = a.basis.transform.eval(x)
    return _synth(a, y, g1)


def approximation_error(a: SpectralApproximation, f, q: QuadratureRule) -> float:
    """||f - a||_{L2(Omega)} with the same rule used for the coefficients."""
    x, y, g1, w = omega_rule(q, a.basis.transform)
    r = np.asarray(f(x), dtype=float) - _synth(a, y, g1)
    return float(np.sqrt(np.sum(w * r * r)))


def _tail_on_R(u_vals, N, q: QuadratureRule) -> float:
    h = hermite_eval(N - 1, q.nodes)
    c = h @ (q.weights * u_vals)
    r = u_vals - c @ h
    return float(np.sqrt(np.sum(q.weights * r * r)))


def pullback_error(g: Transform, f, N: int, q: QuadratureRule) -> float:
    """||W_{g^-1} f - P_N W_{g^-1} f||_{L2(R)}; q must be a rule on R."""
    return _tail_on_R(pullback(g, f)(q.nodes), N, q)


def riesz_bound(g: Transform, f, N: int, q: QuadratureRule, k: float | None = None) -> float:
    """k^-1/2 ||C_{g^-1} f - P_N C_{g^-1} f||, the bound on the Riesz projection error."""
    x = g.inverse(q.nodes)
    if k is None:
        g1 = g.deriv(x)
        _check_riesz(g1)
        k = float(np.min(g1))
    return _tail_on_R(np.asarray(f(x), dtype=float), N, q) / np.sqrt(k)


def dual_bound(g: Transform, f, N: int, q: QuadratureRule, K: float | None = None,
               corrected: bool = True) -> float:
    """Bound on the dual-form projection error.

    The tail of u = C_{g^-1}(f / g') controls the error only up to the factor
    K^1/2 with K = sup g'; ``corrected=False`` drops that factor.
    """
    x = g.inverse(q.nodes)
    g1 = g.deriv(x)
    _check_riesz(g1)
    tail = _tail_on_R(np.asarray(f(x), dtype=float) / g1, N, q)
    if not corrected:
        return tail
    if K is None:
        K = float(np.max(g1))
    return np.sqrt(K) * tail
