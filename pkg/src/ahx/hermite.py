"""Hermite functions, quadrature on the real line, and coefficient-space operators."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .numkit import sym_eigs

PI_M14 = np.pi ** -0.25
SCALED_BEYOND = 35.0  # |x| above which exp(-x^2/2) nears the subnormal range


def hermite_eval(n_max: int, x) -> np.ndarray:
    """Orthonormal Hermite functions h_0..h_{n_max} at x.

    Returns an array of shape (n_max + 1,) + shape(x). Uses the normalized
    three-term recurrence, so no factorials appear.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    x = np.asarray(x, dtype=float)
    h = np.empty((n_max + 1,) + x.shape)
    if x.size and n_max > 0 and np.max(np.abs(x)) > SCALED_BEYOND:
        return _hermite_eval_scaled(n_max, x, h)
    h[0] = PI_M14 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        h[1] = np.sqrt(2.0) * x * h[0]
    for n in range(1, n_max):
        h[n + 1] = np.sqrt(2.0 / (n + 1)) * x * h[n] - np.sqrt(n / (n + 1)) * h[n - 1]
    return h


def _hermite_eval_scaled(n_max, x, out):
    # exp(-x^2/2) underflows for |x| > ~38 although h_n(x) is O(1) there once
    # n > x^2/2; run the recurrence on mantissas and carry the exponent apart
    logs = -0.5 * x * x
    a = np.full(x.shape, PI_M14)
    b = np.sqrt(2.0) * x * a
    out[0] = a * np.exp(logs)
    out[1] = b * np.exp(logs)
    for n in range(1, n_max):
        a, b = b, np.sqrt(2.0 / (n + 1)) * x * b - np.sqrt(n / (n + 1)) * a
        big = np.abs(b) > 1e100
        if np.any(big):
            r = np.where(big, np.abs(b), 1.0)
            a = a / r
            b = b / r
            logs = logs + np.log(r)
        out[n + 1] = b * np.exp(logs)
    return out


def hermite_eval_d(n_max: int, x):
    """Values and first derivatives of h_0..h_{n_max}.

    Uses h_n' = sqrt(n/2) h_{n-1} - sqrt((n+1)/2) h_{n+1}.
    """
    h = hermite_eval(n_max + 1, x)
    n = np.arange(n_max + 1).reshape((-1,) + (1,) * np.ndim(x))
    dh = -np.sqrt((n + 1) / 2.0) * h[1:]
    dh[1:] += np.sqrt(n[1:] / 2.0) * h[: n_max]
    return h[: n_max + 1], dh


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str  # "gauss_hermite_modified" | "uniform_trapezoid"

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def __len__(self) -> int:
        return self.nodes.size


@lru_cache(maxsize=16)
def _gh_nodes(K: int) -> np.ndarray:
    off = np.sqrt(np.arange(1, K) / 2.0)
    jac = np.diag(off, 1) + np.diag(off, -1)
    x, _ = sym_eigs(jac, vectors=False)
    # Newton polish on h_K(x) = 0 with h_K' = sqrt(2K) h_{K-1} - x h_K
    for _ in range(3):
        h = hermite_eval(K, x)
        x = x - h[K] / (np.sqrt(2.0 * K) * h[K - 1] - x * h[K])
    x = 0.5 * (x - x[::-1])  # exact symmetry
    return x


def gauss_hermite_modified(K: int) -> QuadratureRule:
    """K-point Gauss-Hermite rule with weights multiplied by exp(x_k^2).

    Weights come from the Christoffel form 1 / sum_n h_n(x_k)^2, which equals
    w_k exp(x_k^2) and avoids underflow of the standard weights for large K.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if K == 1:
        return QuadratureRule(np.zeros(1), np.array([np.sqrt(np.pi)]), "gauss_hermite_modified")
    x = _gh_nodes(K)
    h = hermite_eval(K - 1, x)
    w = 1.0 / np.sum(h * h, axis=0)
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(x.copy(), w, "gauss_hermite_modified")


def uniform_trapezoid(lo: float, hi: float, n: int) -> QuadratureRule:
    x = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return QuadratureRule(x, w, "uniform_trapezoid")


@dataclass(frozen=True)
class HermiteCoeffs:
    values: np.ndarray

    @property
    def N(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def project(f: Callable, N: int, q: QuadratureRule) -> HermiteCoeffs:
    """Coefficients <f, h_n>, n < N, by quadrature."""
    if N < 1:
        raise ValueError("N must be >= 1")
    fx = np.asarray(f(q.nodes), dtype=float)
    h = hermite_eval(N - 1, q.nodes)
    return HermiteCoeffs(h @ (q.weights * fx))


def reconstruct(c, x) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.size == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return np.tensordot(c, hermite_eval(c.size - 1, x), axes=1)


def ladder_coeffs(c, l: int = 1) -> HermiteCoeffs:
    """Apply the annihilation operator l times in coefficient space.

    A h_n = sqrt(n) h_{n-1}, so one application maps c_n to sqrt(n+1) c_{n+1}
    and drops the last entry.
    """
    v = np.asarray(c, dtype=float)
    if l < 0:
        raise ValueError("l must be nonnegative")
    if l > v.size:
        raise ValueError(f"cannot apply A^{l} to {v.size} coefficients")
    for _ in range(l):
        v = np.sqrt(np.arange(1, v.size)) * v[1:]
    return HermiteCoeffs(v)


def truncation_error(f: Callable, N: int, q: QuadratureRule, method: str = "parseval") -> float:
    """||f - P_N f|| with the same quadrature used for the coefficients.

    ``parseval`` uses sqrt(||f||^2 - sum c_n^2) clamped at zero; ``residual``
    integrates the pointwise residual, which avoids cancellation once the error
    falls below ~1e-8 of ||f||.
    """
    fx = np.asarray(f(q.nodes), dtype=float)
    h = hermite_eval(N - 1, q.nodes)
    c = h @ (q.weights * fx)
    if method == "parseval":
        return float(np.sqrt(max(q.integrate(fx * fx) - float(c @ c), 0.0)))
    if method == "residual":
        r = fx - c @ h
        return float(np.sqrt(q.integrate(r * r)))
    raise ValueError(f"unknown method {method!r}")
