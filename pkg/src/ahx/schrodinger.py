"""Galerkin eigensolves for -T d^2/dx^2 + V(x) in adaptive Hermite bases.

With chi_n = (h_n o g) sqrt(g') and y = g(x), the matrix elements become

    H_mn = T sum_k W_k a_m(y_k) a_n(y_k) + sum_k W_k V(x_k) h_m(y_k) h_n(y_k),
    a_n  = h_n'(y) g'(x) + h_n(y) g''(x) / (2 g'(x)),   x_k = g^-1(y_k),

on Gauss-Hermite nodes y_k. Only g', g'' and V at x_k depend on the
transform, which keeps parameter gradients cheap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .diagnostics import fit_algebraic
from .families import Family
from .hermite import QuadratureRule, gauss_hermite_modified, hermite_eval, hermite_eval_d
from .numkit import sym_eigs
from .optimize import TrainResult, train
from .transforms import IdentityTransform, Transform

# CODATA 2018 exact / recommended values
HBAR = 1.054571817e-34  # J s
H_PLANCK = 6.62607015e-34  # J s
C_LIGHT = 2.99792458e10  # cm / s


@dataclass(frozen=True)
class MorseParams:
    D_e: float = 42301.0  # cm^-1
    a_M: float = 2.1440  # 1/Angstrom
    mu: float = 1.5743e-27  # kg
    hbar: float = HBAR
    kinetic_prefactor: float = 0.5  # kinetic operator is -prefactor * hbar^2/mu d^2/dr^2

    def __post_init__(self):
        for name in ("D_e", "a_M", "mu", "hbar", "kinetic_prefactor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def T(self) -> float:
        """Kinetic coefficient in cm^-1 Angstrom^2."""
        joule_m2 = self.kinetic_prefactor * self.hbar ** 2 / self.mu
        return joule_m2 / (H_PLANCK * C_LIGHT) * 1e20

    @property
    def lam(self) -> float:
        return math.sqrt(self.D_e / self.T) / self.a_M

    @property
    def n_bound(self) -> int:
        # bound levels satisfy m < lam - 1/2
        return int(math.ceil(self.lam - 0.5))

    @property
    def hbar_omega(self) -> float:
        return 2.0 * self.a_M * math.sqrt(self.D_e * self.T)

    @property
    def ell(self) -> float:
        """Harmonic length (T / (D a^2))^(1/4) in Angstrom; xi = (r - r_e) / ell."""
        return (self.T / (self.D_e * self.a_M ** 2)) ** 0.25

    @property
    def alpha(self) -> float:
        return self.a_M * self.ell

    @property
    def T_xi(self) -> float:
        return self.T / self.ell ** 2

    def potential(self, xi):
        e = np.exp(-self.alpha * np.asarray(xi, dtype=float))
        return self.D_e * (1.0 - e) ** 2

    def potential_deriv(self, xi):
        e = np.exp(-self.alpha * np.asarray(xi, dtype=float))
        return 2.0 * self.D_e * self.alpha * e * (1.0 - e)

    def ground_state(self, xi):
        """Normalized Psi_0 in the xi coordinate: z^(lam-1/2) exp(-z/2), z = 2 lam exp(-alpha xi)."""
        xi = np.asarray(xi, dtype=float)
        lam = self.lam
        logz = math.log(2.0 * lam) - self.alpha * xi
        z = np.exp(logz)
        lognorm = 0.5 * (math.lgamma(2.0 * lam - 1.0) - math.log(self.alpha))
        return np.exp((lam - 0.5) * logz - 0.5 * z - lognorm)


def morse_reference(params: MorseParams, m: int) -> float:
    """E_m = hbar w (m + 1/2) - T a^2 (m + 1/2)^2 for the implemented kinetic prefactor."""
    if m < 0 or m >= params.n_bound:
        raise ValueError(f"level {m} is not bound (bound levels: 0..{params.n_bound - 1}, lambda={params.lam:.4f})")
    v = m + 0.5
    return params.hbar_omega * v - params.T * params.a_M ** 2 * v * v


def harmonic_potential(x):
    return 0.5 * np.asarray(x, dtype=float) ** 2


@dataclass(frozen=True)
class GalerkinProblem:
    potential: Callable
    kinetic: float
    transform: Transform = field(default_factory=IdentityTransform)
    quadrature: Optional[QuadratureRule] = None
    potential_deriv: Optional[Callable] = None

    def rule(self) -> QuadratureRule:
        return self.quadrature if self.quadrature is not None else gauss_hermite_modified(100)


class AssemblyError(RuntimeError):
    pass


def _mapped_nodes(p: GalerkinProblem):
    q = p.rule()
    g = p.transform
    if q.kind == "gauss_hermite_modified":
        y = q.nodes
        x = g.inverse(y)
        _, g1, g2 = g.eval(x)
        return x, y, g1, g2, q.weights
    if q.kind == "uniform_trapezoid":
        # nodes live on Omega; fold the Jacobian into the weights
        x = q.nodes
        y, g1, g2 = g.eval(x)
        return x, y, g1, g2, q.weights * g1
    raise ValueError(f"unsupported quadrature kind {q.kind!r}")


def assemble(p: GalerkinProblem, N: int, rtol: float = 1e-10) -> np.ndarray:
    x, y, g1, g2, w = _mapped_nodes(p)
    h, dh = hermite_eval_d(N - 1, y)
    a = dh * g1 + h * (g2 / (2.0 * g1))
    v = np.asarray(p.potential(x), dtype=float)
    H = p.kinetic * (a * w) @ a.T + (h * (w * v)) @ h.T
    if not np.all(np.isfinite(H)):
        raise AssemblyError("non-finite matrix entries; the quadrature does not resolve the basis")
    scale = np.max(np.abs(H))
    asym = np.max(np.abs(H - H.T))
    if asym > rtol * max(scale, 1e-300):
        raise AssemblyError(f"assembled matrix not symmetric (max asymmetry {asym:.3e}, scale {scale:.3e})")
    return 0.5 * (H + H.T)


def galerkin_eigs(p: GalerkinProblem, N: int, vectors: bool = False):
    return sym_eigs(assemble(p, N), vectors=vectors)


# ---------------------------------------------------------------------------
# Rayleigh training


def rayleigh_loss(p: GalerkinProblem, family: Family, params: dict, C, penalty: float = 1e3):
    """tr(C^T H C) + penalty ||C^T C - I||^2 and its gradients w.r.t. params and C.

    The quadrature nodes x_k = g^-1(y_k) move with the parameters; their
    contribution enters through the implicit derivative dx_k = -dg(x_k) / g'(x_k).
    """
    q = p.rule()
    if q.kind != "gauss_hermite_modified":
        raise ValueError("rayleigh_loss needs a Gauss-Hermite rule")
    C = np.asarray(C, dtype=float)
    N, M = C.shape
    y, W = q.nodes, q.weights
    g = family.transform(params)
    x = g.inverse(y)
    jet = family.jet(params, x, order=3)
    g1, g2, g3 = jet[1], jet[2], jet[3]
    h, dh = hermite_eval_d(N - 1, y)

    G1 = ad.Var(g1)
    G2 = ad.Var(g2)
    Vv = ad.Var(np.asarray(p.potential(x), dtype=float))
    Cv = ad.Var(C)
    B = ad.Var(h.T) @ Cv  # (K, M): basis values times C
    D = ad.Var(dh.T) @ Cv
    AC = D * G1.reshape(-1, 1) + B * (G2 / (2.0 * G1)).reshape(-1, 1)
    kin = ((ad.square(AC).sum(axis=1)) * W).sum() * p.kinetic
    pot = ((ad.square(B).sum(axis=1)) * (Vv * W)).sum()
    gram = Cv.T @ Cv - np.eye(M)
    loss = kin + pot + penalty * ad.square(gram).sum()
    ad.backward(loss)

    LG1 = G1.grad if G1.grad is not None else np.zeros_like(g1)
    LG2 = G2.grad if G2.grad is not None else np.zeros_like(g2)
    LV = Vv.grad if Vv.grad is not None else np.zeros_like(g1)
    grads = {}
    if params:
        if p.potential_deriv is None:
            raise ValueError("parameter gradients need the potential derivative")
        X = LG1 * g2 + LG2 * g3 + LV * np.asarray(p.potential_deriv(x), dtype=float)
        up = np.stack([-X / g1, LG1, LG2])
        grads = family.backprop(params, x, up)
    return float(loss.value), grads, Cv.grad


def orthonormalize(C) -> np.ndarray:
    """Symmetric (Loewdin) orthonormalization C (C^T C)^-1/2."""
    C = np.asarray(C, dtype=float)
    w, V = sym_eigs(C.T @ C)
    if np.min(w) <= 0:
        raise ValueError("columns of C are linearly dependent")
    return C @ (V / np.sqrt(w)) @ V.T


@dataclass
class SweepResult:
    Ns: np.ndarray
    energies: np.ndarray  # (len(Ns), M)
    reference: np.ndarray  # (M,)
    params: dict
    C: Optional[np.ndarray] = None
    trace: Optional[TrainResult] = None

    @property
    def rel_errors(self) -> np.ndarray:
        return np.abs(self.energies - self.reference) / np.abs(self.reference)

    def exponents(self, floor: float = 1e-14, min_points: int = 3) -> np.ndarray:
        out = np.full(self.reference.size, np.nan)
        for m in range(self.reference.size):
            try:
                out[m] = fit_algebraic(self.Ns, self.rel_errors[:, m], floor, min_points).l
            except ValueError:
                pass
        return out


def scaled_problem(p: GalerkinProblem, unit: float) -> GalerkinProblem:
    """The same problem with energies measured in ``unit``."""
    if unit == 1.0:
        return p
    dv = None if p.potential_deriv is None else (lambda x: p.potential_deriv(x) / unit)
    return GalerkinProblem(lambda x: p.potential(x) / unit, p.kinetic / unit, p.transform, p.quadrature, dv)


def train_rayleigh(p: GalerkinProblem, family: Family, N_train: int = 23, M: int = 23,
                   iters: int = 0, lr: float = 1e-3, penalty: float = 1e3,
                   params: Optional[dict] = None, energy_unit: float = 1.0):
    """Jointly train (theta, C) on tr(C^T H C); C starts from the Ritz vectors.

    The loss is evaluated with energies divided by ``energy_unit`` so that the
    orthonormality penalty is commensurate with the trace.
    """
    p = scaled_problem(p, energy_unit)
    params = family.init_params() if params is None else params
    params = family.project(params)
    H = assemble(GalerkinProblem(p.potential, p.kinetic, family.transform(params), p.quadrature), N_train)
    _, V = sym_eigs(H)
    C0 = V[:, :M]
    if iters <= 0:
        return params, C0, None

    keys = list(params)

    class _Joint(Family):
        def init_params(self_):
            return {**params, "C": C0}

        def project(self_, d):
            out = family.project({k: d[k] for k in keys})
            out["C"] = d["C"]
            return out

    def loss_fn(d):
        theta = {k: d[k] for k in keys}
        val, gt, gC = rayleigh_loss(p, family, theta, d["C"], penalty)
        gt = dict(gt)
        gt["C"] = gC
        return val, gt

    res = train(_Joint(), loss_fn, lr, iters)
    theta = {k: res.params[k] for k in keys}
    return theta, orthonormalize(res.params["C"]), res


def train_then_sweep(potential, kinetic, reference, family: Family, N_train: int = 23, N_sweep=(23,),
                     iters: int = 0, lr: float = 1e-3, K_train: int = 100, K_sweep: int = 400,
                     penalty: float = 1e3, potential_deriv=None, params: Optional[dict] = None,
                     energy_unit: float = 1.0) -> SweepResult:
    """Train at N_train with a K_train-point rule, then solve for every N in N_sweep."""
    reference = np.asarray(reference, dtype=float)
    M = reference.size
    ptrain = GalerkinProblem(potential, kinetic, IdentityTransform(), gauss_hermite_modified(K_train), potential_deriv)
    theta, C, trace = train_rayleigh(ptrain, family, N_train, M, iters, lr, penalty, params, energy_unit)
    g = family.transform(theta)
    psweep = GalerkinProblem(potential, kinetic, g, gauss_hermite_modified(K_sweep), potential_deriv)
    Ns = np.asarray(sorted(N_sweep), dtype=int)
    E = np.empty((Ns.size, M))
    for i, N in enumerate(Ns):
        if N < M:
            raise ValueError(f"N={N} is smaller than the number of levels {M}")
        E[i] = galerkin_eigs(psweep, int(N))[0][:M]
    return SweepResult(Ns, E, reference, theta, C, trace)
