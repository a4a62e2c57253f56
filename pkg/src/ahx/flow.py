"""Invertible residual network g(x) = s * (F_P o ... o F_1)(x) + t on the real line.

Each block is F(x) = x + r(x) with r(x) = W3 lip(W2 lip(W1 x + b1) + b2) + b3,
lip the lipswish activation. Capping every weight matrix at spectral norm
L < 1 makes r a contraction, so F is invertible by fixed-point iteration and
F' >= 1 - L^3 > 0.

Derivatives with respect to x are carried as jets: arrays of shape
(order + 1, width, n) holding value, d1, d2 (and d3 for the numpy path).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .numkit import ConvergenceError, spectral_norm
from .transforms import Transform

LAYERS = ("W1", "W2", "W3")


@dataclass(frozen=True)
class Jet2:
    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @classmethod
    def variable(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x, np.ones_like(x), np.zeros_like(x))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lipswish_derivs(z, order: int = 2):
    """lipswish(z) = z sigmoid(z) / 1.1 and its derivatives up to ``order`` (<= 4)."""
    s = _sigmoid(z)
    q = s * (1.0 - s)
    out = [z * s / 1.1, (s + z * q) / 1.1]
    if order >= 2:
        out.append((2.0 * q + z * q * (1.0 - 2.0 * s)) / 1.1)
    if order >= 3:
        c3 = 1.0 - 6.0 * s + 6.0 * s * s
        out.append((3.0 * q * (1.0 - 2.0 * s) + z * q * c3) / 1.1)
    if order >= 4:
        out.append((4.0 * q * c3 + z * q * (1.0 - 2.0 * s) * (1.0 - 12.0 * s + 12.0 * s * s)) / 1.1)
    return out


def lipswish(x: Jet2) -> Jet2:
    f0, f1, f2 = lipswish_derivs(x.value)
    return Jet2(f0, f1 * x.d1, f2 * x.d1 ** 2 + f1 * x.d2)


@dataclass
class FlowParams:
    blocks: list  # dicts with W1 (w,1), b1 (w,), W2 (w,w), b2 (w,), W3 (1,w), b3 (1,)
    lipschitz_cap: float = 0.97
    scale: float = 1.0
    shift: float = 0.0

    @property
    def P(self) -> int:
        return len(self.blocks)

    @property
    def width(self) -> int:
        return self.blocks[0]["W1"].shape[0] if self.blocks else 0

    def to_dict(self) -> dict:
        d = {f"{i}.{k}": v for i, b in enumerate(self.blocks) for k, v in b.items()}
        d["scale"] = np.array(self.scale)
        d["shift"] = np.array(self.shift)
        return d

    @classmethod
    def from_dict(cls, d: dict, lipschitz_cap: float = 0.97) -> "FlowParams":
        P = 1 + max((int(k.split(".")[0]) for k in d if "." in k), default=-1)
        blocks = [{k: np.array(d[f"{i}.{k}"], dtype=float) for k in ("W1", "b1", "W2", "b2", "W3", "b3")}
                  for i in range(P)]
        return cls(blocks, lipschitz_cap, float(d.get("scale", 1.0)), float(d.get("shift", 0.0)))


def init_flow(P: int = 10, width: int = 8, cap: float = 0.97, seed: int = 0,
              scale: float = 1.0, shift: float = 0.0) -> FlowParams:
    """Weights uniform in [-0.1, 0.1], biases zero: a near-identity start."""
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(P):
        blocks.append({
            "W1": rng.uniform(-0.1, 0.1, (width, 1)),
            "b1": np.zeros(width),
            "W2": rng.uniform(-0.1, 0.1, (width, width)),
            "b2": np.zeros(width),
            "W3": rng.uniform(-0.1, 0.1, (1, width)),
            "b3": np.zeros(1),
        })
    return normalize_weights(FlowParams(blocks, cap, scale, shift))


def normalize_weights(p: FlowParams) -> FlowParams:
    """Rescale each weight matrix whose spectral norm exceeds the cap."""
    cap = p.lipschitz_cap
    blocks = []
    for b in p.blocks:
        nb = dict(b)
        for k in LAYERS:
            sigma = spectral_norm(b[k])
            # the slack keeps a second pass from rescaling again (idempotence)
            if sigma > cap * (1.0 + 1e-9):
                nb[k] = b[k] * (cap / sigma)
        blocks.append(nb)
    return FlowParams(blocks, cap, p.scale, p.shift)


# ---------------------------------------------------------------------------
# forward passes (numpy)


def _residual(b, x):
    z = b["W1"][:, 0:1] * x + b["b1"][:, None]
    z = b["W2"] @ lipswish_derivs(z, 0)[0] + b["b2"][:, None]
    return (b["W3"] @ lipswish_derivs(z, 0)[0])[0] + b["b3"][0]


def _linear_jet(W, b, J):
    out = W @ J
    out[0] += b[:, None]
    return out


def _lipswish_jet(J):
    order = J.shape[0] - 1
    f = lipswish_derivs(J[0], order)
    out = np.empty_like(J)
    out[0] = f[0]
    if order >= 1:
        out[1] = f[1] * J[1]
    if order >= 2:
        out[2] = f[2] * J[1] ** 2 + f[1] * J[2]
    if order >= 3:
        out[3] = f[3] * J[1] ** 3 + 3.0 * f[2] * J[1] * J[2] + f[1] * J[3]
    return out


def flow_jet(p: FlowParams, x, order: int = 2) -> np.ndarray:
    """Array of shape (order + 1,) + x.shape with g and its x-derivatives."""
    x = np.asarray(x, dtype=float)
    shape = x.shape
    J = np.zeros((order + 1, 1, x.size))
    J[0, 0] = x.ravel()
    if order >= 1:
        J[1, 0] = 1.0
    for b in p.blocks:
        z = _lipswish_jet(_linear_jet(b["W1"], b["b1"], J))
        z = _lipswish_jet(_linear_jet(b["W2"], b["b2"], z))
        J = J + _linear_jet(b["W3"], b["b3"], z)
    out = p.scale * J[:, 0]
    out[0] += p.shift
    return out.reshape((order + 1,) + shape)


def flow_forward_jet(p: FlowParams, x) -> Jet2:
    g = flow_jet(p, x, 2)
    return Jet2(g[0], g[1], g[2])


def flow_forward(p: FlowParams, x):
    x = np.asarray(x, dtype=float)
    h = x.ravel().copy()
    for b in p.blocks:
        h = h + _residual(b, h)
    return (p.scale * h + p.shift).reshape(x.shape)


def flow_inverse(p: FlowParams, y, tol: float = 1e-12, max_iter: int = 2000, return_iters: bool = False):
    """Invert block by block with x <- y_b - r(x).

    Each block is solved until the fixed-point step is below a tolerance
    scaled so that the accumulated forward residual stays below ``tol``.
    """
    y = np.asarray(y, dtype=float)
    h = (y.ravel() - p.shift) / p.scale
    iters = []
    P = p.P
    for i in range(P - 1, -1, -1):
        b = p.blocks[i]
        # an input error e in block i grows by at most (1 + L)^(P-1-i) * scale downstream
        tol_i = tol / (abs(p.scale) * (1.0 + p.lipschitz_cap) ** (P - 1 - i)) / 4.0
        x = h.copy()
        for k in range(1, max_iter + 1):
            x_new = h - _residual(b, x)
            step = np.abs(x_new - x)
            x = x_new
            floor = 4.0 * np.finfo(float).eps * (np.abs(h) + 1.0)
            if np.all(step <= np.maximum(tol_i, floor)):
                break
        else:
            res = float(np.max(np.abs(x + _residual(b, x) - h)))
            raise ConvergenceError(
                f"fixed-point inversion of block {i} did not converge in {max_iter} iterations; "
                f"residual {res:.3e} (Lipschitz constraint violated?)"
            )
        iters.append(k)
        h = x
    x = h.reshape(y.shape)
    if return_iters:
        return x, iters[::-1]
    return x


# ---------------------------------------------------------------------------
# tape version for parameter gradients


def _linear_jet_var(W: ad.Var, b: ad.Var, J: ad.Var) -> ad.Var:
    w, bv, j = W.value, b.value, J.value
    out = _linear_jet(w, bv, j)

    def dW(g):
        return g[0] @ j[0].T + g[1] @ j[1].T + g[2] @ j[2].T

    def db(g):
        return g[0].sum(axis=1)

    def dJ(g):
        return w.T @ g

    return ad.custom(out, [(W, dW), (b, db), (J, dJ)])


def _lipswish_jet_var(J: ad.Var) -> ad.Var:
    j = J.value
    z0, z1, z2 = j
    f0, f1, f2, f3 = lipswish_derivs(z0, 3)
    z1sq = z1 * z1
    out = np.empty_like(j)
    out[0] = f0
    out[1] = f1 * z1
    out[2] = f2 * z1sq + f1 * z2

    def vjp(g):
        g0, g1, g2 = g
        d = np.empty_like(g)
        d[0] = g0 * f1 + g1 * f2 * z1 + g2 * (f3 * z1sq + f2 * z2)
        d[1] = g1 * f1 + 2.0 * g2 * f2 * z1
        d[2] = g2 * f1
        return d

    return ad.custom(out, [(J, vjp)])


def flow_jet_var(pv: dict, x, P: int) -> ad.Var:
    """Jet (3, n) of g on the tape; ``pv`` maps FlowParams.to_dict() keys to Vars."""
    x = np.asarray(x, dtype=float).ravel()
    J0 = np.zeros((3, 1, x.size))
    J0[0, 0] = x
    J0[1, 0] = 1.0
    J = ad.Var(J0)
    for i in range(P):
        z = _lipswish_jet_var(_linear_jet_var(pv[f"{i}.W1"], pv[f"{i}.b1"], J))
        z = _lipswish_jet_var(_linear_jet_var(pv[f"{i}.W2"], pv[f"{i}.b2"], z))
        J = J + _linear_jet_var(pv[f"{i}.W3"], pv[f"{i}.b3"], z)
    out = J[:, 0, :] * pv["scale"]
    shift = np.zeros((3, 1))
    shift[0, 0] = 1.0
    return out + pv["shift"] * shift


def flow_backprop(p: FlowParams, x, upstream) -> FlowParams:
    """Gradient of sum_k up0_k g(x_k) + up1_k g'(x_k) + up2_k g''(x_k) w.r.t. all parameters."""
    up = np.asarray(upstream, dtype=float).reshape(3, -1)
    d = p.to_dict()
    leaves = {k: ad.Var(v) for k, v in d.items()}
    J = flow_jet_var(leaves, x, p.P)
    loss = (J * up).sum()
    ad.backward(loss)
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in leaves.items()}
    return FlowParams.from_dict(grads, p.lipschitz_cap)


# ---------------------------------------------------------------------------


class FlowTransform(Transform):
    def __init__(self, params: FlowParams, tol: float = 1e-12):
        self.params = params
        self.tol = tol

    def eval(self, x):
        g = flow_jet(self.params, x, 2)
        return g[0], g[1], g[2]

    def eval3(self, x):
        g = flow_jet(self.params, x, 3)
        return g[0], g[1], g[2], g[3]

    def __call__(self, x):
        return flow_forward(self.params, x)

    def inverse(self, y):
        return flow_inverse(self.params, y, tol=self.tol)


def save_flow(path, p: FlowParams) -> None:
    doc = {
        "P": p.P,
        "widths": [1, p.width, p.width, 1],
        "lipschitz_cap": p.lipschitz_cap,
        "activation": "lipswish",
        "params": {k: np.asarray(v).tolist() for k, v in p.to_dict().items()},
    }
    # json writes floats with repr(), which round-trips exactly
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_flow(path) -> FlowParams:
    with open(path) as fh:
        doc = json.load(fh)
    params = {k: np.array(v, dtype=float) for k, v in doc["params"].items()}
    p = FlowParams.from_dict(params, float(doc["lipschitz_cap"]))
    if p.P != doc["P"]:
        raise ValueError(f"checkpoint declares P={doc['P']} but holds {p.P} blocks")
    return p
