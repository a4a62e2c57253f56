"""Trainable transform families.

A family maps a flat parameter dict to a Transform and can evaluate the jet
(g, g', g'') of that transform on the operation tape, so any loss written in
terms of the jet gets exact parameter gradients.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .flow import FlowParams, FlowTransform, flow_jet, flow_jet_var, init_flow, normalize_weights
from .transforms import IdentityTransform, LinearTransform, PowerLawTransform, power_law_eval


class Family:
    name = "base"

    def init_params(self) -> dict:
        return {}

    def jet_var(self, pv: dict, x) -> ad.Var:
        raise NotImplementedError

    def jet(self, params: dict, x, order: int = 2) -> np.ndarray:
        raise NotImplementedError

    def project(self, params: dict) -> dict:
        return params

    def transform(self, params: dict):
        raise NotImplementedError

    def backprop(self, params: dict, x, upstream) -> dict:
        """Gradient of sum(upstream * jet) for an upstream array of shape (3, n)."""
        up = np.asarray(upstream, dtype=float).reshape(3, -1)
        leaves = {k: ad.Var(np.array(v, dtype=float)) for k, v in params.items()}
        if not leaves:
            return {}
        out = (self.jet_var(leaves, x) * up).sum()
        ad.backward(out)
        return {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in leaves.items()}


def _const_jet(x, g, g1, g2):
    return np.stack([g, g1, g2])


class IdentityFamily(Family):
    name = "identity"

    def jet_var(self, pv, x):
        x = np.asarray(x, dtype=float).ravel()
        return ad.Var(_const_jet(x, x, np.ones_like(x), np.zeros_like(x)))

    def jet(self, params, x, order=2):
        x = np.asarray(x, dtype=float).ravel()
        out = np.zeros((order + 1, x.size))
        out[0] = x
        if order >= 1:
            out[1] = 1.0
        return out

    def transform(self, params):
        return IdentityTransform()


class LinearFamily(Family):
    name = "linear"

    def __init__(self, scale: float = 1.0, shift: float = 0.0):
        self.scale0 = scale
        self.shift0 = shift

    def init_params(self):
        return {"scale": np.array(self.scale0), "shift": np.array(self.shift0)}

    def jet_var(self, pv, x):
        x = np.asarray(x, dtype=float).ravel()
        a, b = pv["scale"], pv["shift"]
        rows = np.zeros((3, x.size))
        rows[0] = x
        e1 = np.zeros((3, 1))
        e1[1] = 1.0
        e0 = np.zeros((3, 1))
        e0[0] = 1.0
        # (a x + b, a, 0)
        return a * (ad.Var(rows) + ad.Var(e1)) + b * ad.Var(e0)

    def jet(self, params, x, order=2):
        x = np.asarray(x, dtype=float).ravel()
        a, b = float(params["scale"]), float(params["shift"])
        out = np.zeros((order + 1, x.size))
        out[0] = a * x + b
        if order >= 1:
            out[1] = a
        return out

    def project(self, params):
        return {"scale": np.array(max(float(params["scale"]), 1e-8)), "shift": np.array(float(params["shift"]))}

    def transform(self, params):
        return LinearTransform(float(params["scale"]), float(params["shift"]))


class PowerLawFamily(Family):
    """g(x) = x (x^2 + eps)^-beta; eps may be held fixed."""

    name = "powerlaw"

    def __init__(self, eps: float = 1.0, beta: float = 0.0, fix_eps: bool = False):
        self.eps0 = eps
        self.beta0 = beta
        self.fix_eps = fix_eps

    def init_params(self):
        if self.fix_eps:
            return {"beta": np.array(self.beta0)}
        return {"eps": np.array(self.eps0), "beta": np.array(self.beta0)}

    def _eps(self, params):
        return self.eps0 if self.fix_eps else params["eps"]

    def jet_var(self, pv, x):
        x = np.asarray(x, dtype=float).ravel()
        eps = self._eps(pv)
        beta = pv["beta"]
        s = x * x + eps
        u = ad.exp(-beta * ad.log(s))
        g = x * u
        g1 = u * (1.0 - 2.0 * beta * (x * x) / s)
        g2 = -6.0 * beta * x * u / s + 4.0 * beta * (beta + 1.0) * (x ** 3) * u / (s * s)
        return ad.stack([g, g1, g2])

    def jet(self, params, x, order=2):
        eps = float(self._eps(params))
        vals = power_law_eval(eps, float(params["beta"]), np.asarray(x, dtype=float).ravel(), order=max(order, 2))
        return np.stack(vals[: order + 1])

    def project(self, params):
        out = {"beta": np.array(min(float(params["beta"]), 0.49))}
        if not self.fix_eps:
            out["eps"] = np.array(max(float(params["eps"]), 1e-6))
        return out

    def transform(self, params):
        return PowerLawTransform(float(self._eps(params)), float(params["beta"]))


class FlowFamily(Family):
    """iResNet with an affine output layer g = s * flow(x) + t."""

    name = "iresnet"

    def __init__(self, P: int = 10, width: int = 8, cap: float = 0.97, seed: int = 0,
                 scale: float = 1.0, shift: float = 0.0):
        self.P = P
        self.width = width
        self.cap = cap
        self.seed = seed
        self.scale0 = scale
        self.shift0 = shift

    def init_params(self):
        return init_flow(self.P, self.width, self.cap, self.seed, self.scale0, self.shift0).to_dict()

    def to_flow(self, params) -> FlowParams:
        return FlowParams.from_dict(params, self.cap)

    def jet_var(self, pv, x):
        return flow_jet_var(pv, x, self.P)

    def jet(self, params, x, order=2):
        return flow_jet(self.to_flow(params), np.asarray(x, dtype=float).ravel(), order)

    def project(self, params):
        p = normalize_weights(self.to_flow(params))
        p.scale = max(p.scale, 1e-8)
        return p.to_dict()

    def transform(self, params):
        return FlowTransform(self.to_flow(params))
