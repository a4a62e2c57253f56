"""Minimal reverse-mode tape over numpy arrays.

Each Var records its parents together with a vector-Jacobian closure. Ops
broadcast like numpy; gradients are summed back to the operand shapes.
Calling ``backward`` on a scalar Var fills ``.grad`` on every Var that
contributed to it.
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _lift(v) -> "Var":
    return v if isinstance(v, Var) else Var(np.asarray(v, dtype=float))


class Var:
    __slots__ = ("value", "grad", "parents")
    __array_priority__ = 100.0  # make ndarray <op> Var dispatch to Var

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents  # tuple of (Var, vjp)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    # arithmetic
    def __add__(self, other):
        o = _lift(other)
        return Var(self.value + o.value,
                   ((self, lambda g, s=self.shape: _unbroadcast(g, s)),
                    (o, lambda g, s=o.shape: _unbroadcast(g, s))))

    __radd__ = __add__

    def __neg__(self):
        return Var(-self.value, ((self, lambda g: -g),))

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        o = _lift(other)
        a, b = self.value, o.value
        return Var(a * b,
                   ((self, lambda g: _unbroadcast(g * b, a.shape)),
                    (o, lambda g: _unbroadcast(g * a, b.shape))))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _lift(other)
        a, b = self.value, o.value
        q = a / b
        return Var(q,
                   ((self, lambda g: _unbroadcast(g / b, a.shape)),
                    (o, lambda g: _unbroadcast(-g * q / b, b.shape))))

    def __rtruediv__(self, other):
        return _lift(other) / self

    def __pow__(self, p):
        if isinstance(p, Var):
            raise TypeError("use exp(b * log(a)) for variable exponents")
        a = self.value
        return Var(a ** p, ((self, lambda g: g * p * a ** (p - 1)),))

    def __matmul__(self, other):
        o = _lift(other)
        a, b = self.value, o.value
        return Var(a @ b, ((self, lambda g: _mm_grad_a(g, a, b)), (o, lambda g: _mm_grad_b(g, a, b))))

    def __rmatmul__(self, other):
        return _lift(other) @ self

    def __getitem__(self, idx):
        shape = self.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return out

        return Var(self.value[idx], ((self, vjp),))

    @property
    def T(self):
        return Var(self.value.T, ((self, lambda g: g.T),))

    def sum(self, axis=None):
        shape = self.shape

        def vjp(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        return Var(self.value.sum(axis=axis), ((self, vjp),))

    def reshape(self, *shape):
        old = self.shape
        return Var(self.value.reshape(*shape), ((self, lambda g: g.reshape(old)),))


def _mm_grad_a(g, a, b):
    if b.ndim == 1:
        return np.multiply.outer(g, b) if a.ndim == 2 else g * b
    return g @ b.T if a.ndim == 2 else b @ g


def _mm_grad_b(g, a, b):
    if a.ndim == 1:
        return np.multiply.outer(a, g) if b.ndim == 2 else g * a
    return a.T @ g if b.ndim == 2 else g @ a


# elementwise functions

def exp(x) -> Var:
    x = _lift(x)
    e = np.exp(x.value)
    return Var(e, ((x, lambda g: g * e),))


def log(x) -> Var:
    x = _lift(x)
    v = x.value
    return Var(np.log(v), ((x, lambda g: g / v),))


def sqrt(x) -> Var:
    x = _lift(x)
    r = np.sqrt(x.value)
    # d sqrt at 0 is taken as 0 so exact-fit losses have zero gradient
    safe = np.where(r > 0, r, 1.0)
    return Var(r, ((x, lambda g: np.where(r > 0, g / (2.0 * safe), 0.0)),))


def square(x) -> Var:
    x = _lift(x)
    v = x.value
    return Var(v * v, ((x, lambda g: 2.0 * g * v),))


def stack(xs, axis=0) -> Var:
    xs = [_lift(x) for x in xs]
    out = np.stack([x.value for x in xs], axis=axis)
    parents = tuple(
        (x, (lambda g, i=i: np.take(g, i, axis=axis))) for i, x in enumerate(xs)
    )
    return Var(out, parents)


def custom(value, parents) -> Var:
    """Wrap a fused op: ``parents`` is a sequence of (Var, vjp)."""
    return Var(value, tuple(parents))


def backward(out: Var, seed=None) -> None:
    """Accumulate d out / d v into v.grad for every ancestor v."""
    order = []
    seen = set()
    stack_ = [(out, False)]
    while stack_:
        v, done = stack_.pop()
        if done:
            order.append(v)
            continue
        if id(v) in seen:
            continue
        seen.add(id(v))
        stack_.append((v, True))
        for p, _ in v.parents:
            if id(p) not in seen:
                stack_.append((p, False))
    for v in order:
        v.grad = None
    out.grad = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=float)
    for v in reversed(order):
        if v.grad is None:
            continue
        for p, vjp in v.parents:
            g = vjp(v.grad)
            p.grad = g if p.grad is None else p.grad + g


def value_and_grad(fn, params: dict):
    """Evaluate fn on Var-wrapped params; return (value, dict of gradients)."""
    leaves = {k: Var(np.array(v, dtype=float, copy=True)) for k, v in params.items()}
    out = fn(leaves)
    backward(out)
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in leaves.items()}
    return float(out.value), grads
