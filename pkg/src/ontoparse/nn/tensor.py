"""Reverse-mode autodiff over dense float64 numpy arrays.

Every differentiable operation builds a node in a tape; ``backward`` walks
the tape in reverse topological order and accumulates gradients into the
``grad`` slot of each tensor.  Shapes are 1-D vectors and 2-D matrices; the
scale is desk-size, so clarity and checkable gradients win over speed.
"""
from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, data, parents: Tuple["Tensor", ...] = (),
                 backward: Optional[Callable[[np.ndarray], None]] = None,
                 requires_grad: bool = True):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def add_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def item(self) -> float:
        return float(self.data)


def param(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def const(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=False)


def backward(loss: Tensor):
    """Accumulate d(loss)/d(tensor) for every tensor in the tape."""
    order: List[Tensor] = []
    seen = set()

    def visit(t: Tensor):
        stack = [(t, iter(t.parents))]
        seen.add(id(t))
        while stack:
            node, parents = stack[-1]
            advanced = False
            for p in parents:
                if id(p) not in seen:
                    seen.add(id(p))
                    stack.append((p, iter(p.parents)))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()

    visit(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, (a, b))

    def bw(g):
        a.add_grad(g)
        b.add_grad(g)
    out._backward = bw
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data, (a, b))

    def bw(g):
        a.add_grad(g)
        b.add_grad(-g)
    out._backward = bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data, (a, b))

    def bw(g):
        a.add_grad(g * b.data)
        b.add_grad(g * a.data)
    out._backward = bw
    return out


def scale(a: Tensor, k: float) -> Tensor:
    out = Tensor(a.data * k, (a,))

    def bw(g):
        a.add_grad(g * k)
    out._backward = bw
    return out


def matvec(w: Tensor, x: Tensor) -> Tensor:
    out = Tensor(w.data @ x.data, (w, x))

    def bw(g):
        w.add_grad(np.outer(g, x.data))
        x.add_grad(w.data.T @ g)
    out._backward = bw
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(np.dot(a.data, b.data), (a, b))

    def bw(g):
        a.add_grad(g * b.data)
        b.add_grad(g * a.data)
    out._backward = bw
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, (a,))

    def bw(g):
        a.add_grad(g * (1.0 - y * y))
    out._backward = bw
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(y, (a,))

    def bw(g):
        a.add_grad(g * y * (1.0 - y))
    out._backward = bw
    return out


def concat(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    out = Tensor(np.concatenate([p.data for p in parts]), tuple(parts))
    sizes = [p.data.shape[0] for p in parts]

    def bw(g):
        offset = 0
        for p, size in zip(parts, sizes):
            p.add_grad(g[offset:offset + size])
            offset += size
    out._backward = bw
    return out


def narrow(a: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(a.data[start:stop], (a,))

    def bw(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        a.add_grad(full)
    out._backward = bw
    return out


def stack_scalars(scalars: Sequence[Tensor]) -> Tensor:
    scalars = list(scalars)
    out = Tensor(np.array([s.data for s in scalars]), tuple(scalars))

    def bw(g):
        for i, s in enumerate(scalars):
            s.add_grad(np.asarray(g[i]))
    out._backward = bw
    return out


def softmax(a: Tensor) -> Tensor:
    shifted = a.data - np.max(a.data)
    e = np.exp(shifted)
    y = e / e.sum()
    out = Tensor(y, (a,))

    def bw(g):
        a.add_grad(y * (g - np.dot(y, g)))
    out._backward = bw
    return out


def weighted_sum(weights: Tensor, vectors: Sequence[Tensor]) -> Tensor:
    """sum_i weights[i] * vectors[i]."""
    vectors = list(vectors)
    data = np.zeros_like(vectors[0].data)
    for i, v in enumerate(vectors):
        data += weights.data[i] * v.data
    out = Tensor(data, (weights, *vectors))

    def bw(g):
        wgrad = np.array([np.dot(v.data, g) for v in vectors])
        weights.add_grad(wgrad)
        for i, v in enumerate(vectors):
            v.add_grad(weights.data[i] * g)
    out._backward = bw
    return out


def average(vectors: Sequence[Tensor]) -> Tensor:
    vectors = list(vectors)
    k = float(len(vectors))
    out = Tensor(sum(v.data for v in vectors) / k, tuple(vectors))

    def bw(g):
        for v in vectors:
            v.add_grad(g / k)
    out._backward = bw
    return out


def row(matrix: Tensor, index: int) -> Tensor:
    """Embedding lookup: one row of a parameter matrix."""
    out = Tensor(matrix.data[index], (matrix,))

    def bw(g):
        full = np.zeros_like(matrix.data)
        full[index] = g
        matrix.add_grad(full)
    out._backward = bw
    return out


def masked_log_softmax(logits: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Log-probabilities with masked-out entries fixed at -inf.

    The mask is a boolean array marking legal entries; gradients only flow
    through legal positions.
    """
    data = logits.data
    if mask is None:
        mask = np.ones_like(data, dtype=bool)
    if not mask.any():
        raise ValueError("all positions masked")
    neg = np.full_like(data, -np.inf)
    masked = np.where(mask, data, neg)
    m = masked.max()
    z = np.log(np.exp(masked - m).sum()) + m
    logp = masked - z
    out = Tensor(logp, (logits,))
    probs = np.where(mask, np.exp(logp), 0.0)

    def bw(g):
        total = g.sum()
        logits.add_grad(np.where(mask, g - probs * total, 0.0))
    out._backward = bw
    return out


def pick(vector: Tensor, index: int) -> Tensor:
    out = Tensor(vector.data[index], (vector,))

    def bw(g):
        full = np.zeros_like(vector.data)
        full[index] = g
        vector.add_grad(full)
    out._backward = bw
    return out


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def add_many(tensors: Sequence[Tensor]) -> Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = add(total, t)
    return total


def dropout(a: Tensor, drop_prob: float, rng: np.random.Generator,
            train: bool) -> Tensor:
    """Inverted dropout; identity when not training or drop_prob == 0."""
    if not train or drop_prob <= 0.0:
        return a
    keep = 1.0 - drop_prob
    mask = (rng.random(a.data.shape) < keep) / keep
    out = Tensor(a.data * mask, (a,))

    def bw(g):
        a.add_grad(g * mask)
    out._backward = bw
    return out
