"""Momentum stochastic gradient descent."""
from __future__ import annotations

from typing import Dict

import numpy as np

from .params import ParamStore


class MomentumSGD:
    """v <- mu * v - lr * g;  p <- p + v."""

    def __init__(self, params: ParamStore, lr: float = 0.1, momentum: float = 0.9,
                 clip_norm: float = 5.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity: Dict[str, np.ndarray] = {}

    def step(self):
        if self.clip_norm > 0:
            total = 0.0
            for _, t in self.params.items():
                if t.grad is not None:
                    total += float(np.sum(t.grad * t.grad))
            norm = np.sqrt(total)
            factor = self.clip_norm / norm if norm > self.clip_norm else 1.0
        else:
            factor = 1.0
        for name, t in self.params.items():
            if t.grad is None:
                continue
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(t.data)
            v = self.momentum * v - self.lr * (t.grad * factor)
            self.velocity[name] = v
            t.data = t.data + v

    def halve_lr(self):
        self.lr *= 0.5
