"""Recurrent cell and attention primitives."""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .tensor import Tensor


def lstm_step(w: Tensor, b: Tensor, x: Tensor, h_prev: Tensor,
              c_prev: Tensor) -> Tuple[Tensor, Tensor]:
    """One recurrent step.

    A single stacked weight matrix produces the input, forget and output
    gates plus the cell candidate from [h_{t-1}, x_t]; the memory and hidden
    state follow the usual gated update.  Bias terms are included.
    """
    hidden = h_prev.shape[0]
    pre = T.add(T.matvec(w, T.concat([h_prev, x])), b)
    i = T.sigmoid(T.narrow(pre, 0, hidden))
    f = T.sigmoid(T.narrow(pre, hidden, 2 * hidden))
    o = T.sigmoid(T.narrow(pre, 2 * hidden, 3 * hidden))
    c_hat = T.tanh(T.narrow(pre, 3 * hidden, 4 * hidden))
    c = T.add(T.mul(f, c_prev), T.mul(i, c_hat))
    h = T.mul(o, T.tanh(c))
    return h, c


def lstm_init(hidden: int) -> Tuple[Tensor, Tensor]:
    zero = np.zeros(hidden)
    return T.const(zero), T.const(zero)


def soft_attention(keys: Sequence[Tensor], query: Tensor, w_b: Tensor,
                   w_s: Tensor, v: Tensor,
                   projected_keys: Optional[List[Tensor]] = None
                   ) -> Tuple[Tensor, Tensor]:
    """Additive attention: weights over keys and their weighted sum.

    ``projected_keys`` may carry precomputed ``w_b @ key`` tensors so the
    projection is shared across decode steps.
    """
    if not keys:
        raise ValueError("attention over no keys")
    if projected_keys is None:
        projected_keys = [T.matvec(w_b, k) for k in keys]
    qs = T.matvec(w_s, query)
    scores = [T.dot(v, T.tanh(T.add(pk, qs))) for pk in projected_keys]
    alpha = T.softmax(T.stack_scalars(scores))
    context = T.weighted_sum(alpha, list(keys))
    return alpha, context


def project_keys(keys: Sequence[Tensor], w_b: Tensor) -> List[Tensor]:
    return [T.matvec(w_b, k) for k in keys]
