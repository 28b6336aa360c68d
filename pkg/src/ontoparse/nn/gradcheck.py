"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable, List, Tuple

import numpy as np

from . import tensor as T
from .params import ParamStore


def check_gradients(loss_fn: Callable[[], "T.Tensor"], params: ParamStore,
                    eps: float = 1e-5, max_entries: int = 0
                    ) -> Tuple[float, List[Tuple[str, float]]]:
    """Compare backprop gradients with central differences.

    ``loss_fn`` must be a deterministic scalar function of the current
    parameter values.  Returns the worst relative error and a per-parameter
    report.  ``max_entries`` limits how many coordinates per parameter are
    probed (0 = all of them).
    """
    params.zero_grad()
    loss = loss_fn()
    T.backward(loss)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.items()}

    worst = 0.0
    report = []
    for name, t in params.items():
        flat = t.data.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        indices = range(flat.size)
        if max_entries and flat.size > max_entries:
            stride = max(1, flat.size // max_entries)
            indices = range(0, flat.size, stride)
        local_worst = 0.0
        for i in indices:
            saved = flat[i]
            flat[i] = saved + eps
            up = loss_fn().item()
            flat[i] = saved - eps
            down = loss_fn().item()
            flat[i] = saved
            numeric = (up - down) / (2.0 * eps)
            a = grad_flat[i]
            # the 1e-5 floor keeps finite-difference noise on near-zero
            # gradients from registering as relative error
            denom = max(abs(a), abs(numeric), 1e-5)
            err = abs(a - numeric) / denom
            local_worst = max(local_worst, err)
        report.append((name, local_worst))
        worst = max(worst, local_worst)
    return worst, report
