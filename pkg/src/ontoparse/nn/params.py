"""Named parameter store with seeded uniform initialization."""
from __future__ import annotations

from typing import Dict, Iterator, Tuple

import numpy as np

from .tensor import Tensor, param

INIT_RANGE = 0.08


class ParamStore:
    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self.tensors: Dict[str, Tensor] = {}

    def new(self, name: str, *shape: int) -> Tensor:
        if name in self.tensors:
            raise KeyError(f"parameter {name!r} already exists")
        data = self.rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
        self.tensors[name] = param(data)
        return self.tensors[name]

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(sorted(self.tensors.items()))

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        for name, data in arrays.items():
            if name in self.tensors:
                if self.tensors[name].data.shape != data.shape:
                    raise ValueError(f"shape mismatch for {name!r}")
                self.tensors[name].data = data.astype(np.float64)
            else:
                self.tensors[name] = param(data)
