"""Adam over a named parameter set."""

from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .autodiff import GradientSet, Tensor
from .errors import CheckpointError


class Adam:
    """Bias-corrected Adam. Parameters absent from a gradient set get a zero gradient.

    Updates rebind ``param.data`` to a fresh array; nothing is modified in place,
    so arrays handed out before a step stay valid.
    """

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params: Dict[str, Tensor] = dict(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, grads: GradientSet, lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.step_count += 1
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, param in self.params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(param.data)
            g = g.astype(param.dtype, copy=False)
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            update = lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
            param.data = (param.data - update).astype(param.dtype, copy=False)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        out = {}
        for name in self.params:
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray], step_count: int) -> None:
        for name, param in self.params.items():
            for slot, store in (("m", self.m), ("v", self.v)):
                key = f"{slot}/{name}"
                if key not in arrays:
                    raise CheckpointError(f"optimizer state missing {key}")
                if arrays[key].shape != param.shape:
                    raise CheckpointError(f"optimizer state {key} has shape {arrays[key].shape}, expected {param.shape}")
                store[name] = arrays[key].astype(param.dtype)
        self.step_count = int(step_count)
