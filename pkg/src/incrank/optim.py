"""Adam over a named set of trainable arrays, updated in place."""
from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not lr > 0:
            raise ValueError(f"lr must be > 0, got {lr}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got ({beta1}, {beta2})")
        if not eps > 0:
            raise ValueError(f"eps must be > 0, got {eps}")
        for name, p in params.items():
            if not p.flags.writeable:
                raise ValueError(f"parameter {name!r} is frozen; no optimizer state allowed")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        if grads.keys() != self.m.keys():
            missing = self.m.keys() ^ grads.keys()
            raise KeyError(f"gradient keys do not match optimizer state: {sorted(missing)}")
        for k, g in grads.items():
            if g.shape != self.m[k].shape:
                raise ValueError(f"gradient {k!r} has shape {g.shape}, expected {self.m[k].shape}")
            if not np.all(np.isfinite(g)):
                bad = int((~np.isfinite(g)).sum())
                raise FloatingPointError(f"gradient {k!r} has {bad} non-finite entries "
                                         f"at step {self.step_count + 1}")
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_init(params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> Adam:
    return Adam(params, lr, beta1, beta2, eps)
