"""AdamW with decoupled weight decay and global-norm gradient clipping."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np


class AdamW:
    def __init__(self, params: "OrderedDict", lr: float = 2e-5, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.03, clip_norm: float | None = 1.0):
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = OrderedDict((k, np.zeros_like(p.data)) for k, p in params.items())
        self.v = OrderedDict((k, np.zeros_like(p.data)) for k, p in params.items())

    def grad_norm(self) -> float:
        sq = 0.0
        for p in self.params.values():
            if p.grad is not None:
                sq += float(np.sum(p.grad * p.grad))
        return float(np.sqrt(sq))

    def step(self) -> float:
        """Apply one update from the accumulated ``.grad``s; returns the pre-clip norm."""
        norm = self.grad_norm()
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / (norm + 1e-6)
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad * scale
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data *= 1.0 - self.lr * self.weight_decay
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return norm

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for k in self.params:
            out[f"adamw_m.0.{k}"] = self.m[k].copy()
        for k in self.params:
            out[f"adamw_v.0.{k}"] = self.v[k].copy()
        return out

    def load_state(self, state, step_count: int) -> None:
        for k in self.params:
            self.m[k] = np.array(state[f"adamw_m.0.{k}"], dtype=np.float64)
            self.v[k] = np.array(state[f"adamw_v.0.{k}"], dtype=np.float64)
        self.step_count = int(step_count)
