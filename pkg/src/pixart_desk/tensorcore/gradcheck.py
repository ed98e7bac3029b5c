"""Central finite-difference oracle for reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def relative_error(analytic, numeric) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-8)


def numeric_grad(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-4,
                 indices: Sequence[int] | None = None) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. the flat coordinates of ``x``.

    ``x.data`` is perturbed in place and restored afterwards.
    """
    flat = x.data.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = np.zeros(len(idx))
    with no_grad():
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(x).item()
            flat[i] = orig - h
            fm = f(x).item()
            flat[i] = orig
            out[k] = (fp - fm) / (2.0 * h)
    return out


def analytic_grad(f: Callable[[Tensor], Tensor], x: Tensor) -> np.ndarray:
    was = x.requires_grad
    saved = x.grad
    x.requires_grad = True
    x.grad = None
    try:
        loss = f(x)
        loss.backward()
        g = np.zeros_like(x.data) if x.grad is None else x.grad
    finally:
        x.requires_grad = was
        x.grad = saved
    return g.reshape(-1)


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-4,
                            indices: Sequence[int] | None = None) -> float:
    """Max relative error between backward() and central differences.

    ``f`` must map ``x`` to a scalar Tensor; ``indices`` restricts the check
    to a subset of flat coordinates.
    """
    a = analytic_grad(f, x)
    if indices is not None:
        a = a[np.asarray(indices, dtype=int)]
    n = numeric_grad(f, x, h, indices)
    if a.size == 0:
        return 0.0
    return float(relative_error(a, n).max())
