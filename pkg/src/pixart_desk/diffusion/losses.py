from __future__ import annotations

import numpy as np

from ..model.config import DIT_CLASS_CONDITIONAL
from ..model.network import PixArtModel, TextCondition
from ..tensorcore import Tensor, as_tensor, mean, mul, sub
from .schedule import DiffusionSchedule

COND_DROPOUT = 0.1


def predict(model, x_t: np.ndarray, t: np.ndarray, cond=None, class_labels=None) -> Tensor:
    if isinstance(model, PixArtModel):
        return model(x_t, t, cond=cond, class_labels=class_labels)
    return as_tensor(model(x_t, t, cond))


def diffusion_loss(model, x0, t, noise, schedule: DiffusionSchedule, cond=None,
                   class_labels=None) -> Tensor:
    """Mean squared error between predicted and injected noise for fixed (t, noise)."""
    x_t = schedule.q_sample(x0, t, noise)
    diff = sub(predict(model, x_t, np.asarray(t, dtype=np.float64), cond, class_labels), Tensor(noise))
    return mean(mul(diff, diff))


def training_loss(model, x0, cond, rng: np.random.Generator, schedule: DiffusionSchedule,
                  class_labels=None, dropout_prob: float = COND_DROPOUT) -> Tensor:
    """Epsilon-prediction loss at uniformly drawn timesteps.

    Each row's condition (text or class) is replaced by the null condition
    with probability ``dropout_prob``. Draw order from ``rng``: timesteps,
    noise, dropout mask.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    B = x0.shape[0]
    t = rng.integers(0, schedule.T, size=B)
    noise = rng.standard_normal(x0.shape)
    drop = rng.random(B) < dropout_prob
    if isinstance(model, PixArtModel):
        if model.config.variant == DIT_CLASS_CONDITIONAL:
            if class_labels is not None:
                class_labels = np.where(drop, model.config.num_classes,
                                        np.broadcast_to(class_labels, (B,)))
        else:
            if cond is None:
                cond = TextCondition.null_condition(B, model.config.text_dim)
            cond = cond.with_dropout(drop)
    return diffusion_loss(model, x0, t, noise, schedule, cond, class_labels)
