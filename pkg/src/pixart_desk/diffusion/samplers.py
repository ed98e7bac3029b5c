"""Ancestral (iDDPM, fixed posterior variance) and DPM-Solver-2 samplers.

Samplers take a *denoiser* ``eps(x, t, cond) -> ndarray``. A ``PixArtModel``
is adapted automatically; ``cond=None`` always means "unconditional" (the
learned null text token, or the null class for the class-conditional DiT).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ConfigError, ContractError, ShapeError
from ..model.config import DIT_CLASS_CONDITIONAL
from ..model.network import PixArtModel
from ..tensorcore import make_rng, no_grad
from .schedule import DiffusionSchedule

IDDPM = "iddpm_ancestral"
DPM_SOLVER_2 = "dpm_solver_2"

Denoiser = Callable[[np.ndarray, np.ndarray, object], np.ndarray]


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = DPM_SOLVER_2
    steps: int | None = None
    cfg_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (IDDPM, DPM_SOLVER_2):
            raise ConfigError(f"unknown sampler kind {self.kind!r}")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.kind == DPM_SOLVER_2 and self.steps is not None and self.steps < 2:
            raise ConfigError("dpm_solver_2 needs at least 2 steps")
        if self.cfg_scale < 0:
            raise ConfigError("cfg_scale must be >= 0")

    def resolved_steps(self, schedule: DiffusionSchedule) -> int:
        if self.steps is not None:
            return self.steps
        return 20 if self.kind == DPM_SOLVER_2 else schedule.T


def classifier_free_guidance(eps_cond, eps_uncond, scale: float) -> np.ndarray:
    """``eps_uncond + scale * (eps_cond - eps_uncond)``.

    Scales 1 and 0 return the conditional / unconditional prediction
    unchanged so they are bit-identical to unguided sampling.
    """
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ShapeError(f"guidance shapes differ: {eps_cond.shape} vs {eps_uncond.shape}")
    if scale < 0:
        raise ContractError("guidance scale must be >= 0")
    if scale == 1:
        return eps_cond.copy()
    if scale == 0:
        return eps_uncond.copy()
    return eps_uncond + scale * (eps_cond - eps_uncond)


def as_denoiser(model) -> Denoiser:
    if not isinstance(model, PixArtModel):
        return model

    def eps(x, t, cond):
        with no_grad():
            if model.config.variant == DIT_CLASS_CONDITIONAL:
                labels = model.config.num_classes if cond is None else cond
                return model(x, t, class_labels=labels).data
            return model(x, t, cond=cond).data

    return eps


def guided(model, cond, scale: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    den = as_denoiser(model)

    def eps(x, t):
        if scale == 1:
            return np.asarray(den(x, t, cond), dtype=np.float64)
        if scale == 0:
            return np.asarray(den(x, t, None), dtype=np.float64)
        return classifier_free_guidance(den(x, t, cond), den(x, t, None), scale)

    return eps


def iddpm_ancestral_sample(model, shape, cond, config: SamplerConfig,
                           schedule: DiffusionSchedule, return_trajectory: bool = False):
    """Ancestral sampling from ``x_T ~ N(0, I)`` with posterior variance beta-tilde."""
    eps_fn = guided(model, cond, config.cfg_scale)
    rng = make_rng(config.seed, "sampler", IDDPM)
    sched, timesteps = schedule.respaced(config.resolved_steps(schedule))
    ac = sched.alphas_cumprod
    ac_prev = sched.alphas_cumprod_prev
    betas = sched.betas
    x = rng.standard_normal(shape)
    traj = [x]
    B = shape[0]
    for i in reversed(range(sched.T)):
        t_model = np.full(B, float(timesteps[i]))
        eps = eps_fn(x, t_model)
        x0 = (x - np.sqrt(1.0 - ac[i]) * eps) / np.sqrt(ac[i])
        coef0 = np.sqrt(ac_prev[i]) * betas[i] / (1.0 - ac[i])
        coeft = np.sqrt(1.0 - betas[i]) * (1.0 - ac_prev[i]) / (1.0 - ac[i])
        mean = coef0 * x0 + coeft * x
        if i > 0:
            var = betas[i] * (1.0 - ac_prev[i]) / (1.0 - ac[i])
            x = mean + np.sqrt(var) * rng.standard_normal(shape)
        else:
            x = mean
        traj.append(x)
    return (x, traj) if return_trajectory else x


def dpm_solver_timesteps(schedule: DiffusionSchedule, steps: int) -> np.ndarray:
    """Timesteps from ``T-1`` down to 0, uniform in half log-SNR."""
    lam = np.linspace(schedule.lambda_(schedule.T - 1), schedule.lambda_(0.0), steps + 1)
    ts = schedule.t_of_lambda(lam)
    ts[0], ts[-1] = schedule.T - 1, 0.0
    return ts


def dpm_solver_2_sample(model, shape, cond, config: SamplerConfig,
                        schedule: DiffusionSchedule, x_T: np.ndarray | None = None,
                        return_trajectory: bool = False):
    """Multistep second-order DPM-Solver on the probability-flow ODE.

    The first step is first order; every later step reuses the previous
    noise prediction for a finite-difference correction.
    """
    steps = config.resolved_steps(schedule)
    if steps < 2:
        raise ConfigError("dpm_solver_2 needs at least 2 steps")
    eps_fn = guided(model, cond, config.cfg_scale)
    if x_T is None:
        x_T = make_rng(config.seed, "sampler", DPM_SOLVER_2).standard_normal(shape)
    x = np.asarray(x_T, dtype=np.float64)
    ts = dpm_solver_timesteps(schedule, steps)
    B = x.shape[0]
    lam = schedule.lambda_(ts)
    log_a = schedule.log_alpha(ts)
    sigma = np.sqrt(-np.expm1(2.0 * log_a))
    traj = [x]
    eps_prev = None
    for k in range(steps):
        s_idx, t_idx = k, k + 1
        h = lam[t_idx] - lam[s_idx]
        eps = np.asarray(eps_fn(x, np.full(B, ts[s_idx])), dtype=np.float64)
        phi = np.expm1(h)
        x_next = np.exp(log_a[t_idx] - log_a[s_idx]) * x - sigma[t_idx] * phi * eps
        if eps_prev is not None:
            r0 = (lam[s_idx] - lam[s_idx - 1]) / h
            d1 = (eps - eps_prev) / r0
            x_next = x_next - 0.5 * sigma[t_idx] * phi * d1
        eps_prev = eps
        x = x_next
        traj.append(x)
    return (x, traj) if return_trajectory else x


def sample(model, shape, cond, config: SamplerConfig, schedule: DiffusionSchedule) -> np.ndarray:
    if config.kind == IDDPM:
        return iddpm_ancestral_sample(model, shape, cond, config, schedule)
    return dpm_solver_2_sample(model, shape, cond, config, schedule)
