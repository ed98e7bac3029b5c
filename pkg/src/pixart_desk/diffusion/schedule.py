from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError, ShapeError


def linear_betas(T: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> np.ndarray:
    return np.linspace(beta_start, beta_end, T, dtype=np.float64)


def cosine_betas(T: int, s: float = 0.008, max_beta: float = 0.999) -> np.ndarray:
    def f(t):
        return math.cos((t / T + s) / (1 + s) * math.pi / 2) ** 2

    return np.array([min(1 - f(i + 1) / f(i), max_beta) for i in range(T)], dtype=np.float64)


@dataclass(frozen=True)
class DiffusionSchedule:
    """Discrete variance-preserving noise schedule.

    Fractional timesteps are supported by linear interpolation of
    ``log sqrt(alpha_bar)`` between integer steps, which is what the ODE
    sampler integrates over.
    """

    betas: np.ndarray
    kind: str = "linear"
    alphas_cumprod: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ConfigError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ConfigError("betas must lie in (0, 1)")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        ac = np.cumprod(1.0 - betas)
        ac.setflags(write=False)
        object.__setattr__(self, "alphas_cumprod", ac)

    @classmethod
    def make(cls, T: int = 1000, kind: str = "linear") -> "DiffusionSchedule":
        if kind == "linear":
            return cls(linear_betas(T), kind)
        if kind == "cosine":
            return cls(cosine_betas(T), kind)
        raise ConfigError(f"unknown schedule kind {kind!r}")

    @property
    def T(self) -> int:
        return self.betas.size

    @property
    def alphas_cumprod_prev(self) -> np.ndarray:
        return np.concatenate([[1.0], self.alphas_cumprod[:-1]])

    def _check_t(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T - 1):
            raise ContractError(f"timestep out of range [0, {self.T})")
        return t

    # -- continuous-time view -------------------------------------------------------

    def log_alpha(self, t) -> np.ndarray:
        """``log sqrt(alpha_bar)`` at (possibly fractional) timestep ``t``."""
        t = self._check_t(np.asarray(t, dtype=np.float64))
        return np.interp(t, np.arange(self.T, dtype=np.float64), 0.5 * np.log(self.alphas_cumprod))

    def alpha_bar(self, t) -> np.ndarray:
        return np.exp(2.0 * self.log_alpha(t))

    def lambda_(self, t) -> np.ndarray:
        """Half log-SNR ``log(alpha / sigma)``."""
        la = self.log_alpha(t)
        return la - 0.5 * np.log1p(-np.exp(2.0 * la))

    def t_of_lambda(self, lam) -> np.ndarray:
        la = -0.5 * np.logaddexp(0.0, -2.0 * np.asarray(lam, dtype=np.float64))
        grid = 0.5 * np.log(self.alphas_cumprod)
        return np.interp(la, grid[::-1], np.arange(self.T, dtype=np.float64)[::-1])

    # -- forward process ------------------------------------------------------------

    def q_sample(self, x0, t, noise) -> np.ndarray:
        """``sqrt(ab_t) * x0 + sqrt(1 - ab_t) * noise``; ``t`` is per batch row."""
        x0 = np.asarray(x0, dtype=np.float64)
        noise = np.asarray(noise, dtype=np.float64)
        if x0.shape != noise.shape:
            raise ShapeError(f"noise shape {noise.shape} != x0 shape {x0.shape}")
        t = self._check_t(t)
        ab = self.alphas_cumprod[np.asarray(t, dtype=int)]
        ab = np.reshape(ab, np.shape(ab) + (1,) * (x0.ndim - np.ndim(ab)))
        return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise

    def respaced(self, steps: int) -> tuple["DiffusionSchedule", np.ndarray]:
        """Schedule over ``steps`` evenly spaced original timesteps.

        Returns the new schedule and the original timestep index of each step.
        """
        if steps < 1 or steps > self.T:
            raise ConfigError(f"steps must be in [1, {self.T}], got {steps}")
        if steps == self.T:
            return self, np.arange(self.T)
        use = np.unique(np.round(np.linspace(0, self.T - 1, steps)).astype(int))
        ac = self.alphas_cumprod[use]
        prev = np.concatenate([[1.0], ac[:-1]])
        return DiffusionSchedule(1.0 - ac / prev, self.kind), use
