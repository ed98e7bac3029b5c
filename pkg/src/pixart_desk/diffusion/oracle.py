"""Closed-form quantities for Gaussian data, used to validate samplers."""

from __future__ import annotations

import numpy as np

from .schedule import DiffusionSchedule


class GaussianEpsilonOracle:
    """Exact ``E[eps | x_t]`` when the data are ``N(mu, sigma^2 I)``.

    With ``x_t = a x0 + s eps`` (``a^2 = alpha_bar``, ``s^2 = 1 - alpha_bar``)
    the posterior mean of the noise is ``s (x_t - a mu) / (a^2 sigma^2 + s^2)``.
    """

    def __init__(self, mu: float, sigma: float, schedule: DiffusionSchedule):
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.schedule = schedule

    def __call__(self, x, t, cond=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        ab = self.schedule.alpha_bar(np.asarray(t, dtype=np.float64))
        ab = np.reshape(ab, np.shape(ab) + (1,) * (x.ndim - np.ndim(ab)))
        a, s2 = np.sqrt(ab), 1.0 - ab
        return np.sqrt(s2) * (x - a * self.mu) / (ab * self.sigma**2 + s2)

    def marginal_std(self, t) -> np.ndarray:
        ab = self.schedule.alpha_bar(t)
        return np.sqrt(ab * self.sigma**2 + 1.0 - ab)

    def flow_map(self, x_start, t_start, t_end) -> np.ndarray:
        """Exact probability-flow ODE transport of ``x_start`` between two times.

        For Gaussian marginals the flow keeps the standardised value
        ``(x - sqrt(ab) mu) / std`` constant.
        """
        a0 = np.sqrt(self.schedule.alpha_bar(t_start))
        a1 = np.sqrt(self.schedule.alpha_bar(t_end))
        z = (np.asarray(x_start) - a0 * self.mu) / self.marginal_std(t_start)
        return a1 * self.mu + self.marginal_std(t_end) * z
