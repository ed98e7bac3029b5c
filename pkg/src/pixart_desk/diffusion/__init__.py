from .losses import COND_DROPOUT, diffusion_loss, predict, training_loss
from .oracle import GaussianEpsilonOracle
from .samplers import (
    DPM_SOLVER_2,
    IDDPM,
    SamplerConfig,
    as_denoiser,
    classifier_free_guidance,
    dpm_solver_2_sample,
    dpm_solver_timesteps,
    guided,
    iddpm_ancestral_sample,
    sample,
)
from .schedule import DiffusionSchedule, cosine_betas, linear_betas

__all__ = [
    "COND_DROPOUT", "diffusion_loss", "predict", "training_loss", "GaussianEpsilonOracle",
    "DPM_SOLVER_2", "IDDPM", "SamplerConfig", "as_denoiser", "classifier_free_guidance",
    "dpm_solver_2_sample", "dpm_solver_timesteps", "guided", "iddpm_ancestral_sample",
    "sample", "DiffusionSchedule", "cosine_betas", "linear_betas",
]
