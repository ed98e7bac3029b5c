"""Batch sampling from a T2I checkpoint to files on disk."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..diffusion.samplers import SamplerConfig, sample
from ..diffusion.schedule import DiffusionSchedule
from ..errors import ConfigError
from ..model.config import T2I_VARIANTS
from ..model.network import PixArtModel, TextCondition
from ..reparam.checkpoint import Checkpoint, load
from .text import HashingTextEmbedder

CFG_SWEEP = (1.5, 2.0, 3.0, 4.0, 5.0, 6.0)


class VariantError(ConfigError):
    pass


@dataclass
class SampleRun:
    outputs: list[dict] = field(default_factory=list)
    notices: list[str] = field(default_factory=list)


def sample_to_dir(checkpoint, prompts=None, out_dir=".", *, embeddings: TextCondition | None = None,
                  seeds=(0,), cfg_scales=(4.5,), cfg_sweep: bool = False, kind: str = "dpm_solver_2",
                  steps: int | None = None, height: int | None = None, width: int | None = None,
                  provider=None, codec=None, schedule: DiffusionSchedule | None = None) -> SampleRun:
    """Write one latent per ``(prompt, seed, cfg)`` plus a ``metadata.jsonl`` line for each.

    Conditions come from ``prompts`` through ``provider`` or directly from
    ``embeddings`` (one row per output group). With ``cfg_sweep`` the guidance
    scales are the fixed sweep list instead of ``cfg_scales``.
    """
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load(checkpoint)
    cfg = ckpt.config
    if cfg.variant not in T2I_VARIANTS:
        raise VariantError(f"sampling needs a text-to-image checkpoint, got {cfg.variant}")
    model = PixArtModel(cfg, ckpt.weights)
    schedule = schedule or DiffusionSchedule.make()
    provider = provider or HashingTextEmbedder(cfg.text_dim, cfg.max_text_tokens)
    height = height or cfg.sample_size
    width = width or cfg.sample_size
    scales = CFG_SWEEP if cfg_sweep else tuple(cfg_scales)

    if embeddings is not None:
        conds = [embeddings.select([i]) for i in range(embeddings.batch_size)]
        labels = [f"embedding[{i}]" for i in range(len(conds))]
    else:
        prompts = list(prompts or [])
        conds = [provider.encode([p]) for p in prompts]
        labels = prompts
    run = SampleRun()
    if not conds:
        run.notices.append("no prompts given: nothing sampled")
        return run

    os.makedirs(out_dir, exist_ok=True)
    meta_path = os.path.join(out_dir, "metadata.jsonl")
    src = checkpoint if isinstance(checkpoint, (str, os.PathLike)) else "<in-memory>"
    with open(meta_path, "w", encoding="utf-8") as meta:
        for pi, (label, cond) in enumerate(zip(labels, conds)):
            for seed in seeds:
                for s in scales:
                    sc = SamplerConfig(kind=kind, steps=steps, cfg_scale=float(s), seed=int(seed))
                    x = sample(model, (1, cfg.latent_channels, height, width), cond, sc, schedule)[0]
                    name = f"p{pi:03d}_seed{seed}_cfg{s:g}"
                    np.save(os.path.join(out_dir, name + ".npy"), x)
                    rec = {"file": name + ".npy", "prompt": label, "prompt_index": pi,
                           "seed": int(seed), "cfg_scale": float(s), "sampler": kind,
                           "steps": sc.resolved_steps(schedule), "height": height, "width": width,
                           "schedule": schedule.kind, "T": schedule.T, "checkpoint": os.fspath(src),
                           "variant": cfg.variant}
                    if codec is not None:
                        np.save(os.path.join(out_dir, name + ".image.npy"), codec.decode(x))
                        rec["image_file"] = name + ".image.npy"
                    meta.write(json.dumps(rec, sort_keys=True) + "\n")
                    run.outputs.append(rec)
    return run
