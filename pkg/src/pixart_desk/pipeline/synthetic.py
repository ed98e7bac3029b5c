"""Small synthetic latent datasets for desk-scale runs."""

from __future__ import annotations

import os

import numpy as np

from ..dataops.manifest import ManifestRecord, save_manifest
from ..tensorcore import make_rng

MODE_CAPTIONS = ("a photo of horizontal stripes", "a painting of vertical stripes")


def mode_pattern(mode: int, channels: int, height: int, width: int) -> np.ndarray:
    """Smooth deterministic pattern for ``mode`` at any resolution."""
    yy, xx = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width), indexing="ij")
    coord = yy if mode == 0 else xx
    phases = np.arange(channels)[:, None, None] * (np.pi / channels)
    return np.cos(2 * np.pi * coord[None] + phases)


def make_two_mode_dataset(out_dir, n: int = 64, channels: int = 4, sizes=((8, 8),),
                          noise: float = 0.1, seed: int = 0, manifest_name: str = "manifest.jsonl"):
    """Write ``n`` latents split between two modes and a manifest; return its path.

    ``sizes`` cycles through native ``(height, width)`` so multi-aspect sets
    can be produced with the same modes.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = make_rng(seed, "synthetic")
    records = []
    for i in range(n):
        mode = i % 2
        h, w = sizes[(i // 2) % len(sizes)]
        x = mode_pattern(mode, channels, h, w) + noise * rng.standard_normal((channels, h, w))
        rel = f"latent_{i:05d}.npy"
        np.save(os.path.join(out_dir, rel), x)
        records.append(ManifestRecord(sample_id=f"s{i:05d}", caption=MODE_CAPTIONS[mode],
                                      native_height=h, native_width=w, latent_path=rel,
                                      class_label=mode))
    path = os.path.join(out_dir, manifest_name)
    save_manifest(records, path)
    return path
