"""Latent codec seam.

The default codec is an exact stand-in for a VAE: space-to-depth by
``factor`` followed by a fixed signed channel permutation. It is invertible
bit-for-bit, so pipelines built on it can be tested exactly.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from ..errors import ShapeError
from ..tensorcore import make_rng


class LatentCodec(Protocol):
    factor: int

    def encode(self, image: np.ndarray) -> np.ndarray: ...

    def decode(self, latent: np.ndarray) -> np.ndarray: ...


class SpaceToDepthCodec:
    def __init__(self, factor: int = 8, image_channels: int = 3, seed: int = 0):
        self.factor = int(factor)
        self.image_channels = int(image_channels)
        n = self.latent_channels
        rng = make_rng(seed, "codec")
        self.perm = rng.permutation(n)
        self.inv_perm = np.argsort(self.perm)
        self.sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)

    @property
    def latent_channels(self) -> int:
        return self.image_channels * self.factor * self.factor

    def encode(self, image: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64)
        single = x.ndim == 3
        if single:
            x = x[None]
        B, C, H, W = x.shape
        f = self.factor
        if C != self.image_channels:
            raise ShapeError(f"codec expects {self.image_channels} channels, got {C}")
        if H % f or W % f:
            raise ShapeError(f"image H={H}, W={W} not divisible by codec factor {f}")
        z = x.reshape(B, C, H // f, f, W // f, f).transpose(0, 1, 3, 5, 2, 4)
        z = z.reshape(B, C * f * f, H // f, W // f)
        z = z[:, self.perm] * self.sign[None, :, None, None]
        return z[0] if single else z

    def decode(self, latent: np.ndarray) -> np.ndarray:
        z = np.asarray(latent, dtype=np.float64)
        single = z.ndim == 3
        if single:
            z = z[None]
        B, Cz, h, w = z.shape
        f, C = self.factor, self.image_channels
        if Cz != self.latent_channels:
            raise ShapeError(f"codec expects {self.latent_channels} latent channels, got {Cz}")
        z = (z * self.sign[None, :, None, None])[:, self.inv_perm]
        x = z.reshape(B, C, f, f, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(B, C, h * f, w * f)
        return x[0] if single else x


class QuantizingCodec:
    """Lossy wrapper: rounds latents to multiples of ``step``."""

    def __init__(self, inner, step: float = 0.1):
        self.inner = inner
        self.step = float(step)
        self.factor = inner.factor

    def encode(self, image):
        return np.round(self.inner.encode(image) / self.step) * self.step

    def decode(self, latent):
        return self.inner.decode(latent)


def fit_to_bucket(latent: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize to cover ``(height, width)``, then centre-crop."""
    C, H, W = latent.shape
    if (H, W) == (height, width):
        return latent
    s = max(height / H, width / W)
    nh, nw = max(height, int(round(H * s))), max(width, int(round(W * s)))
    rows = np.minimum((np.arange(nh) / s).astype(int), H - 1)
    cols = np.minimum((np.arange(nw) / s).astype(int), W - 1)
    resized = latent[:, rows][:, :, cols]
    top, left = (nh - height) // 2, (nw - width) // 2
    return resized[:, top:top + height, left:left + width]
