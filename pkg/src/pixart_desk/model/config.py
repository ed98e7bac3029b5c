from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from ..errors import ConfigError

DIT_CLASS_CONDITIONAL = "dit_class_conditional"
T2I_ADALN_PER_BLOCK = "t2i_adaln_per_block"
T2I_ADALN_SINGLE = "t2i_adaln_single"
VARIANTS = (DIT_CLASS_CONDITIONAL, T2I_ADALN_PER_BLOCK, T2I_ADALN_SINGLE)
T2I_VARIANTS = (T2I_ADALN_PER_BLOCK, T2I_ADALN_SINGLE)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``sample_size`` is the latent edge length the positional embedding is
    calibrated for; other grid sizes are rescaled onto it.
    """

    hidden_size: int = 64
    depth: int = 4
    num_heads: int = 4
    patch_size: int = 2
    latent_channels: int = 4
    text_dim: int = 64
    max_text_tokens: int = 120
    time_embed_freq_dim: int = 256
    variant: str = T2I_ADALN_SINGLE
    num_classes: int = 10
    mlp_ratio: int = 4
    sample_size: int = 8
    class_dropout_prob: float = 0.1
    norm_eps: float = 1e-6

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for f in ("hidden_size", "depth", "num_heads", "patch_size", "latent_channels",
                  "text_dim", "max_text_tokens", "time_embed_freq_dim", "num_classes",
                  "mlp_ratio", "sample_size"):
            if int(getattr(self, f)) < 1:
                raise ConfigError(f"{f} must be a positive integer")
        if self.hidden_size % self.num_heads:
            raise ConfigError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}")
        if self.time_embed_freq_dim % 2:
            raise ConfigError(f"time_embed_freq_dim must be even, got {self.time_embed_freq_dim}")
        if self.sample_size % self.patch_size:
            raise ConfigError("sample_size must be divisible by patch_size")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.latent_channels

    @property
    def is_t2i(self) -> bool:
        return self.variant in T2I_VARIANTS

    def with_variant(self, variant: str) -> "ModelConfig":
        return replace(self, variant=variant)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def desk_preset(variant: str = T2I_ADALN_SINGLE, **overrides) -> ModelConfig:
    return replace(ModelConfig(variant=variant), **overrides)


def xl_preset(variant: str = T2I_ADALN_SINGLE, **overrides) -> ModelConfig:
    """DiT-XL/2 geometry with a T5-XXL sized text embedding (4096)."""
    cfg = ModelConfig(hidden_size=1152, depth=28, num_heads=16, patch_size=2,
                      latent_channels=4, text_dim=4096, max_text_tokens=120,
                      time_embed_freq_dim=256, variant=variant, num_classes=1000,
                      sample_size=32)
    return replace(cfg, **overrides)
