"""Parameter layout shared by weight allocation and metadata-only counting.

Names follow ``<module>.<index>.<role>``; ``index`` is the block index for
``blocks`` and 0 for singleton modules.
"""

from __future__ import annotations

import re
from collections import OrderedDict

import numpy as np

from .config import DIT_CLASS_CONDITIONAL, T2I_ADALN_SINGLE, ModelConfig

NAME_RE = re.compile(r"^[a-z][a-z0-9_]*\.\d+\.[A-Za-z0-9_.]+$")

GROUPS = ("patch_embed", "time_embedder", "class_embedder", "caption_embedder",
          "self_attn", "cross_attn", "mlp", "adaln", "final_layer")


def _linear(prefix: str, n_in: int, n_out: int) -> list[tuple[str, tuple[int, ...]]]:
    return [(f"{prefix}.weight", (n_in, n_out)), (f"{prefix}.bias", (n_out,))]


def param_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    h = cfg.hidden_size
    out: list[tuple[str, tuple[int, ...]]] = []
    out += _linear("patch_embed.0.proj", cfg.patch_dim, h)
    out += _linear("t_embedder.0.mlp1", cfg.time_embed_freq_dim, h)
    out += _linear("t_embedder.0.mlp2", h, h)
    if cfg.variant == DIT_CLASS_CONDITIONAL:
        # last row is the null class used for guidance dropout
        out.append(("y_embedder.0.table", (cfg.num_classes + 1, h)))
    else:
        out += _linear("caption_embedder.0.fc1", cfg.text_dim, h)
        out += _linear("caption_embedder.0.fc2", h, h)
        out.append(("caption_embedder.0.null_token", (1, cfg.text_dim)))
    if cfg.variant == T2I_ADALN_SINGLE:
        out += _linear("t_block.0", h, 6 * h)
    for i in range(cfg.depth):
        b = f"blocks.{i}"
        out += _linear(f"{b}.attn.qkv", h, 3 * h)
        out += _linear(f"{b}.attn.proj", h, h)
        if cfg.is_t2i:
            out += _linear(f"{b}.cross_attn.q", h, h)
            out += _linear(f"{b}.cross_attn.kv", h, 2 * h)
            out += _linear(f"{b}.cross_attn.proj", h, h)
        out += _linear(f"{b}.mlp.fc1", h, cfg.mlp_ratio * h)
        out += _linear(f"{b}.mlp.fc2", cfg.mlp_ratio * h, h)
        if cfg.variant == T2I_ADALN_SINGLE:
            out.append((f"{b}.mod_embed", (6 * h,)))
        else:
            out += _linear(f"{b}.adaln", h, 6 * h)
    if cfg.variant == T2I_ADALN_SINGLE:
        out.append(("final_layer.0.mod_embed", (2 * h,)))
    else:
        out += _linear("final_layer.0.adaln", h, 2 * h)
    out += _linear("final_layer.0.linear", h, cfg.patch_dim)
    return OrderedDict(out)


def group_of(name: str) -> str:
    module, _, role = name.split(".", 2)
    if module == "patch_embed":
        return "patch_embed"
    if module == "t_embedder":
        return "time_embedder"
    if module == "y_embedder":
        return "class_embedder"
    if module == "caption_embedder":
        return "caption_embedder"
    if module == "t_block":
        return "adaln"
    if module == "final_layer":
        return "final_layer"
    if module == "blocks":
        head = role.split(".", 1)[0]
        return {"attn": "self_attn", "cross_attn": "cross_attn", "mlp": "mlp",
                "adaln": "adaln", "mod_embed": "adaln"}[head]
    raise KeyError(f"no parameter group for {name!r}")


def param_count(cfg: ModelConfig, variant: str | None = None) -> dict[str, int]:
    """Exact per-group parameter counts without allocating any weights."""
    if variant is not None:
        cfg = cfg.with_variant(variant)
    counts = {g: 0 for g in GROUPS}
    for name, shape in param_shapes(cfg).items():
        counts[group_of(name)] += int(np.prod(shape))
    counts["total"] = sum(counts[g] for g in GROUPS)
    return counts
