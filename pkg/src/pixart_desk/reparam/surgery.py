"""Convert a class-conditional DiT checkpoint into an adaLN-single T2I model.

The per-block adaLN MLPs are replaced by block 0's MLP (shared) plus one
additive embedding per block, chosen so every block's modulation tuple at
``t_star`` with the class term removed is reproduced. Cross-attention layers
are new: fresh query/key/value projections and a zero output projection, so
the surgered network initially computes the same function at ``t_star``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from ..model.config import DIT_CLASS_CONDITIONAL, T2I_ADALN_SINGLE, ModelConfig
from ..model.network import PixArtModel
from ..model.params import param_shapes
from ..tensorcore import concat, no_grad, silu
from .checkpoint import Checkpoint

MATCHING_FIELDS = ("hidden_size", "depth", "num_heads", "patch_size", "latent_channels",
                   "time_embed_freq_dim", "mlp_ratio")


class SurgeryError(ConfigError):
    pass


@dataclass
class SurgeryReport:
    copied: list[str] = field(default_factory=list)
    zero_initialized: list[str] = field(default_factory=list)
    freshly_initialized: list[str] = field(default_factory=list)
    derived: list[str] = field(default_factory=list)
    max_modulation_residual: float = 0.0
    t_star: int = 500
    fresh_seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _as_model(x) -> PixArtModel:
    if isinstance(x, PixArtModel):
        return x
    return PixArtModel(x.config, x.weights)


def source_modulations(model: PixArtModel, t) -> tuple[np.ndarray, np.ndarray]:
    """Per-block packed tuples ``[depth, 6h]`` and final ``[2h]`` with no class term."""
    with no_grad():
        e = model.time_embed(np.atleast_1d(float(t)))
        if model.config.variant == T2I_ADALN_SINGLE:
            s_bar = model.global_modulation(e)
            blocks = [model.block_modulation(s_bar, i).pack().data[0] for i in range(model.config.depth)]
            final = (concat([e, e], axis=-1) + model["final_layer.0.mod_embed"]).data[0]
        else:
            blocks = [model.adaln_modulation(e, i).pack().data[0] for i in range(model.config.depth)]
            final = model._lin(silu(e), "final_layer.0.adaln").data[0]
    return np.stack(blocks), final


def modulation_residual(source, target, t) -> np.ndarray:
    """``max|S_i_target(t) - S_i_source(t, no class)|`` for every block ``i``."""
    src, tgt = _as_model(source), _as_model(target)
    s_blocks, _ = source_modulations(src, t)
    t_blocks, _ = source_modulations(tgt, t)
    return np.abs(t_blocks - s_blocks).max(axis=1)


def final_modulation_residual(source, target, t) -> float:
    _, s = source_modulations(_as_model(source), t)
    _, f = source_modulations(_as_model(target), t)
    return float(np.abs(s - f).max())


def _check_compatible(src: ModelConfig, tgt: ModelConfig) -> None:
    if src.variant != DIT_CLASS_CONDITIONAL:
        raise SurgeryError(f"source must be {DIT_CLASS_CONDITIONAL}, got {src.variant}")
    if tgt.variant != T2I_ADALN_SINGLE:
        raise SurgeryError(f"target must be {T2I_ADALN_SINGLE}, got {tgt.variant}")
    diff = [f"{f}: {getattr(src, f)} != {getattr(tgt, f)}"
            for f in MATCHING_FIELDS if getattr(src, f) != getattr(tgt, f)]
    if diff:
        raise SurgeryError("source/target configs differ in " + "; ".join(diff))


def reparameterize(source: Checkpoint, t_star: int = 500, seed: int = 0,
                   target_config: ModelConfig | None = None) -> tuple[Checkpoint, SurgeryReport]:
    src_cfg = source.config
    tgt_cfg = target_config or src_cfg.with_variant(T2I_ADALN_SINGLE)
    _check_compatible(src_cfg, tgt_cfg)

    src = PixArtModel(src_cfg, source.weights)
    fresh = PixArtModel(tgt_cfg, seed=seed, init="zero").state_dict()
    with no_grad():
        e = src.time_embed(np.array([float(t_star)]))
    f_blocks, f_final = source_modulations(src, t_star)
    e = e.data[0]

    report = SurgeryReport(t_star=int(t_star), fresh_seed=int(seed))
    weights: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name in param_shapes(tgt_cfg):
        if name.startswith("t_block.0."):
            role = name.rsplit(".", 1)[1]
            weights[name] = source.weights[f"blocks.0.adaln.{role}"].copy()
            report.derived.append(name)
        elif name.endswith(".mod_embed") and name.startswith("blocks."):
            i = int(name.split(".")[1])
            weights[name] = f_blocks[i] - f_blocks[0]
            report.derived.append(name)
        elif name == "final_layer.0.mod_embed":
            weights[name] = f_final - np.concatenate([e, e])
            report.derived.append(name)
        elif ".cross_attn.proj." in name:
            weights[name] = np.zeros_like(fresh[name])
            report.zero_initialized.append(name)
        elif ".cross_attn." in name or name.startswith("caption_embedder."):
            weights[name] = fresh[name]
            report.freshly_initialized.append(name)
        elif name in source.weights:
            weights[name] = source.weights[name].copy()
            report.copied.append(name)
        else:
            raise SurgeryError(f"no rule to populate target weight {name!r}")

    metadata = dict(source.metadata)
    metadata.update({"surgery_t_star": str(t_star), "surgery_seed": str(seed),
                     "init_from": "reparam"})
    target = Checkpoint(tgt_cfg, weights, metadata)
    report.max_modulation_residual = float(modulation_residual(src, target, t_star).max())
    return target, report
