from .config import (
    DIT_CLASS_CONDITIONAL,
    T2I_ADALN_PER_BLOCK,
    T2I_ADALN_SINGLE,
    T2I_VARIANTS,
    VARIANTS,
    ModelConfig,
    desk_preset,
    xl_preset,
)
from .network import (
    MODULATION_ORDER,
    ModulationTuple,
    PixArtModel,
    TextCondition,
    patchify_tokens,
    pos_embed_2d,
    timestep_frequencies,
    unpatchify,
)
from .params import GROUPS, NAME_RE, group_of, param_count, param_shapes

__all__ = [
    "DIT_CLASS_CONDITIONAL", "T2I_ADALN_PER_BLOCK", "T2I_ADALN_SINGLE", "T2I_VARIANTS",
    "VARIANTS", "ModelConfig", "desk_preset", "xl_preset", "MODULATION_ORDER",
    "ModulationTuple", "PixArtModel", "TextCondition", "patchify_tokens", "pos_embed_2d",
    "timestep_frequencies", "unpatchify", "GROUPS", "NAME_RE", "group_of", "param_count",
    "param_shapes",
]
