"""The text-to-image diffusion transformer and its two baseline variants.

All three variants share patch embedding, the timestep embedder, the
self-attention/MLP blocks and the final layer. They differ in how the
per-block modulation tuple is produced:

* ``dit_class_conditional``: a per-block MLP on ``t_emb + class_emb``.
* ``t2i_adaln_per_block``: a per-block MLP on ``t_emb + pooled(text)``, plus
  cross-attention.
* ``t2i_adaln_single``: one shared MLP on ``t_emb`` plus a per-block additive
  embedding, plus cross-attention.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ContractError, ShapeError
from ..tensorcore import (
    Tensor,
    add,
    chunk,
    concat,
    gate,
    gelu,
    layer_norm,
    linear,
    make_rng,
    matmul,
    mul,
    reshape,
    scale_shift,
    silu,
    softmax,
    swap_last,
    transpose,
)
from .config import DIT_CLASS_CONDITIONAL, T2I_ADALN_SINGLE, ModelConfig
from .params import param_shapes

MODULATION_ORDER = ("beta1", "beta2", "gamma1", "gamma2", "alpha1", "alpha2")


# -- fixed embeddings -------------------------------------------------------------


def timestep_frequencies(t, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal features ``[sin(t*f_k), cos(t*f_k)]``, shape ``[len(t), dim]``."""
    if dim % 2:
        raise ConfigError(f"frequency dimension must be even, got {dim}")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half, dtype=np.float64) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


def _sincos_1d(dim: int, pos: np.ndarray) -> np.ndarray:
    omega = 1.0 / 10000 ** (np.arange(dim // 2, dtype=np.float64) / (dim / 2.0))
    out = np.outer(pos, omega)
    return np.concatenate([np.sin(out), np.cos(out)], axis=1)


def pos_embed_2d(dim: int, grid_h: int, grid_w: int, base_grid: int) -> np.ndarray:
    """Fixed 2-D sin/cos embedding, ``[grid_h * grid_w, dim]`` in row-major order.

    Positions along each axis are rescaled by ``base_grid / grid`` so any
    grid covers the same coordinate range as the base grid.
    """
    if dim % 4:
        raise ConfigError(f"2-D positional embedding needs dim divisible by 4, got {dim}")
    ph = np.arange(grid_h, dtype=np.float64) * (base_grid / grid_h)
    pw = np.arange(grid_w, dtype=np.float64) * (base_grid / grid_w)
    gh, gw = np.meshgrid(ph, pw, indexing="ij")
    emb_h = _sincos_1d(dim // 2, gh.reshape(-1))
    emb_w = _sincos_1d(dim // 2, gw.reshape(-1))
    return np.concatenate([emb_h, emb_w], axis=1)


# -- patch rearrangement ----------------------------------------------------------


def patchify_tokens(latent, p: int) -> Tensor:
    """``[B, C, H, W] -> [B, (H/p)(W/p), p*p*C]``, tokens in row-major grid order."""
    latent = latent if isinstance(latent, Tensor) else Tensor(latent)
    B, C, H, W = latent.shape
    if H % p or W % p:
        raise ShapeError(f"latent H={H}, W={W} not divisible by patch size p={p}")
    gh, gw = H // p, W // p
    x = reshape(latent, (B, C, gh, p, gw, p))
    x = transpose(x, (0, 2, 4, 3, 5, 1))
    return reshape(x, (B, gh * gw, p * p * C))


def unpatchify(tokens: Tensor, p: int, channels: int, height: int, width: int) -> Tensor:
    B = tokens.shape[0]
    gh, gw = height // p, width // p
    x = reshape(tokens, (B, gh, gw, p, p, channels))
    x = transpose(x, (0, 5, 1, 3, 2, 4))
    return reshape(x, (B, channels, height, width))


# -- conditioning containers ------------------------------------------------------


@dataclass
class TextCondition:
    """A batch of text-token embeddings.

    ``tokens``: ``[B, S, text_dim]``; ``mask``: ``[B, S]`` (True = attend);
    ``null``: ``[B]``, rows that use the model's learned null embedding.
    """

    tokens: np.ndarray
    mask: np.ndarray
    null: np.ndarray

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.tokens.ndim == 2:
            self.tokens = self.tokens[None]
        if self.mask.ndim == 1:
            self.mask = self.mask[None]
        self.null = np.broadcast_to(np.asarray(self.null, dtype=bool),
                                    (self.tokens.shape[0],)).copy()
        if self.mask.shape != self.tokens.shape[:2]:
            raise ShapeError(f"mask shape {self.mask.shape} does not match tokens {self.tokens.shape}")

    @property
    def batch_size(self) -> int:
        return self.tokens.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[1]

    @classmethod
    def from_tokens(cls, tokens, mask=None) -> "TextCondition":
        tokens = np.asarray(tokens, dtype=np.float64)
        if mask is None:
            mask = np.ones(tokens.shape[:-1], dtype=bool)
        return cls(tokens, mask, False)

    @classmethod
    def null_condition(cls, batch: int, text_dim: int) -> "TextCondition":
        tokens = np.zeros((batch, 1, text_dim))
        mask = np.ones((batch, 1), dtype=bool)
        return cls(tokens, mask, np.ones(batch, dtype=bool))

    @classmethod
    def stack(cls, conds) -> "TextCondition":
        """Concatenate conditions along the batch axis, padding to the longest."""
        conds = list(conds)
        S = max(c.num_tokens for c in conds)
        D = conds[0].tokens.shape[-1]
        toks, masks, nulls = [], [], []
        for c in conds:
            pad = S - c.num_tokens
            toks.append(np.pad(c.tokens, ((0, 0), (0, pad), (0, 0))))
            masks.append(np.pad(c.mask, ((0, 0), (0, pad))))
            nulls.append(c.null)
            if c.tokens.shape[-1] != D:
                raise ShapeError("cannot stack conditions with different text_dim")
        return cls(np.concatenate(toks), np.concatenate(masks), np.concatenate(nulls))

    def select(self, rows) -> "TextCondition":
        return TextCondition(self.tokens[rows], self.mask[rows], self.null[rows])

    def with_dropout(self, drop: np.ndarray) -> "TextCondition":
        """Mark rows in ``drop`` as null (classifier-free guidance training)."""
        return TextCondition(self.tokens, self.mask, self.null | np.asarray(drop, dtype=bool))

    def effective_mask(self) -> np.ndarray:
        mask = self.mask.copy()
        mask[self.null] = False
        mask[self.null, 0] = True
        return mask


@dataclass
class ModulationTuple:
    """The six shift/scale/gate vectors of one block (each ``[..., hidden]``)."""

    beta1: Tensor
    beta2: Tensor
    gamma1: Tensor
    gamma2: Tensor
    alpha1: Tensor
    alpha2: Tensor

    @classmethod
    def from_packed(cls, packed: Tensor) -> "ModulationTuple":
        if packed.shape[-1] % 6:
            raise ShapeError(f"packed modulation width {packed.shape[-1]} is not a multiple of 6")
        return cls(*chunk(packed, 6, axis=-1))

    def pack(self) -> Tensor:
        return concat([getattr(self, k) for k in MODULATION_ORDER], axis=-1)


# -- the network ------------------------------------------------------------------


def _init_weights(cfg: ModelConfig, rng: np.random.Generator, scheme: str) -> "OrderedDict[str, np.ndarray]":
    weights = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        role = name.split(".", 2)[2]
        if scheme == "random":
            if name.endswith(".weight"):
                w = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), size=shape)
            else:
                w = rng.normal(0.0, 0.1 if not name.endswith(("table", "null_token")) else 1.0,
                               size=shape)
        elif scheme == "zero":
            w = _standard_init(name, role, shape, cfg, rng)
        else:
            raise ConfigError(f"unknown init scheme {scheme!r}")
        weights[name] = np.asarray(w, dtype=np.float64)
    return weights


def _standard_init(name, role, shape, cfg, rng):
    """DiT/PixArt initialisation: modulation, final projection and the
    cross-attention output projection start at zero."""
    zero = np.zeros(shape)
    if name.startswith(("final_layer.", "t_block.")) or role.startswith(("adaln", "mod_embed")):
        return zero
    if ".cross_attn.proj." in name:
        return zero
    if name.endswith(".bias"):
        return zero
    if name.startswith(("t_embedder.", "caption_embedder.", "y_embedder.")):
        if name.endswith("null_token"):
            return rng.normal(0.0, 1.0 / math.sqrt(cfg.text_dim), size=shape)
        return rng.normal(0.0, 0.02, size=shape)
    fan_in, fan_out = shape
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class PixArtModel:
    """Weights plus the forward computation for one of the three variants."""

    def __init__(self, config: ModelConfig, weights=None, seed: int = 0, init: str = "zero"):
        self.config = config
        shapes = param_shapes(config)
        if weights is None:
            weights = _init_weights(config, make_rng(seed, "init"), init)
        missing = set(shapes) - set(weights)
        extra = set(weights) - set(shapes)
        if missing or extra:
            raise ConfigError(f"weights do not match config: missing={sorted(missing)} "
                              f"unexpected={sorted(extra)}")
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, shape in shapes.items():
            arr = np.array(weights[name], dtype=np.float64)
            if arr.shape != tuple(shape):
                raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
            self.params[name] = Tensor(arr, requires_grad=True)

    # -- weight access --------------------------------------------------------

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def _lin(self, x, prefix):
        return linear(x, self.params[f"{prefix}.weight"], self.params[f"{prefix}.bias"])

    # -- conditioning paths -----------------------------------------------------

    def time_embed(self, t) -> Tensor:
        """``[B] -> [B, hidden]``: frequency features then Linear-SiLU-Linear."""
        freq = Tensor(timestep_frequencies(t, self.config.time_embed_freq_dim))
        h = silu(self._lin(freq, "t_embedder.0.mlp1"))
        return self._lin(h, "t_embedder.0.mlp2")

    def class_embed(self, labels) -> Tensor:
        labels = np.asarray(labels, dtype=int)
        if labels.min() < 0 or labels.max() > self.config.num_classes:
            raise ContractError(f"class label out of range [0, {self.config.num_classes}]")
        onehot = np.zeros((labels.size, self.config.num_classes + 1))
        onehot[np.arange(labels.size), labels] = 1.0
        return matmul(Tensor(onehot), self.params["y_embedder.0.table"])

    def embed_caption(self, cond: TextCondition, batch: int) -> tuple[Tensor, np.ndarray]:
        cfg = self.config
        if cond.num_tokens < 1 or not np.all(cond.effective_mask().any(axis=1)):
            raise ContractError("text condition has no tokens to attend to")
        if cond.num_tokens > cfg.max_text_tokens:
            raise ContractError(f"text condition has {cond.num_tokens} tokens; "
                                f"max is {cfg.max_text_tokens}")
        if cond.tokens.shape[-1] != cfg.text_dim:
            raise ShapeError(f"text tokens have width {cond.tokens.shape[-1]}, "
                             f"model expects {cfg.text_dim}")
        if cond.batch_size == 1 and batch > 1:
            cond = TextCondition.stack([cond] * batch)
        if cond.batch_size != batch:
            raise ShapeError(f"condition batch {cond.batch_size} != latent batch {batch}")
        keep = (~cond.null).astype(np.float64)[:, None, None]
        y = Tensor(cond.tokens * keep)
        if cond.null.any():
            onehot = np.zeros(cond.tokens.shape[:2] + (1,))
            onehot[cond.null, 0, 0] = 1.0
            y = add(y, mul(Tensor(onehot), self.params["caption_embedder.0.null_token"]))
        h = gelu(self._lin(y, "caption_embedder.0.fc1"))
        return self._lin(h, "caption_embedder.0.fc2"), cond.effective_mask()

    def global_modulation(self, t_emb: Tensor) -> ModulationTuple:
        """Shared tuple ``f(t)`` computed once per forward pass (adaLN-single)."""
        if self.config.variant != T2I_ADALN_SINGLE:
            raise ContractError(f"global_modulation requires {T2I_ADALN_SINGLE}, "
                                f"model is {self.config.variant}")
        return ModulationTuple.from_packed(self._lin(silu(t_emb), "t_block.0"))

    def block_modulation(self, s_bar: ModulationTuple, i: int) -> ModulationTuple:
        """Block ``i`` tuple: the shared tuple plus that block's embedding."""
        if not 0 <= i < self.config.depth:
            raise IndexError(f"block index {i} out of range for depth {self.config.depth}")
        return ModulationTuple.from_packed(add(s_bar.pack(), self.params[f"blocks.{i}.mod_embed"]))

    def adaln_modulation(self, c: Tensor, i: int) -> ModulationTuple:
        """Per-block MLP tuple ``f_i(c)`` of the two per-block variants."""
        if self.config.variant == T2I_ADALN_SINGLE:
            raise ContractError("per-block adaLN is not part of the adaLN-single variant")
        return ModulationTuple.from_packed(self._lin(silu(c), f"blocks.{i}.adaln"))

    def conditioning(self, t, batch: int, cond: TextCondition | None = None,
                     class_labels=None):
        """Return ``(block tuples, final (shift, scale), text tokens, text mask)``."""
        cfg = self.config
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
        t_emb = self.time_embed(t)
        y = mask = None
        if cfg.is_t2i:
            if cond is None:
                cond = TextCondition.null_condition(batch, cfg.text_dim)
            y, mask = self.embed_caption(cond, batch)
        if cfg.variant == T2I_ADALN_SINGLE:
            s_bar = self.global_modulation(t_emb)
            mods = [self.block_modulation(s_bar, i) for i in range(cfg.depth)]
            final = add(concat([t_emb, t_emb], axis=-1), self.params["final_layer.0.mod_embed"])
        else:
            c = t_emb
            if cfg.variant == DIT_CLASS_CONDITIONAL:
                if class_labels is not None:
                    labels = np.broadcast_to(np.asarray(class_labels, dtype=int), (batch,))
                    c = add(c, self.class_embed(labels))
            else:
                w = mask / mask.sum(axis=1, keepdims=True)
                pooled = reshape(matmul(Tensor(w[:, None, :]), y), (batch, cfg.hidden_size))
                c = add(c, pooled)
            mods = [self.adaln_modulation(c, i) for i in range(cfg.depth)]
            final = self._lin(silu(c), "final_layer.0.adaln")
        shift, scale = chunk(final, 2, axis=-1)
        return mods, (shift, scale), y, mask

    # -- blocks -------------------------------------------------------------------

    def _heads(self, x: Tensor) -> Tensor:
        B, T, _ = x.shape
        H, d = self.config.num_heads, self.config.head_dim
        return transpose(reshape(x, (B, T, H, d)), (0, 2, 1, 3))

    def _merge_heads(self, x: Tensor) -> Tensor:
        B, H, T, d = x.shape
        return reshape(transpose(x, (0, 2, 1, 3)), (B, T, H * d))

    def attention_core(self, q: Tensor, k: Tensor, v: Tensor, mask=None) -> Tensor:
        scores = mul(matmul(q, swap_last(k)), 1.0 / math.sqrt(self.config.head_dim))
        return matmul(softmax(scores, mask), v)

    def self_attention(self, x: Tensor, mod: ModulationTuple, i: int) -> Tensor:
        """``x + alpha1 * Attn(scale_shift(LN(x), gamma1, beta1))``."""
        cfg = self.config
        h = scale_shift(layer_norm(x, cfg.norm_eps), mod.gamma1, mod.beta1)
        B, T, _ = h.shape
        qkv = self._lin(h, f"blocks.{i}.attn.qkv")
        qkv = transpose(reshape(qkv, (B, T, 3, cfg.num_heads, cfg.head_dim)), (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        a = self._lin(self._merge_heads(self.attention_core(q, k, v)), f"blocks.{i}.attn.proj")
        return add(x, gate(a, mod.alpha1))

    def cross_attention(self, x: Tensor, y: Tensor, mask: np.ndarray, i: int) -> Tensor:
        """``x + CrossAttn(LN(x), text)`` with no adaLN gate on the residual."""
        cfg = self.config
        if y is None or y.shape[1] < 1:
            raise ContractError("cross-attention needs at least one condition token")
        B, S, _ = y.shape
        q = self._heads(self._lin(layer_norm(x, cfg.norm_eps), f"blocks.{i}.cross_attn.q"))
        kv = self._lin(y, f"blocks.{i}.cross_attn.kv")
        kv = transpose(reshape(kv, (B, S, 2, cfg.num_heads, cfg.head_dim)), (2, 0, 3, 1, 4))
        m = None if mask is None else mask[:, None, None, :]
        a = self.attention_core(q, kv[0], kv[1], m)
        return add(x, self._lin(self._merge_heads(a), f"blocks.{i}.cross_attn.proj"))

    def mlp(self, x: Tensor, mod: ModulationTuple, i: int) -> Tensor:
        h = scale_shift(layer_norm(x, self.config.norm_eps), mod.gamma2, mod.beta2)
        h = self._lin(gelu(self._lin(h, f"blocks.{i}.mlp.fc1")), f"blocks.{i}.mlp.fc2")
        return add(x, gate(h, mod.alpha2))

    def block(self, x: Tensor, mod: ModulationTuple, i: int, y=None, mask=None) -> Tensor:
        x = self.self_attention(x, mod, i)
        if self.config.is_t2i:
            x = self.cross_attention(x, y, mask, i)
        return self.mlp(x, mod, i)

    # -- full network ---------------------------------------------------------------

    def embed_latent(self, latent: Tensor) -> Tensor:
        cfg = self.config
        _, _, H, W = latent.shape
        tokens = patchify_tokens(latent, cfg.patch_size)
        pos = pos_embed_2d(cfg.hidden_size, H // cfg.patch_size, W // cfg.patch_size,
                           cfg.sample_size // cfg.patch_size)
        return add(self._lin(tokens, "patch_embed.0.proj"), Tensor(pos))

    def forward(self, latent, t, cond: TextCondition | None = None, class_labels=None) -> Tensor:
        """Predict the noise in ``latent`` (``[C,H,W]`` or ``[B,C,H,W]``) at time ``t``.

        For the class-conditional variant ``class_labels=None`` drops the class
        term entirely; label ``num_classes`` selects the learned null class.
        """
        cfg = self.config
        latent = latent if isinstance(latent, Tensor) else Tensor(latent)
        single = latent.ndim == 3
        if single:
            latent = reshape(latent, (1,) + latent.shape)
        if latent.ndim != 4 or latent.shape[1] != cfg.latent_channels:
            raise ShapeError(f"latent shape {latent.shape} incompatible with "
                             f"{cfg.latent_channels} latent channels")
        B, C, H, W = latent.shape
        p = cfg.patch_size
        if H % p or W % p:
            raise ShapeError(f"latent H={H}, W={W} not divisible by patch size p={p}")
        mods, (shift, scale), y, mask = self.conditioning(t, B, cond, class_labels)
        x = self.embed_latent(latent)
        for i in range(cfg.depth):
            x = self.block(x, mods[i], i, y, mask)
        x = scale_shift(layer_norm(x, cfg.norm_eps), scale, shift)
        x = self._lin(x, "final_layer.0.linear")
        out = unpatchify(x, p, C, H, W)
        if single:
            out = reshape(out, (C, H, W))
        return out

    __call__ = forward
