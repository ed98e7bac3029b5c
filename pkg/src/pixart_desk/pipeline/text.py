"""Pluggable text-embedding providers.

The default provider is a deterministic stand-in for a large text encoder:
each lower-cased word token maps to a fixed pseudo-random vector seeded by
the token itself.
"""

from __future__ import annotations

import re
from typing import Protocol, Sequence

import numpy as np

from ..model.network import TextCondition
from ..tensorcore import make_rng

MAX_TEXT_TOKENS = 120
_WORD_RE = re.compile(r"\w+", re.UNICODE)


class TextEmbeddingProvider(Protocol):
    text_dim: int

    def encode(self, captions: Sequence[str]) -> TextCondition: ...


def tokenize(caption: str) -> list[str]:
    return _WORD_RE.findall(caption.lower())


class HashingTextEmbedder:
    def __init__(self, text_dim: int = 64, max_tokens: int = MAX_TEXT_TOKENS, seed: int = 0):
        self.text_dim = int(text_dim)
        self.max_tokens = int(max_tokens)
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            vec = make_rng(self.seed, "token", token).standard_normal(self.text_dim)
            self._cache[token] = vec
        return vec

    def encode_one(self, caption: str) -> TextCondition:
        toks = tokenize(caption)[: self.max_tokens]
        if not toks:
            return TextCondition.null_condition(1, self.text_dim)
        emb = np.stack([self.token_vector(t) for t in toks])
        return TextCondition.from_tokens(emb)

    def encode(self, captions: Sequence[str]) -> TextCondition:
        """Encode a batch; rows are right-padded to the longest caption."""
        return TextCondition.stack([self.encode_one(c) for c in captions])


def load_embedding_file(path) -> TextCondition:
    """``.npz`` with ``tokens`` ``[B, S, D]`` and optional ``mask`` ``[B, S]``."""
    with np.load(path) as data:
        tokens = data["tokens"]
        mask = data["mask"] if "mask" in data else np.ones(tokens.shape[:-1], dtype=bool)
    return TextCondition(tokens, mask, False)
