"""Embedding providers for the embedding-based similarity metric.

Two deterministic stubs for tests and offline runs, plus an adapter to a real
contextual transformer for experiments. A provider maps a token sequence to
one vector per token; the same text must always embed to the same vectors.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np


class HashEmbedder:
    """Deterministic pseudo-random unit vector per distinct token."""

    def __init__(self, dim: int = 48):
        self.dim = dim
        self.model_id = f"hash-{dim}"
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
            vec = np.random.default_rng(seed).standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._cache[token] = vec
        return vec

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self._vector(t) for t in tokens])


class OrthogonalEmbedder:
    """One-hot basis vector per distinct token: cosine 1 for equal tokens, 0 otherwise."""

    def __init__(self, dim: int = 4096):
        self.dim = dim
        self.model_id = f"orthogonal-{dim}"
        self._index: dict[str, int] = {}

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(tokens), self.dim))
        for row, token in enumerate(tokens):
            idx = self._index.setdefault(token, len(self._index))
            if idx >= self.dim:
                raise ValueError(f"vocabulary exceeded embedder capacity ({self.dim})")
            out[row, idx] = 1.0
        return out


class FixedEmbedder:
    """Explicit token -> vector table; unknown tokens get the zero vector."""

    def __init__(self, table: dict[str, Sequence[float]]):
        self.model_id = "fixed"
        self._table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        dims = {v.shape[0] for v in self._table.values()}
        if len(dims) != 1:
            raise ValueError("all vectors must share one dimension")
        self.dim = dims.pop()

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        rows = [self._table.get(t, np.zeros(self.dim)) for t in tokens]
        return np.stack(rows) if rows else np.zeros((0, self.dim))


class TransformerEmbedder:
    """Adapter to a contextual transformer encoder (loaded lazily on first use).

    Tokens are fed as pre-split words; sub-word vectors from the last hidden
    state are mean-pooled back to one vector per input token.
    """

    def __init__(self, model_id: str = "bert-base-uncased"):
        self.model_id = model_id
        self._model = None
        self._tokenizer = None

    def _ensure_loaded(self):
        if self._model is None:
            from transformers import AutoModel, AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(self.model_id)
            self._model = AutoModel.from_pretrained(self.model_id)
            self._model.eval()

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        import torch

        self._ensure_loaded()
        encoded = self._tokenizer(list(tokens), is_split_into_words=True, return_tensors="pt", truncation=True)
        with torch.no_grad():
            hidden = self._model(**encoded).last_hidden_state[0]
        word_ids = encoded.word_ids(0)
        buckets: dict[int, list] = {}
        for pos, wid in enumerate(word_ids):
            if wid is not None:
                buckets.setdefault(wid, []).append(hidden[pos])
        out = np.zeros((len(tokens), hidden.shape[-1]))
        for wid, vecs in buckets.items():
            out[wid] = torch.stack(vecs).mean(dim=0).numpy()
        return out


def make_embedder(kind: str, **kwargs):
    if kind == "hash":
        return HashEmbedder(**kwargs)
    if kind == "orthogonal":
        return OrthogonalEmbedder(**kwargs)
    if kind == "transformer":
        return TransformerEmbedder(**kwargs)
    raise ValueError(f"unknown embedder kind {kind!r}")
