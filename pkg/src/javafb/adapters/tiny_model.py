"""A desk-scale causal language model exposing per-layer q/v projections.

Structurally a miniature decoder-only transformer: the adapter harness only
assumes `model.layers[i].q_proj` / `.v_proj` square linear maps, so anything
satisfying that contract (including a full-size instruct model wrapper) can
take its place. Character-level tokenization keeps the whole stack dependency
free and deterministic.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelShape

PAD, BOS, EOS, UNK = 0, 1, 2, 3
_SPECIALS = ["<pad>", "<bos>", "<eos>", "<unk>"]


class CharTokenizer:
    """Character vocabulary built from a text corpus; encoding is total via UNK."""

    def __init__(self, alphabet: list[str]):
        self.alphabet = list(alphabet)
        self._to_id = {ch: i + len(_SPECIALS) for i, ch in enumerate(self.alphabet)}

    @classmethod
    def from_texts(cls, texts) -> "CharTokenizer":
        chars = sorted({ch for text in texts for ch in text})
        return cls(chars)

    @property
    def vocab_size(self) -> int:
        return len(self.alphabet) + len(_SPECIALS)

    def encode(self, text: str, add_bos: bool = False, add_eos: bool = False) -> list[int]:
        ids = [self._to_id.get(ch, UNK) for ch in text]
        if add_bos:
            ids = [BOS] + ids
        if add_eos:
            ids = ids + [EOS]
        return ids

    def decode(self, ids) -> str:
        return "".join(self.alphabet[i - len(_SPECIALS)] for i in ids if i >= len(_SPECIALS))

    def to_dict(self) -> dict:
        return {"alphabet": self.alphabet}

    @classmethod
    def from_dict(cls, d: dict) -> "CharTokenizer":
        return cls(d["alphabet"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CharTokenizer":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class DecoderBlock(nn.Module):
    def __init__(self, hidden_dim: int):
        super().__init__()
        self.q_proj = nn.Linear(hidden_dim, hidden_dim, bias=False)
        self.k_proj = nn.Linear(hidden_dim, hidden_dim, bias=False)
        self.v_proj = nn.Linear(hidden_dim, hidden_dim, bias=False)
        self.o_proj = nn.Linear(hidden_dim, hidden_dim, bias=False)
        self.ln_attn = nn.LayerNorm(hidden_dim)
        self.ln_mlp = nn.LayerNorm(hidden_dim)
        self.mlp = nn.Sequential(
            nn.Linear(hidden_dim, 4 * hidden_dim),
            nn.GELU(),
            nn.Linear(4 * hidden_dim, hidden_dim),
        )
        self.hidden_dim = hidden_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.ln_attn(x)
        q, k, v = self.q_proj(h), self.k_proj(h), self.v_proj(h)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.hidden_dim)
        seq_len = x.shape[-2]
        mask = torch.triu(torch.ones(seq_len, seq_len, dtype=torch.bool, device=x.device), diagonal=1)
        scores = scores.masked_fill(mask, float("-inf"))
        x = x + self.o_proj(scores.softmax(dim=-1) @ v)
        x = x + self.mlp(self.ln_mlp(x))
        return x


class TinyCodeLM(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        hidden_dim: int = 8,
        num_layers: int = 2,
        context_length: int = 512,
        head_scale: float = 8.0,
    ):
        super().__init__()
        self.vocab_size = vocab_size
        self.hidden_dim = hidden_dim
        self.context_length = context_length
        self.head_scale = head_scale
        self.embed = nn.Embedding(vocab_size, hidden_dim)
        self.pos_embed = nn.Embedding(context_length, hidden_dim)
        self.layers = nn.ModuleList(DecoderBlock(hidden_dim) for _ in range(num_layers))
        # No pre-head norm: the residual stream feeds the head directly, so
        # adapter updates retain full control over logit scale.
        self.lm_head = nn.Linear(hidden_dim, vocab_size, bias=False)
        # Sharpen the untrained head so the random base makes confident (wrong)
        # predictions; adapter training then has real cross-entropy signal to
        # work against instead of a near-uniform plateau.
        with torch.no_grad():
            self.lm_head.weight *= head_scale

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.shape[-1] > self.context_length:
            raise ValueError(f"sequence length {ids.shape[-1]} exceeds context {self.context_length}")
        positions = torch.arange(ids.shape[-1], device=ids.device)
        x = self.embed(ids) + self.pos_embed(positions)
        for layer in self.layers:
            x = layer(x)
        return self.lm_head(x)

    def shape(self) -> ModelShape:
        return ModelShape(
            num_layers=len(self.layers),
            hidden_dim=self.hidden_dim,
            total_base_params=sum(p.numel() for p in self.parameters()),
            context_length=self.context_length,
        )

    def config_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "hidden_dim": self.hidden_dim,
            "num_layers": len(self.layers),
            "context_length": self.context_length,
            "head_scale": self.head_scale,
        }

    @classmethod
    def from_config_dict(cls, d: dict) -> "TinyCodeLM":
        return cls(
            vocab_size=d["vocab_size"],
            hidden_dim=d["hidden_dim"],
            num_layers=d["num_layers"],
            context_length=d["context_length"],
            head_scale=d.get("head_scale", 4.0),
        )

    @torch.no_grad()
    def sample(
        self,
        prompt_ids: list[int],
        max_new_tokens: int,
        temperature: float = 0.7,
        top_p: float = 0.7,
        generator: torch.Generator | None = None,
    ) -> list[int]:
        """Nucleus sampling; temperature 0 short-circuits to greedy decoding."""
        self.eval()
        ids = list(prompt_ids)
        out: list[int] = []
        for _ in range(max_new_tokens):
            window = ids[-self.context_length :]
            logits = self(torch.tensor([window]))[0, -1]
            if temperature == 0:
                next_id = int(logits.argmax())
            else:
                probs = F.softmax(logits / temperature, dim=-1)
                sorted_probs, sorted_idx = torch.sort(probs, descending=True)
                cumulative = torch.cumsum(sorted_probs, dim=-1)
                keep = cumulative - sorted_probs < top_p  # always keeps the head token
                kept = sorted_probs * keep
                kept = kept / kept.sum()
                choice = torch.multinomial(kept, 1, generator=generator)
                next_id = int(sorted_idx[choice])
            if next_id == EOS:
                break
            out.append(next_id)
            ids.append(next_id)
        return out
