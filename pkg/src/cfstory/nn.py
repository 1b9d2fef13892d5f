"""Shared model plumbing: a tiny transformer backbone, warmup scheduling,
batch padding, and versioned checkpoint files.

Both stages use the same pre-norm transformer; the sketch stage runs it
bidirectionally, the customize stage with a causal mask. Models are small
enough to train from scratch on a CPU, and dropout is omitted so training
is bit-reproducible given a seed.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import torch
from torch import nn

from .errors import CheckpointError

CHECKPOINT_FORMAT_VERSION = 1


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block with a GELU feed-forward."""

    def __init__(self, embed_dim: int, n_heads: int, ffn_dim: int) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(embed_dim)
        self.attn = nn.MultiheadAttention(embed_dim, n_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(embed_dim)
        self.ffn = nn.Sequential(
            nn.Linear(embed_dim, ffn_dim),
            nn.GELU(),
            nn.Linear(ffn_dim, embed_dim),
        )

    def forward(
        self,
        x: torch.Tensor,
        attn_mask: torch.Tensor | None = None,
        key_padding_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        h = self.norm1(x)
        attn_out, _ = self.attn(
            h, h, h,
            attn_mask=attn_mask,
            key_padding_mask=key_padding_mask,
            need_weights=False,
        )
        x = x + attn_out
        return x + self.ffn(self.norm2(x))


class Backbone(nn.Module):
    """Token plus learned position embeddings followed by transformer blocks."""

    def __init__(
        self,
        vocab_size: int,
        max_len: int,
        embed_dim: int,
        n_layers: int,
        n_heads: int,
        ffn_dim: int,
        causal: bool,
    ) -> None:
        super().__init__()
        self.max_len = max_len
        self.causal = causal
        self.token_embedding = nn.Embedding(vocab_size, embed_dim)
        self.position_embedding = nn.Embedding(max_len, embed_dim)
        self.blocks = nn.ModuleList(
            TransformerBlock(embed_dim, n_heads, ffn_dim) for _ in range(n_layers)
        )
        self.final_norm = nn.LayerNorm(embed_dim)
        self.apply(_init_weights)

    def forward(
        self, ids: torch.Tensor, key_padding_mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        length = ids.shape[1]
        if length > self.max_len:
            raise ValueError(f"sequence length {length} exceeds max_len {self.max_len}")
        positions = torch.arange(length, device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(positions)
        attn_mask = None
        if self.causal:
            attn_mask = torch.triu(
                torch.ones(length, length, dtype=torch.bool, device=ids.device), diagonal=1
            )
        for block in self.blocks:
            x = block(x, attn_mask=attn_mask, key_padding_mask=key_padding_mask)
        return self.final_norm(x)


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Linear):
        nn.init.normal_(module.weight, mean=0.0, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Embedding):
        nn.init.normal_(module.weight, mean=0.0, std=0.02)


def linear_warmup(warmup_steps: int):
    """LambdaLR factor: ramps linearly to 1 over warmup_steps, then holds."""

    def factor(step: int) -> float:
        return min(1.0, (step + 1) / max(1, warmup_steps))

    return factor


def pad_batch(
    sequences: list[tuple[int, ...]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad id sequences; returns (ids, key_padding_mask) with True at pads."""
    width = max(len(seq) for seq in sequences)
    ids = torch.full((len(sequences), width), pad_id, dtype=torch.long)
    mask = torch.ones(len(sequences), width, dtype=torch.bool)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask[row, : len(seq)] = False
    return ids, mask


def save_checkpoint(
    path: str | Path,
    *,
    kind: str,
    model: nn.Module,
    model_config,
    vocab_size: int,
    vocab_hash: str,
    config_hash: str = "",
) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "model_config": dataclasses.asdict(model_config),
        "vocab_size": vocab_size,
        "vocab_hash": vocab_hash,
        "config_hash": config_hash,
        "state_dict": model.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path, kind: str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format in {path}")
    if payload.get("kind") != kind:
        raise CheckpointError(
            f"checkpoint {path} holds a {payload.get('kind')!r} model, expected {kind!r}"
        )
    return payload
