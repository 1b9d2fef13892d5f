"""Backbone masking semantics, padding, warmup schedule, checkpoints."""

from __future__ import annotations

from dataclasses import dataclass

import pytest
import torch

from cfstory.errors import CheckpointError
from cfstory.nn import (
    Backbone,
    linear_warmup,
    load_checkpoint,
    pad_batch,
    save_checkpoint,
)


@dataclass(frozen=True)
class _ShapeConfig:
    embed_dim: int = 16
    n_layers: int = 2
    n_heads: int = 2
    ffn_dim: int = 32
    max_len: int = 12


def _backbone(causal: bool, seed: int = 0, vocab_size: int = 20) -> Backbone:
    torch.manual_seed(seed)
    cfg = _ShapeConfig()
    return Backbone(
        vocab_size=vocab_size,
        max_len=cfg.max_len,
        embed_dim=cfg.embed_dim,
        n_layers=cfg.n_layers,
        n_heads=cfg.n_heads,
        ffn_dim=cfg.ffn_dim,
        causal=causal,
    )


def test_pad_batch_shapes_and_mask():
    ids, mask = pad_batch([(1, 2, 3), (4,)], pad_id=0)
    assert ids.tolist() == [[1, 2, 3], [4, 0, 0]]
    assert mask.tolist() == [[False, False, False], [False, True, True]]
    assert ids.dtype == torch.long and mask.dtype == torch.bool


def test_linear_warmup_schedule():
    factor = linear_warmup(4)
    assert [factor(step) for step in range(6)] == [0.25, 0.5, 0.75, 1.0, 1.0, 1.0]
    assert linear_warmup(0)(0) == 1.0


def test_backbone_rejects_overlong_input():
    model = _backbone(causal=False)
    with pytest.raises(ValueError, match="exceeds max_len"):
        model(torch.zeros(1, 13, dtype=torch.long))


def test_backbone_seeded_construction_is_deterministic():
    a = _backbone(causal=True, seed=7)
    b = _backbone(causal=True, seed=7)
    ids = torch.randint(0, 20, (2, 8), generator=torch.Generator().manual_seed(1))
    with torch.no_grad():
        assert torch.equal(a(ids), b(ids))


def test_causal_mask_blocks_future_positions():
    model = _backbone(causal=True).double().eval()
    g = torch.Generator().manual_seed(2)
    ids = torch.randint(0, 20, (1, 8), generator=g)
    altered = ids.clone()
    altered[0, 5:] = (altered[0, 5:] + 1) % 20
    with torch.no_grad():
        out_a = model(ids)
        out_b = model(altered)
    assert torch.allclose(out_a[:, :5], out_b[:, :5], atol=1e-12, rtol=0)
    assert not torch.allclose(out_a[:, 5:], out_b[:, 5:], atol=1e-6)


def test_bidirectional_backbone_sees_future_positions():
    model = _backbone(causal=False).double().eval()
    g = torch.Generator().manual_seed(3)
    ids = torch.randint(0, 20, (1, 8), generator=g)
    altered = ids.clone()
    altered[0, 7] = (altered[0, 7] + 1) % 20
    with torch.no_grad():
        assert not torch.allclose(model(ids)[:, 0], model(altered)[:, 0], atol=1e-6)


def test_key_padding_mask_isolates_pad_columns():
    model = _backbone(causal=False).double().eval()
    seq = (3, 4, 5, 6)
    ids, mask = pad_batch([seq, (3, 4)], pad_id=0)
    with torch.no_grad():
        batched = model(ids, key_padding_mask=mask)
        alone = model(torch.tensor([list(seq)]), key_padding_mask=None)
    assert torch.allclose(batched[0], alone[0], atol=1e-9, rtol=0)


def test_linear_biases_initialize_to_zero():
    model = _backbone(causal=False)
    ffn_first = model.blocks[0].ffn[0]
    assert torch.equal(ffn_first.bias, torch.zeros_like(ffn_first.bias))


def test_checkpoint_round_trip(tmp_path):
    model = _backbone(causal=True, seed=5)
    path = tmp_path / "model.pt"
    save_checkpoint(
        path,
        kind="tagger",
        model=model,
        model_config=_ShapeConfig(),
        vocab_size=20,
        vocab_hash="abc",
        config_hash="cfg123",
    )
    payload = load_checkpoint(path, "tagger")
    assert payload["vocab_size"] == 20
    assert payload["vocab_hash"] == "abc"
    assert payload["config_hash"] == "cfg123"
    assert payload["model_config"]["embed_dim"] == 16
    fresh = _backbone(causal=True, seed=9)
    fresh.load_state_dict(payload["state_dict"])
    for key, value in model.state_dict().items():
        assert torch.equal(fresh.state_dict()[key], value)


def test_checkpoint_kind_mismatch(tmp_path):
    path = tmp_path / "model.pt"
    save_checkpoint(
        path,
        kind="tagger",
        model=_backbone(causal=True),
        model_config=_ShapeConfig(),
        vocab_size=20,
        vocab_hash="abc",
    )
    with pytest.raises(CheckpointError, match="expected 'generator'"):
        load_checkpoint(path, "generator")


def test_checkpoint_missing_or_corrupt(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.pt", "tagger")
    junk = tmp_path / "junk.pt"
    junk.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError, match="unreadable"):
        load_checkpoint(junk, "tagger")
    stale = tmp_path / "stale.pt"
    torch.save({"format_version": 99}, stale)
    with pytest.raises(CheckpointError, match="unsupported checkpoint format"):
        load_checkpoint(stale, "tagger")
