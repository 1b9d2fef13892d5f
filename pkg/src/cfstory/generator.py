"""Customize stage: generate a counterfactual ending from a skeleton.

A causal transformer is trained to continue the formatted context
(premise, one condition, skeleton) with the matching ending followed by
an end marker. Each story pair yields one instance per condition side,
and each augmented skeleton variant repeats both sides, so a pair with
the base skeleton plus three variants contributes eight instances.
Decoding uses top-k sampling with temperature; k=1 is greedy.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn

from .augment import augment_variants, item_seed
from .corpus import (
    EOE_ID,
    PAD_ID,
    SPECIAL_TOKENS,
    FormattedInput,
    StoryPair,
    TokenSeq,
    Vocab,
    format_customize_input,
)
from .errors import DatasetError, VocabMismatchError
from .nn import Backbone, linear_warmup, load_checkpoint, pad_batch, save_checkpoint
from .skeleton import Skeleton, build_skeleton, derive_labels
from .tagger import TaggerModel, predict_skeleton

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "generator"

# The end-of-ending marker is the only special token the sampler may
# emit; everything else reserved for input structure is masked out.
_BANNED_OUTPUT_IDS = tuple(i for i in range(len(SPECIAL_TOKENS)) if i != EOE_ID)


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture of the generation model."""

    embed_dim: int = 64
    n_layers: int = 2
    n_heads: int = 2
    ffn_dim: int = 128
    max_len: int = 300

    def __post_init__(self) -> None:
        if self.embed_dim % self.n_heads != 0:
            raise ValueError("embed_dim must be divisible by n_heads")
        if min(self.embed_dim, self.n_layers, self.n_heads, self.ffn_dim, self.max_len) < 1:
            raise ValueError("model dimensions must be positive")


@dataclass(frozen=True)
class GeneratorTrainConfig:
    """Optimization settings for the customize stage."""

    learning_rate: float = 1.5e-4
    warmup_steps: int = 2000
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0
    max_seq_len: int = 300

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be positive")


@dataclass(frozen=True)
class SamplerConfig:
    """Top-k temperature sampling; per-item seeds derive from seed."""

    top_k: int = 40
    temperature: float = 0.7
    seed: int = 0
    max_ending_length: int = 60

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.max_ending_length < 1:
            raise ValueError("max_ending_length must be positive")


class GeneratorModel(nn.Module):
    """Causal decoder with an untied output projection."""

    def __init__(self, vocab_size: int, config: GeneratorConfig, vocab_hash: str = "") -> None:
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        self.vocab_hash = vocab_hash
        self.train_config_hash = ""
        self.backbone = Backbone(
            vocab_size,
            config.max_len,
            config.embed_dim,
            config.n_layers,
            config.n_heads,
            config.ffn_dim,
            causal=True,
        )
        self.lm_head = nn.Linear(config.embed_dim, vocab_size, bias=False)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        # Trailing pads cannot influence earlier positions under the
        # causal mask, so no padding mask is needed.
        return self.lm_head(self.backbone(ids))


@dataclass(frozen=True)
class GenInstance:
    """One teacher-forcing sequence: context ids and the target ids that
    continue them (ending tokens plus the end marker)."""

    story_id: str
    side: str
    variant: str
    context_ids: tuple[int, ...]
    target_ids: tuple[int, ...] = field(repr=False)


def build_gen_instance(
    pair: StoryPair,
    side: str,
    skeleton: Skeleton,
    vocab: Vocab,
    max_len: int,
    variant: str = "lcs",
) -> GenInstance:
    """Format one conditioning context and attach its gold continuation.

    side "original" targets the original ending under the original
    condition; "counterfactual" targets the reference rewrite under the
    counterfactual condition.
    """
    formatted = format_customize_input(pair, side, skeleton, vocab, max_len)
    if side == "original":
        target_tokens = pair.ending_tokens()
    else:
        target_tokens = pair.reference_tokens()
    target_ids = vocab.encode_tokens(target_tokens)
    budget = max_len - len(formatted.token_ids) - 1
    if budget < 1:
        raise DatasetError(
            f"pair {pair.story_id}: context leaves no room for a generation target"
        )
    if len(target_ids) > budget:
        logger.warning(
            "pair %s: truncating generation target from %d to %d tokens",
            pair.story_id,
            len(target_ids),
            budget,
        )
        target_ids = target_ids[:budget]
    return GenInstance(
        story_id=pair.story_id,
        side=side,
        variant=variant,
        context_ids=formatted.token_ids,
        target_ids=tuple(target_ids) + (EOE_ID,),
    )


def training_skeletons(
    pairs: list[StoryPair],
    vocab: Vocab,
    seed: int,
    augment: bool = True,
    replace_ratio: float = 0.2,
) -> dict[str, list[tuple[str, Skeleton]]]:
    """Per-pair skeletons for generator training, keyed by story id.

    The base skeleton blanks the original ending's causal runs; with
    augment, the three perturbed variants are appended.
    """
    out: dict[str, list[tuple[str, Skeleton]]] = {}
    for pair in pairs:
        if not pair.reference_endings:
            raise DatasetError(
                f"pair {pair.story_id}: generator training needs a reference ending"
            )
        labels_original, _ = derive_labels(pair.ending_tokens(), pair.reference_tokens())
        base = build_skeleton(pair.ending_tokens(), labels_original)
        variants: list[tuple[str, Skeleton]] = [("lcs", base)]
        if augment:
            variants.extend(
                augment_variants(base, pair.story_id, seed, vocab, replace_ratio)
            )
        out[pair.story_id] = variants
    return out


def build_gen_instances(
    pairs: list[StoryPair],
    skeletons: dict[str, list[tuple[str, Skeleton]]],
    vocab: Vocab,
    max_len: int,
) -> list[GenInstance]:
    """Both condition sides for every skeleton variant of every pair."""
    instances: list[GenInstance] = []
    for pair in pairs:
        try:
            variants = skeletons[pair.story_id]
        except KeyError:
            raise DatasetError(f"pair {pair.story_id}: no skeletons provided") from None
        for variant, skeleton in variants:
            for side in ("original", "counterfactual"):
                instances.append(
                    build_gen_instance(pair, side, skeleton, vocab, max_len, variant)
                )
    return instances


def generation_loss(
    model: GeneratorModel, context: FormattedInput, target_ids: list[int]
) -> torch.Tensor:
    """Teacher-forced negative log likelihood summed over the target.

    The target must end with the end-of-ending id; context tokens
    contribute nothing to the sum.
    """
    target = list(target_ids)
    if not target or target[-1] != EOE_ID:
        raise ValueError("generation target must end with the end-of-ending id")
    context_ids = list(context.token_ids)
    full = context_ids + target
    if len(full) > model.config.max_len:
        raise ValueError(
            f"context plus target spans {len(full)} tokens, over the {model.config.max_len} limit"
        )
    ids = torch.tensor([full[:-1]], dtype=torch.long)
    log_probs = torch.log_softmax(model(ids)[0], dim=-1)
    steps = torch.arange(len(context_ids) - 1, len(full) - 1)
    gold = torch.tensor(full[len(context_ids) :], dtype=torch.long)
    return -log_probs[steps, gold].sum()


def _batch_loss(model: GeneratorModel, batch: list[GenInstance]) -> torch.Tensor:
    fulls = [inst.context_ids + inst.target_ids for inst in batch]
    ids, _ = pad_batch([full[:-1] for full in fulls], PAD_ID)
    log_probs = torch.log_softmax(model(ids), dim=-1)
    rows: list[int] = []
    cols: list[int] = []
    gold: list[int] = []
    for row, inst in enumerate(batch):
        start = len(inst.context_ids)
        rows.extend([row] * len(inst.target_ids))
        cols.extend(range(start - 1, start + len(inst.target_ids) - 1))
        gold.extend(inst.target_ids)
    return -log_probs[rows, cols, gold].sum() / len(batch)


def train_generator(
    pairs: list[StoryPair],
    skeletons: dict[str, list[tuple[str, Skeleton]]],
    vocab: Vocab,
    train_config: GeneratorTrainConfig,
    model_config: GeneratorConfig | None = None,
    metrics_path: str | Path | None = None,
) -> tuple[GeneratorModel, list[dict]]:
    """Train the generator; returns the final model and per-epoch history."""
    if not pairs:
        raise DatasetError("generator training set is empty")
    model_config = model_config or GeneratorConfig(max_len=train_config.max_seq_len)
    instances = build_gen_instances(pairs, skeletons, vocab, train_config.max_seq_len)

    torch.manual_seed(train_config.seed)
    model = GeneratorModel(len(vocab), model_config, vocab.vocab_hash)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, linear_warmup(train_config.warmup_steps)
    )
    order_rng = random.Random(train_config.seed)

    history: list[dict] = []
    for epoch in range(1, train_config.epochs + 1):
        model.train()
        order = list(range(len(instances)))
        order_rng.shuffle(order)
        total = 0.0
        batches = 0
        for start in range(0, len(order), train_config.batch_size):
            batch = [instances[k] for k in order[start : start + train_config.batch_size]]
            loss = _batch_loss(model, batch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            total += float(loss.detach())
            batches += 1
        entry = {"epoch": epoch, "train_loss": total / batches}
        history.append(entry)
        logger.info("generator epoch %d: %s", epoch, entry)

    if metrics_path is not None:
        path = Path(metrics_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            for entry in history:
                handle.write(json.dumps(entry, sort_keys=True) + "\n")
    return model, history


def top_k_filter(probs: torch.Tensor, top_k: int, temperature: float) -> torch.Tensor:
    """Temperature-scaled distribution restricted to the k likeliest ids.

    Accepts a (V,) or (batch, V) probability tensor. Ties at the k-th
    place break toward lower ids (stable sort), so top_k=1 always keeps
    exactly the argmax. Entries outside the top k are zero and the rest
    renormalize to one.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    squeeze = probs.dim() == 1
    if squeeze:
        probs = probs.unsqueeze(0)
    if probs.dim() != 2:
        raise ValueError("probs must be a vector or a batch of vectors")
    if bool((probs.sum(dim=-1) <= 0).any()):
        raise ValueError("each distribution needs positive total mass")
    k = min(top_k, probs.shape[-1])
    scaled = torch.log(probs) / temperature
    _, order = torch.sort(scaled, dim=-1, descending=True, stable=True)
    keep = order[:, :k]
    weights = torch.softmax(scaled.gather(-1, keep), dim=-1)
    out = torch.zeros_like(probs)
    out.scatter_(-1, keep, weights)
    return out.squeeze(0) if squeeze else out


def sample_top_k(
    probs: torch.Tensor,
    config: SamplerConfig,
    generator: torch.Generator | None = None,
) -> int:
    """Draw one id from the filtered distribution."""
    if generator is None:
        generator = torch.Generator().manual_seed(config.seed)
    filtered = top_k_filter(probs, config.top_k, config.temperature)
    return int(torch.multinomial(filtered, 1, generator=generator).item())


def generate_ending(
    model: GeneratorModel,
    pair: StoryPair,
    skeleton: Skeleton,
    config: SamplerConfig,
    vocab: Vocab,
    side: str = "counterfactual",
) -> TokenSeq:
    """Sample an ending for the given condition side and skeleton.

    Stops at the end-of-ending id, the length cap, or the position
    limit; structural special tokens are masked out, so the output
    never contains blanks or markers.
    """
    formatted = format_customize_input(pair, side, skeleton, vocab, model.config.max_len)
    ids = list(formatted.token_ids)
    sample_rng = torch.Generator().manual_seed(config.seed)
    out_ids: list[int] = []
    model.eval()
    for _ in range(config.max_ending_length):
        if len(ids) >= model.config.max_len:
            break
        with torch.no_grad():
            logits = model(torch.tensor([ids], dtype=torch.long))[0, -1]
        probs = torch.softmax(logits, dim=-1)
        probs[list(_BANNED_OUTPUT_IDS)] = 0.0
        next_id = sample_top_k(probs, config, sample_rng)
        if next_id == EOE_ID:
            break
        out_ids.append(next_id)
        ids.append(next_id)
    return vocab.decode_ids(out_ids)


def check_vocab_compatible(tagger: TaggerModel, generator: GeneratorModel) -> None:
    if tagger.vocab_hash != generator.vocab_hash:
        raise VocabMismatchError(
            "tagger and generator were built against different vocabularies "
            f"({tagger.vocab_hash[:12]} vs {generator.vocab_hash[:12]})"
        )


def rewrite(
    tagger: TaggerModel,
    generator: GeneratorModel,
    pair: StoryPair,
    config: SamplerConfig,
    vocab: Vocab,
) -> TokenSeq:
    """Full two-stage rewrite: sketch the original ending, then fill the
    skeleton under the counterfactual condition."""
    check_vocab_compatible(tagger, generator)
    skeleton = predict_skeleton(tagger, pair, vocab)
    return generate_ending(generator, pair, skeleton, config, vocab)


def save_generator(path: str | Path, model: GeneratorModel, config_hash: str = "") -> None:
    save_checkpoint(
        path,
        kind=CHECKPOINT_KIND,
        model=model,
        model_config=model.config,
        vocab_size=model.vocab_size,
        vocab_hash=model.vocab_hash,
        config_hash=config_hash,
    )


def load_generator(path: str | Path) -> GeneratorModel:
    payload = load_checkpoint(path, CHECKPOINT_KIND)
    config = GeneratorConfig(**payload["model_config"])
    model = GeneratorModel(payload["vocab_size"], config, payload["vocab_hash"])
    model.load_state_dict(payload["state_dict"])
    model.train_config_hash = payload.get("config_hash", "")
    model.eval()
    return model
