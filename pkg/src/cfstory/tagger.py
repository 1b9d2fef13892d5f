"""Sketch stage: tag each ending token as causal or background.

A bidirectional transformer reads the full formatted story and emits a
two-way distribution per ending token. Training minimizes a weighted
cross entropy that lets a single knob trade causal recall against
precision; gold labels come from the longest-common-subsequence rule in
`skeleton`.
"""

from __future__ import annotations

import copy
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn

from .corpus import PAD_ID, FormattedInput, StoryPair, Vocab, format_sketch_input
from .errors import DatasetError
from .nn import Backbone, linear_warmup, load_checkpoint, pad_batch, save_checkpoint
from .skeleton import (
    LABEL_BACKGROUND,
    LABEL_CAUSAL,
    LabelSeq,
    Skeleton,
    build_skeleton,
    derive_labels,
)

logger = logging.getLogger(__name__)

# Gold probabilities below this are clamped before the log; hitting the
# clamp is logged because it means the model has saturated.
CLAMP_EPS = 1e-12

CHECKPOINT_KIND = "tagger"


@dataclass(frozen=True)
class TaggerConfig:
    """Architecture of the tagging model."""

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
class TaggerTrainConfig:
    """Optimization settings for the sketch stage.

    causal_weight is the loss weight on causal-token terms; background
    terms get one minus it.
    """

    causal_weight: float = 0.8
    learning_rate: float = 5e-5
    warmup_steps: int = 2000
    batch_size: int = 8
    epochs: int = 5
    seed: int = 0
    max_seq_len: int = 300

    def __post_init__(self) -> None:
        if not 0.0 < self.causal_weight < 1.0:
            raise ValueError("causal_weight must lie strictly between 0 and 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be positive")


class TaggerModel(nn.Module):
    """Bidirectional encoder with a two-way per-token head."""

    def __init__(self, vocab_size: int, config: TaggerConfig, vocab_hash: str = "") -> None:
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
            causal=False,
        )
        self.head = nn.Linear(config.embed_dim, 2)

    def forward(
        self, ids: torch.Tensor, key_padding_mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        return self.head(self.backbone(ids, key_padding_mask))


def label_distribution(model: TaggerModel, formatted: FormattedInput) -> torch.Tensor:
    """Per-token (causal, background) probabilities over the ending span.

    Returns a (ending_length, 2) tensor of rows summing to one. Pure in
    the model parameters, so it stays differentiable for loss code.
    """
    if formatted.ending_length <= 0:
        raise ValueError("formatted input has an empty ending span")
    ids = torch.tensor([formatted.token_ids], dtype=torch.long)
    logits = model(ids)[0, formatted.ending_start :]
    return torch.softmax(logits, dim=-1)


def weighted_ce_loss(probs: torch.Tensor, gold: LabelSeq, causal_weight: float) -> torch.Tensor:
    """Class-weighted negative log likelihood summed over tokens.

    Causal gold tokens contribute -w*log p(causal), background tokens
    -(1-w)*log p(background). Gold probabilities are clamped at 1e-12.
    """
    if not 0.0 < causal_weight < 1.0:
        raise ValueError("causal_weight must lie strictly between 0 and 1")
    if probs.dim() != 2 or probs.shape[1] != 2:
        raise ValueError("probs must have shape (tokens, 2)")
    if probs.shape[0] != len(gold):
        raise ValueError(f"got {probs.shape[0]} probability rows for {len(gold)} labels")
    gold_t = torch.as_tensor(list(gold), dtype=torch.long, device=probs.device)
    if gold_t.numel() and (gold_t.min() < 0 or gold_t.max() > 1):
        raise ValueError("labels must be 0 (causal) or 1 (background)")
    picked = probs.gather(1, gold_t.unsqueeze(1)).squeeze(1)
    low = picked < CLAMP_EPS
    if bool(low.any()):
        logger.warning("clamped %d gold probabilities below %g", int(low.sum()), CLAMP_EPS)
        picked = picked.clamp_min(CLAMP_EPS)
    weights = torch.where(
        gold_t == LABEL_CAUSAL,
        picked.new_tensor(causal_weight),
        picked.new_tensor(1.0 - causal_weight),
    )
    return -(weights * picked.log()).sum()


@dataclass(frozen=True)
class TagInstance:
    """One labeled training sequence: a formatted story plus gold labels
    aligned to its ending span."""

    story_id: str
    side: str
    token_ids: tuple[int, ...]
    ending_start: int
    labels: tuple[int, ...] = field(repr=False)


def build_tag_instances(
    pairs: list[StoryPair], vocab: Vocab, max_len: int
) -> list[TagInstance]:
    """Two instances per pair: the original ending labeled against the
    reference rewrite, and the rewrite labeled against the original."""
    instances: list[TagInstance] = []
    for pair in pairs:
        if not pair.reference_endings:
            raise DatasetError(f"pair {pair.story_id}: tagger training needs a reference ending")
        labels_original, labels_reference = derive_labels(
            pair.ending_tokens(), pair.reference_tokens()
        )
        for side, labels in (
            ("original", labels_original),
            ("counterfactual", labels_reference),
        ):
            formatted = format_sketch_input(pair, side, vocab, max_len)
            instances.append(
                TagInstance(
                    story_id=pair.story_id,
                    side=side,
                    token_ids=formatted.token_ids,
                    ending_start=formatted.ending_start,
                    labels=tuple(labels[: formatted.ending_length]),
                )
            )
    return instances


def _batch_loss(model: TaggerModel, batch: list[TagInstance], causal_weight: float) -> torch.Tensor:
    ids, key_padding_mask = pad_batch([inst.token_ids for inst in batch], PAD_ID)
    probs = torch.softmax(model(ids, key_padding_mask), dim=-1)
    rows: list[int] = []
    cols: list[int] = []
    gold: list[int] = []
    for row, inst in enumerate(batch):
        rows.extend([row] * len(inst.labels))
        cols.extend(range(inst.ending_start, inst.ending_start + len(inst.labels)))
        gold.extend(inst.labels)
    return weighted_ce_loss(probs[rows, cols], gold, causal_weight) / len(batch)


def evaluate_instances(
    model: TaggerModel, instances: list[TagInstance]
) -> tuple[list[LabelSeq], list[LabelSeq]]:
    """Predicted and gold label sequences for a set of instances."""
    predicted: list[LabelSeq] = []
    gold: list[LabelSeq] = []
    model.eval()
    with torch.no_grad():
        for inst in instances:
            ids = torch.tensor([inst.token_ids], dtype=torch.long)
            logits = model(ids)[0, inst.ending_start : inst.ending_start + len(inst.labels)]
            probs = torch.softmax(logits, dim=-1)
            predicted.append(_labels_from_probs(probs))
            gold.append(list(inst.labels))
    return predicted, gold


def _labels_from_probs(probs: torch.Tensor) -> LabelSeq:
    # Ties go to causal: background needs strictly higher probability.
    return [
        LABEL_BACKGROUND if float(p[LABEL_BACKGROUND]) > float(p[LABEL_CAUSAL]) else LABEL_CAUSAL
        for p in probs
    ]


def train_tagger(
    pairs: list[StoryPair],
    vocab: Vocab,
    train_config: TaggerTrainConfig,
    model_config: TaggerConfig | None = None,
    dev_pairs: list[StoryPair] | None = None,
    metrics_path: str | Path | None = None,
) -> tuple[TaggerModel, list[dict]]:
    """Train the tagger; returns the model and per-epoch history.

    With dev_pairs, the returned model is the epoch snapshot with the
    best dev causal F1; otherwise it is the final epoch. History rows
    carry train_loss and, when available, dev label metrics.
    """
    from .evaluation import label_metrics

    if not pairs:
        raise DatasetError("tagger training set is empty")
    model_config = model_config or TaggerConfig(max_len=train_config.max_seq_len)
    instances = build_tag_instances(pairs, vocab, train_config.max_seq_len)
    dev_instances = (
        build_tag_instances(dev_pairs, vocab, train_config.max_seq_len) if dev_pairs else []
    )

    torch.manual_seed(train_config.seed)
    model = TaggerModel(len(vocab), model_config, vocab.vocab_hash)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, linear_warmup(train_config.warmup_steps)
    )
    order_rng = random.Random(train_config.seed)

    history: list[dict] = []
    best_f1 = -1.0
    best_state: dict | None = None
    for epoch in range(1, train_config.epochs + 1):
        model.train()
        order = list(range(len(instances)))
        order_rng.shuffle(order)
        total = 0.0
        batches = 0
        for start in range(0, len(order), train_config.batch_size):
            batch = [instances[k] for k in order[start : start + train_config.batch_size]]
            loss = _batch_loss(model, batch, train_config.causal_weight)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            total += float(loss.detach())
            batches += 1
        entry: dict = {"epoch": epoch, "train_loss": total / batches}
        if dev_instances:
            predicted, gold = evaluate_instances(model, dev_instances)
            metrics = label_metrics(predicted, gold)
            entry.update(
                dev_causal_precision=metrics.causal_precision,
                dev_causal_recall=metrics.causal_recall,
                dev_causal_f1=metrics.causal_f1,
            )
            if metrics.causal_f1 > best_f1:
                best_f1 = metrics.causal_f1
                best_state = copy.deepcopy(model.state_dict())
        history.append(entry)
        logger.info("tagger epoch %d: %s", epoch, entry)

    if best_state is not None:
        model.load_state_dict(best_state)
    if metrics_path is not None:
        path = Path(metrics_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            for entry in history:
                handle.write(json.dumps(entry, sort_keys=True) + "\n")
    return model, history


def predict_labels(model: TaggerModel, formatted: FormattedInput) -> LabelSeq:
    """Hard labels over the ending span; ties resolve to causal."""
    model.eval()
    with torch.no_grad():
        probs = label_distribution(model, formatted)
    return _labels_from_probs(probs)


def predict_skeleton(
    model: TaggerModel, pair: StoryPair, vocab: Vocab, max_len: int | None = None
) -> Skeleton:
    """Tag the original ending and blank out the predicted causal runs."""
    max_len = max_len or model.config.max_len
    formatted = format_sketch_input(pair, "original", vocab, max_len)
    labels = predict_labels(model, formatted)
    tokens = pair.ending_tokens()[: formatted.ending_length]
    return build_skeleton(tokens, labels, source="predicted")


def save_tagger(path: str | Path, model: TaggerModel, config_hash: str = "") -> None:
    save_checkpoint(
        path,
        kind=CHECKPOINT_KIND,
        model=model,
        model_config=model.config,
        vocab_size=model.vocab_size,
        vocab_hash=model.vocab_hash,
        config_hash=config_hash,
    )


def load_tagger(path: str | Path) -> TaggerModel:
    payload = load_checkpoint(path, CHECKPOINT_KIND)
    config = TaggerConfig(**payload["model_config"])
    model = TaggerModel(payload["vocab_size"], config, payload["vocab_hash"])
    model.load_state_dict(payload["state_dict"])
    model.train_config_hash = payload.get("config_hash", "")
    model.eval()
    return model
