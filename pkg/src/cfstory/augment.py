"""Skeleton augmentation for regularizing the customize stage.

Three seeded variants per skeleton: blank out extra background tokens,
replace background tokens with sampled vocabulary words, or shuffle the
background word order while blanks keep their slots. Expanding a pair with
all three yields four training skeletons (original plus variants).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from hashlib import sha256

from .corpus import BLANK_TOKEN, SPECIAL_TOKENS, Vocab
from .skeleton import Skeleton, merge_blanks

AUGMENT_VARIANTS = ("blank", "replace", "shuffle")


@dataclass(frozen=True)
class AugmentConfig:
    """Replacement ratio, seed, and the vocabulary replacements draw from."""

    replace_ratio: float = 0.2
    seed: int = 0
    vocab: Vocab | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.replace_ratio <= 1.0:
            raise ValueError(f"replace_ratio must be in [0, 1], got {self.replace_ratio}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _background_positions(tokens: tuple[str, ...]) -> list[int]:
    return [idx for idx, tok in enumerate(tokens) if tok != BLANK_TOKEN]


def item_seed(base_seed: int, story_id: str, variant: str) -> int:
    """Stable per-item seed so parallel order never changes the output."""
    digest = sha256(f"{base_seed}:{story_id}:{variant}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def augment_blank(skeleton: Skeleton, cfg: AugmentConfig) -> Skeleton:
    """Blank out round(ratio * B) background tokens, then re-merge."""
    positions = _background_positions(skeleton.tokens)
    count = _round_half_up(cfg.replace_ratio * len(positions))
    if count == 0:
        return Skeleton(skeleton.tokens, source="augmented")
    rng = random.Random(cfg.seed)
    chosen = set(rng.sample(positions, count))
    raw = [
        BLANK_TOKEN if idx in chosen else tok for idx, tok in enumerate(skeleton.tokens)
    ]
    return Skeleton(tuple(merge_blanks(raw)), source="augmented")


def augment_replace(skeleton: Skeleton, cfg: AugmentConfig) -> Skeleton:
    """Swap round(ratio * B) background tokens for sampled vocabulary words.

    Samples are uniform over the non-reserved vocabulary minus the token
    being replaced, so the changed-token count is exact rather than merely
    expected. Blank structure is untouched.
    """
    if cfg.vocab is None:
        raise ValueError("augment_replace needs a vocab in the config")
    pool = list(cfg.vocab.id_to_token[len(SPECIAL_TOKENS):])
    if len(pool) < 2:
        raise ValueError("vocab has too few non-reserved tokens to sample from")
    positions = _background_positions(skeleton.tokens)
    count = _round_half_up(cfg.replace_ratio * len(positions))
    if count == 0:
        return Skeleton(skeleton.tokens, source="augmented")
    rng = random.Random(cfg.seed)
    chosen = rng.sample(positions, count)
    tokens = list(skeleton.tokens)
    for idx in chosen:
        candidates = [tok for tok in pool if tok != tokens[idx]]
        tokens[idx] = rng.choice(candidates)
    return Skeleton(tuple(tokens), source="augmented")


def augment_shuffle(skeleton: Skeleton, cfg: AugmentConfig) -> Skeleton:
    """Permute background words; blanks keep their slots between them."""
    positions = _background_positions(skeleton.tokens)
    background = [skeleton.tokens[idx] for idx in positions]
    rng = random.Random(cfg.seed)
    rng.shuffle(background)
    tokens = list(skeleton.tokens)
    for idx, word in zip(positions, background):
        tokens[idx] = word
    return Skeleton(tuple(tokens), source="augmented")


def augment_variants(
    skeleton: Skeleton,
    story_id: str,
    base_seed: int,
    vocab: Vocab,
    replace_ratio: float = 0.2,
) -> list[tuple[str, Skeleton]]:
    """All three augmented variants with per-item derived seeds."""
    out: list[tuple[str, Skeleton]] = []
    for variant in AUGMENT_VARIANTS:
        cfg = AugmentConfig(
            replace_ratio=replace_ratio,
            seed=item_seed(base_seed, story_id, variant),
            vocab=vocab,
        )
        if variant == "blank":
            out.append((variant, augment_blank(skeleton, cfg)))
        elif variant == "replace":
            out.append((variant, augment_replace(skeleton, cfg)))
        else:
            out.append((variant, augment_shuffle(skeleton, cfg)))
    return out
