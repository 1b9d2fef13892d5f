"""Causal labels from ending pairs and the blank-merged skeleton form.

Tokens shared between an ending and its rewritten counterpart (the LCS) are
background content caused by the premise; everything else is causal content
driven by the condition. A skeleton is the ending with causal runs collapsed
into single blanks.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import BLANK_TOKEN, TokenSeq
from .lcs import lcs

LABEL_CAUSAL = 0
LABEL_BACKGROUND = 1

LabelSeq = list[int]

SKELETON_SOURCES = ("lcs", "predicted", "augmented", "random")


@dataclass(frozen=True)
class Skeleton:
    """Merged-form skeleton: background tokens and [BLANK] markers.

    Invariants: at least one item, no two adjacent blanks, and no blank
    markers hiding inside ordinary tokens (the tokenizer cannot produce
    them, so equality against BLANK_TOKEN is unambiguous).
    """

    tokens: tuple[str, ...]
    source: str = "lcs"

    def __post_init__(self) -> None:
        if self.source not in SKELETON_SOURCES:
            raise ValueError(f"unknown skeleton source {self.source!r}")
        if not self.tokens:
            raise ValueError("skeleton must contain at least one item")
        for first, second in zip(self.tokens, self.tokens[1:]):
            if first == BLANK_TOKEN and second == BLANK_TOKEN:
                raise ValueError("skeleton has adjacent blanks; merge it first")
        if any(not tok or tok != tok.strip() for tok in self.tokens):
            raise ValueError("skeleton tokens must be non-empty and trimmed")

    @property
    def blank_count(self) -> int:
        return sum(1 for tok in self.tokens if tok == BLANK_TOKEN)

    def background_tokens(self) -> TokenSeq:
        return [tok for tok in self.tokens if tok != BLANK_TOKEN]


def derive_labels(e: TokenSeq, e_prime: TokenSeq) -> tuple[LabelSeq, LabelSeq]:
    """Label both endings: LCS members are background (1), the rest causal (0)."""
    labels_e = [LABEL_CAUSAL] * len(e)
    labels_prime = [LABEL_CAUSAL] * len(e_prime)
    for i, j in lcs(e, e_prime):
        labels_e[i] = LABEL_BACKGROUND
        labels_prime[j] = LABEL_BACKGROUND
    return labels_e, labels_prime


def merge_blanks(tokens: TokenSeq) -> TokenSeq:
    """Collapse consecutive blank markers into one."""
    merged: TokenSeq = []
    for tok in tokens:
        if tok == BLANK_TOKEN and merged and merged[-1] == BLANK_TOKEN:
            continue
        merged.append(tok)
    return merged


def build_skeleton(e: TokenSeq, labels: LabelSeq, source: str = "lcs") -> Skeleton:
    """Replace causal tokens with blanks and merge runs.

    An all-causal ending collapses to a single blank; an all-background
    ending is preserved verbatim.
    """
    if len(e) != len(labels):
        raise ValueError(f"labels length {len(labels)} != ending length {len(e)}")
    if not e:
        raise ValueError("cannot build a skeleton from an empty ending")
    if any(label not in (LABEL_CAUSAL, LABEL_BACKGROUND) for label in labels):
        raise ValueError("labels must be 0 (causal) or 1 (background)")
    raw = [tok if label == LABEL_BACKGROUND else BLANK_TOKEN for tok, label in zip(e, labels)]
    return Skeleton(tuple(merge_blanks(raw)), source=source)


def render_skeleton(skeleton: Skeleton) -> TokenSeq:
    """Skeleton as a plain token sequence; blanks stay as [BLANK] markers."""
    return list(skeleton.tokens)


def parse_skeleton(tokens: TokenSeq, source: str = "lcs") -> Skeleton:
    """Inverse of render_skeleton; re-merges so parsing is always safe."""
    merged = merge_blanks(list(tokens))
    return Skeleton(tuple(merged), source=source)
