"""Shared test fixtures and helpers."""

from __future__ import annotations

import sys
from pathlib import Path

from cfstory.corpus import SPECIAL_TOKENS, Story, StoryPair, Vocab

sys.path.insert(0, str(Path(__file__).parent))


def make_pair(
    ending_tokens,
    reference_tokens,
    story_id: str = "p0",
    premise: str = "a calm start .",
    condition: str = "the first plan .",
    counterfactual: str = "the other plan .",
    extra_references=(),
) -> StoryPair:
    """Pair with exact ending token lists (sentence structure collapsed)."""
    references = [tuple([" ".join(reference_tokens), "", ""])]
    references.extend(tuple([" ".join(ref), "", ""]) for ref in extra_references)
    return StoryPair(
        story_id=story_id,
        story=Story(
            premise=premise,
            condition=condition,
            ending=(" ".join(ending_tokens), "", ""),
        ),
        counterfactual_condition=counterfactual,
        reference_endings=tuple(references),
    )


def make_vocab(*words: str) -> Vocab:
    """Vocabulary with the reserved specials plus the given words."""
    return Vocab(SPECIAL_TOKENS + tuple(dict.fromkeys(words)))
