"""Data model, dataset ingestion, tokenization, vocabulary, input assembly.

A story pair couples one five-sentence story (premise, condition, three
ending sentences) with a counterfactual condition and its rewritten
endings. Both model stages consume flat token-id sequences assembled here
with reserved marker tokens.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path

from .errors import DatasetError

logger = logging.getLogger(__name__)

TokenSeq = list[str]

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
PRE_TOKEN = "[PRE]"
CON1_TOKEN = "[CON1]"
CON2_TOKEN = "[CON2]"
CON_TOKEN = "[CON]"
SKE_TOKEN = "[SKE]"
END_TOKEN = "[END]"
BLANK_TOKEN = "[BLANK]"
EOE_TOKEN = "[EOE]"

# Reserved ids 0..9 are frozen; saved vocabularies and checkpoints rely on
# this exact order.
SPECIAL_TOKENS: tuple[str, ...] = (
    PAD_TOKEN,
    UNK_TOKEN,
    PRE_TOKEN,
    CON1_TOKEN,
    CON2_TOKEN,
    CON_TOKEN,
    SKE_TOKEN,
    END_TOKEN,
    BLANK_TOKEN,
    EOE_TOKEN,
)
(PAD_ID, UNK_ID, PRE_ID, CON1_ID, CON2_ID, CON_ID, SKE_ID, END_ID,
 BLANK_ID, EOE_ID) = range(len(SPECIAL_TOKENS))

_SPECIAL_SET = frozenset(SPECIAL_TOKENS)

MAX_SEQ_LEN = 300

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_SENTENCE_RE = re.compile(r"[^.!?]+[.!?]+|[^.!?]+")

VOCAB_FORMAT_VERSION = 1


def tokenize(text: str) -> TokenSeq:
    """Lowercase and split into word and punctuation tokens.

    Every non-alphanumeric, non-space character becomes its own token, so
    contractions split at the apostrophe ("don't" -> [don, ', t]).
    """
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: TokenSeq) -> str:
    """Join tokens with single spaces (original spacing is not recovered)."""
    return " ".join(tokens)


@dataclass(frozen=True)
class Story:
    """Premise sentence, condition sentence, and a three-sentence ending."""

    premise: str
    condition: str
    ending: tuple[str, str, str]


@dataclass(frozen=True)
class StoryPair:
    """One story plus its counterfactual condition and rewritten endings.

    Training pairs carry one reference ending; dev and test pairs carry one
    or more (the source corpus provides three).
    """

    story_id: str
    story: Story
    counterfactual_condition: str
    reference_endings: tuple[tuple[str, str, str], ...]

    def ending_tokens(self) -> TokenSeq:
        """Original ending as one flat token sequence."""
        return tokenize(" ".join(self.story.ending))

    def reference_tokens(self, index: int = 0) -> TokenSeq:
        """One reference ending as a flat token sequence."""
        return tokenize(" ".join(self.reference_endings[index]))


def split_ending(raw: str | list | tuple, where: str = "") -> tuple[str, str, str]:
    """Normalize an ending into exactly three sentence strings.

    Lists pass through after stripping; single strings are split at sentence
    terminators (naive rule). More than three fragments fold the tail into
    the third sentence; fewer is an error.
    """
    if isinstance(raw, (list, tuple)):
        parts = [str(s).strip() for s in raw]
    elif isinstance(raw, str):
        parts = [p.strip() for p in _SENTENCE_RE.findall(raw)]
    else:
        raise DatasetError(f"{where}: ending must be a string or list, got {type(raw).__name__}")
    parts = [p for p in parts if p]
    if len(parts) > 3:
        parts = parts[:2] + [" ".join(parts[2:])]
    if len(parts) != 3:
        raise DatasetError(f"{where}: expected 3 ending sentences, found {len(parts)}")
    return (parts[0], parts[1], parts[2])


def load_dataset(path: str | Path, split: str) -> list[StoryPair]:
    """Read one JSONL split into story pairs, preserving file order.

    Each line must hold premise, initial, counterfactual and original_ending;
    dev and test lines must also carry a non-empty edited_endings list.
    Malformed lines raise DatasetError naming the line, never skip silently.
    """
    if split not in ("train", "dev", "test"):
        raise ValueError(f"unknown split {split!r}")
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    pairs: list[StoryPair] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            where = f"{path.name}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"{where}: expected a JSON object")
            for name in ("premise", "initial", "counterfactual", "original_ending"):
                if name not in record:
                    raise DatasetError(f"{where}: missing field {name!r}")
                if not isinstance(record[name], (str, list)) or not record[name]:
                    raise DatasetError(f"{where}: field {name!r} is empty or mistyped")
            premise = str(record["premise"]).strip()
            condition = str(record["initial"]).strip()
            cf_condition = str(record["counterfactual"]).strip()
            if not premise or not condition or not cf_condition:
                raise DatasetError(f"{where}: blank premise or condition")
            ending = split_ending(record["original_ending"], where)
            raw_refs = record.get("edited_endings", [])
            if not isinstance(raw_refs, list):
                raise DatasetError(f"{where}: edited_endings must be a list")
            refs = tuple(split_ending(r, where) for r in raw_refs)
            if split != "train" and not refs:
                raise DatasetError(f"{where}: {split} line lacks edited_endings")
            story_id = str(record.get("story_id") or f"{split}-{lineno:06d}")
            pairs.append(
                StoryPair(
                    story_id=story_id,
                    story=Story(premise=premise, condition=condition, ending=ending),
                    counterfactual_condition=cf_condition,
                    reference_endings=refs,
                )
            )
    return pairs


@dataclass(frozen=True)
class Vocab:
    """Token table with reserved specials at ids 0..9."""

    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if tuple(self.id_to_token[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("vocab must start with the reserved special tokens")
        mapping = {tok: idx for idx, tok in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise ValueError("vocab contains duplicate tokens")
        object.__setattr__(self, "token_to_id", mapping)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode_tokens(self, tokens: TokenSeq) -> list[int]:
        mapping = self.token_to_id
        return [mapping.get(tok, UNK_ID) for tok in tokens]

    def decode(self, token_id: int) -> str:
        return self.id_to_token[token_id]

    def decode_ids(self, ids: list[int] | tuple[int, ...]) -> TokenSeq:
        table = self.id_to_token
        return [table[i] for i in ids]

    def is_special(self, token_id: int) -> bool:
        return token_id < len(SPECIAL_TOKENS)

    @property
    def vocab_hash(self) -> str:
        """Content hash used to detect checkpoint/vocabulary mismatches."""
        return sha256("\n".join(self.id_to_token).encode("utf-8")).hexdigest()

    @classmethod
    def build(cls, pairs: list[StoryPair], min_count: int = 1) -> "Vocab":
        """Count every text field and keep tokens with frequency >= min_count.

        Ordering is frequency descending, then lexicographic, so corpora with
        identical token multisets produce identical vocabularies.
        """
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        if not pairs:
            raise DatasetError("cannot build a vocabulary from an empty corpus")
        counts: Counter[str] = Counter()
        for pair in pairs:
            counts.update(tokenize(pair.story.premise))
            counts.update(tokenize(pair.story.condition))
            counts.update(tokenize(pair.counterfactual_condition))
            counts.update(pair.ending_tokens())
            for idx in range(len(pair.reference_endings)):
                counts.update(pair.reference_tokens(idx))
        kept = [
            (token, count)
            for token, count in counts.items()
            if count >= min_count and token not in _SPECIAL_SET
        ]
        kept.sort(key=lambda item: (-item[1], item[0]))
        return cls(SPECIAL_TOKENS + tuple(token for token, _ in kept))

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": VOCAB_FORMAT_VERSION,
            "n_special": len(SPECIAL_TOKENS),
            "tokens": list(self.id_to_token),
        }
        Path(path).write_text(json.dumps(payload, indent=0, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        path = Path(path)
        if not path.is_file():
            raise DatasetError(f"vocab file not found: {path}")
        payload = json.loads(path.read_text(encoding="utf-8"))
        if payload.get("format_version") != VOCAB_FORMAT_VERSION:
            raise DatasetError(f"unsupported vocab format in {path}")
        return cls(tuple(payload["tokens"]))


@dataclass(frozen=True)
class FormattedInput:
    """Flat id sequence for one model input.

    sections maps each marker token to its position; ending_start is the
    index right after [END], where the ending span (or generation) begins.
    """

    token_ids: tuple[int, ...]
    sections: tuple[tuple[str, int], ...]
    ending_start: int
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def ending_length(self) -> int:
        return len(self.token_ids) - self.ending_start


def _truncate_tail(
    context_len: int, tail: TokenSeq, max_len: int, what: str, story_id: str
) -> tuple[TokenSeq, bool]:
    budget = max_len - context_len
    if budget < 1:
        raise DatasetError(
            f"pair {story_id}: context alone fills the {max_len}-token limit"
        )
    if len(tail) <= budget:
        return tail, False
    logger.warning(
        "pair %s: %s truncated from %d to %d tokens", story_id, what, len(tail), budget
    )
    return tail[:budget], True


def _assemble(
    vocab: Vocab, parts: list[tuple[str, TokenSeq]], ending: TokenSeq
) -> tuple[list[int], tuple[tuple[str, int], ...], int]:
    ids: list[int] = []
    sections: list[tuple[str, int]] = []
    for marker, tokens in parts:
        sections.append((marker, len(ids)))
        ids.append(vocab.token_to_id[marker])
        ids.extend(vocab.encode_tokens(tokens))
    sections.append((END_TOKEN, len(ids)))
    ids.append(END_ID)
    ending_start = len(ids)
    ids.extend(vocab.encode_tokens(ending))
    return ids, tuple(sections), ending_start


def format_sketch_input(
    pair: StoryPair,
    ending_side: str,
    vocab: Vocab,
    max_len: int = MAX_SEQ_LEN,
    ref_index: int = 0,
) -> FormattedInput:
    """Assemble [PRE] p [CON1] . [CON2] . [END] ending for the sketch stage.

    The original side carries (condition, counterfactual condition, original
    ending). The counterfactual side swaps the condition roles and carries a
    reference ending, which doubles the usable training examples. Overlong
    sequences lose ending-tail tokens, never context.
    """
    if ending_side == "original":
        first, second = pair.story.condition, pair.counterfactual_condition
        ending = pair.ending_tokens()
    elif ending_side == "counterfactual":
        if not pair.reference_endings:
            raise DatasetError(
                f"pair {pair.story_id}: counterfactual side needs a reference ending"
            )
        first, second = pair.counterfactual_condition, pair.story.condition
        ending = pair.reference_tokens(ref_index)
    else:
        raise ValueError(f"unknown ending_side {ending_side!r}")
    parts = [
        (PRE_TOKEN, tokenize(pair.story.premise)),
        (CON1_TOKEN, tokenize(first)),
        (CON2_TOKEN, tokenize(second)),
    ]
    context_len = sum(1 + len(tokens) for _, tokens in parts) + 1
    ending, truncated = _truncate_tail(context_len, ending, max_len, "ending", pair.story_id)
    if not ending:
        raise DatasetError(f"pair {pair.story_id}: empty ending span")
    ids, sections, ending_start = _assemble(vocab, parts, ending)
    return FormattedInput(tuple(ids), sections, ending_start, truncated)


def format_customize_input(
    pair: StoryPair,
    condition_side: str,
    skeleton,
    vocab: Vocab,
    max_len: int = MAX_SEQ_LEN,
) -> FormattedInput:
    """Assemble [PRE] p [CON] x [SKE] k [END] for the customize stage.

    The single [CON] marker serves both sides; x is the original condition or
    the counterfactual one. The skeleton plays the tail role for truncation.
    The result ends at [END]; generation targets start at ending_start.
    """
    if condition_side == "original":
        condition = pair.story.condition
    elif condition_side == "counterfactual":
        condition = pair.counterfactual_condition
    else:
        raise ValueError(f"unknown condition_side {condition_side!r}")
    skeleton_tokens = list(skeleton.tokens)
    head = [
        (PRE_TOKEN, tokenize(pair.story.premise)),
        (CON_TOKEN, tokenize(condition)),
    ]
    head_len = sum(1 + len(tokens) for _, tokens in head) + 2  # [SKE] and [END]
    skeleton_tokens, truncated = _truncate_tail(
        head_len, skeleton_tokens, max_len, "skeleton", pair.story_id
    )
    parts = head + [(SKE_TOKEN, skeleton_tokens)]
    ids, sections, ending_start = _assemble(vocab, parts, [])
    return FormattedInput(tuple(ids), sections, ending_start, truncated)
