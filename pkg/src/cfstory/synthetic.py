"""Synthetic story corpora for demos and self-checks.

Two generators, both deterministic given a seed and indexable (pair i
never depends on how many pairs are requested):

* a templated corpus where each condition word maps to one fill word
  that is the single causal token of the ending, so the full pipeline
  has a learnable, checkable signal;
* an ambiguity corpus whose endings mix word types that are always
  causal with types appearing in both causal and background roles at
  controlled rates, so sweeping the causal loss weight trades recall
  against precision in a predictable direction.

Run as a module to write train/dev/test JSONL files.
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from .augment import item_seed
from .corpus import Story, StoryPair, tokenize
from .skeleton import LABEL_CAUSAL, derive_labels

NAMES = (
    "mia", "liam", "ava", "noah", "emma", "lucas", "olivia", "ethan",
    "sophia", "mason", "isla", "owen", "ruby", "caleb", "nora", "felix",
    "hazel", "jonas", "ivy", "dylan",
)

# Toy corpus: each condition word deterministically selects the one
# object word that must appear in the ending.
CONDITION_FILLS = {
    "storm": "umbrella", "picnic": "basket", "exam": "textbook",
    "party": "balloons", "concert": "tickets", "garden": "shovel",
    "bakery": "flour", "beach": "towel", "library": "novel",
    "market": "apples", "wedding": "bouquet", "hike": "compass",
    "movie": "popcorn", "puzzle": "jigsaw", "soccer": "cleats",
    "painting": "brushes", "camping": "tent", "fishing": "tackle",
    "snowfall": "sled", "roadtrip": "atlas",
}

PREMISE_TEMPLATES = (
    "{name} lived near the old square.",
    "{name} spent the week at home.",
    "{name} woke early on saturday.",
    "{name} had a quiet morning.",
)

CONDITION_TEMPLATES = (
    "{name} planned a {cond} for the weekend.",
    "that day {name} heard about the {cond}.",
    "{name} signed up for the {cond}.",
    "a {cond} was coming up soon.",
)

# Exactly three sentences each; the fill slot moves between sentences so
# position alone does not give it away.
ENDING_TEMPLATES = (
    ("{name} packed the {fill} right away.",
     "the morning felt calm and bright.",
     "friends arrived before noon."),
    ("first {name} found the {fill} upstairs.",
     "the afternoon went by fast.",
     "everyone smiled on the way home."),
    ("{name} grabbed the {fill} from the shelf.",
     "the street outside was quiet.",
     "the plan worked out fine."),
    ("the sky looked clear at last.",
     "{name} fetched the {fill} quickly.",
     "neighbors waved from the porch."),
    ("the house was still asleep.",
     "so {name} took the {fill} outside.",
     "the gate clicked shut behind."),
    ("the list sat on the table.",
     "everything seemed ready early.",
     "{name} lifted the {fill} with care."),
    ("the phone rang twice then stopped.",
     "the hallway stayed dim all day.",
     "finally {name} chose the {fill}."),
    ("{name} set the {fill} by the door.",
     "a soft wind crossed the yard.",
     "the day ended well."),
)


def toy_fill_word(condition_word: str) -> str:
    return CONDITION_FILLS[condition_word]


def make_toy_pairs(n: int, seed: int = 0) -> list[StoryPair]:
    """Templated pairs whose endings differ in exactly the fill word."""
    conditions = sorted(CONDITION_FILLS)
    pairs = []
    for i in range(n):
        rng = random.Random(item_seed(seed, str(i), "toy"))
        cond_x = conditions[i % len(conditions)]
        cond_y = rng.choice([c for c in conditions if c != cond_x])
        name = rng.choice(NAMES)
        premise = rng.choice(PREMISE_TEMPLATES).format(name=name)
        cond_template = rng.choice(CONDITION_TEMPLATES)
        ending_template = rng.choice(ENDING_TEMPLATES)
        ending = tuple(
            s.format(name=name, fill=toy_fill_word(cond_x)) for s in ending_template
        )
        reference = tuple(
            s.format(name=name, fill=toy_fill_word(cond_y)) for s in ending_template
        )
        pairs.append(
            StoryPair(
                story_id=f"toy-{i:06d}",
                story=Story(
                    premise=premise,
                    condition=cond_template.format(name=name, cond=cond_x),
                    ending=ending,
                ),
                counterfactual_condition=cond_template.format(name=name, cond=cond_y),
                reference_endings=(reference,),
            )
        )
    return pairs


# Ambiguity corpus pools. Pure causal words only ever fill slots; the
# two ambiguous tiers appear in slots and as shared background inserts
# at rates chosen so the per-type causal probability is near the tier
# target. Content words and inserts from the background pool never fill
# slots.
PURE_CAUSAL = (
    "crimson", "velvet", "thunder", "ember", "frost",
    "quartz", "raven", "tulip", "candle", "ribbon",
)
AMBIG_HIGH = ("copper", "marble", "amber", "cedar", "ivory", "slate")
AMBIG_LOW = ("willow", "pearl", "fern", "maple", "coral", "linen")
BACKGROUND_WORDS = (
    "lamp", "door", "street", "window", "river", "stone", "cloud",
    "grass", "evening", "light", "shadow", "corner", "wall", "path",
    "breeze", "bench", "chair", "roof", "field", "bell", "garden",
    "meadow", "harbor", "orchard",
)

HIGH_TIER_CAUSAL_RATE = 0.65
LOW_TIER_CAUSAL_RATE = 0.35

# Fractions of slot draws (four per pair) and insert draws (two per
# pair, each appearing in both endings) assigned to each tier. These
# realize the tier causal rates above and put roughly ten percent of
# ending tokens in a minority role for their type.
_SLOT_SHARES = {"high": 0.557, "low": 0.35}
_INSERT_SHARES = {"high": 0.30, "low": 0.65}

_TREND_TIME_WORDS = (
    "monday", "tuesday", "wednesday", "thursday",
    "friday", "sunday", "dawn", "dusk",
)


def _role_schedule(total: int, shares: dict[str, float], rng: random.Random) -> list[str]:
    high = round(total * shares["high"])
    low = round(total * shares["low"])
    roles = ["high"] * high + ["low"] * low + ["pure"] * (total - high - low)
    rng.shuffle(roles)
    return roles


_POOLS = {"high": AMBIG_HIGH, "low": AMBIG_LOW}


def make_trend_pairs(n: int, seed: int = 0, ambiguous: bool = True) -> list[StoryPair]:
    """Pairs with two causal slots and two shared inserts per ending.

    With ambiguous=False every slot draws from the pure causal pool and
    every insert from the background pool, making labels perfectly
    separable by token type.
    """
    schedule_rng = random.Random(item_seed(seed, "schedules", "trend"))
    if ambiguous:
        slot_roles = _role_schedule(4 * n, _SLOT_SHARES, schedule_rng)
        insert_roles = _role_schedule(2 * n, _INSERT_SHARES, schedule_rng)
    else:
        slot_roles = ["pure"] * (4 * n)
        insert_roles = ["pure"] * (2 * n)

    pairs = []
    for i in range(n):
        rng = random.Random(item_seed(seed, str(i), "trend"))
        taken: set[str] = set()

        def draw(pool: tuple[str, ...]) -> str:
            word = rng.choice([w for w in pool if w not in taken])
            taken.add(word)
            return word

        def slot_word(role: str) -> str:
            return draw(_POOLS.get(role, PURE_CAUSAL))

        def insert_word(role: str) -> str:
            return draw(_POOLS.get(role, BACKGROUND_WORDS))

        slots = [slot_word(slot_roles[4 * i + k]) for k in range(4)]
        inserts = [insert_word(insert_roles[2 * i + k]) for k in range(2)]
        content = [draw(BACKGROUND_WORDS) for _ in range(3)]

        def sentence(k: int, slot: str) -> str:
            middle = [content[k], slot, inserts[k]]
            rng_order = order[k]
            return "the " + " ".join(middle[j] for j in rng_order) + "."

        order = [rng.sample(range(3), 3), rng.sample(range(3), 3)]
        ending = (
            sentence(0, slots[0]),
            sentence(1, slots[1]),
            f"the {content[2]}.",
        )
        reference = (
            sentence(0, slots[2]),
            sentence(1, slots[3]),
            f"the {content[2]}.",
        )

        name = rng.choice(NAMES)
        times = rng.sample(_TREND_TIME_WORDS, 2)
        pairs.append(
            StoryPair(
                story_id=f"trend-{i:06d}",
                story=Story(
                    premise=f"{name} kept a small notebook.",
                    condition=f"{name} heard the news on {times[0]}.",
                    ending=ending,
                ),
                counterfactual_condition=f"{name} heard the news on {times[1]}.",
                reference_endings=(reference,),
            )
        )
    return pairs


def corpus_noise_stats(pairs: list[StoryPair]) -> dict:
    """Per-type causal/background occurrence counts over both endings.

    minority_fraction is the share of ending tokens whose type plays its
    less common role there, i.e. the mass an identity-based tagger must
    mislabel.
    """
    counts: dict[str, list[int]] = {}
    total = 0
    for pair in pairs:
        labels_original, labels_reference = derive_labels(
            pair.ending_tokens(), pair.reference_tokens()
        )
        for tokens, labels in (
            (pair.ending_tokens(), labels_original),
            (pair.reference_tokens(), labels_reference),
        ):
            for token, label in zip(tokens, labels):
                entry = counts.setdefault(token, [0, 0])
                entry[0 if label == LABEL_CAUSAL else 1] += 1
                total += 1
    minority = sum(min(causal, background) for causal, background in counts.values())
    type_rates = {
        token: causal / (causal + background)
        for token, (causal, background) in counts.items()
    }

    def tier_rate(pool: tuple[str, ...]) -> float:
        causal = sum(counts.get(w, [0, 0])[0] for w in pool)
        occurrences = sum(sum(counts.get(w, [0, 0])) for w in pool)
        return causal / occurrences if occurrences else 0.0

    return {
        "total_tokens": total,
        "minority_fraction": minority / total if total else 0.0,
        "type_rates": type_rates,
        "high_tier_rate": tier_rate(AMBIG_HIGH),
        "low_tier_rate": tier_rate(AMBIG_LOW),
    }


def write_dataset(pairs: list[StoryPair], path: str | Path) -> None:
    """Write pairs in the JSONL schema the loader reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            record = {
                "story_id": pair.story_id,
                "premise": pair.story.premise,
                "initial": pair.story.condition,
                "counterfactual": pair.counterfactual_condition,
                "original_ending": " ".join(pair.story.ending),
                "edited_endings": [list(ending) for ending in pair.reference_endings],
            }
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def toy_vocabulary_size() -> int:
    """Distinct tokens the toy corpus can produce, for sizing checks."""
    words: set[str] = set()
    for template in PREMISE_TEMPLATES + CONDITION_TEMPLATES:
        words.update(tokenize(template.format(name="x", cond="y")))
    for template in ENDING_TEMPLATES:
        for sentence in template:
            words.update(tokenize(sentence.format(name="x", fill="y")))
    words -= {"x", "y"}
    words.update(NAMES)
    words.update(CONDITION_FILLS)
    words.update(CONDITION_FILLS.values())
    return len(words)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="generate a synthetic story corpus")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--kind", choices=("toy", "trend"), default="toy")
    parser.add_argument("--pairs", type=int, default=2000, help="total pairs across splits")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--holdout", type=int, default=100, help="pairs held out for each of dev and test"
    )
    args = parser.parse_args(argv)
    if args.pairs <= 2 * args.holdout:
        parser.error("--pairs must exceed twice --holdout")
    maker = make_toy_pairs if args.kind == "toy" else make_trend_pairs
    pairs = maker(args.pairs, args.seed)
    out = Path(args.out)
    cut_dev = args.pairs - 2 * args.holdout
    cut_test = args.pairs - args.holdout
    write_dataset(pairs[:cut_dev], out / "train.jsonl")
    write_dataset(pairs[cut_dev:cut_test], out / "dev.jsonl")
    write_dataset(pairs[cut_test:], out / "test.jsonl")
    print(f"wrote {cut_dev}/{args.holdout}/{args.holdout} train/dev/test pairs under {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
