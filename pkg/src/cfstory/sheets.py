"""Human evaluation tooling: blinded CSV score sheets and aggregation.

Scoring itself stays manual. This module samples items, hides method
identities behind shuffled letter keys (the key-to-method map lives in a
separate JSON file), writes one shuffled sheet per annotator, and reads
completed sheets back for aggregation and significance testing.
"""

from __future__ import annotations

import csv
import json
import random
import string
from dataclasses import dataclass
from pathlib import Path

from .augment import item_seed
from .corpus import StoryPair
from .errors import SheetError
from .evaluation import paired_t_test

MAPPING_FORMAT_VERSION = 1

ASPECTS = ("pre", "cf", "plot")

RUBRIC = (
    "Score each candidate ending from 1 (poor) to 3 (good) on three aspects:",
    "PRE: is the ending consistent with the premise?",
    "CF: is the ending consistent with the counterfactual condition?",
    "PLOT: does the ending stay close to the original ending's plot?",
)

_CONTEXT_COLUMNS = (
    "item_id",
    "premise",
    "original_condition",
    "counterfactual_condition",
    "original_ending",
)


@dataclass(frozen=True)
class HumanScore:
    """One annotator's three aspect scores for one (item, method) cell."""

    item_id: str
    annotator_id: str
    method_id: str
    pre: int
    cf: int
    plot: int

    def __post_init__(self) -> None:
        for aspect in ASPECTS:
            value = getattr(self, aspect)
            if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 3:
                raise SheetError(
                    f"item {self.item_id}, annotator {self.annotator_id}: "
                    f"{aspect.upper()} score {value!r} is not an integer in 1..3"
                )

    def average(self) -> float:
        return (self.pre + self.cf + self.plot) / 3.0


def make_annotation_sheets(
    runs: dict[str, dict[str, str]],
    pairs: list[StoryPair],
    n: int,
    seed: int,
    out_dir: str | Path,
    annotators: int | list[str] = 3,
) -> dict:
    """Write one blinded sheet per annotator plus the key mapping file.

    runs maps method names to per-item generated endings. Every method
    must cover every pair; n items are sampled once and shared across
    annotators, each of whom sees them in their own shuffled order.
    """
    if not runs:
        raise SheetError("no runs to put on the sheets")
    methods = sorted(runs)
    if len(methods) > len(string.ascii_uppercase):
        raise SheetError(f"too many methods to blind with letter keys: {len(methods)}")
    by_id = {pair.story_id: pair for pair in pairs}
    if len(by_id) != len(pairs):
        raise SheetError("duplicate story ids in the evaluation split")
    for method in methods:
        missing = sorted(sid for sid in by_id if sid not in runs[method])
        if missing:
            raise SheetError(
                f"run {method!r} lacks endings for {len(missing)} items, e.g. {missing[:3]}"
            )
    if n < 1:
        raise SheetError("need at least one item per sheet")
    if n > len(pairs):
        raise SheetError(f"asked for {n} items but the split holds only {len(pairs)}")

    rng = random.Random(seed)
    item_ids = rng.sample(sorted(by_id), n)
    order = rng.sample(range(len(methods)), len(methods))
    key_to_method = {
        string.ascii_uppercase[k]: methods[order[k]] for k in range(len(methods))
    }
    method_to_key = {method: key for key, method in key_to_method.items()}

    if isinstance(annotators, int):
        if annotators < 1:
            raise SheetError("need at least one annotator")
        annotator_ids = [f"annotator{k + 1}" for k in range(annotators)]
    else:
        annotator_ids = list(annotators)
        if not annotator_ids or len(set(annotator_ids)) != len(annotator_ids):
            raise SheetError("annotator ids must be non-empty and unique")

    keys = sorted(key_to_method)
    header = list(_CONTEXT_COLUMNS)
    for key in keys:
        header.append(f"ending_{key}")
        header.extend(f"{aspect.upper()}_{key}" for aspect in ASPECTS)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sheet_paths: dict[str, str] = {}
    for annotator in annotator_ids:
        ordered = list(item_ids)
        random.Random(item_seed(seed, annotator, "sheet")).shuffle(ordered)
        path = out_dir / f"sheet_{annotator}.csv"
        with open(path, "w", encoding="utf-8", newline="") as handle:
            for line in RUBRIC:
                handle.write(f"# {line}\n")
            handle.write(f"# annotator: {annotator}\n")
            writer = csv.writer(handle)
            writer.writerow(header)
            for sid in ordered:
                pair = by_id[sid]
                row = [
                    sid,
                    pair.story.premise,
                    pair.story.condition,
                    pair.counterfactual_condition,
                    " ".join(pair.story.ending),
                ]
                for key in keys:
                    row.append(runs[key_to_method[key]][sid])
                    row.extend("" for _ in ASPECTS)
                writer.writerow(row)
        sheet_paths[annotator] = str(path)

    mapping_path = out_dir / "mapping.json"
    mapping = {
        "format_version": MAPPING_FORMAT_VERSION,
        "key_to_method": key_to_method,
        "method_to_key": method_to_key,
        "annotators": annotator_ids,
        "item_ids": sorted(item_ids),
        "n": n,
        "seed": seed,
    }
    with open(mapping_path, "w", encoding="utf-8") as handle:
        json.dump(mapping, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return {"sheets": sheet_paths, "mapping": str(mapping_path)}


def load_mapping(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise SheetError(f"mapping file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        mapping = json.load(handle)
    if mapping.get("format_version") != MAPPING_FORMAT_VERSION:
        raise SheetError(f"unsupported mapping format in {path}")
    return mapping


def read_scored_sheet(path: str | Path, key_to_method: dict[str, str]) -> list[HumanScore]:
    """Parse one completed sheet into per-(item, method) scores.

    Blank or out-of-range cells fail loudly with their location.
    """
    path = Path(path)
    if not path.is_file():
        raise SheetError(f"sheet not found: {path}")
    annotator = ""
    data_lines: list[str] = []
    with open(path, encoding="utf-8", newline="") as handle:
        for line in handle:
            if line.startswith("#"):
                comment = line[1:].strip()
                if comment.startswith("annotator:"):
                    annotator = comment.split(":", 1)[1].strip()
            else:
                data_lines.append(line)
    if not annotator:
        raise SheetError(f"{path}: missing the annotator comment line")
    reader = csv.DictReader(data_lines)
    if reader.fieldnames is None or "item_id" not in reader.fieldnames:
        raise SheetError(f"{path}: missing the sheet header row")
    keys = sorted(
        name.removeprefix("ending_") for name in reader.fieldnames if name.startswith("ending_")
    )
    if not keys:
        raise SheetError(f"{path}: no candidate columns found")
    unknown = [key for key in keys if key not in key_to_method]
    if unknown:
        raise SheetError(f"{path}: candidate keys {unknown} are not in the mapping")

    scores: list[HumanScore] = []
    for row in reader:
        item_id = (row.get("item_id") or "").strip()
        if not item_id:
            raise SheetError(f"{path}: a data row is missing its item_id")
        for key in keys:
            values = {}
            for aspect in ASPECTS:
                column = f"{aspect.upper()}_{key}"
                raw = (row.get(column) or "").strip()
                if not raw:
                    raise SheetError(f"{path}: item {item_id} has no {column} score")
                try:
                    values[aspect] = int(raw)
                except ValueError:
                    raise SheetError(
                        f"{path}: item {item_id} column {column} holds {raw!r}, not an integer"
                    ) from None
            scores.append(
                HumanScore(
                    item_id=item_id,
                    annotator_id=annotator,
                    method_id=key_to_method[key],
                    **values,
                )
            )
    return scores


def aggregate_human(scores: list[HumanScore]) -> dict:
    """Per-method aspect means: first over annotators within an item,
    then over items. Avg is the mean of the three aspect means."""
    if not scores:
        raise SheetError("no scores to aggregate")
    items = sorted({s.item_id for s in scores})
    methods = sorted({s.method_id for s in scores})
    cells: dict[tuple[str, str], list[HumanScore]] = {}
    for score in scores:
        cells.setdefault((score.item_id, score.method_id), []).append(score)
    missing = [
        (item, method) for item in items for method in methods if (item, method) not in cells
    ]
    if missing:
        raise SheetError(
            f"{len(missing)} (item, method) cells have no scores: {missing[:5]}"
        )

    result: dict[str, dict[str, float]] = {}
    for method in methods:
        aspect_means = {}
        for aspect in ASPECTS:
            item_means = []
            for item in items:
                cell = cells[(item, method)]
                item_means.append(sum(getattr(s, aspect) for s in cell) / len(cell))
            aspect_means[aspect] = sum(item_means) / len(item_means)
        aspect_means["avg"] = sum(aspect_means[a] for a in ASPECTS) / len(ASPECTS)
        result[method] = aspect_means
    return {"methods": result, "items": len(items)}


def method_significance(
    scores: list[HumanScore], method_a: str, method_b: str
) -> tuple[float, float]:
    """Paired t test between two methods on per-item average scores."""
    items = sorted({s.item_id for s in scores})

    def item_values(method: str) -> list[float]:
        values = []
        for item in items:
            cell = [s for s in scores if s.item_id == item and s.method_id == method]
            if not cell:
                raise SheetError(f"method {method!r} has no scores for item {item!r}")
            values.append(sum(s.average() for s in cell) / len(cell))
        return values

    return paired_t_test(item_values(method_a), item_values(method_b))
