"""Command-line pipeline: prepare, train both stages, infer, evaluate,
report, and human-evaluation sheets.

Every artifact lives under out_dir/<config hash> and starts with a meta
line naming its kind, format version, and producing config hash, so a
command fed artifacts from a different configuration stops with a clear
error instead of mixing runs. Artifact bytes contain no timestamps:
rerunning a command with the same config reproduces them exactly.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .augment import augment_variants, item_seed
from .config import PipelineConfig, config_hash, load_config
from .corpus import StoryPair, Vocab, format_sketch_input, load_dataset
from .errors import CfStoryError, ConfigError, DatasetError, VocabMismatchError
from .evaluation import (
    format_table,
    label_metrics,
    paired_t_test,
    rouge_l,
    rouge_l_best,
    skeleton_coverage,
)
from .generator import (
    check_vocab_compatible,
    generate_ending,
    load_generator,
    save_generator,
    train_generator,
)
from .skeleton import LABEL_CAUSAL, build_skeleton, derive_labels, parse_skeleton
from .sheets import (
    aggregate_human,
    load_mapping,
    make_annotation_sheets,
    method_significance,
    read_scored_sheet,
)
from .tagger import (
    build_tag_instances,
    evaluate_instances,
    load_tagger,
    predict_labels,
    save_tagger,
    train_tagger,
)

logger = logging.getLogger(__name__)

ARTIFACT_FORMAT_VERSION = 1

LABEL_HEADERS = ["run", "CP", "CR", "CF1", "BP", "BR", "BF1"]


def _write_jsonl(path: Path, meta: dict, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True) + "\n")


def _read_jsonl(path: str | Path, kind: str, expected_hash: str | None = None):
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"artifact not found: {path} (run the producing command first)")
    with open(path, encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip()]
    if not lines:
        raise DatasetError(f"artifact {path} is empty")
    meta = json.loads(lines[0]).get("_meta")
    if not isinstance(meta, dict) or meta.get("kind") != kind:
        raise DatasetError(f"artifact {path} is not a {kind} file")
    if meta.get("format_version") != ARTIFACT_FORMAT_VERSION:
        raise DatasetError(f"artifact {path} has an unsupported format version")
    if expected_hash is not None and meta.get("config_hash") != expected_hash:
        raise ConfigError(
            f"artifact {path} was produced by config {meta.get('config_hash')}, "
            f"but the current config hashes to {expected_hash}"
        )
    return meta, [json.loads(line) for line in lines[1:]]


def _meta(kind: str, chash: str, config: PipelineConfig, **extra) -> dict:
    meta = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "kind": kind,
        "config_hash": chash,
        "seed": config.seed,
    }
    meta.update(extra)
    return meta


def _setup(args) -> tuple[PipelineConfig, Path, str]:
    config = load_config(args.config, overrides=args.set or [])
    chash = config_hash(config)
    run_dir = Path(config.out_dir) / chash
    return config, run_dir, chash


def _load_split(config: PipelineConfig, split: str) -> list[StoryPair]:
    path = getattr(config.data, f"{split}_path")
    if not path:
        raise ConfigError(f"data.{split}_path is not set in the config")
    return load_dataset(path, split)


def _load_vocab(run_dir: Path) -> Vocab:
    path = run_dir / "vocab.json"
    if not path.is_file():
        raise DatasetError(f"vocabulary not found at {path} (run prepare first)")
    return Vocab.load(path)


def _check_model_vocab(model, vocab: Vocab, name: str) -> None:
    if model.vocab_hash != vocab.vocab_hash:
        raise VocabMismatchError(
            f"{name} checkpoint was trained on vocabulary {model.vocab_hash[:12]}, "
            f"but the prepared vocabulary hashes to {vocab.vocab_hash[:12]}"
        )


def _check_model_config(model, chash: str, name: str) -> None:
    if model.train_config_hash and model.train_config_hash != chash:
        raise ConfigError(
            f"{name} checkpoint was trained under config {model.train_config_hash}, "
            f"but the current config hashes to {chash}"
        )


def cmd_prepare(args) -> int:
    config, run_dir, chash = _setup(args)
    train_pairs = _load_split(config, "train")
    vocab = Vocab.build(train_pairs, min_count=config.min_count)
    run_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(run_dir / "vocab.json")

    splits = {"train": train_pairs}
    for split in ("dev", "test"):
        if getattr(config.data, f"{split}_path"):
            splits[split] = _load_split(config, split)

    causal_count = 0
    background_count = 0
    for split, pairs in splits.items():
        rows = []
        for pair in pairs:
            labels_original, labels_reference = derive_labels(
                pair.ending_tokens(), pair.reference_tokens()
            )
            skeleton = build_skeleton(pair.ending_tokens(), labels_original)
            rows.append(
                {
                    "story_id": pair.story_id,
                    "labels_original": labels_original,
                    "labels_counterfactual": labels_reference,
                    "skeleton_tokens": list(skeleton.tokens),
                }
            )
            if split == "train":
                for labels in (labels_original, labels_reference):
                    causal_count += sum(1 for l in labels if l == LABEL_CAUSAL)
                    background_count += sum(1 for l in labels if l != LABEL_CAUSAL)
        _write_jsonl(
            run_dir / f"{split}_skeletons.jsonl",
            _meta("skeletons", chash, config, split=split),
            rows,
        )

    augmented_count = 0
    if config.augment.enabled:
        rows = []
        for pair in splits["train"]:
            labels_original, _ = derive_labels(pair.ending_tokens(), pair.reference_tokens())
            base = build_skeleton(pair.ending_tokens(), labels_original)
            for variant, skeleton in augment_variants(
                base, pair.story_id, config.seed, vocab, config.augment.replace_ratio
            ):
                rows.append(
                    {
                        "story_id": pair.story_id,
                        "variant": variant,
                        "skeleton_tokens": list(skeleton.tokens),
                    }
                )
        augmented_count = len(rows)
        _write_jsonl(
            run_dir / "train_augmented.jsonl",
            _meta("augmented_skeletons", chash, config, split="train"),
            rows,
        )

    counts = ", ".join(f"{split} {len(pairs)}" for split, pairs in splits.items())
    print(f"prepared run {chash}: {counts} pairs")
    print(f"vocabulary: {len(vocab)} types (hash {vocab.vocab_hash[:12]})")
    ratio = background_count / causal_count if causal_count else float("inf")
    print(
        f"train ending tokens: {causal_count} causal, {background_count} background "
        f"(ratio 1:{ratio:.2f})"
    )
    print(
        f"skeleton records: {len(splits['train'])} train"
        + (f"; augmented records: {augmented_count}" if config.augment.enabled else "")
    )
    return 0


def cmd_train_sketch(args) -> int:
    config, run_dir, chash = _setup(args)
    vocab = _load_vocab(run_dir)
    _read_jsonl(run_dir / "train_skeletons.jsonl", "skeletons", chash)
    train_pairs = _load_split(config, "train")
    dev_pairs = _load_split(config, "dev") if config.data.dev_path else None
    model, history = train_tagger(
        train_pairs,
        vocab,
        config.tagger_train,
        config.tagger_model,
        dev_pairs=dev_pairs,
        metrics_path=run_dir / "tagger_history.jsonl",
    )
    save_tagger(run_dir / "tagger.pt", model, chash)
    last = history[-1]
    print(f"trained tagger for {len(history)} epochs (final loss {last['train_loss']:.4f})")
    if "dev_causal_f1" in last:
        best = max(entry["dev_causal_f1"] for entry in history)
        print(f"best dev causal F1 {best:.4f} (kept that checkpoint)")
    print(f"saved {run_dir / 'tagger.pt'}")
    return 0


def cmd_train_customize(args) -> int:
    config, run_dir, chash = _setup(args)
    vocab = _load_vocab(run_dir)
    _, skeleton_rows = _read_jsonl(run_dir / "train_skeletons.jsonl", "skeletons", chash)
    skeletons = {
        row["story_id"]: [("lcs", parse_skeleton(row["skeleton_tokens"], source="lcs"))]
        for row in skeleton_rows
    }
    if config.augment.enabled:
        _, augmented_rows = _read_jsonl(
            run_dir / "train_augmented.jsonl", "augmented_skeletons", chash
        )
        for row in augmented_rows:
            skeletons[row["story_id"]].append(
                (row["variant"], parse_skeleton(row["skeleton_tokens"], source="augmented"))
            )
    train_pairs = _load_split(config, "train")
    model, history = train_generator(
        train_pairs,
        skeletons,
        vocab,
        config.generator_train,
        config.generator_model,
        metrics_path=run_dir / "generator_history.jsonl",
    )
    save_generator(run_dir / "generator.pt", model, chash)
    instances = sum(2 * len(v) for v in skeletons.values())
    print(
        f"trained generator on {instances} instances for {len(history)} epochs "
        f"(final loss {history[-1]['train_loss']:.4f})"
    )
    print(f"saved {run_dir / 'generator.pt'}")
    return 0


def cmd_infer(args) -> int:
    config, run_dir, chash = _setup(args)
    vocab = _load_vocab(run_dir)
    tagger = load_tagger(run_dir / "tagger.pt")
    generator = load_generator(run_dir / "generator.pt")
    _check_model_vocab(tagger, vocab, "tagger")
    _check_model_vocab(generator, vocab, "generator")
    _check_model_config(tagger, chash, "tagger")
    _check_model_config(generator, chash, "generator")
    check_vocab_compatible(tagger, generator)

    pairs = _load_split(config, args.split)
    rows = []
    for pair in pairs:
        formatted = format_sketch_input(
            pair, "original", vocab, config.tagger_train.max_seq_len
        )
        labels = predict_labels(tagger, formatted)
        tokens = pair.ending_tokens()[: formatted.ending_length]
        skeleton = build_skeleton(tokens, labels, source="predicted")
        sampler = dataclasses.replace(
            config.sampler, seed=item_seed(config.sampler.seed, pair.story_id, "sample")
        )
        ending = generate_ending(generator, pair, skeleton, sampler, vocab)
        rows.append(
            {
                "story_id": pair.story_id,
                "predicted_labels": labels,
                "skeleton": list(skeleton.tokens),
                "generated_tokens": ending,
                "generated_ending": " ".join(ending),
            }
        )
    out_path = run_dir / f"generations_{args.split}.jsonl"
    meta = _meta(
        "generations",
        chash,
        config,
        split=args.split,
        sampler=dataclasses.asdict(config.sampler),
    )
    _write_jsonl(out_path, meta, rows)
    print(f"generated {len(rows)} endings for split {args.split}")
    print(f"wrote {out_path}")
    return 0


def cmd_eval(args) -> int:
    config, run_dir, chash = _setup(args)
    vocab = _load_vocab(run_dir)
    tagger = load_tagger(run_dir / "tagger.pt")
    _check_model_vocab(tagger, vocab, "tagger")
    _check_model_config(tagger, chash, "tagger")
    pairs = _load_split(config, args.split)
    instances = build_tag_instances(pairs, vocab, config.tagger_train.max_seq_len)
    predicted, gold = evaluate_instances(tagger, instances)
    metrics = label_metrics(predicted, gold)
    out_path = run_dir / f"label_metrics_{args.split}.json"
    payload = {
        "_meta": _meta("label_metrics", chash, config, split=args.split),
        "metrics": metrics.as_dict(),
    }
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    row_name = f"w={config.tagger_train.causal_weight}"
    print(
        format_table(
            LABEL_HEADERS,
            [
                [
                    row_name,
                    f"{metrics.causal_precision:.3f}",
                    f"{metrics.causal_recall:.3f}",
                    f"{metrics.causal_f1:.3f}",
                    f"{metrics.background_precision:.3f}",
                    f"{metrics.background_recall:.3f}",
                    f"{metrics.background_f1:.3f}",
                ]
            ],
        )
    )
    print(f"wrote {out_path}")
    return 0


def _parse_runs(entries: list[str]) -> dict[str, str]:
    runs: dict[str, str] = {}
    for entry in entries:
        if "=" not in entry:
            raise ConfigError(f"--run expects NAME=PATH, got {entry!r}")
        name, path = entry.split("=", 1)
        if not name or name in runs:
            raise ConfigError(f"run name {name!r} is empty or repeated")
        runs[name] = path
    return runs


def cmd_report(args) -> int:
    config, run_dir, chash = _setup(args)
    runs = _parse_runs(args.run)
    pairs = _load_split(config, args.split)
    by_id = {pair.story_id: pair for pair in pairs}

    per_run: dict[str, dict] = {}
    per_item_f: dict[str, list[float]] = {}
    for name, path in runs.items():
        meta, rows = _read_jsonl(path, "generations")
        if meta.get("split") != args.split:
            raise ConfigError(
                f"run {name!r} was generated on split {meta.get('split')}, expected {args.split}"
            )
        by_story = {row["story_id"]: row for row in rows}
        if len(by_story) != len(rows):
            raise DatasetError(f"run {name!r} repeats story ids")
        missing = [sid for sid in by_id if sid not in by_story]
        if missing:
            raise DatasetError(
                f"run {name!r} lacks endings for {len(missing)} items, e.g. {missing[:3]}"
            )
        rouge_original = []
        rouge_reference = []
        coverage = []
        predicted_labels = []
        gold_labels = []
        item_f = []
        for sid in sorted(by_id):
            pair = by_id[sid]
            row = by_story[sid]
            generated = list(row["generated_tokens"])
            rouge_original.append(rouge_l(generated, pair.ending_tokens()))
            references = [pair.reference_tokens(k) for k in range(len(pair.reference_endings))]
            best = rouge_l_best(generated, references)
            rouge_reference.append(best)
            item_f.append(best.f_measure)
            skeleton = parse_skeleton(row["skeleton"], source="predicted")
            coverage.append(skeleton_coverage(generated, skeleton))
            labels = list(row["predicted_labels"])
            gold, _ = derive_labels(pair.ending_tokens(), pair.reference_tokens())
            predicted_labels.append(labels)
            gold_labels.append(gold[: len(labels)])

        def mean(values: list[float]) -> float:
            return sum(values) / len(values)

        metrics = label_metrics(predicted_labels, gold_labels)
        per_run[name] = {
            "labels": metrics.as_dict(),
            "rouge_vs_original": {
                "precision": mean([r.precision for r in rouge_original]),
                "recall": mean([r.recall for r in rouge_original]),
                "f_measure": mean([r.f_measure for r in rouge_original]),
            },
            "rouge_vs_references": {
                "precision": mean([r.precision for r in rouge_reference]),
                "recall": mean([r.recall for r in rouge_reference]),
                "f_measure": mean([r.f_measure for r in rouge_reference]),
            },
            "skeleton_coverage": mean(coverage),
        }
        per_item_f[name] = item_f

    significance = {}
    names = list(runs)
    baseline = names[0]
    for other in names[1:]:
        statistic, p_value = paired_t_test(per_item_f[other], per_item_f[baseline])
        significance[other] = {"baseline": baseline, "t": statistic, "p": p_value}

    label_rows = []
    ref_rows = []
    orig_rows = []
    for name in names:
        data = per_run[name]
        labels = data["labels"]
        label_rows.append(
            [name]
            + [
                f"{labels[key]:.3f}"
                for key in (
                    "causal_precision",
                    "causal_recall",
                    "causal_f1",
                    "background_precision",
                    "background_recall",
                    "background_f1",
                )
            ]
        )
        ref = data["rouge_vs_references"]
        ref_rows.append(
            [name, f"{ref['precision']:.3f}", f"{ref['recall']:.3f}", f"{ref['f_measure']:.3f}"]
        )
        orig = data["rouge_vs_original"]
        orig_rows.append(
            [
                name,
                f"{orig['precision']:.3f}",
                f"{orig['recall']:.3f}",
                f"{orig['f_measure']:.3f}",
                f"{data['skeleton_coverage']:.3f}",
            ]
        )
    sections = [
        f"report for split {args.split}",
        "",
        "sketch stage labeling (predicted endings vs reference-derived labels)",
        format_table(LABEL_HEADERS, label_rows),
        "",
        "rouge-l of generated endings vs reference endings",
        format_table(["run", "P", "R", "F"], ref_rows),
        "",
        "rouge-l vs original endings, and skeleton coverage",
        format_table(["run", "P", "R", "F", "coverage"], orig_rows),
    ]
    if significance:
        sig_rows = [
            [other, data["baseline"], f"{data['t']:.3f}", f"{data['p']:.4g}"]
            for other, data in significance.items()
        ]
        sections.extend(
            [
                "",
                "paired t-test on per-item rouge-l F vs references",
                format_table(["run", "baseline", "t", "p"], sig_rows),
            ]
        )
    text = "\n".join(sections) + "\n"

    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    report_json = {
        "_meta": _meta("report", chash, config, split=args.split),
        "runs": per_run,
        "significance": significance,
    }
    with open(out_dir / "report.json", "w", encoding="utf-8") as handle:
        json.dump(report_json, handle, indent=2, sort_keys=True)
        handle.write("\n")
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    print(f"wrote {out_dir / 'report.json'} and {out_dir / 'report.txt'}")
    return 0


def cmd_sheets(args) -> int:
    if args.action == "make":
        config, run_dir, chash = _setup(args)
        runs_paths = _parse_runs(args.run)
        pairs = _load_split(config, args.split)
        runs = {}
        for name, path in runs_paths.items():
            meta, rows = _read_jsonl(path, "generations")
            if meta.get("split") != args.split:
                raise ConfigError(
                    f"run {name!r} was generated on split {meta.get('split')}, "
                    f"expected {args.split}"
                )
            runs[name] = {row["story_id"]: row["generated_ending"] for row in rows}
        result = make_annotation_sheets(
            runs, pairs, args.items, config.seed, args.out, annotators=args.annotators
        )
        for annotator, path in result["sheets"].items():
            print(f"sheet for {annotator}: {path}")
        print(f"key mapping (do not show annotators): {result['mapping']}")
        return 0

    mapping = load_mapping(args.mapping)
    scores = []
    for path in args.sheet:
        scores.extend(read_scored_sheet(path, mapping["key_to_method"]))
    result = aggregate_human(scores)
    methods = sorted(result["methods"])
    rows = [
        [
            method,
            f"{result['methods'][method]['pre']:.3f}",
            f"{result['methods'][method]['cf']:.3f}",
            f"{result['methods'][method]['plot']:.3f}",
            f"{result['methods'][method]['avg']:.3f}",
        ]
        for method in methods
    ]
    print(format_table(["method", "PRE", "CF", "PLOT", "Avg"], rows))
    if len(methods) > 1:
        sig_rows = []
        for i, method_a in enumerate(methods):
            for method_b in methods[i + 1 :]:
                statistic, p_value = method_significance(scores, method_a, method_b)
                sig_rows.append([f"{method_a} vs {method_b}", f"{statistic:.3f}", f"{p_value:.4g}"])
        print()
        print(format_table(["comparison", "t", "p"], sig_rows))
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as handle:
            json.dump(result, handle, indent=2, sort_keys=True)
            handle.write("\n")
        print(f"wrote {out_path}")
    return 0


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY.PATH=VALUE",
        help="override a config entry (repeatable); values parse as JSON",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfstory",
        description="two-stage counterfactual story rewriting: sketch then customize",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build vocabulary, labels, skeletons, and stats")
    _add_config_args(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-sketch", help="train the causal-token tagger")
    _add_config_args(p)
    p.set_defaults(func=cmd_train_sketch)

    p = sub.add_parser("train-customize", help="train the skeleton-filling generator")
    _add_config_args(p)
    p.set_defaults(func=cmd_train_customize)

    p = sub.add_parser("infer", help="rewrite endings for a split")
    _add_config_args(p)
    p.add_argument("--split", choices=("dev", "test"), default="test")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score the tagger's labels on a split")
    _add_config_args(p)
    p.add_argument("--split", choices=("train", "dev", "test"), default="dev")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="metric tables for one or more generation runs")
    _add_config_args(p)
    p.add_argument("--split", choices=("dev", "test"), default="test")
    p.add_argument(
        "--run", action="append", required=True, metavar="NAME=PATH",
        help="generations file to score (repeatable); first run is the t-test baseline",
    )
    p.add_argument("--out", help="directory for report.json/report.txt (default: run dir)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sheets", help="human evaluation sheets")
    sheets_sub = p.add_subparsers(dest="action", required=True)

    p_make = sheets_sub.add_parser("make", help="write blinded annotation sheets")
    _add_config_args(p_make)
    p_make.add_argument("--split", choices=("dev", "test"), default="test")
    p_make.add_argument(
        "--run", action="append", required=True, metavar="NAME=PATH",
        help="generations file to include (repeatable)",
    )
    p_make.add_argument("--items", type=int, required=True, help="items per sheet")
    p_make.add_argument("--annotators", type=int, default=3)
    p_make.add_argument("--out", required=True, help="directory for sheets and mapping")
    p_make.set_defaults(func=cmd_sheets)

    p_agg = sheets_sub.add_parser("aggregate", help="aggregate completed sheets")
    p_agg.add_argument("--mapping", required=True, help="mapping.json from sheets make")
    p_agg.add_argument("--out", help="optional JSON output path")
    p_agg.add_argument("sheet", nargs="+", help="completed sheet CSV files")
    p_agg.set_defaults(func=cmd_sheets)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CfStoryError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
