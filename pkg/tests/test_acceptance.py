"""Acceptance gate: one test per shipped guarantee, one printed verdict each.

Every test prints `ACCEPTANCE <n> (<name>): PASS` or `FAIL` regardless of
pytest's own reporting, so a plain run of this file doubles as a checklist.
The heavyweight pipeline checks (8 and 9) share one module-scoped run.
"""

from __future__ import annotations

import importlib
import io
import json
import math
import random
import time
from collections import Counter
from contextlib import redirect_stdout
from pathlib import Path
from types import SimpleNamespace

import pytest
import torch
from scipy import stats

from cfstory.augment import AugmentConfig, augment_blank, augment_replace, augment_shuffle, augment_variants
from cfstory.cli import main
from cfstory.config import config_hash, load_config
from cfstory.corpus import (
    BLANK_TOKEN,
    EOE_ID,
    Vocab,
    format_customize_input,
    format_sketch_input,
    tokenize,
)
from cfstory.evaluation import label_metrics, paired_t_test, rouge_l, skeleton_coverage
from cfstory.generator import (
    GeneratorConfig,
    GeneratorModel,
    SamplerConfig,
    generation_loss,
    sample_top_k,
    top_k_filter,
)
from cfstory.skeleton import (
    LABEL_BACKGROUND,
    Skeleton,
    build_skeleton,
    derive_labels,
    merge_blanks,
    parse_skeleton,
)
from cfstory.synthetic import (
    CONDITION_FILLS,
    corpus_noise_stats,
    make_toy_pairs,
    make_trend_pairs,
    write_dataset,
)
from cfstory.tagger import (
    TaggerConfig,
    TaggerModel,
    TaggerTrainConfig,
    build_tag_instances,
    evaluate_instances,
    label_distribution,
    train_tagger,
    weighted_ce_loss,
)

from conftest import make_pair, make_vocab
from oracles import brute_lcs_length, finite_diff_check, is_subsequence


def _verdict(capsys, number: int, name: str, ok: bool) -> None:
    with capsys.disabled():
        print(f"ACCEPTANCE {number} ({name}): {'PASS' if ok else 'FAIL'}")


def test_acceptance_1_lcs_oracle_equivalence(capsys):
    ok = False
    try:
        lcs_mod = importlib.import_module("cfstory.lcs")
        rng = random.Random(0)
        alphabet = "abcd"
        start = time.monotonic()
        for _ in range(1000):
            a = [rng.choice(alphabet) for _ in range(rng.randint(0, 10))]
            b = [rng.choice(alphabet) for _ in range(rng.randint(0, 10))]
            expected = brute_lcs_length(a, b)
            for pairs in (lcs_mod._pairs_table(a, b), lcs_mod._pairs_linear_space(a, b)):
                assert len(pairs) == expected
                common = [a[i] for i, _ in pairs]
                assert common == [b[j] for _, j in pairs]
                assert is_subsequence(common, a) and is_subsequence(common, b)
            assert lcs_mod.lcs_length(a, b) == expected
        assert time.monotonic() - start < 60.0
        ok = True
    finally:
        _verdict(capsys, 1, "lcs oracle equivalence", ok)


def test_acceptance_2_skeleton_algebra(capsys):
    ok = False
    try:
        rng = random.Random(1)
        words = [f"w{i}" for i in range(6)]
        for _ in range(1000):
            e = [rng.choice(words) for _ in range(rng.randint(1, 12))]
            e_prime = [rng.choice(words) for _ in range(rng.randint(1, 12))]
            labels_e, labels_p = derive_labels(e, e_prime)
            background_e = [t for t, l in zip(e, labels_e) if l == LABEL_BACKGROUND]
            background_p = [t for t, l in zip(e_prime, labels_p) if l == LABEL_BACKGROUND]
            assert background_e == background_p
            for tokens, labels in ((e, labels_e), (e_prime, labels_p)):
                skeleton = build_skeleton(tokens, labels)
                toks = list(skeleton.tokens)
                assert all(
                    not (x == BLANK_TOKEN and y == BLANK_TOKEN)
                    for x, y in zip(toks, toks[1:])
                )
                assert list(merge_blanks(toks)) == toks
        ok = True
    finally:
        _verdict(capsys, 2, "skeleton algebra", ok)


def test_acceptance_3_gradient_checks(capsys):
    ok = False
    try:
        pair = make_pair(["x", "y"], ["u", "y"], premise="a", condition="b", counterfactual="c")
        vocab = make_vocab("a", "b", "c", "x", "y", "u")
        for seed in (0, 1, 2):
            torch.manual_seed(seed)
            tagger = TaggerModel(
                len(vocab), TaggerConfig(embed_dim=8, n_layers=1, n_heads=2, ffn_dim=8, max_len=32)
            ).double()
            formatted = format_sketch_input(pair, "original", vocab, max_len=32)

            def tag_loss():
                return weighted_ce_loss(label_distribution(tagger, formatted), [0, 1], 0.8)

            assert finite_diff_check(tagger, tag_loss, eps=1e-4, tol=1e-4) < 1e-4

            generator = GeneratorModel(
                len(vocab),
                GeneratorConfig(embed_dim=8, n_layers=1, n_heads=2, ffn_dim=8, max_len=32),
            ).double()
            context = format_customize_input(
                pair, "counterfactual", Skeleton(("x", BLANK_TOKEN)), vocab, 32
            )
            target = vocab.encode_tokens(["u", "y"]) + [EOE_ID]

            def gen_loss():
                return generation_loss(generator, context, target)

            assert finite_diff_check(generator, gen_loss, eps=1e-4, tol=1e-4) < 1e-4
        ok = True
    finally:
        _verdict(capsys, 3, "gradient checks, 3 seeds", ok)


def test_acceptance_4_causal_weight_trend(capsys):
    ok = False
    try:
        pairs = make_trend_pairs(420, seed=0)
        stats_ = corpus_noise_stats(pairs)
        assert abs(stats_["minority_fraction"] - 0.10) < 0.02
        train, heldout = pairs[:360], pairs[360:]
        vocab = Vocab.build(train, min_count=1)
        model_cfg = TaggerConfig(embed_dim=32, n_layers=1, n_heads=2, ffn_dim=64, max_len=64)
        eval_instances = build_tag_instances(heldout, vocab, 64)
        precisions: list[float] = []
        recalls: list[float] = []
        for weight in (0.2, 0.5, 0.8):
            start = time.monotonic()
            train_cfg = TaggerTrainConfig(
                causal_weight=weight, learning_rate=3e-3, warmup_steps=20,
                batch_size=16, epochs=3, seed=0, max_seq_len=64,
            )
            model, _ = train_tagger(train, vocab, train_cfg, model_cfg)
            assert time.monotonic() - start < 300.0
            predicted, gold = evaluate_instances(model, eval_instances)
            metrics = label_metrics(predicted, gold)
            precisions.append(metrics.causal_precision)
            recalls.append(metrics.causal_recall)
        assert recalls[0] <= recalls[1] + 1e-9, recalls
        assert recalls[1] <= recalls[2] + 1e-9, recalls
        assert precisions[0] >= precisions[1] - 1e-9, precisions
        assert precisions[1] >= precisions[2] - 1e-9, precisions
        ok = True
    finally:
        _verdict(capsys, 4, "recall/precision trade-off across causal weights", ok)


def test_acceptance_5_augmentation_counts(capsys):
    ok = False
    try:
        rng = random.Random(2)
        words = [f"w{i}" for i in range(12)]
        vocab = make_vocab(*words)
        nontrivial = 0

        def background(sk: Skeleton) -> list[str]:
            return [t for t in sk.tokens if t != BLANK_TOKEN]

        def blank_slots(sk: Skeleton) -> list[int]:
            return [i for i, t in enumerate(sk.tokens) if t == BLANK_TOKEN]

        def assert_merged(sk: Skeleton) -> None:
            toks = list(sk.tokens)
            assert toks, "empty skeleton"
            assert all(
                not (x == BLANK_TOKEN and y == BLANK_TOKEN) for x, y in zip(toks, toks[1:])
            )
            assert list(merge_blanks(toks)) == toks

        for case in range(300):
            e = [rng.choice(words) for _ in range(rng.randint(1, 14))]
            e_prime = [rng.choice(words) for _ in range(rng.randint(1, 14))]
            labels, _ = derive_labels(e, e_prime)
            base = build_skeleton(e, labels)
            b = len(background(base))
            expected = int(math.floor(0.2 * b + 0.5))
            nontrivial += expected >= 1
            cfg = AugmentConfig(replace_ratio=0.2, seed=rng.randint(0, 2**32), vocab=vocab)

            blanked = augment_blank(base, cfg)
            assert_merged(blanked)
            assert b - len(background(blanked)) == expected

            replaced = augment_replace(base, cfg)
            assert_merged(replaced)
            assert len(replaced.tokens) == len(base.tokens)
            assert blank_slots(replaced) == blank_slots(base)
            diff = sum(1 for x, y in zip(base.tokens, replaced.tokens) if x != y)
            assert diff == expected
            assert all(t in words for t in background(replaced))

            shuffled = augment_shuffle(base, cfg)
            assert_merged(shuffled)
            assert blank_slots(shuffled) == blank_slots(base)
            assert Counter(background(shuffled)) == Counter(background(base))

            first = [(name, sk.tokens) for name, sk in augment_variants(base, f"case{case}", 7, vocab, 0.2)]
            second = [(name, sk.tokens) for name, sk in augment_variants(base, f"case{case}", 7, vocab, 0.2)]
            assert first == second
        assert nontrivial >= 100
        ok = True
    finally:
        _verdict(capsys, 5, "augmentation counts and determinism", ok)


def test_acceptance_6_sampler(capsys):
    ok = False
    try:
        torch.manual_seed(0)
        size = 8
        probs = torch.rand((1_000_000, size), dtype=torch.float64)
        probs /= probs.sum(dim=1, keepdim=True)

        filtered = top_k_filter(probs, 1, 0.7)
        assert ((filtered > 0).sum(dim=1) == 1).all()
        assert (filtered.argmax(dim=1) == probs.argmax(dim=1)).all()
        assert torch.allclose(filtered.sum(dim=1), torch.ones(len(filtered), dtype=torch.float64))

        chunk = len(probs) // size
        for k in range(1, size + 1):
            rows = probs[(k - 1) * chunk : k * chunk]
            filt = top_k_filter(rows, k, (0.5, 1.0, 2.0, 4.0)[k % 4])
            allowed = torch.zeros_like(rows, dtype=torch.bool)
            allowed.scatter_(1, torch.topk(rows, k, dim=1).indices, True)
            assert not (filt > 0)[~allowed].any()
            assert ((filt > 0).sum(dim=1) == k).all()

        rng = random.Random(3)
        draw_gen = torch.Generator().manual_seed(99)
        for _ in range(10_000):
            p = torch.rand(size, dtype=torch.float64)
            p /= p.sum()
            k = rng.randint(1, size)
            cfg = SamplerConfig(top_k=k, temperature=rng.choice([0.5, 1.0, 2.0]), seed=0)
            idx = sample_top_k(p, cfg, draw_gen)
            assert idx in set(torch.topk(p, k).indices.tolist())

        p = torch.rand(size, dtype=torch.float64)
        p /= p.sum()
        cfg = SamplerConfig(top_k=size, temperature=1.0, seed=0)
        draw_gen = torch.Generator().manual_seed(7)
        counts = Counter(sample_top_k(p, cfg, draw_gen) for _ in range(10_000))
        tv = 0.5 * sum(abs(counts.get(i, 0) / 10_000 - float(p[i])) for i in range(size))
        assert tv <= 0.05, tv
        ok = True
    finally:
        _verdict(capsys, 6, "top-k sampler properties", ok)


def test_acceptance_7_metric_correctness(capsys):
    ok = False
    try:
        score = rouge_l(["the", "cat", "sat", "on"], ["the", "cat", "on"])
        assert score.precision == 3 / 4
        assert score.recall == 1.0
        assert score.f_measure == pytest.approx(6 / 7, abs=1e-15)

        gold = [[0, 0, 0, 1, 1, 1, 1, 1]]
        pred = [[0, 0, 1, 0, 0, 0, 1, 1]]
        metrics = label_metrics(pred, gold)
        assert metrics.causal_precision == 2 / 5
        assert metrics.causal_recall == 2 / 3
        assert metrics.causal_f1 == pytest.approx(0.5, abs=1e-15)
        assert metrics.background_precision == 2 / 3
        assert metrics.background_recall == 2 / 5
        assert metrics.background_f1 == pytest.approx(0.5, abs=1e-15)

        rng = random.Random(4)
        a = [rng.gauss(0.0, 1.0) for _ in range(100)]
        b = [x + rng.gauss(0.3, 0.5) for x in a]
        statistic, p_value = paired_t_test(a, b)
        reference = stats.ttest_rel(a, b)
        assert abs(statistic - float(reference.statistic)) < 1e-9
        assert abs(p_value - float(reference.pvalue)) < 1e-9
        ok = True
    finally:
        _verdict(capsys, 7, "metric correctness vs references", ok)


PIPELINE_DIMS = {"embed_dim": 32, "n_layers": 1, "n_heads": 2, "ffn_dim": 64, "max_len": 64}


def _pipeline_config(root: Path) -> dict:
    return {
        "seed": 0,
        "out_dir": str(root / "runs"),
        "min_count": 1,
        "data": {
            "train_path": str(root / "train.jsonl"),
            "dev_path": str(root / "dev.jsonl"),
            "test_path": str(root / "test.jsonl"),
        },
        "augment": {"enabled": True, "replace_ratio": 0.2},
        "tagger_model": dict(PIPELINE_DIMS),
        "tagger_train": {
            "causal_weight": 0.8, "learning_rate": 3e-3, "warmup_steps": 50,
            "batch_size": 32, "epochs": 2, "seed": 0, "max_seq_len": 64,
        },
        "generator_model": dict(PIPELINE_DIMS),
        "generator_train": {
            "learning_rate": 3e-3, "warmup_steps": 50, "batch_size": 32,
            "epochs": 2, "seed": 0, "max_seq_len": 64,
        },
        "sampler": {"top_k": 1, "temperature": 1.0, "seed": 0, "max_ending_length": 24},
    }


def _run_cli(argv: list[str]) -> str:
    buffer = io.StringIO()
    with redirect_stdout(buffer):
        code = main(argv)
    if code != 0:
        raise RuntimeError(f"command {argv} exited {code}:\n{buffer.getvalue()}")
    return buffer.getvalue()


def _generation_rows(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines()[1:]]


def _fill_rate(rows: list[dict], pairs) -> float:
    by_id = {pair.story_id: pair for pair in pairs}
    hits = 0
    for row in rows:
        pair = by_id[row["story_id"]]
        cond_words = [w for w in tokenize(pair.counterfactual_condition) if w in CONDITION_FILLS]
        assert len(cond_words) == 1, (pair.story_id, cond_words)
        hits += CONDITION_FILLS[cond_words[0]] in row["generated_tokens"]
    return hits / len(rows)


def _mean_coverage(rows: list[dict]) -> float:
    values = [
        skeleton_coverage(row["generated_tokens"], parse_skeleton(row["skeleton"], source="predicted"))
        for row in rows
    ]
    return sum(values) / len(values)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full run (with augmentation) plus a no-augmentation ablation."""
    ns = SimpleNamespace(error=None)
    try:
        root = tmp_path_factory.mktemp("acceptance")
        pairs = make_toy_pairs(2000, seed=1)
        write_dataset(pairs[:1800], root / "train.jsonl")
        write_dataset(pairs[1800:1900], root / "dev.jsonl")
        write_dataset(pairs[1900:], root / "test.jsonl")
        config_path = root / "config.json"
        config_path.write_text(json.dumps(_pipeline_config(root), indent=2), encoding="utf-8")

        start = time.monotonic()
        for argv in (
            ["prepare", "--config", str(config_path)],
            ["train-sketch", "--config", str(config_path)],
            ["train-customize", "--config", str(config_path)],
            ["infer", "--config", str(config_path), "--split", "test"],
        ):
            _run_cli(argv)
        ns.elapsed = time.monotonic() - start

        chash = config_hash(load_config(config_path))
        run_dir = root / "runs" / chash
        _run_cli(["eval", "--config", str(config_path), "--split", "test"])
        metrics = json.loads((run_dir / "label_metrics_test.json").read_text())["metrics"]
        ns.causal_f1 = metrics["causal_f1"]

        generations = run_dir / "generations_test.jsonl"
        _run_cli([
            "report", "--config", str(config_path), "--split", "test",
            "--run", f"model={generations}",
        ])
        report = json.loads((run_dir / "report.json").read_text())
        ns.report_coverage = report["runs"]["model"]["skeleton_coverage"]
        rows = _generation_rows(generations)
        ns.test_pairs = pairs[1900:]
        ns.fill_rate = _fill_rate(rows, ns.test_pairs)
        ns.coverage = _mean_coverage(rows)

        ablation = ["--set", "augment.enabled=false"]
        for argv in (
            ["prepare", "--config", str(config_path)] + ablation,
            ["train-sketch", "--config", str(config_path)] + ablation,
            ["train-customize", "--config", str(config_path)] + ablation,
            ["infer", "--config", str(config_path), "--split", "test"] + ablation,
        ):
            _run_cli(argv)
        abl_hash = config_hash(load_config(config_path, overrides=["augment.enabled=false"]))
        abl_rows = _generation_rows(root / "runs" / abl_hash / "generations_test.jsonl")
        ns.ablation_fill_rate = _fill_rate(abl_rows, ns.test_pairs)
        ns.ablation_coverage = _mean_coverage(abl_rows)

        ns.root = root
        ns.config_path = config_path
        ns.run_dir = run_dir
    except Exception as exc:
        ns.error = exc
    return ns


def test_acceptance_8_end_to_end_toy_run(pipeline, capsys):
    ok = False
    try:
        assert pipeline.error is None, pipeline.error
        assert pipeline.causal_f1 >= 0.9, pipeline.causal_f1
        assert pipeline.fill_rate >= 0.8, pipeline.fill_rate
        assert pipeline.coverage >= 0.9, pipeline.coverage
        assert pipeline.report_coverage == pytest.approx(pipeline.coverage, abs=1e-12)
        assert pipeline.elapsed < 900.0, pipeline.elapsed
        no_better = (
            pipeline.ablation_coverage <= pipeline.coverage + 1e-9
            or pipeline.ablation_fill_rate <= pipeline.fill_rate + 1e-9
        )
        assert no_better, (pipeline.ablation_coverage, pipeline.ablation_fill_rate)
        ok = True
    finally:
        _verdict(capsys, 8, "end-to-end toy pipeline with ablation", ok)


def test_acceptance_9_pipeline_determinism(pipeline, capsys):
    ok = False
    try:
        assert pipeline.error is None, pipeline.error
        names = (
            "vocab.json", "train_skeletons.jsonl", "dev_skeletons.jsonl",
            "test_skeletons.jsonl", "train_augmented.jsonl",
            "generations_test.jsonl", "report.json", "report.txt",
        )
        before = {name: (pipeline.run_dir / name).read_bytes() for name in names}
        generations = pipeline.run_dir / "generations_test.jsonl"
        _run_cli(["prepare", "--config", str(pipeline.config_path)])
        _run_cli(["infer", "--config", str(pipeline.config_path), "--split", "test"])
        _run_cli([
            "report", "--config", str(pipeline.config_path), "--split", "test",
            "--run", f"model={generations}",
        ])
        for name in names:
            assert (pipeline.run_dir / name).read_bytes() == before[name], name
        ok = True
    finally:
        _verdict(capsys, 9, "byte-identical artifact reruns", ok)
