"""Metrics: ROUGE-L, per-class labeling scores, skeleton coverage, and a
paired t test for comparing systems item by item."""

from __future__ import annotations

import logging
import math

import scipy.stats

from .lcs import lcs_length
from .skeleton import LABEL_BACKGROUND, LABEL_CAUSAL, LabelSeq, Skeleton

logger = logging.getLogger(__name__)


def _f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


class RougeL:
    """Longest-common-subsequence overlap scores."""

    __slots__ = ("precision", "recall", "f_measure")

    def __init__(self, precision: float, recall: float, f_measure: float) -> None:
        self.precision = precision
        self.recall = recall
        self.f_measure = f_measure

    def __repr__(self) -> str:
        return (
            f"RougeL(precision={self.precision:.4f}, recall={self.recall:.4f}, "
            f"f_measure={self.f_measure:.4f})"
        )


def rouge_l(candidate: list[str], reference: list[str]) -> RougeL:
    """ROUGE-L with equal precision/recall weighting.

    Precision divides the match count by the candidate length, recall by
    the reference length. Either side empty scores zero.
    """
    if not candidate or not reference:
        return RougeL(0.0, 0.0, 0.0)
    common = lcs_length(candidate, reference)
    precision = common / len(candidate)
    recall = common / len(reference)
    return RougeL(precision, recall, _f_measure(precision, recall))


def rouge_l_best(candidate: list[str], references: list[list[str]]) -> RougeL:
    """Best score over several references, ranked by F measure."""
    if not references:
        raise ValueError("at least one reference is required")
    best = None
    for reference in references:
        score = rouge_l(candidate, reference)
        if best is None or score.f_measure > best.f_measure:
            best = score
    return best


class LabelMetrics:
    """Micro-averaged precision/recall/F1 for both label classes."""

    __slots__ = (
        "causal_precision",
        "causal_recall",
        "causal_f1",
        "background_precision",
        "background_recall",
        "background_f1",
    )

    def __init__(
        self,
        causal_precision: float,
        causal_recall: float,
        causal_f1: float,
        background_precision: float,
        background_recall: float,
        background_f1: float,
    ) -> None:
        self.causal_precision = causal_precision
        self.causal_recall = causal_recall
        self.causal_f1 = causal_f1
        self.background_precision = background_precision
        self.background_recall = background_recall
        self.background_f1 = background_f1

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.__slots__}

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v:.4f}" for k, v in self.as_dict().items())
        return f"LabelMetrics({inner})"


def label_metrics(predicted: list[LabelSeq], gold: list[LabelSeq]) -> LabelMetrics:
    """Pool all tokens across sequences, then score each class."""
    if len(predicted) != len(gold):
        raise ValueError(
            f"got {len(predicted)} predicted sequences for {len(gold)} gold sequences"
        )
    counts = {LABEL_CAUSAL: [0, 0, 0], LABEL_BACKGROUND: [0, 0, 0]}  # tp, fp, fn
    for index, (pred_seq, gold_seq) in enumerate(zip(predicted, gold)):
        if len(pred_seq) != len(gold_seq):
            raise ValueError(
                f"sequence {index}: {len(pred_seq)} predictions for {len(gold_seq)} labels"
            )
        for p, g in zip(pred_seq, gold_seq):
            if p not in counts or g not in counts:
                raise ValueError("labels must be 0 (causal) or 1 (background)")
            if p == g:
                counts[p][0] += 1
            else:
                counts[p][1] += 1
                counts[g][2] += 1

    def scores(label: int) -> tuple[float, float, float]:
        tp, fp, fn = counts[label]
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return precision, recall, _f_measure(precision, recall)

    cp, cr, cf = scores(LABEL_CAUSAL)
    bp, br, bf = scores(LABEL_BACKGROUND)
    return LabelMetrics(cp, cr, cf, bp, br, bf)


def skeleton_coverage(generated: list[str], skeleton: Skeleton) -> float:
    """Fraction of the skeleton's kept tokens preserved, in order, by the
    generated ending. A skeleton with no kept tokens counts as covered."""
    background = skeleton.background_tokens()
    if not background:
        return 1.0
    return lcs_length(background, generated) / len(background)


def paired_t_test(a: list[float], b: list[float]) -> tuple[float, float]:
    """Two-sided paired t test; returns (statistic, p value).

    All-zero differences give (0.0, 1.0). Identical nonzero differences
    have no variance, so the statistic is signed infinity with p 0.0.
    """
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("paired t test needs at least two pairs")
    diffs = [float(x) - float(y) for x, y in zip(a, b)]
    if all(d == 0.0 for d in diffs):
        return 0.0, 1.0
    mean = sum(diffs) / n
    variance = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if variance == 0.0:
        logger.warning("paired t test: zero-variance nonzero differences, p collapses to 0")
        return math.copysign(math.inf, mean), 0.0
    statistic = mean / math.sqrt(variance / n)
    p_value = 2.0 * float(scipy.stats.t.sf(abs(statistic), n - 1))
    return statistic, p_value


def format_table(headers: list[str], rows: list[list[str]]) -> str:
    """Fixed-width text table: first column left-aligned, rest right."""
    widths = [len(h) for h in headers]
    for row in rows:
        if len(row) != len(headers):
            raise ValueError("row width does not match the header")
        for k, cell in enumerate(row):
            widths[k] = max(widths[k], len(cell))
    lines = []
    for cells in [headers, *rows]:
        parts = [cells[0].ljust(widths[0])]
        parts.extend(cell.rjust(widths[k + 1]) for k, cell in enumerate(cells[1:]))
        lines.append("  ".join(parts).rstrip())
    return "\n".join(lines)
