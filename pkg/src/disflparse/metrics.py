"""Precision/recall/F over constituent spans and disfluency word positions."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .trees import (
    EDITED,
    EIP_LABELS,
    PUNCTUATION_TAGS,
    Tree,
    disfluency_word_positions,
    spans,
    strip_tokens,
    words_of,
)

logger = logging.getLogger(__name__)


class FringeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PRF:
    """Counts plus the derived precision/recall/F.

    Zero-denominator convention: P = 1 when nothing was predicted, R = 1 when
    there is no gold, F = 0 only when P + R = 0.
    """

    predicted_count: int
    gold_count: int
    correct_count: int

    def __post_init__(self):
        if min(self.predicted_count, self.gold_count, self.correct_count) < 0:
            raise ValueError("negative count")
        if self.correct_count > min(self.predicted_count, self.gold_count):
            raise ValueError("correct exceeds predicted or gold")

    @property
    def precision(self) -> float:
        return self.correct_count / self.predicted_count if self.predicted_count else 1.0

    @property
    def recall(self) -> float:
        return self.correct_count / self.gold_count if self.gold_count else 1.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(
            self.predicted_count + other.predicted_count,
            self.gold_count + other.gold_count,
            self.correct_count + other.correct_count,
        )

    def as_dict(self) -> dict:
        return {
            "predicted": self.predicted_count,
            "gold": self.gold_count,
            "correct": self.correct_count,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


ZERO_PRF = PRF(0, 0, 0)


@dataclass(frozen=True)
class MetricReport:
    """S, S_E, W_E and W_EIP micro-averaged over a corpus."""

    span: PRF
    edited_span: PRF
    edited_word: PRF
    eip_word: PRF

    def __add__(self, other: "MetricReport") -> "MetricReport":
        return MetricReport(
            self.span + other.span,
            self.edited_span + other.edited_span,
            self.edited_word + other.edited_word,
            self.eip_word + other.eip_word,
        )

    def as_dict(self) -> dict:
        return {
            "span": self.span.as_dict(),
            "edited_span": self.edited_span.as_dict(),
            "edited_word": self.edited_word.as_dict(),
            "eip_word": self.eip_word.as_dict(),
        }


EMPTY_REPORT = MetricReport(ZERO_PRF, ZERO_PRF, ZERO_PRF, ZERO_PRF)


def _check_fringe(gold: Tree, pred: Tree) -> None:
    # POS tags are ignored: no metric below looks at the preterminal level,
    # and predicted trees may carry placeholder tags.
    gw, pw = words_of(gold), words_of(pred)
    if gw == pw:
        return
    for i, (g, p) in enumerate(zip(gw, pw)):
        if g != p:
            raise FringeMismatch(f"fringes differ at token {i}: gold {g!r} vs predicted {p!r}")
    raise FringeMismatch(f"fringes differ in length: gold {len(gw)} vs predicted {len(pw)}")


def span_prf(gold: Tree, pred: Tree, label_filter: Iterable[str] | None = None) -> PRF:
    """Multiset-intersection PRF over labeled spans, optionally label-filtered."""
    _check_fringe(gold, pred)
    wanted = None if label_filter is None else frozenset(label_filter)

    def counted(tree: Tree) -> Counter:
        return Counter(s for s in spans(tree) if wanted is None or s.label in wanted)

    gold_spans, pred_spans = counted(gold), counted(pred)
    correct = sum((gold_spans & pred_spans).values())
    return PRF(sum(pred_spans.values()), sum(gold_spans.values()), correct)


def word_prf(gold: Tree, pred: Tree, labels: Iterable[str]) -> PRF:
    """PRF over word positions dominated by at least one node labeled in `labels`."""
    _check_fringe(gold, pred)
    wanted = frozenset(labels)
    gold_pos = disfluency_word_positions(gold, wanted)
    pred_pos = disfluency_word_positions(pred, wanted)
    return PRF(len(pred_pos), len(gold_pos), len(gold_pos & pred_pos))


def sentence_report(gold: Tree, pred: Tree) -> MetricReport:
    return MetricReport(
        span=span_prf(gold, pred),
        edited_span=span_prf(gold, pred, {EDITED}),
        edited_word=word_prf(gold, pred, {EDITED}),
        eip_word=word_prf(gold, pred, EIP_LABELS),
    )


def corpus_report(
    gold_trees: Sequence[Tree],
    pred_trees: Sequence[Tree],
    drop_punct: bool = False,
    drop_partial: bool = False,
    punct_tags: frozenset[str] = PUNCTUATION_TAGS,
) -> MetricReport:
    """Micro-averaged report: counts are summed over sentences before P/R/F.

    Preprocessing (the run's punctuation / partial-word policy) is applied to
    both sides first; pairs whose gold side strips to nothing are dropped with
    a warning.
    """
    if len(gold_trees) != len(pred_trees):
        raise ValueError(
            f"corpus length mismatch: {len(gold_trees)} gold vs {len(pred_trees)} predicted"
        )
    total = EMPTY_REPORT
    for idx, (gold, pred) in enumerate(zip(gold_trees, pred_trees)):
        if drop_punct or drop_partial:
            gold = strip_tokens(gold, drop_punct, drop_partial, punct_tags)
            pred = strip_tokens(pred, drop_punct, drop_partial, punct_tags) if pred else None
        if gold is None:
            logger.warning("sentence %d empty after preprocessing; dropped", idx)
            continue
        if pred is None:
            raise FringeMismatch(f"sentence {idx}: predicted tree empty after preprocessing")
        try:
            total = total + sentence_report(gold, pred)
        except FringeMismatch as exc:
            raise FringeMismatch(f"sentence {idx}: {exc}") from exc
    return total


def format_report(report: MetricReport) -> str:
    """Fixed-format table: one row per metric, P/R/F to 4 decimals plus counts."""
    rows = [
        ("S", report.span),
        ("S_E", report.edited_span),
        ("W_E", report.edited_word),
        ("W_EIP", report.eip_word),
    ]
    lines = [f"{'metric':<8}{'P':>8}{'R':>9}{'F':>9}{'pred':>8}{'gold':>7}{'corr':>7}"]
    for name, prf in rows:
        lines.append(
            f"{name:<8}{prf.precision:>8.4f}{prf.recall:>9.4f}{prf.f1:>9.4f}"
            f"{prf.predicted_count:>8}{prf.gold_count:>7}{prf.correct_count:>7}"
        )
    return "\n".join(lines)
