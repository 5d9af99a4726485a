"""Span-factored tree scoring, CYK decoding, and the margin training objective.

The decoder works over binary trees with an implicit-binarization null label:
every chart cell (i, j) carries one label, where the null label stands for
"no constituent here" and unary chains are collapsed into composite labels
joined with '+' (e.g. "EDITED+NP").  Null nodes are spliced out and composite
labels re-expanded before a tree is returned, so callers only ever see n-ary
trees.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .trees import EDITED, Internal, Leaf, Tree, fringe

NULL_LABEL = ""
COMPOSITE_SEP = "+"


@dataclass(frozen=True)
class LabelWeights:
    """Per-label multipliers for the weighted tree score: one value for EDITED
    constituents, one for everything else."""

    edited_weight: float = 1.0
    default_weight: float = 1.0

    def __post_init__(self):
        if self.edited_weight <= 0 or self.default_weight <= 0:
            raise ValueError("label weights must be positive")


UNIT_WEIGHTS = LabelWeights(1.0, 1.0)


def label_components(label: str) -> tuple[str, ...]:
    return tuple(label.split(COMPOSITE_SEP)) if label else ()


def label_weight(label: str, weights: LabelWeights) -> float:
    if EDITED in label_components(label):
        return weights.edited_weight
    return weights.default_weight


@dataclass
class SpanScoreTable:
    """Dense scores s(i, j, l) over all spans 0 <= i < j <= length.

    `labels[0]` is the null label with score pinned to 0 for every span; it is
    the reference offset of the model.  `tokens` optionally carries the
    sentence so decoded trees get real leaves.
    """

    length: int
    labels: tuple[str, ...]
    scores: np.ndarray
    tokens: tuple[tuple[str, str], ...] | None = None

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("table length must be >= 1")
        if not self.labels or self.labels[0] != NULL_LABEL:
            raise ValueError("labels[0] must be the null label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")
        expected = (self.length + 1, self.length + 1, len(self.labels))
        if self.scores.shape != expected:
            raise ValueError(f"scores shape {self.scores.shape} != {expected}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        if np.any(self.scores[:, :, 0] != 0.0):
            raise ValueError("null-label scores must be 0")
        if self.tokens is not None and len(self.tokens) != self.length:
            raise ValueError("tokens length does not match table length")

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"label {label!r} not in table vocabulary") from None


def chart_items(tree: Tree) -> dict[tuple[int, int], str]:
    """Collapse the tree into one composite label per constituent cell."""
    items: dict[tuple[int, int], str] = {}

    def walk(node: Tree, start: int) -> int:
        if isinstance(node, Leaf):
            return start + 1
        parts = [node.label]
        while len(node.children) == 1 and isinstance(node.children[0], Internal):
            node = node.children[0]
            parts.append(node.label)
        end = start
        for child in node.children:
            end = walk(child, end)
        items[(start, end)] = COMPOSITE_SEP.join(parts)
        return end

    walk(tree, 0)
    return items


def _expand_label(label: str, children: list[Tree]) -> Tree:
    for part in reversed(label_components(label)):
        children = [Internal(part, tuple(children))]
    return children[0]


def _check_length(tree: Tree, table: SpanScoreTable) -> None:
    n = len(fringe(tree))
    if n != table.length:
        raise ValueError(f"tree fringe length {n} does not match table length {table.length}")


def tree_score(tree: Tree, table: SpanScoreTable, weights: LabelWeights = UNIT_WEIGHTS) -> float:
    """Sum of weighted span potentials over the tree's constituents.

    Unary chains are collapsed to composite labels before lookup, matching the
    decoder's tree space; with unit weights this is the plain span-sum score.
    """
    _check_length(tree, table)
    total = 0.0
    for (i, j), label in sorted(chart_items(tree).items()):
        total += label_weight(label, weights) * table.scores[i, j, table.label_index(label)]
    return total


def _weighted_scores(table: SpanScoreTable, weights: LabelWeights) -> np.ndarray:
    w = np.array([label_weight(l, weights) for l in table.labels], dtype=np.float64)
    w[0] = 1.0  # null score is 0; weight is irrelevant
    return table.scores * w


def _placeholder_tokens(n: int) -> tuple[tuple[str, str], ...]:
    return tuple((f"w{i}", "UNK") for i in range(n))


def _run_cyk(weighted: np.ndarray, n: int) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Bottom-up chart over cells with free (possibly null) labels.

    Ties break toward the lower split point and the lower label index, which
    both fall out of taking the first argmax.
    """
    label_best = weighted.max(axis=2)
    label_arg = weighted.argmax(axis=2)
    best = np.zeros((n + 1, n + 1))
    split = np.zeros((n + 1, n + 1), dtype=np.int64)
    split_total = np.zeros((n + 1, n + 1))
    for length in range(1, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            if length == 1:
                best[i, j] = label_best[i, j]
            else:
                totals = best[i, i + 1 : j] + best[i + 1 : j, j]
                a = int(np.argmax(totals))
                split[i, j] = i + 1 + a
                split_total[i, j] = totals[a]
                best[i, j] = label_best[i, j] + totals[a]
    # The root label may not be null.
    root_arg = 1 + int(np.argmax(weighted[0, n, 1:]))
    value = weighted[0, n, root_arg] + (split_total[0, n] if n > 1 else 0.0)
    label_arg[0, n] = root_arg
    return value, label_arg, split, split_total


def _build_tree(
    table: SpanScoreTable,
    label_arg: np.ndarray,
    split: np.ndarray,
    tokens: tuple[tuple[str, str], ...],
) -> Tree:
    def build(i: int, j: int) -> list[Tree]:
        if j - i == 1:
            word, pos = tokens[i]
            children: list[Tree] = [Leaf(pos=pos, word=word)]
        else:
            k = int(split[i, j])
            children = build(i, k) + build(k, j)
        label = table.labels[int(label_arg[i, j])]
        if label == NULL_LABEL:
            return children
        return [_expand_label(label, children)]

    roots = build(0, table.length)
    assert len(roots) == 1  # root label is never null
    return roots[0]


def decode_with_value(
    table: SpanScoreTable, weights: LabelWeights = UNIT_WEIGHTS
) -> tuple[Tree, float]:
    weighted = _weighted_scores(table, weights)
    value, label_arg, split, _ = _run_cyk(weighted, table.length)
    tokens = table.tokens if table.tokens is not None else _placeholder_tokens(table.length)
    return _build_tree(table, label_arg, split, tokens), value


def cyk_decode(table: SpanScoreTable, weights: LabelWeights = UNIT_WEIGHTS) -> Tree:
    """Highest-scoring n-ary tree under the (weighted) span-sum score."""
    return decode_with_value(table, weights)[0]


def hamming(pred: Tree, gold: Tree) -> int:
    """Symmetric multiset difference between the two trees' labeled spans."""
    from .metrics import _check_fringe
    from .trees import spans

    _check_fringe(gold, pred)
    pred_spans = Counter(spans(pred))
    gold_spans = Counter(spans(gold))
    return sum((pred_spans - gold_spans).values()) + sum((gold_spans - pred_spans).values())


def _gold_components(gold: Tree) -> dict[tuple[int, int], Counter]:
    return {
        cell: Counter(label_components(label)) for cell, label in chart_items(gold).items()
    }


def _augmented_scores(
    table: SpanScoreTable, gold: Tree, weights: LabelWeights
) -> tuple[np.ndarray, int]:
    """Add the per-cell Hamming contribution to every weighted score entry.

    Choosing label l at cell c changes the span Hamming distance against gold
    by symdiff(components(l), gold_components(c)) - |gold_components(c)|
    relative to choosing null, which keeps the null column at exactly 0.  The
    discarded constant, the total gold span count, is returned alongside.
    """
    comp_counts = [Counter(label_components(l)) for l in table.labels]
    weighted = _weighted_scores(table, weights)
    aug = weighted.copy()
    # Cells without gold spans: picking label l adds |components(l)| wrong spans.
    aug[:, :, 1:] += np.array([sum(c.values()) for c in comp_counts[1:]], dtype=np.float64)
    gold_comps = _gold_components(gold)
    for (i, j), G in gold_comps.items():
        base = sum(G.values())
        for idx, comps in enumerate(comp_counts):
            d = sum((comps - G).values()) + sum((G - comps).values())
            # d(null) == base, so the null column stays exactly 0.
            aug[i, j, idx] = weighted[i, j, idx] + d - base
    gold_total = sum(sum(G.values()) for G in gold_comps.values())
    return aug, gold_total


def loss_augmented_with_value(
    table: SpanScoreTable, gold: Tree, weights: LabelWeights = UNIT_WEIGHTS
) -> tuple[Tree, float]:
    """Decode argmax_T [weighted_score(T) + hamming(T, gold)]; returns both the
    tree and the objective value."""
    _check_length(gold, table)
    aug, gold_total = _augmented_scores(table, gold, weights)
    value, label_arg, split, _ = _run_cyk(aug, table.length)
    tokens = table.tokens if table.tokens is not None else _placeholder_tokens(table.length)
    tree = _build_tree(table, label_arg, split, tokens)
    return tree, value + gold_total


def loss_augmented_decode(
    table: SpanScoreTable, gold: Tree, weights: LabelWeights = UNIT_WEIGHTS
) -> Tree:
    return loss_augmented_with_value(table, gold, weights)[0]


def hinge_loss(
    table: SpanScoreTable, gold: Tree, weights: LabelWeights = UNIT_WEIGHTS
) -> tuple[float, np.ndarray]:
    """Structured hinge max(0, max_T [s(T) + Hamming(T, gold)] - s(gold)).

    Returns the loss and its gradient with respect to the score table: +w_l on
    the violating tree's spans and -w_l on gold's spans when the loss is
    positive, zero otherwise.  The gold tree itself is in the decoder's tree
    space, so the loss is never negative.
    """
    tree_hat, objective = loss_augmented_with_value(table, gold, weights)
    gold_score = tree_score(gold, table, weights)
    loss = objective - gold_score
    grad = np.zeros_like(table.scores)
    if loss <= 0.0:
        return 0.0, grad
    for (i, j), label in chart_items(tree_hat).items():
        grad[i, j, table.label_index(label)] += label_weight(label, weights)
    for (i, j), label in chart_items(gold).items():
        grad[i, j, table.label_index(label)] -= label_weight(label, weights)
    grad[:, :, 0] = 0.0
    return float(loss), grad
