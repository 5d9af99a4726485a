"""Deterministic synthetic disfluent-speech treebank generator.

A tiny PCFG produces fluent trees; speech repairs, filled pauses, and
parentheticals are then injected.  A repair's reparandum is a rough copy of
the repair's leading words (each word an exact copy with the configured
probability, otherwise a same-POS substitute), wrapped in an EDITED node
placed immediately before the repair, optionally separated by an interregnum.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .trees import EDITED, INTJ, PRN, Internal, Leaf, Tree, fringe, serialize


@dataclass(frozen=True)
class Grammar:
    """PCFG: phrasal rules with probabilities plus a closed POS -> word lexicon."""

    start: str
    rules: dict[str, tuple[tuple[tuple[str, ...], float], ...]]
    lexicon: dict[str, tuple[str, ...]]

    def __post_init__(self):
        if self.start not in self.rules:
            raise ValueError(f"start symbol {self.start!r} has no rules")
        for lhs, options in self.rules.items():
            total = sum(p for _, p in options)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"rule probabilities for {lhs!r} sum to {total}")
            for rhs, _ in options:
                for sym in rhs:
                    if sym not in self.rules and sym not in self.lexicon:
                        raise ValueError(f"symbol {sym!r} has neither rules nor words")
        for tag, words in self.lexicon.items():
            if not words:
                raise ValueError(f"lexicon tag {tag!r} has no words")


DEFAULT_GRAMMAR = Grammar(
    start="S",
    rules={
        "S": ((("NP", "VP"), 1.0),),
        "NP": (
            (("PRP",), 0.4),
            (("DT", "NN"), 0.3),
            (("DT", "JJ", "NN"), 0.2),
            (("NP", "PP"), 0.1),
        ),
        "VP": (
            (("VBP",), 0.2),
            (("VBP", "NP"), 0.4),
            (("VBP", "NP", "PP"), 0.15),
            (("VBP", "PP"), 0.15),
            (("RB", "VBP", "NP"), 0.1),
        ),
        "PP": ((("IN", "NP"), 1.0),),
    },
    lexicon={
        "PRP": ("i", "you", "we", "they", "he", "she", "it"),
        "DT": ("the", "a", "this", "that", "some", "every"),
        "NN": ("dog", "cat", "house", "car", "state", "child", "man", "woman",
               "day", "way", "thing", "world", "school", "water", "road"),
        "VBP": ("enjoy", "like", "know", "think", "want", "need", "see",
                "have", "take", "make", "get", "find"),
        "JJ": ("good", "big", "little", "new", "old", "right", "early", "late"),
        "IN": ("in", "on", "with", "of", "at", "from"),
        "RB": ("really", "just", "now", "here", "often"),
    },
)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    num_train: int = 2000
    num_dev: int = 200
    num_test: int = 200
    # per-sentence probabilities of each disfluency event
    repair_rate: float = 0.45
    intj_rate: float = 0.3
    prn_rate: float = 0.15
    copy_rate: float = 0.6  # fraction of reparandum words copied verbatim
    nested_rate: float = 0.05  # chance a repair contains a nested EDITED
    interregnum_intj_rate: float = 0.5
    interregnum_prn_rate: float = 0.25
    intj_words: tuple[str, ...] = ("uh", "um")
    prn_phrases: tuple[tuple[str, str], ...] = (("i", "mean"), ("you", "know"))
    include_partial: bool = False
    partial_rate: float = 0.3  # given include_partial, chance of a truncated word
    include_punct: bool = False
    max_len: int = 24

    def __post_init__(self):
        for name in ("repair_rate", "intj_rate", "prn_rate", "copy_rate",
                     "nested_rate", "interregnum_intj_rate",
                     "interregnum_prn_rate", "partial_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if min(self.num_train, self.num_dev, self.num_test) < 0:
            raise ValueError("split sizes must be nonnegative")
        if self.max_len < 12:
            raise ValueError("max_len too small for injection headroom")


# Disfluency injection can add at most this many tokens to a fluent sentence:
# reparandum (3) + interregnum (1 + 2) + standalone INTJ (1) + PRN (3).
_INJECTION_HEADROOM = 10


def generate_fluent(grammar: Grammar, rng: np.random.Generator, max_tokens: int = 14) -> Tree:
    """Sample one fluent tree; resamples until the fringe fits `max_tokens`."""

    def expand(symbol: str) -> Tree:
        if symbol in grammar.lexicon:
            words = grammar.lexicon[symbol]
            return Leaf(pos=symbol, word=words[rng.integers(len(words))])
        options = grammar.rules[symbol]
        u = rng.random()
        acc = 0.0
        rhs = options[-1][0]
        for candidate, p in options:
            acc += p
            if u < acc:
                rhs = candidate
                break
        return Internal(symbol, tuple(expand(s) for s in rhs))

    while True:
        tree = expand(grammar.start)
        if len(fringe(tree)) <= max_tokens:
            return tree


def _internal_paths(tree: Tree) -> list[tuple[int, ...]]:
    """Paths (child-index sequences) to every non-root internal node."""
    paths: list[tuple[int, ...]] = []

    def walk(node: Tree, path: tuple[int, ...]) -> None:
        if isinstance(node, Leaf):
            return
        if path:
            paths.append(path)
        for idx, child in enumerate(node.children):
            walk(child, path + (idx,))

    walk(tree, ())
    return paths


def _node_at(tree: Tree, path: tuple[int, ...]) -> Tree:
    node = tree
    for idx in path:
        node = node.children[idx]
    return node


def _insert_before(tree: Tree, path: tuple[int, ...], new_nodes: list[Tree]) -> Tree:
    """Rebuild the tree with `new_nodes` inserted before the node at `path`."""

    def rebuild(node: Tree, path: tuple[int, ...]) -> Tree:
        assert isinstance(node, Internal)
        idx = path[0]
        children = list(node.children)
        if len(path) == 1:
            children[idx:idx] = new_nodes
        else:
            children[idx] = rebuild(children[idx], path[1:])
        return Internal(node.label, tuple(children))

    return rebuild(tree, path)


def _truncate(word: str) -> str:
    keep = max(1, (len(word) + 1) // 2)
    return word[:keep] + "-"


def _prn_node(phrase: tuple[str, str]) -> Tree:
    subject, verb = phrase
    return Internal(
        PRN,
        (
            Internal(
                "S",
                (
                    Internal("NP", (Leaf("PRP", subject),)),
                    Internal("VP", (Leaf("VBP", verb),)),
                ),
            ),
        ),
    )


def _intj_node(word: str) -> Tree:
    return Internal(INTJ, (Leaf("UH", word),))


def inject_disfluencies(
    tree: Tree,
    config: GenConfig,
    rng: np.random.Generator,
    grammar: Grammar = DEFAULT_GRAMMAR,
    stats: dict | None = None,
) -> Tree:
    """Add a speech repair and/or standalone INTJ / PRN insertions.

    All inserted material sits under EDITED, INTJ, or PRN nodes, so stripping
    disfluency-dominated words recovers the original fluent fringe.  The rng
    is consumed in a fixed order (repair, then INTJ, then PRN).
    """
    if stats is not None:
        stats.setdefault("copied", 0)
        stats.setdefault("substituted", 0)
        stats.setdefault("repairs", 0)

    if rng.random() < config.repair_rate:
        paths = _internal_paths(tree)
        if paths:
            path = paths[rng.integers(len(paths))]
            repair = _node_at(tree, path)
            repair_leaves = fringe(repair)
            length = min(int(rng.integers(1, 4)), len(repair_leaves))
            copies: list[Leaf] = []
            for leaf in repair_leaves[:length]:
                pool = grammar.lexicon.get(leaf.pos, ())
                alternatives = tuple(w for w in pool if w != leaf.word)
                if rng.random() < config.copy_rate or not alternatives:
                    copies.append(Leaf(leaf.pos, leaf.word))
                    if stats is not None:
                        stats["copied"] += 1
                else:
                    copies.append(Leaf(leaf.pos, alternatives[rng.integers(len(alternatives))]))
                    if stats is not None:
                        stats["substituted"] += 1
            if config.include_partial and rng.random() < config.partial_rate:
                last = copies[-1]
                copies[-1] = Leaf(last.pos, _truncate(last.word))
            parts: list[Tree] = list(copies)
            if len(parts) >= 2 and rng.random() < config.nested_rate:
                inner = int(rng.integers(1, len(parts)))
                parts = [Internal(EDITED, tuple(parts[:inner]))] + parts[inner:]
            if isinstance(repair, Internal) and rng.random() < 0.5:
                parts = [Internal(repair.label, tuple(parts))]
            inserted: list[Tree] = [Internal(EDITED, tuple(parts))]
            if rng.random() < config.interregnum_intj_rate:
                inserted.append(_intj_node(config.intj_words[rng.integers(len(config.intj_words))]))
            if rng.random() < config.interregnum_prn_rate:
                inserted.append(_prn_node(config.prn_phrases[rng.integers(len(config.prn_phrases))]))
            tree = _insert_before(tree, path, inserted)
            if stats is not None:
                stats["repairs"] += 1

    if rng.random() < config.intj_rate:
        assert isinstance(tree, Internal)
        word = config.intj_words[rng.integers(len(config.intj_words))]
        idx = int(rng.integers(len(tree.children) + 1))
        children = list(tree.children)
        children[idx:idx] = [_intj_node(word)]
        tree = Internal(tree.label, tuple(children))

    if rng.random() < config.prn_rate:
        assert isinstance(tree, Internal)
        phrase = config.prn_phrases[rng.integers(len(config.prn_phrases))]
        idx = int(rng.integers(len(tree.children) + 1))
        children = list(tree.children)
        children[idx:idx] = [_prn_node(phrase)]
        tree = Internal(tree.label, tuple(children))

    if config.include_punct:
        assert isinstance(tree, Internal)
        tree = Internal(tree.label, tree.children + (Leaf(".", "."),))

    return tree


def generate_sentence(
    config: GenConfig,
    rng: np.random.Generator,
    grammar: Grammar = DEFAULT_GRAMMAR,
    stats: dict | None = None,
) -> Tree:
    fluent_cap = config.max_len - _INJECTION_HEADROOM
    while True:
        fluent = generate_fluent(grammar, rng, max_tokens=fluent_cap)
        tree = inject_disfluencies(fluent, config, rng, grammar, stats)
        if len(fringe(tree)) <= config.max_len:
            return tree


def generate_corpus(config: GenConfig, out_dir: str, grammar: Grammar = DEFAULT_GRAMMAR) -> dict:
    """Write train/dev/test files plus a manifest; byte-identical per config."""
    os.makedirs(out_dir, exist_ok=True)
    split_sizes = {"train": config.num_train, "dev": config.num_dev, "test": config.num_test}
    seeds = np.random.SeedSequence(config.seed).spawn(len(split_sizes))
    manifest: dict = {
        "seed": config.seed,
        "config": dataclasses.asdict(config),
        "splits": {},
    }
    stats: dict = {}
    for (name, count), seed in zip(split_sizes.items(), seeds):
        rng = np.random.default_rng(seed)
        path = os.path.join(out_dir, f"{name}.txt")
        num_tokens = 0
        num_disfluent = 0
        with open(path, "w", encoding="utf-8") as fh:
            for _ in range(count):
                tree = generate_sentence(config, rng, grammar, stats)
                leaves = fringe(tree)
                num_tokens += len(leaves)
                labels = {n.label for n in _iter_internal(tree)}
                if labels & {EDITED, INTJ, PRN}:
                    num_disfluent += 1
                fh.write(serialize(tree) + "\n")
        manifest["splits"][name] = {
            "file": f"{name}.txt",
            "sentences": count,
            "tokens": num_tokens,
            "disfluent_sentences": num_disfluent,
        }
    manifest["rough_copy_stats"] = {
        "copied": stats.get("copied", 0),
        "substituted": stats.get("substituted", 0),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _iter_internal(tree: Tree):
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Internal):
            yield node
            stack.extend(node.children)
