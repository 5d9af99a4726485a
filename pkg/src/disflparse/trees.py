"""Bracketed constituency trees: reading, writing, and treebank preprocessing."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Union

logger = logging.getLogger(__name__)

# Switchboard labels for reparanda, filled pauses, and parentheticals.
EDITED = "EDITED"
INTJ = "INTJ"
PRN = "PRN"
DISFLUENCY_LABELS = frozenset({EDITED, INTJ, PRN})
EIP_LABELS = DISFLUENCY_LABELS

# Treebank punctuation POS tags; overridable at every call site and from the CLI.
PUNCTUATION_TAGS = frozenset({",", ".", "``", "''", ":", "-LRB-", "-RRB-", "?", "!"})


class ParseError(ValueError):
    """Malformed bracketed input. `offset` is the character position in the text."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at character {offset})")
        self.offset = offset


def _check_token(text: str, kind: str) -> None:
    if not text:
        raise ValueError(f"empty {kind}")
    if any(c.isspace() or c in "()" for c in text):
        raise ValueError(f"{kind} {text!r} contains whitespace or parentheses")


@dataclass(frozen=True)
class Leaf:
    """A preterminal: POS tag plus surface word."""

    pos: str
    word: str

    def __post_init__(self):
        _check_token(self.pos, "POS tag")
        _check_token(self.word, "word")

    def __str__(self) -> str:
        return serialize(self)


@dataclass(frozen=True)
class Internal:
    """A labeled internal node with at least one child."""

    label: str
    children: tuple["Tree", ...]

    def __post_init__(self):
        _check_token(self.label, "label")
        if not self.children:
            raise ValueError(f"internal node {self.label!r} has no children")

    def __str__(self) -> str:
        return serialize(self)


Tree = Union[Leaf, Internal]


class LabeledSpan(NamedTuple):
    start: int
    end: int
    label: str


@dataclass(frozen=True)
class Sentence:
    """A token sequence (word, POS) with an optional gold tree over it."""

    tokens: tuple[tuple[str, str], ...]
    gold: Tree | None = None

    def __post_init__(self):
        if self.gold is not None and tokens_of(self.gold) != self.tokens:
            raise ValueError("gold tree fringe does not match tokens")

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(w for w, _ in self.tokens)

    @classmethod
    def from_tree(cls, tree: Tree) -> "Sentence":
        return cls(tokens=tokens_of(tree), gold=tree)


def fringe(tree: Tree) -> list[Leaf]:
    """Left-to-right leaves of the tree."""
    out: list[Leaf] = []
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            out.append(node)
        else:
            stack.extend(reversed(node.children))
    return out


def tokens_of(tree: Tree) -> tuple[tuple[str, str], ...]:
    return tuple((leaf.word, leaf.pos) for leaf in fringe(tree))


def words_of(tree: Tree) -> tuple[str, ...]:
    return tuple(leaf.word for leaf in fringe(tree))


def serialize(tree: Tree) -> str:
    """Canonical single-line bracketing: "(LABEL child ...)" / "(POS word)"."""
    parts: list[str] = []

    def emit(node: Tree) -> None:
        if isinstance(node, Leaf):
            parts.append(f"({node.pos} {node.word})")
        else:
            parts.append(f"({node.label} ")
            for i, child in enumerate(node.children):
                if i:
                    parts.append(" ")
                emit(child)
            parts.append(")")

    emit(tree)
    return "".join(parts)


def _tokenize(text: str) -> Iterator[tuple[str, int]]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in "()":
            yield c, i
            i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            yield text[i:j], i
            i = j


def _parse_node(tokens: list[tuple[str, int]], pos: int) -> tuple[Tree, int]:
    tok, off = tokens[pos]
    if tok != "(":
        raise ParseError(f"expected '(' but found {tok!r}", off)
    pos += 1
    if pos >= len(tokens):
        raise ParseError("unexpected end of input after '('", off)
    label, label_off = tokens[pos]
    if label == "(":
        raise ParseError("constituent is missing a label", label_off)
    if label == ")":
        raise ParseError("empty constituent '()'", label_off)
    pos += 1
    if pos >= len(tokens):
        raise ParseError("unexpected end of input inside constituent", label_off)
    head, head_off = tokens[pos]
    if head == ")":
        raise ParseError(f"constituent {label!r} has no children", head_off)
    if head not in ("(", ")"):
        # Leaf: (POS word)
        word = head
        pos += 1
        if pos >= len(tokens):
            raise ParseError("unterminated leaf", head_off)
        close, close_off = tokens[pos]
        if close != ")":
            raise ParseError(
                f"expected ')' after leaf word {word!r} but found {close!r}",
                close_off,
            )
        try:
            return Leaf(pos=label, word=word), pos + 1
        except ValueError as exc:
            raise ParseError(str(exc), head_off) from exc
    children: list[Tree] = []
    while True:
        if pos >= len(tokens):
            raise ParseError(f"unterminated constituent {label!r}", label_off)
        tok, off = tokens[pos]
        if tok == ")":
            return Internal(label=label, children=tuple(children)), pos + 1
        child, pos = _parse_node(tokens, pos)
        children.append(child)


def _parse_one(tokens: list[tuple[str, int]], pos: int) -> tuple[Tree, int]:
    """One tree, tolerating a single unlabeled wrapper "( ... )" around it."""
    tok, off = tokens[pos]
    if tok != "(":
        raise ParseError(f"expected '(' but found {tok!r}", off)
    if pos + 1 < len(tokens) and tokens[pos + 1][0] == "(":
        # Unlabeled wrapper; must contain exactly one tree.
        inner, nxt = _parse_node(tokens, pos + 1)
        if nxt >= len(tokens):
            raise ParseError("unterminated wrapper", off)
        close, close_off = tokens[nxt]
        if close != ")":
            raise ParseError(
                "unlabeled wrapper must contain exactly one tree", close_off
            )
        return inner, nxt + 1
    return _parse_node(tokens, pos)


def parse_bracketed(text: str) -> Tree:
    """Parse a single bracketed expression into a Tree."""
    tokens = list(_tokenize(text))
    if not tokens:
        raise ParseError("empty input", 0)
    tree, pos = _parse_one(tokens, 0)
    if pos != len(tokens):
        raise ParseError("trailing material after tree", tokens[pos][1])
    return tree


def iter_trees(text: str) -> Iterator[tuple[Tree, int]]:
    """Yield (tree, line_number) for each tree in `text`.

    Trees may span multiple lines (.mrg style); blank input yields nothing.
    """
    tokens = list(_tokenize(text))
    pos = 0
    while pos < len(tokens):
        start_off = tokens[pos][1]
        line = text.count("\n", 0, start_off) + 1
        try:
            tree, pos = _parse_one(tokens, pos)
        except ParseError as exc:
            line = text.count("\n", 0, exc.offset) + 1
            raise ParseError(f"line {line}: {exc.args[0]}", exc.offset) from exc
        yield tree, line


def load_trees(path: str) -> list[Tree]:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return [tree for tree, _ in iter_trees(text)]


def save_trees(path: str, trees: Iterable[Tree]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tree in trees:
            fh.write(serialize(tree) + "\n")


def is_partial_word(leaf: Leaf) -> bool:
    return leaf.pos == "XX" or leaf.word.endswith("-")


def strip_tokens(
    tree: Tree,
    drop_punct: bool = False,
    drop_partial: bool = False,
    punct_tags: frozenset[str] = PUNCTUATION_TAGS,
) -> Tree | None:
    """Remove partial-word and/or punctuation leaves; splice out emptied nodes.

    Returns None when every leaf is removed. Surviving leaves keep their order
    and surviving internal nodes keep their labels.
    """

    def keep(leaf: Leaf) -> bool:
        if drop_partial and is_partial_word(leaf):
            return False
        if drop_punct and leaf.pos in punct_tags:
            return False
        return True

    def walk(node: Tree) -> Tree | None:
        if isinstance(node, Leaf):
            return node if keep(node) else None
        children = tuple(c for c in map(walk, node.children) if c is not None)
        if not children:
            return None
        return Internal(node.label, children)

    return walk(tree)


def spans(tree: Tree) -> list[LabeledSpan]:
    """All labeled spans of the tree's internal nodes, as a multiset.

    Preterminals (the POS level) carry no span; the root does. Unary chains
    produce several spans with the same (start, end).
    """
    out: list[LabeledSpan] = []

    def walk(node: Tree, start: int) -> int:
        if isinstance(node, Leaf):
            return start + 1
        end = start
        for child in node.children:
            end = walk(child, end)
        out.append(LabeledSpan(start, end, node.label))
        return end

    walk(tree, 0)
    return out


def disfluency_word_positions(tree: Tree, labels: Iterable[str]) -> set[int]:
    """Fringe positions having at least one ancestor labeled in `labels`."""
    wanted = frozenset(labels)
    positions: set[int] = set()

    def walk(node: Tree, start: int, dominated: bool) -> int:
        if isinstance(node, Leaf):
            if dominated:
                positions.add(start)
            return start + 1
        dominated = dominated or node.label in wanted
        for child in node.children:
            start = walk(child, start, dominated)
        return start

    walk(tree, 0, False)
    return positions
