"""Tree transformations re-encoding disfluency and syntactic information.

All transforms preserve the fringe exactly; deletion is always splicing
(replacing a node by its children), so yields cannot change.
"""

from __future__ import annotations

from .trees import DISFLUENCY_LABELS, Internal, Leaf, Tree, fringe

TOP = "TOP"


def _as_single_tree(nodes: list[Tree]) -> Tree:
    if len(nodes) == 1:
        return nodes[0]
    # Only reachable when the root itself was a disfluency node and got spliced.
    return Internal(TOP, tuple(nodes))


def pos_disfl(tree: Tree) -> Tree:
    """Push disfluency nodes down to the POS level.

    Each leaf dominated by a disfluency node gains a unary parent carrying the
    innermost dominating disfluency label; the original EDITED/INTJ/PRN nodes
    are spliced out.
    """

    def walk(node: Tree, innermost: str | None) -> list[Tree]:
        if isinstance(node, Leaf):
            if innermost is None:
                return [node]
            return [Internal(innermost, (node,))]
        if node.label in DISFLUENCY_LABELS:
            out: list[Tree] = []
            for child in node.children:
                out.extend(walk(child, node.label))
            return out
        children: list[Tree] = []
        for child in node.children:
            children.extend(walk(child, innermost))
        return [Internal(node.label, tuple(children))]

    return _as_single_tree(walk(tree, None))


def no_syntax(tree: Tree) -> Tree:
    """Delete all non-disfluency internal nodes; root the result under TOP."""

    def walk(node: Tree) -> list[Tree]:
        if isinstance(node, Leaf):
            return [node]
        kept: list[Tree] = []
        for child in node.children:
            kept.extend(walk(child))
        if node.label in DISFLUENCY_LABELS:
            return [Internal(node.label, tuple(kept))]
        return kept

    return Internal(TOP, tuple(walk(tree)))


def pos_disfl_no_syntax(tree: Tree) -> Tree:
    return no_syntax(pos_disfl(tree))


def top_disfl(tree: Tree) -> Tree:
    """Keep only the topmost disfluency nodes, each flattened over its leaves.

    Nested disfluency nodes and any structure inside a surviving disfluency
    node are spliced out; syntax outside disfluency nodes is untouched.
    """

    def walk(node: Tree) -> Tree:
        if isinstance(node, Leaf):
            return node
        if node.label in DISFLUENCY_LABELS:
            return Internal(node.label, tuple(fringe(node)))
        return Internal(node.label, tuple(walk(c) for c in node.children))

    return walk(tree)


def top_disfl_no_syntax(tree: Tree) -> Tree:
    return no_syntax(top_disfl(tree))


TRANSFORMS = {
    "posdisfl": pos_disfl,
    "nosyntax": no_syntax,
    "posdisfl-nosyntax": pos_disfl_no_syntax,
    "topdisfl": top_disfl,
    "topdisfl-nosyntax": top_disfl_no_syntax,
}
