import os
import random

import pytest
from hypothesis import strategies as st

from disflparse.trees import Internal, Leaf

DATA_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "data")

LABEL_POOL = ["S", "NP", "VP", "PP", "SBAR", "ADVP", "EDITED", "INTJ", "PRN", "TOP"]
POS_POOL = ["NN", "VBP", "PRP", "DT", "IN", "JJ", "UH", "RB", "XX", "."]
WORD_POOL = ["the", "dog", "runs", "uh", "i", "mean", "wou-", "états", "x1", "don't"]


@pytest.fixture
def data_dir():
    return DATA_DIR


def random_tree(rng: random.Random, max_depth: int = 5, max_children: int = 4):
    """Plain-random valid tree; used where hypothesis would be too slow."""
    if max_depth == 0 or rng.random() < 0.35:
        return Leaf(pos=rng.choice(POS_POOL), word=rng.choice(WORD_POOL))
    n = rng.randint(1, max_children)
    children = tuple(random_tree(rng, max_depth - 1, max_children) for _ in range(n))
    return Internal(label=rng.choice(LABEL_POOL), children=children)


@st.composite
def tree_strategy(draw, max_depth: int = 4):
    if max_depth == 0 or draw(st.booleans()):
        return Leaf(pos=draw(st.sampled_from(POS_POOL)), word=draw(st.sampled_from(WORD_POOL)))
    n = draw(st.integers(min_value=1, max_value=3))
    children = tuple(draw(tree_strategy(max_depth=max_depth - 1)) for _ in range(n))
    return Internal(label=draw(st.sampled_from(LABEL_POOL)), children=children)


trees_st = tree_strategy()
