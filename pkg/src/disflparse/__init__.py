"""Joint constituency parsing and speech-disfluency detection toolkit."""

from .trees import (
    EDITED,
    INTJ,
    PRN,
    DISFLUENCY_LABELS,
    Internal,
    LabeledSpan,
    Leaf,
    ParseError,
    Sentence,
    Tree,
    disfluency_word_positions,
    fringe,
    load_trees,
    parse_bracketed,
    save_trees,
    serialize,
    spans,
    strip_tokens,
)
from .transforms import (
    TRANSFORMS,
    no_syntax,
    pos_disfl,
    pos_disfl_no_syntax,
    top_disfl,
    top_disfl_no_syntax,
)
from .metrics import PRF, MetricReport, corpus_report, span_prf, word_prf
from .decoder import (
    LabelWeights,
    SpanScoreTable,
    UNIT_WEIGHTS,
    cyk_decode,
    hamming,
    hinge_loss,
    loss_augmented_decode,
    tree_score,
)
from .model import ModelConfig, ParserModel, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, evaluate, train

__version__ = "0.1.0"
