"""Mini-batch margin training with warmup, step decay, and dev-set selection."""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import model as modeling
from .decoder import NULL_LABEL, LabelWeights, chart_items, cyk_decode, hinge_loss
from .metrics import EMPTY_REPORT, MetricReport, sentence_report
from .model import ModelConfig, ParserModel, backward, init_params, save_checkpoint
from .trees import Tree, serialize, tokens_of

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0006
    warmup_steps: int = 110
    decay_factor: float = 0.52
    decay_patience: int = 2  # evaluations without dev F(S_E) improvement
    batch_size: int = 32
    max_epochs: int = 30
    edited_weight: float = 2.0
    default_weight: float = 0.7
    eval_every: int | None = None  # steps; None evaluates at each epoch end
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must be in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.decay_patience < 1:
            raise ValueError("batch_size, max_epochs, decay_patience must be >= 1")

    @property
    def label_weights(self) -> LabelWeights:
        return LabelWeights(self.edited_weight, self.default_weight)


def learning_rate_at(config: TrainConfig, step: int, num_decays: int) -> float:
    """LR after `step` updates: linear warmup, then step decay per trigger."""
    base = config.learning_rate * config.decay_factor**num_decays
    if config.warmup_steps and step < config.warmup_steps:
        return base * step / config.warmup_steps
    return base


def build_vocabularies(trees) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Word and chart-label vocabularies from a training corpus.

    Chart labels are the collapsed (possibly composite) constituent labels the
    decoder works over; the null label sits at index 0.
    """
    words: set[str] = set()
    labels: set[str] = set()
    for tree in trees:
        words.update(w for w, _ in tokens_of(tree))
        labels.update(chart_items(tree).values())
    return (
        modeling.RESERVED_WORDS + tuple(sorted(words)),
        (NULL_LABEL,) + tuple(sorted(labels)),
    )


def new_model(
    train_trees, model_config: ModelConfig | None = None, **overrides
) -> ParserModel:
    """Initialize a ParserModel sized for the given training corpus."""
    words, labels = build_vocabularies(train_trees)
    if model_config is None:
        model_config = modeling.desk_config(len(words), len(labels) - 1, **overrides)
    else:
        model_config = dataclasses.replace(
            model_config, vocab_size=len(words), num_labels=len(labels) - 1, **overrides
        )
    return ParserModel(
        config=model_config,
        params=init_params(model_config),
        words=words,
        labels=labels,
    )


class Adam:
    """Adaptive moment estimation with the standard defaults."""

    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        correction = np.sqrt(1 - self.beta2**self.t) / (1 - self.beta1**self.t)
        for key, g in grads.items():
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[key] -= lr * correction * m / (np.sqrt(v) + self.eps)


def evaluate(
    model: ParserModel,
    gold_trees,
    drop_punct: bool = False,
    drop_partial: bool = False,
) -> tuple[MetricReport, int]:
    """Decode every sentence with unit weights, report micro metrics.

    Overlength sentences are skipped with a warning; the skip count is
    returned so callers can log it.
    """
    from .trees import strip_tokens

    report = EMPTY_REPORT
    skipped = 0
    for idx, gold in enumerate(gold_trees):
        if drop_punct or drop_partial:
            gold = strip_tokens(gold, drop_punct, drop_partial)
            if gold is None:
                logger.warning("sentence %d empty after preprocessing; dropped", idx)
                continue
        tokens = tokens_of(gold)
        if len(tokens) > model.config.max_len:
            logger.warning("sentence %d of length %d skipped (max %d)",
                           idx, len(tokens), model.config.max_len)
            skipped += 1
            continue
        pred = model.parse(tokens)
        report = report + sentence_report(gold, pred)
    return report, skipped


@dataclass
class TrainResult:
    model: ParserModel  # best checkpoint by dev F(S_E)
    log: list[dict]
    best_step: int
    best_f_edited_span: float


def train(
    train_trees,
    dev_trees,
    train_config: TrainConfig = TrainConfig(),
    model_config: ModelConfig | None = None,
    out_dir: str | None = None,
) -> TrainResult:
    """Mini-batch hinge training; returns the checkpoint with the best dev F(S_E).

    The per-batch loss is the sum of per-sentence hinge losses under the
    configured label weights; evaluation always decodes with unit weights.
    """
    train_trees = list(train_trees)
    dev_trees = list(dev_trees)
    if not train_trees or not dev_trees:
        raise ValueError("train and dev corpora must be nonempty")
    model = new_model(train_trees, model_config)
    max_len = model.config.max_len
    for idx, tree in enumerate(train_trees + dev_trees):
        if len(tokens_of(tree)) > max_len:
            raise ValueError(f"sentence {idx} exceeds the maximum length {max_len}")

    weights = train_config.label_weights
    rng = np.random.default_rng(train_config.seed)
    optimizer = Adam(model.params)
    log: list[dict] = []
    best_f = -1.0
    best_step = -1
    best_params: dict[str, np.ndarray] | None = None
    num_decays = 0
    since_improved = 0
    step = 0
    loss_sum = 0.0
    loss_count = 0
    log_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "log.jsonl")
        open(log_path, "w").close()

    def run_eval(epoch: int) -> None:
        nonlocal best_f, best_step, best_params, num_decays, since_improved
        nonlocal loss_sum, loss_count
        report, skipped = evaluate(model, dev_trees)
        f_se = report.edited_span.f1
        improved = f_se > best_f
        if improved:
            best_f = f_se
            best_step = step
            best_params = {k: v.copy() for k, v in model.params.items()}
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= train_config.decay_patience:
                num_decays += 1
                since_improved = 0
        record = {
            "step": step,
            "epoch": epoch,
            "lr": learning_rate_at(train_config, step, num_decays),
            "train_loss": loss_sum / loss_count if loss_count else 0.0,
            "f_span": report.span.f1,
            "f_edited_span": f_se,
            "f_edited_word": report.edited_word.f1,
            "f_eip_word": report.eip_word.f1,
            "skipped": skipped,
            "best": improved,
        }
        log.append(record)
        loss_sum = 0.0
        loss_count = 0
        if out_dir is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            save_checkpoint(os.path.join(out_dir, f"step-{step}.bin"), model)
            if improved:
                save_checkpoint(os.path.join(out_dir, "best.bin"), model)
        logger.info(
            "step %d epoch %d loss %.4f F(S)=%.4f F(S_E)=%.4f F(W_E)=%.4f F(W_EIP)=%.4f lr %.2e",
            step, epoch, record["train_loss"], record["f_span"], f_se,
            record["f_edited_word"], record["f_eip_word"], record["lr"],
        )

    order = np.arange(len(train_trees))
    last_eval_step = -1
    for epoch in range(1, train_config.max_epochs + 1):
        rng.shuffle(order)
        for start in range(0, len(order), train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            grads = modeling.zero_grads(model.params)
            for sent_idx in batch:
                gold = train_trees[sent_idx]
                table, cache = model.score_table(tokens_of(gold), train_mode=True, rng=rng)
                loss, grad_table = hinge_loss(table, gold, weights)
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at step {step + 1} on sentence: {serialize(gold)}"
                    )
                loss_sum += loss
                loss_count += 1
                if loss > 0.0:
                    sentence_grads = backward(grad_table, cache, model.params)
                    for key, g in sentence_grads.items():
                        grads[key] += g
            step += 1
            lr = learning_rate_at(train_config, step, num_decays)
            optimizer.step(model.params, grads, lr)
            if train_config.eval_every is not None and step % train_config.eval_every == 0:
                run_eval(epoch)
                last_eval_step = step
        if train_config.eval_every is None:
            run_eval(epoch)
            last_eval_step = step
    if last_eval_step != step:
        run_eval(train_config.max_epochs)

    assert best_params is not None
    best_model = ParserModel(
        config=model.config, params=best_params, words=model.words, labels=model.labels
    )
    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "best.bin"), best_model)
    return TrainResult(
        model=best_model, log=log, best_step=best_step, best_f_edited_span=best_f
    )
