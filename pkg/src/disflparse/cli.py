"""Command-line interface: gen-corpus, transform, train, parse, eval.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import corpus_gen, trainer
from .metrics import corpus_report, format_report
from .model import MODEL_PRESETS, load_checkpoint
from .trees import (
    EDITED,
    INTJ,
    PRN,
    PUNCTUATION_TAGS,
    Internal,
    Leaf,
    ParseError,
    disfluency_word_positions,
    iter_trees,
    serialize,
    strip_tokens,
    tokens_of,
)
from .transforms import TRANSFORMS

logger = logging.getLogger("disflparse")


class DataError(Exception):
    pass


def _read_trees(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        return [tree for tree, _ in iter_trees(text)]
    except ParseError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w", encoding="utf-8")


def cmd_transform(args) -> int:
    transform = TRANSFORMS[args.mode]
    trees = _read_trees(args.input)
    out = _open_out(args.output)
    try:
        for tree in trees:
            out.write(serialize(transform(tree)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _load_run_config(path: str | None):
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot load config {path}: {exc}") from exc
    known = {"preset", "model", "train", "preprocessing"}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)} (expected {sorted(known)})")
    preset = raw.get("preset", "desk")
    if preset not in MODEL_PRESETS:
        raise DataError(f"unknown preset {preset!r}; choose from {sorted(MODEL_PRESETS)}")
    try:
        model_template = MODEL_PRESETS[preset](3, 1, **raw.get("model", {}))
        train_config = trainer.TrainConfig(**raw.get("train", {}))
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad config: {exc}") from exc
    prep = raw.get("preprocessing", {})
    unknown = set(prep) - {"drop_punct", "drop_partial"}
    if unknown:
        raise DataError(f"unknown preprocessing keys: {sorted(unknown)}")
    return model_template, train_config, prep.get("drop_punct", True), prep.get("drop_partial", True)


def _preprocess(trees, drop_punct: bool, drop_partial: bool, max_len: int, what: str):
    kept = []
    for idx, tree in enumerate(trees):
        stripped = strip_tokens(tree, drop_punct, drop_partial)
        if stripped is None:
            logger.warning("%s sentence %d empty after preprocessing; dropped", what, idx)
            continue
        if len(tokens_of(stripped)) > max_len:
            logger.warning("%s sentence %d longer than %d tokens; dropped", what, idx, max_len)
            continue
        kept.append(stripped)
    if not kept:
        raise DataError(f"no usable sentences left in {what} corpus")
    return kept


def cmd_train(args) -> int:
    model_template, train_config, drop_punct, drop_partial = _load_run_config(args.config)
    train_trees = _read_trees(args.train)
    dev_trees = _read_trees(args.dev)
    max_len = model_template.max_len
    train_trees = _preprocess(train_trees, drop_punct, drop_partial, max_len, "train")
    dev_trees = _preprocess(dev_trees, drop_punct, drop_partial, max_len, "dev")
    result = trainer.train(
        train_trees, dev_trees, train_config, model_config=model_template, out_dir=args.out
    )
    print(f"best dev F(S_E) {result.best_f_edited_span:.4f} at step {result.best_step}")
    print(f"checkpoints and log.jsonl written to {args.out}")
    return 0


def _read_sentences(path: str, raw_words: bool, from_trees: bool):
    """Token sequences (word, pos), one per input line; blank lines pass through."""
    sentences: list[tuple[tuple[str, str], ...] | None] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                sentences.append(None)
                continue
            if from_trees:
                try:
                    tree = next(iter_trees(line))[0]
                except (ParseError, StopIteration) as exc:
                    raise DataError(f"{path} line {lineno}: {exc}") from exc
                sentences.append(tokens_of(tree))
            elif raw_words:
                sentences.append(tuple((w, "UNK") for w in line.split()))
            else:
                tokens = []
                for item in line.split():
                    word, sep, pos = item.rpartition("/")
                    if not sep or not word or not pos:
                        raise DataError(
                            f"{path} line {lineno}: expected word/POS tokens, got {item!r}"
                        )
                    tokens.append((word, pos))
                sentences.append(tuple(tokens))
    return sentences


def _word_tags(tree) -> str:
    n = len(tokens_of(tree))
    edited = disfluency_word_positions(tree, {EDITED})
    intj = disfluency_word_positions(tree, {INTJ})
    prn = disfluency_word_positions(tree, {PRN})
    tags = []
    for i in range(n):
        if i in edited:
            tags.append("E")
        elif i in intj:
            tags.append("I")
        elif i in prn:
            tags.append("P")
        else:
            tags.append("O")
    return " ".join(tags)


def cmd_parse(args) -> int:
    try:
        model = load_checkpoint(args.model)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load checkpoint {args.model}: {exc}") from exc
    sentences = _read_sentences(args.input, args.raw_words, args.from_trees)
    out = _open_out(args.output)
    words_out = open(args.words_out, "w", encoding="utf-8") if args.words_out else None
    skipped = 0
    try:
        for tokens in sentences:
            if tokens is None:
                out.write("\n")
                if words_out:
                    words_out.write("\n")
                continue
            if len(tokens) > model.config.max_len:
                # Keep the output aligned: emit a flat fallback instead of a parse.
                skipped += 1
                tree = Internal("TOP", tuple(Leaf(p, w) for w, p in tokens))
            else:
                tree = model.parse(tokens)
            out.write(serialize(tree) + "\n")
            if words_out:
                words_out.write(_word_tags(tree) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
        if words_out:
            words_out.close()
    if skipped:
        print(
            f"warning: {skipped} sentence(s) exceeded the maximum length "
            f"{model.config.max_len} and got flat fallback trees",
            file=sys.stderr,
        )
    return 0


def cmd_eval(args) -> int:
    gold = _read_trees(args.gold)
    pred = _read_trees(args.pred)
    punct_tags = (
        frozenset(args.punct_tags.split(",")) if args.punct_tags else PUNCTUATION_TAGS
    )
    try:
        report = corpus_report(
            gold,
            pred,
            drop_punct=not args.keep_punct,
            drop_partial=not args.keep_partial,
            punct_tags=punct_tags,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    table = format_report(report)
    if args.labels == "edited":
        table = "\n".join(
            line for line in table.splitlines() if line.split()[0] in ("metric", "S_E", "W_E")
        )
    elif args.labels == "eip":
        table = "\n".join(
            line for line in table.splitlines() if line.split()[0] in ("metric", "W_EIP")
        )
    print(table)
    if args.json:
        payload = json.dumps(report.as_dict(), indent=2, sort_keys=True)
        if args.json == "-":
            print(payload)
        else:
            with open(args.json, "w", encoding="utf-8") as fh:
                fh.write(payload + "\n")
    return 0


def cmd_gen_corpus(args) -> int:
    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot load config {args.config}: {exc}") from exc
    if args.seed is not None:
        raw["seed"] = args.seed
    for name in ("num_train", "num_dev", "num_test"):
        value = getattr(args, name)
        if value is not None:
            raw[name] = value
    if "prn_phrases" in raw:
        raw["prn_phrases"] = tuple(tuple(p) for p in raw["prn_phrases"])
    if "intj_words" in raw:
        raw["intj_words"] = tuple(raw["intj_words"])
    try:
        config = corpus_gen.GenConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad generator config: {exc}") from exc
    manifest = corpus_gen.generate_corpus(config, args.out)
    for name, info in manifest["splits"].items():
        print(f"{name}: {info['sentences']} sentences, {info['tokens']} tokens")
    print(f"manifest written to {args.out}/manifest.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disflparse",
        description="Joint constituency parsing and speech-disfluency detection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic disfluent treebank")
    p.add_argument("--config", help="generator config JSON (GenConfig fields)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--num-train", type=int, dest="num_train")
    p.add_argument("--num-dev", type=int, dest="num_dev")
    p.add_argument("--num-test", type=int, dest="num_test")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("transform", help="apply a disfluency tree transformation")
    p.add_argument("--mode", required=True, choices=sorted(TRANSFORMS))
    p.add_argument("--input", required=True, help="one tree per line")
    p.add_argument("--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", help="train the span scorer")
    p.add_argument("--train", required=True, help="training trees, one per line")
    p.add_argument("--dev", required=True, help="dev trees for model selection")
    p.add_argument("--config", help="run config JSON (see docs/run_config.schema.json)")
    p.add_argument("--out", required=True, help="output directory for checkpoints and log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse sentences with a trained checkpoint")
    p.add_argument("--model", required=True, help="checkpoint file (best.bin)")
    p.add_argument("--input", required=True, help="one sentence per line, word/POS tokens")
    p.add_argument("--output", help="output file (default stdout)")
    p.add_argument("--raw-words", action="store_true",
                   help="input lines are bare words without POS tags")
    p.add_argument("--from-trees", action="store_true",
                   help="input lines are trees; parse their fringes")
    p.add_argument("--words-out",
                   help="also write per-token E/I/P/O disfluency tags to this file")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="score predicted trees against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", choices=["edited", "eip"],
                   help="restrict the table to the EDITED or EDITED+INTJ+PRN rows")
    p.add_argument("--json", help="also write the JSON report to this file ('-' for stdout)")
    p.add_argument("--keep-punct", action="store_true",
                   help="do not strip punctuation before scoring")
    p.add_argument("--keep-partial", action="store_true",
                   help="do not strip partial words before scoring")
    p.add_argument("--punct-tags", help="comma-separated punctuation POS tags")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
