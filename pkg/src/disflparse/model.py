"""Self-attentive span scorer: encoder, span classifier, exact gradients.

Everything runs in float64 numpy on a single sentence at a time.  The encoder
is a pre-norm transformer (norm -> sublayer -> residual add) over the word
sequence wrapped in START/STOP sentinels; span representations are the
fencepost differences of the forward and backward halves of the output
vectors, fed through one hidden layer and a linear label output.  The null
label's score is pinned to 0 and is not produced by the classifier.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .decoder import (
    NULL_LABEL,
    LabelWeights,
    SpanScoreTable,
    UNIT_WEIGHTS,
    cyk_decode,
)
from .trees import Tree

UNK, START, STOP = 0, 1, 2
NUM_RESERVED = 3
RESERVED_WORDS = ("<unk>", "<start>", "<stop>")

_LN_EPS = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    num_labels: int  # real labels; the null label is not scored
    d_model: int = 64
    d_ff: int = 128
    num_heads: int = 2
    num_layers: int = 2
    d_label_hidden: int = 32
    max_len: int = 64
    attention_dropout: float = 0.0
    relu_dropout: float = 0.0
    residual_dropout: float = 0.0
    embedding_dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < NUM_RESERVED:
            raise ValueError(f"vocab_size must be >= {NUM_RESERVED}")
        dims = (self.num_labels, self.d_model, self.d_ff, self.num_heads,
                self.num_layers, self.d_label_hidden, self.max_len)
        if min(dims) < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.d_model % self.num_heads:
            raise ValueError("d_model must be divisible by num_heads")
        if self.d_model % 2:
            raise ValueError("d_model must be even (span halves)")
        for rate in (self.attention_dropout, self.relu_dropout,
                     self.residual_dropout, self.embedding_dropout):
            if not 0.0 <= rate < 1.0:
                raise ValueError("dropout rates must be in [0, 1)")


def paper_config(vocab_size: int, num_labels: int, **overrides) -> ModelConfig:
    """The published hyperparameter setting, at full scale.

    The published head count of 7 does not divide the 2048 model dim that this
    architecture requires, so the preset rounds up to 8 heads.
    """
    base = dict(
        d_model=2048,
        d_ff=4096,
        num_heads=8,
        num_layers=4,
        d_label_hidden=340,
        max_len=64,
        attention_dropout=0.27,
        relu_dropout=0.09,
        residual_dropout=0.26,
        embedding_dropout=0.2,
    )
    base.update(overrides)
    return ModelConfig(vocab_size=vocab_size, num_labels=num_labels, **base)


def desk_config(vocab_size: int, num_labels: int, **overrides) -> ModelConfig:
    """CPU-trainable configuration used for all experiments here."""
    return ModelConfig(vocab_size=vocab_size, num_labels=num_labels, **overrides)


MODEL_PRESETS = {"desk": desk_config, "paper": paper_config}


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[-2], shape[-1]
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), shape)


def init_params(config: ModelConfig, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """All trainable tensors, keyed by name in declaration order."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    d, h = config.d_model, config.num_heads
    dh = d // h
    params: dict[str, np.ndarray] = {}
    params["word_emb"] = rng.normal(0.0, 0.1, (config.vocab_size, d))
    params["pos_emb"] = rng.normal(0.0, 0.1, (config.max_len + 2, d))
    for i in range(config.num_layers):
        p = f"layer{i}."
        params[p + "ln1.gain"] = np.ones(d)
        params[p + "ln1.bias"] = np.zeros(d)
        params[p + "attn.wq"] = _glorot(rng, (h, d, dh))
        params[p + "attn.wk"] = _glorot(rng, (h, d, dh))
        params[p + "attn.wv"] = _glorot(rng, (h, d, dh))
        params[p + "attn.wo"] = _glorot(rng, (d, d))
        params[p + "ln2.gain"] = np.ones(d)
        params[p + "ln2.bias"] = np.zeros(d)
        params[p + "ff.w1"] = _glorot(rng, (d, config.d_ff))
        params[p + "ff.b1"] = np.zeros(config.d_ff)
        params[p + "ff.w2"] = _glorot(rng, (config.d_ff, d))
        params[p + "ff.b2"] = np.zeros(d)
    params["final_ln.gain"] = np.ones(d)
    params["final_ln.bias"] = np.zeros(d)
    params["span.wh"] = _glorot(rng, (d, config.d_label_hidden))
    params["span.bh"] = np.zeros(config.d_label_hidden)
    params["span.wout"] = _glorot(rng, (config.d_label_hidden, config.num_labels))
    params["span.bout"] = np.zeros(config.num_labels)
    return params


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv)


def _layer_norm_backward(g_out: np.ndarray, cache, gain: np.ndarray):
    xhat, inv = cache
    g_xhat = g_out * gain
    g_x = inv * (
        g_xhat
        - g_xhat.mean(axis=-1, keepdims=True)
        - xhat * (g_xhat * xhat).mean(axis=-1, keepdims=True)
    )
    g_gain = (g_out * xhat).sum(axis=0)
    g_bias = g_out.sum(axis=0)
    return g_x, g_gain, g_bias


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _mask(rng: np.random.Generator | None, shape, rate: float, train_mode: bool):
    """Inverted dropout mask, or None when dropout is inactive."""
    if not train_mode or rate == 0.0:
        return None
    if rng is None:
        raise ValueError("train_mode dropout requires an rng")
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _apply(x: np.ndarray, mask) -> np.ndarray:
    return x if mask is None else x * mask


@dataclass
class ForwardCache:
    """Activations recorded by a forward pass, consumed by backward()."""

    config: ModelConfig
    ids: np.ndarray
    train_mode: bool
    emb_mask: object
    layers: list[dict]
    final_ln: tuple
    y: np.ndarray
    # span-scorer part; None when only encode() ran
    span: dict | None = None


def _encode(
    ids: np.ndarray,
    params: dict[str, np.ndarray],
    config: ModelConfig,
    train_mode: bool,
    rng: np.random.Generator | None,
) -> ForwardCache:
    ids = np.asarray(ids, dtype=np.int64)
    n = len(ids)
    if n < 1:
        raise ValueError("empty input")
    if n > config.max_len + 2:
        raise ValueError(f"sequence of length {n} exceeds maximum {config.max_len + 2}")
    ids = np.where((ids >= 0) & (ids < config.vocab_size), ids, UNK)
    d, h = config.d_model, config.num_heads
    dh = d // h
    scale = 1.0 / np.sqrt(dh)

    emb_mask = _mask(rng, (n, d), config.embedding_dropout, train_mode)
    x = _apply(params["word_emb"][ids] + params["pos_emb"][:n], emb_mask)

    layers = []
    for i in range(config.num_layers):
        p = f"layer{i}."
        c: dict = {}
        hln, c["ln1"] = _layer_norm(x, params[p + "ln1.gain"], params[p + "ln1.bias"])
        c["h"] = hln
        q = np.einsum("nd,hde->hne", hln, params[p + "attn.wq"])
        k = np.einsum("nd,hde->hne", hln, params[p + "attn.wk"])
        v = np.einsum("nd,hde->hne", hln, params[p + "attn.wv"])
        c["q"], c["k"], c["v"] = q, k, v
        probs = _softmax(q @ k.transpose(0, 2, 1) * scale)
        c["probs"] = probs
        c["attn_mask"] = _mask(rng, probs.shape, config.attention_dropout, train_mode)
        probs_d = _apply(probs, c["attn_mask"])
        c["probs_d"] = probs_d
        concat = (probs_d @ v).transpose(1, 0, 2).reshape(n, d)
        c["concat"] = concat
        attn_out = concat @ params[p + "attn.wo"]
        c["resid_mask1"] = _mask(rng, (n, d), config.residual_dropout, train_mode)
        x1 = x + _apply(attn_out, c["resid_mask1"])

        h2, c["ln2"] = _layer_norm(x1, params[p + "ln2.gain"], params[p + "ln2.bias"])
        c["h2"] = h2
        z1 = h2 @ params[p + "ff.w1"] + params[p + "ff.b1"]
        c["z1"] = z1
        c["relu_mask"] = _mask(rng, z1.shape, config.relu_dropout, train_mode)
        a1d = _apply(np.maximum(z1, 0.0), c["relu_mask"])
        c["a1d"] = a1d
        z2 = a1d @ params[p + "ff.w2"] + params[p + "ff.b2"]
        c["resid_mask2"] = _mask(rng, (n, d), config.residual_dropout, train_mode)
        x = x1 + _apply(z2, c["resid_mask2"])
        layers.append(c)

    y, final_ln = _layer_norm(x, params["final_ln.gain"], params["final_ln.bias"])
    return ForwardCache(
        config=config, ids=ids, train_mode=train_mode, emb_mask=emb_mask,
        layers=layers, final_ln=final_ln, y=y,
    )


def encode(
    ids,
    params: dict[str, np.ndarray],
    config: ModelConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-position vectors of d_model for a (sentinel-wrapped) id sequence."""
    return _encode(ids, params, config, train_mode, rng).y


def _span_pairs(n_tokens: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n_tokens + 1, k=1)


def _span_forward(cache: ForwardCache, params: dict[str, np.ndarray]) -> np.ndarray:
    y = cache.y
    n_tokens = len(y) - 2
    if n_tokens < 1:
        raise ValueError("need at least one token between the boundary sentinels")
    half = cache.config.d_model // 2
    fence_f = y[: n_tokens + 1, :half]
    fence_b = y[1:, half:]
    i_idx, j_idx = _span_pairs(n_tokens)
    v = np.concatenate(
        [fence_f[j_idx] - fence_f[i_idx], fence_b[i_idx] - fence_b[j_idx]], axis=1
    )
    h1 = v @ params["span.wh"] + params["span.bh"]
    a1 = np.maximum(h1, 0.0)
    out = a1 @ params["span.wout"] + params["span.bout"]
    cache.span = {"v": v, "h1": h1, "a1": a1, "i_idx": i_idx, "j_idx": j_idx}
    scores = np.zeros((n_tokens + 1, n_tokens + 1, cache.config.num_labels + 1))
    scores[i_idx, j_idx, 1:] = out
    return scores


def span_scores(
    encoded: np.ndarray, params: dict[str, np.ndarray], config: ModelConfig
) -> np.ndarray:
    """Score table (n+1, n+1, num_labels+1) from encoder output over n tokens
    plus the two boundary sentinels.  Index 0 of the last axis is the null
    label, fixed to 0."""
    cache = ForwardCache(
        config=config, ids=np.zeros(0, dtype=np.int64), train_mode=False,
        emb_mask=None, layers=[], final_ln=(), y=np.asarray(encoded),
    )
    return _span_forward(cache, params)


def forward_spans(
    ids,
    params: dict[str, np.ndarray],
    config: ModelConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Full pass word ids -> span score table, recording activations.

    `ids` are the sentence ids without sentinels; START/STOP are added here.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) < 1:
        raise ValueError("empty sentence")
    if len(ids) > config.max_len:
        raise ValueError(f"sentence of length {len(ids)} exceeds maximum {config.max_len}")
    wrapped = np.concatenate([[START], ids, [STOP]])
    cache = _encode(wrapped, params, config, train_mode, rng)
    scores = _span_forward(cache, params)
    return scores, cache


def backward(
    grad_scores: np.ndarray,
    cache: ForwardCache | None,
    params: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """Parameter gradients for a scalar loss with gradient `grad_scores` with
    respect to the span score table (the null column is ignored)."""
    if cache is None or cache.span is None:
        raise ValueError("backward requires the cache of a prior forward_spans call")
    config = cache.config
    grads = zero_grads(params)
    d, h = config.d_model, config.num_heads
    dh = d // h
    scale = 1.0 / np.sqrt(dh)
    half = d // 2
    sp = cache.span
    i_idx, j_idx = sp["i_idx"], sp["j_idx"]
    n = len(cache.y)
    n_tokens = n - 2

    g_out = np.asarray(grad_scores)[i_idx, j_idx, 1:]
    grads["span.wout"] = sp["a1"].T @ g_out
    grads["span.bout"] = g_out.sum(axis=0)
    g_a1 = g_out @ params["span.wout"].T
    g_h1 = g_a1 * (sp["h1"] > 0)
    grads["span.wh"] = sp["v"].T @ g_h1
    grads["span.bh"] = g_h1.sum(axis=0)
    g_v = g_h1 @ params["span.wh"].T

    g_ff_part, g_bb_part = g_v[:, :half], g_v[:, half:]
    g_fence_f = np.zeros((n_tokens + 1, half))
    g_fence_b = np.zeros((n_tokens + 1, half))
    np.add.at(g_fence_f, j_idx, g_ff_part)
    np.add.at(g_fence_f, i_idx, -g_ff_part)
    np.add.at(g_fence_b, i_idx, g_bb_part)
    np.add.at(g_fence_b, j_idx, -g_bb_part)
    g_y = np.zeros((n, d))
    g_y[: n_tokens + 1, :half] += g_fence_f
    g_y[1:, half:] += g_fence_b

    g_x, grads["final_ln.gain"], grads["final_ln.bias"] = _layer_norm_backward(
        g_y, cache.final_ln, params["final_ln.gain"]
    )

    for i in reversed(range(config.num_layers)):
        p = f"layer{i}."
        c = cache.layers[i]
        # feed-forward sublayer: x = x1 + mask2 * (a1d @ w2 + b2)
        g_z2 = _apply(g_x, c["resid_mask2"])
        grads[p + "ff.w2"] = c["a1d"].T @ g_z2
        grads[p + "ff.b2"] = g_z2.sum(axis=0)
        g_a1d = g_z2 @ params[p + "ff.w2"].T
        g_a1 = _apply(g_a1d, c["relu_mask"])
        g_z1 = g_a1 * (c["z1"] > 0)
        grads[p + "ff.w1"] = c["h2"].T @ g_z1
        grads[p + "ff.b1"] = g_z1.sum(axis=0)
        g_h2 = g_z1 @ params[p + "ff.w1"].T
        g_x1_ln, grads[p + "ln2.gain"], grads[p + "ln2.bias"] = _layer_norm_backward(
            g_h2, c["ln2"], params[p + "ln2.gain"]
        )
        g_x1 = g_x + g_x1_ln

        # attention sublayer: x1 = x + mask1 * (concat @ wo)
        g_attn_out = _apply(g_x1, c["resid_mask1"])
        grads[p + "attn.wo"] = c["concat"].T @ g_attn_out
        g_concat = g_attn_out @ params[p + "attn.wo"].T
        g_ctx = g_concat.reshape(n, h, dh).transpose(1, 0, 2)
        g_probs_d = g_ctx @ c["v"].transpose(0, 2, 1)
        g_v_heads = c["probs_d"].transpose(0, 2, 1) @ g_ctx
        g_probs = _apply(g_probs_d, c["attn_mask"])
        g_logits = c["probs"] * (
            g_probs - (g_probs * c["probs"]).sum(axis=-1, keepdims=True)
        )
        g_q = g_logits @ c["k"] * scale
        g_k = g_logits.transpose(0, 2, 1) @ c["q"] * scale
        grads[p + "attn.wq"] = np.einsum("nd,hne->hde", c["h"], g_q)
        grads[p + "attn.wk"] = np.einsum("nd,hne->hde", c["h"], g_k)
        grads[p + "attn.wv"] = np.einsum("nd,hne->hde", c["h"], g_v_heads)
        g_h = (
            np.einsum("hne,hde->nd", g_q, params[p + "attn.wq"])
            + np.einsum("hne,hde->nd", g_k, params[p + "attn.wk"])
            + np.einsum("hne,hde->nd", g_v_heads, params[p + "attn.wv"])
        )
        g_x_ln, grads[p + "ln1.gain"], grads[p + "ln1.bias"] = _layer_norm_backward(
            g_h, c["ln1"], params[p + "ln1.gain"]
        )
        g_x = g_x1 + g_x_ln

    g_emb = _apply(g_x, cache.emb_mask)
    np.add.at(grads["word_emb"], cache.ids, g_emb)
    grads["pos_emb"][: len(cache.ids)] += g_emb
    return grads


@dataclass
class ParserModel:
    """A trained (or freshly initialized) parser: config, tensors, vocabularies."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    words: tuple[str, ...]
    labels: tuple[str, ...]  # labels[0] is the null label

    def __post_init__(self):
        if self.words[:NUM_RESERVED] != RESERVED_WORDS:
            raise ValueError("words must start with the reserved tokens")
        if len(self.words) != self.config.vocab_size:
            raise ValueError("word vocabulary size does not match config")
        if self.labels[0] != NULL_LABEL or len(self.labels) != self.config.num_labels + 1:
            raise ValueError("labels must be the null label plus num_labels real labels")
        self._word_to_id = {w: i for i, w in enumerate(self.words)}

    def word_ids(self, words) -> np.ndarray:
        return np.array([self._word_to_id.get(w, UNK) for w in words], dtype=np.int64)

    def score_table(
        self,
        tokens,
        train_mode: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[SpanScoreTable, ForwardCache]:
        tokens = tuple((w, p) for w, p in tokens)
        scores, cache = forward_spans(
            self.word_ids(w for w, _ in tokens), self.params, self.config, train_mode, rng
        )
        table = SpanScoreTable(
            length=len(tokens), labels=self.labels, scores=scores, tokens=tokens
        )
        return table, cache

    def parse(self, tokens, weights: LabelWeights = UNIT_WEIGHTS) -> Tree:
        table, _ = self.score_table(tokens)
        return cyk_decode(table, weights)


CHECKPOINT_MAGIC = b"DFPK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, model: ParserModel) -> None:
    """Versioned binary checkpoint plus a JSON sidecar of the header."""
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(model.config),
        "words": list(model.words),
        "labels": list(model.labels),
        "tensors": [[name, list(t.shape)] for name, t in model.params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for tensor in model.params.values():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)


def load_checkpoint(path: str) -> ParserModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parser checkpoint (bad magic)")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    config = ModelConfig(**header["config"])
    params: dict[str, np.ndarray] = {}
    offset = 12 + header_len
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        params[name] = arr.astype(np.float64)
        offset += count * 8
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return ParserModel(
        config=config,
        params=params,
        words=tuple(header["words"]),
        labels=tuple(header["labels"]),
    )
